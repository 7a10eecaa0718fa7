#include "support.hpp"

#include "ilb/collision_kernel.hpp"
#include "ilb/error.hpp"
#include "ilb/evolution.hpp"
#include "ilb/operator.hpp"
#include "ilb/spectral.hpp"

#include <catch_amalgamated.hpp>

#include <numbers>

using namespace ilb;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct Radial {
    KernelContext ctx;
    OperatorMatrix op;
    double nu0;
};

Radial radial(std::size_t nr = 96)
{
    const auto p = test::params(1, 1, 0.5, 1);
    auto ctx = make_kernel_context(p);
    auto op = assemble_radial_operator(ctx, reduce_isotropic(ctx, RadialGridSpec{nr, 6.0, 16}));
    return {ctx, std::move(op), sigma_closed_form(ctx, p.u1)};
}

Eigen::VectorXd radial_maxwellian(const OperatorMatrix& op, double theta)
{
    const Maxwellian mx{1.0, theta, Vec3::Zero()};
    Eigen::VectorXd f(op.radius.size());
    for (Eigen::Index i = 0; i < f.size(); ++i)
        f[i] = mx(Vec3(op.radius[i], 0, 0));
    return f;
}

template <class V>
bool nonincreasing(const V& xs, double tol)
{
    for (std::size_t k = 1; k < xs.size(); ++k)
        if (xs[k] > xs[k - 1] + tol)
            return false;
    return true;
}

} // namespace

TEST_CASE("decay-rate fit on synthetic series", "[evolution]")
{
    std::vector<double> t, d1, d2;
    for (int k = 0; k <= 600; ++k) {
        t.push_back(0.01 * k);
        d1.push_back(3.0 * std::exp(-2.0 * t.back()));
        d2.push_back(std::exp(-t.back()) + 0.01 * std::exp(-5.0 * t.back()));
    }
    CHECK_THAT(fit_decay_rate(t, d1, 0.0, 6.0), WithinRel(2.0, 1e-10));
    CHECK_THAT(fit_decay_rate(t, d2, 3.0, 6.0), WithinAbs(1.0, 1e-3));
    CHECK_THROWS_AS(fit_decay_rate(t, d1, 0.0, 0.05), InvalidParameter);

    std::vector<double> flat(t.size(), 1e-15);
    CHECK_THROWS_AS(fit_decay_rate(t, flat, 0.0, 6.0), InvalidParameter);
}

TEST_CASE("entropy functionals", "[evolution]")
{
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(4, 0.5);
    const Eigen::VectorXd M = (Eigen::VectorXd(4) << 0.1, 0.4, 0.4, 0.1).finished();
    CHECK(entropy_functional(w, M, M, EntropyKind::Quadratic) == 0.0);
    CHECK_THAT(entropy_functional(w, M, M, EntropyKind::XlogX), WithinAbs(0.0, 1e-16));
    const Eigen::VectorXd f = (Eigen::VectorXd(4) << 0.0, 0.5, 0.3, 0.2).finished();
    // sum w M (f/M - 1)^2 = 0.5 (0.1 + 0.025 + 0.025 + 0.1)
    CHECK_THAT(entropy_functional(w, f, M, EntropyKind::Quadratic), WithinRel(0.125, 1e-14));
    CHECK(entropy_functional(w, f, M, EntropyKind::XlogX) > 0);
    CHECK(information(w, M, M) == 0.0);
    CHECK(information(w, f, M) > 0);
    CHECK(std::isinf(information(w, M, f)));
    CHECK_THROWS_AS(entropy_functional(w, -f, M, EntropyKind::XlogX), InvalidParameter);
}

TEST_CASE("integrator names", "[evolution]")
{
    CHECK(parse_integrator("rk4") == Integrator::Rk4);
    CHECK(parse_integrator(to_string(Integrator::SpectralExponential)) == Integrator::SpectralExponential);
    CHECK_THROWS_AS(parse_integrator("euler"), InvalidParameter);
}

TEST_CASE("equilibrium is a fixed point", "[evolution]")
{
    const auto rc = radial();
    EvolveOptions opt;
    opt.t_end = 5.0 / rc.nu0;
    opt.samples = 20;
    const auto tr = evolve_homogeneous(rc.op, rc.op.equilibrium, opt);
    const double norm = std::sqrt(rc.op.equilibrium.cwiseProduct(rc.op.weights).sum());
    for (double d : tr.dist_H)
        CHECK(d <= 1e-10 * norm);
    CHECK_THAT(tr.mass.back(), WithinRel(tr.mass.front(), 1e-13));
}

TEST_CASE("relaxation from a hot Maxwellian", "[evolution]")
{
    const auto rc = radial();
    const auto spec = eigendecompose(rc.op, rc.nu0);
    EvolveOptions opt;
    opt.t_end = 30.0 / rc.nu0;
    opt.samples = 200;
    const auto tr = evolve_homogeneous(rc.op, radial_maxwellian(rc.op, 1.0), opt, &spec);

    for (double m : tr.mass)
        CHECK_THAT(m, WithinRel(tr.mass.front(), 1e-12));
    CHECK(nonincreasing(tr.dist_H, 1e-13 * tr.dist_H.front()));
    CHECK(nonincreasing(tr.H_quadratic, 1e-13 * tr.H_quadratic.front()));
    CHECK(nonincreasing(tr.H_xlogx, 1e-13 * tr.H_xlogx.front()));
    CHECK(tr.negative_samples == 0);
    CHECK_THAT(fit_decay_rate(tr, 0.3 * opt.t_end, 0.6 * opt.t_end), WithinRel(spec.gap, 0.1));
}

TEST_CASE("rk4 agrees with the spectral propagator", "[evolution]")
{
    const auto rc = radial(64);
    const Eigen::VectorXd f0 = radial_maxwellian(rc.op, 0.9);
    EvolveOptions opt;
    opt.t_end = 1.0 / rc.nu0;
    opt.dt = 1e-3 / rc.nu0;
    opt.samples = 4;
    const auto a = evolve_homogeneous(rc.op, f0, opt);
    opt.method = Integrator::Rk4;
    const auto b = evolve_homogeneous(rc.op, f0, opt);
    CHECK((a.final_state - b.final_state).norm() <= 1e-8 * a.final_state.norm());

    opt.dt = 10.0 / rc.nu0;
    CHECK_THROWS_AS(evolve_homogeneous(rc.op, f0, opt), CflViolation);
}

TEST_CASE("information contraction", "[evolution]")
{
    const auto rc = radial(64);
    const Eigen::VectorXd f0 = radial_maxwellian(rc.op, 1.0);
    Eigen::VectorXd g0 = radial_maxwellian(rc.op, 0.4);
    g0 *= f0.cwiseProduct(rc.op.weights).sum() / g0.cwiseProduct(rc.op.weights).sum();
    const auto chk = information_contraction_check(rc.op, f0, g0, 10.0 / rc.nu0);
    CHECK(chk.ok);
    CHECK(chk.margin <= 1e-12);
    CHECK(nonincreasing(chk.values, 1e-12));
}

TEST_CASE("transport demo", "[evolution][transport]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const auto ctx = make_kernel_context(p);
    const auto g = build_grid(5.0, 8, p);
    const auto op = assemble_operator(ctx, g);
    const Maxwellian hot{1.0, 1.5 * ctx.consts.theta_sharp, Vec3::Zero()};

    SECTION("mass is conserved with collisions")
    {
        const SlabDensity f0 = [&](double x, const Vec3& v) {
            return (1 + 0.5 * std::sin(2 * std::numbers::pi * x)) * hot(v);
        };
        TransportOptions opt;
        opt.nx = 16;
        opt.steps = 200;
        const auto res = transport_demo(op, g, f0, opt);
        CHECK(res.exact_shift);
        CHECK(res.max_relative_drift <= 1e-10);
        CHECK(res.final_state.f.minCoeff() >= -1e-14);
    }

    SECTION("streaming alone shifts cells exactly")
    {
        const SlabDensity f0 = [&](double x, const Vec3& v) { return (1 + x * x) * hot(v); };
        TransportOptions opt;
        opt.nx = 16;
        opt.steps = 3;
        opt.collisions = false;
        const auto res = transport_demo(op, g, f0, opt);
        REQUIRE(res.exact_shift);
        const double dt = 2.0 / (16 * g.h);
        const auto nx = static_cast<long long>(opt.nx);
        bool same = true;
        for (std::size_t j = 0; j < g.size(); ++j) {
            const long long s = std::llround(3 * g.nodes[j].x() * dt * 16);
            for (long long x = 0; x < nx; ++x) {
                const auto src = ((x - s) % nx + nx) % nx;
                same = same && res.final_state.f(x, static_cast<Eigen::Index>(j))
                                   == res.initial.f(src, static_cast<Eigen::Index>(j));
            }
        }
        CHECK(same);
        CHECK(res.max_relative_drift <= 1e-15);
    }

    SECTION("spatially uniform data follow the homogeneous evolution")
    {
        const SlabDensity f0 = [&](double, const Vec3& v) { return hot(v); };
        TransportOptions opt;
        opt.nx = 4;
        opt.steps = 20;
        const auto res = transport_demo(op, g, f0, opt);
        Eigen::VectorXd h0(static_cast<Eigen::Index>(g.size()));
        for (std::size_t j = 0; j < g.size(); ++j)
            h0[static_cast<Eigen::Index>(j)] = hot(g.nodes[j]);
        EvolveOptions eo;
        eo.t_end = res.times.back();
        eo.samples = 1;
        const auto tr = evolve_homogeneous(op, h0, eo);
        for (Eigen::Index x = 0; x < 4; ++x)
            CHECK((res.final_state.f.row(x).transpose() - tr.final_state).norm() <= 1e-10 * tr.final_state.norm());
    }
}
