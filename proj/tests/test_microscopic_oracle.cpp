#include "support.hpp"

#include "ilb/collision_kernel.hpp"
#include "ilb/error.hpp"
#include "ilb/microscopic_oracle.hpp"

#include <catch_amalgamated.hpp>

using namespace ilb;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("restitution of the inverse collision", "[oracle]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const auto c = derive_constants(p);
    const auto pair = inverse_collision_map(c, Vec3(1, 0, 0), Vec3::Zero(), Vec3(1, 0, 0));
    CHECK_THAT((pair.vstar - pair.wstar).dot(pair.n), WithinAbs(-2.0, 1e-15));
}

TEST_CASE("elastic equal-mass collisions exchange the normal component", "[oracle]")
{
    const auto c = derive_constants(test::params(1, 1, 1, 1));
    const Vec3 v(0.3, -1.2, 0.5), w(-0.4, 0.1, 0.9);
    const Vec3 n = Vec3(1, 2, -2) / 3.0;
    const double qn = (v - w).dot(n);
    const auto pair = inverse_collision_map(c, v, w, n);
    CHECK((pair.vstar - (v - qn * n)).norm() < 1e-15);
    CHECK((pair.wstar - (w + qn * n)).norm() < 1e-15);
}

TEST_CASE("non-unit impact vector is rejected", "[oracle]")
{
    const auto c = derive_constants(test::params(1, 1, 0.5, 1));
    CHECK_THROWS_AS(inverse_collision_map(c, Vec3::Zero(), Vec3(1, 0, 0), Vec3(1, 1e-5, 0)), InvalidParameter);
}

TEST_CASE("collision laws over random inputs", "[oracle][property]")
{
    CounterRng rng(21, 0);
    for (int k = 0; k < 100000; ++k) {
        const auto p = test::random_params(rng);
        const auto c = derive_constants(p);
        const Vec3 v = test::random_velocity(rng, p.u1, 1.0);
        const Vec3 w = test::random_velocity(rng, p.u1, 1.0);
        const Vec3 n = test::random_unit(rng);
        const double scale = p.m * v.norm() + p.m1 * w.norm();

        const auto inv = inverse_collision_map(c, v, w, n);
        const Vec3 dp = p.m * inv.vstar + p.m1 * inv.wstar - p.m * v - p.m1 * w;
        REQUIRE(dp.norm() <= 1e-14 * 8 * scale);
        const double qn = (v - w).dot(n);
        REQUIRE_THAT((inv.vstar - inv.wstar).dot(n) * p.eps, WithinAbs(-qn, 1e-13 * (1 + std::abs(qn) / p.eps)));

        const auto [vp, wp] = direct_collision_map(p, c, v, w, n);
        REQUIRE((p.m * vp + p.m1 * wp - p.m * v - p.m1 * w).norm() <= 1e-14 * 8 * scale);
        REQUIRE_THAT((vp - wp).dot(n), WithinAbs(-p.eps * qn, 1e-13 * (1 + std::abs(qn))));
        const double e0 = p.m * v.squaredNorm() + p.m1 * w.squaredNorm();
        const double e1 = p.m * vp.squaredNorm() + p.m1 * wp.squaredNorm();
        REQUIRE(e1 <= e0 * (1 + 1e-14));

        // the direct map undoes the inverse one
        const auto [vb, wb] = direct_collision_map(p, c, inv.vstar, inv.wstar, n);
        REQUIRE((vb - v).norm() < 1e-11 * (1 + std::abs(qn) / p.eps));
        REQUIRE((wb - w).norm() < 1e-11 * (1 + std::abs(qn) / p.eps));
    }
}

TEST_CASE("elastic collisions conserve energy", "[oracle]")
{
    const auto p = test::params(1, 3, 1, 1);
    const auto c = derive_constants(p);
    CounterRng rng(22, 0);
    for (int k = 0; k < 1000; ++k) {
        const Vec3 v = test::random_velocity(rng, Vec3::Zero(), 1.0);
        const Vec3 w = test::random_velocity(rng, Vec3::Zero(), 1.0);
        const auto [vp, wp] = direct_collision_map(p, c, v, w, test::random_unit(rng));
        const double e0 = p.m * v.squaredNorm() + p.m1 * w.squaredNorm();
        REQUIRE_THAT(p.m * vp.squaredNorm() + p.m1 * wp.squaredNorm(), WithinRel(e0, 1e-13));
    }
}

TEST_CASE("oracle budgets", "[oracle]")
{
    const auto ctx = make_kernel_context(test::params(1, 1, 0.5, 1));
    const Density zero = [](const Vec3&) { return 0.0; };
    CHECK_THROWS_AS(qplus_oracle(ctx, Vec3::Zero(), zero, 999, 1, {}), BudgetTooSmall);
    CHECK_THROWS_AS(sigma_oracle(ctx, Vec3::Zero(), 10, 1), BudgetTooSmall);
    const auto est = qplus_oracle(ctx, Vec3(0.5, 0, 0), zero, 1000, 1, {});
    CHECK(est.estimate == 0.0);
    CHECK(est.standard_error == 0.0);
}

TEST_CASE("oracle is reproducible for a fixed seed", "[oracle]")
{
    const auto ctx = make_kernel_context(test::params(1, 2, 0.7, 1));
    const auto a = sigma_oracle(ctx, Vec3(0.3, 0.1, 0), 20000, 9);
    const auto b = sigma_oracle(ctx, Vec3(0.3, 0.1, 0), 20000, 9);
    CHECK(a.estimate == b.estimate);
    CHECK(a.standard_error == b.standard_error);
}

TEST_CASE("collision frequency oracle", "[oracle]")
{
    const auto ctx = make_kernel_context(test::params(1, 1, 0.3, 1));
    const auto ctx_el = make_kernel_context(test::params(1, 1, 1.0, 1));
    CounterRng rng(23, 0);
    for (int k = 0; k < 5; ++k) {
        const Vec3 v = test::random_velocity(rng, Vec3::Zero(), 1.5);
        const auto est = sigma_oracle(ctx, v, 200000, 100 + k);
        const double exact = sigma_closed_form(ctx, v);
        CHECK(std::abs(est.estimate - exact) < 4 * est.standard_error);
        CHECK_THAT(est.estimate, WithinRel(exact, 5e-3));
        const auto el = sigma_oracle(ctx_el, v, 200000, 200 + k);
        CHECK(std::abs(el.estimate - est.estimate) < 4 * std::hypot(el.standard_error, est.standard_error));
    }
    const auto x = sigma_oracle(ctx, Vec3(1.2, 0, 0), 200000, 7);
    const auto z = sigma_oracle(ctx, Vec3(0, 0, 1.2), 200000, 8);
    CHECK(std::abs(x.estimate - z.estimate) < 4 * std::hypot(x.standard_error, z.standard_error));
}

TEST_CASE("gain oracle on the equilibrium", "[oracle]")
{
    const auto p = test::params(1, 2, 0.5, 1, Vec3(0.1, 0, 0));
    const auto ctx = make_kernel_context(p);
    const Maxwellian M = ctx.equilibrium;
    const Density f = [&](const Vec3& x) { return M(x); };
    for (const Vec3& v : {Vec3(0.1, 0, 0), Vec3(0.8, -0.4, 0.2), Vec3(-1.0, 1.0, 1.0)}) {
        const auto est = qplus_oracle(ctx, v, f, 400000, 31, {M.u, M.thermal_speed()});
        const double exact = sigma_closed_form(ctx, v) * M(v);
        CHECK(std::abs(est.estimate - exact) < 3 * est.standard_error + 1e-3 * exact);
    }
}

TEST_CASE("narrow Gaussian probe recovers the kernel", "[oracle]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const auto ctx = make_kernel_context(p);
    const Vec3 v(1, 0, 0), vp = Vec3::Zero();
    const double width = 0.01;
    const Maxwellian probe{1.0, width * width, vp};
    const Density f = [&](const Vec3& x) { return probe(x); };
    const auto est = qplus_oracle(ctx, v, f, 1000000, 41, {vp, width});
    CHECK_THAT(est.estimate, WithinRel(kernel_K(ctx, v, vp), 0.02));
    CHECK(est.standard_error < 0.005 * est.estimate);
}
