#include "support.hpp"

#include "ilb/collision_kernel.hpp"
#include "ilb/error.hpp"
#include "ilb/grid.hpp"
#include "ilb/operator.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <cstring>
#include <fstream>

using namespace ilb;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::VectorXd random_vector(std::size_t n, std::uint64_t seed)
{
    CounterRng rng(seed, 0);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (auto& x : y)
        x = rng.normal();
    return y;
}

std::filesystem::path scratch(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / "ilb_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("grid layout", "[grid]")
{
    const auto g = build_grid(4.0, 8, 1.0, Vec3::Zero());
    REQUIRE(g.size() == 512);
    CHECK(g.h == 1.0);
    double vol = 0;
    for (double w : g.weights)
        vol += w;
    CHECK(vol == 512.0);

    double dmin = 1e300;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = i + 1; j < g.size(); ++j)
            dmin = std::min(dmin, (g.nodes[i] - g.nodes[j]).norm());
    CHECK_THAT(dmin, WithinRel(1.0, 1e-15));
    CHECK(g.nodes[g.index(0, 0, 0)].isApprox(Vec3(-3.5, -3.5, -3.5)));
    CHECK(g.nodes[g.index(7, 0, 3)].isApprox(Vec3(3.5, -3.5, -0.5)));

    CHECK_THROWS_AS(build_grid(4.0, 9, 1.0, Vec3::Zero()), InvalidParameter);
    CHECK_THROWS_AS(build_grid(4.0, 6, 1.0, Vec3::Zero()), InvalidParameter);
    CHECK_THROWS_AS(build_grid(0.0, 8, 1.0, Vec3::Zero()), InvalidParameter);
}

TEST_CASE("equilibrium mass on the default grid", "[grid]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const auto ctx = make_kernel_context(p);
    const auto g = build_grid(6.0, 24, p);
    double mass = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        mass += g.weights[i] * ctx.equilibrium(g.nodes[i]);
    CHECK_THAT(mass, WithinAbs(1.0, 1e-6));
}

TEST_CASE("dense operator structure", "[operator]")
{
    const auto p = test::params(1, 1.5, 0.6, 1, Vec3(0.2, 0, 0));
    const auto ctx = make_kernel_context(p);
    const auto g = build_grid(5.0, 8, p);
    const auto op = assemble_operator(ctx, g);
    const auto& T = op.T;

    CHECK((T - T.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(T.allFinite());
    bool metzler = true;
    for (Eigen::Index i = 0; i < T.rows(); ++i)
        for (Eigen::Index j = 0; j < T.cols(); ++j)
            if (i != j && T(i, j) < 0)
                metzler = false;
    CHECK(metzler);

    // conservation: the equilibrium vector is a null vector, so mass is preserved
    const Eigen::VectorXd yeq = op.equilibrium_vector();
    CHECK((T * yeq).norm() <= 1e-12 * op.norm_bound() * yeq.norm());

    // Gershgorin: every disc lies in (-inf, tol]; use the similarity scaling by yeq
    double gersh = -1e300;
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
        double off = 0;
        for (Eigen::Index j = 0; j < T.cols(); ++j)
            if (j != i)
                off += T(i, j) * yeq[j] / yeq[i];
        gersh = std::max(gersh, T(i, i) + off);
    }
    CHECK(gersh <= 1e-12 * op.norm_bound());

    const Eigen::VectorXd f = op.from_symmetric(random_vector(g.size(), 3));
    CHECK((op.to_symmetric(f) - random_vector(g.size(), 3)).norm() < 1e-12 * f.size());
}

TEST_CASE("assembly memory budget", "[operator]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const auto ctx = make_kernel_context(p);
    const auto g = build_grid(5.0, 8, p);
    CHECK_THROWS_AS(assemble_operator(ctx, g, LossMode::Conservative, 1000), AssemblyOverflow);
}

TEST_CASE("matrix-free product matches the dense matrix", "[operator]")
{
    const auto p = test::params(2, 1, 0.8, 1.3);
    const auto ctx = make_kernel_context(p);
    const auto g = build_grid(5.0, 8, p);
    for (auto mode : {LossMode::Conservative, LossMode::ClosedForm}) {
        const auto dense = assemble_operator(ctx, g, mode);
        const MatrixFreeOperator mf(ctx, g, mode);
        const Eigen::VectorXd y = random_vector(g.size(), 4);
        Eigen::VectorXd a, b;
        dense.apply(y, a);
        mf.apply(y, b);
        CHECK((a - b).norm() <= 1e-12 * a.norm());
        CHECK((mf.loss() - dense.loss).cwiseAbs().maxCoeff() <= 1e-12 * dense.loss.maxCoeff());
    }
}

TEST_CASE("closed-form equilibrium residual decreases under refinement", "[operator]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const auto ctx = make_kernel_context(p);
    double prev = 1e300, prev_corr = 1e300;
    for (std::size_t N : {8, 12, 16}) {
        const auto g = build_grid(6.0, N, p);
        const MatrixFreeOperator mf(ctx, g, LossMode::ClosedForm);
        const double res = equilibrium_residual(mf, mf.equilibrium_vector());
        CHECK(res < prev);
        prev = res;

        // conservative loss drifts less from sigma on finer grids
        const MatrixFreeOperator cons(ctx, g, LossMode::Conservative);
        double corr = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = sigma_closed_form(ctx, g.nodes[i]);
            if ((g.nodes[i] - p.u1).norm() < 3.0)
                corr = std::max(corr, std::abs(cons.loss()[static_cast<Eigen::Index>(i)] / s - 1));
        }
        CHECK(corr < prev_corr);
        prev_corr = corr;
    }
}

TEST_CASE("dirichlet form", "[operator][property]")
{
    const auto p = test::params(1, 2, 0.5, 1);
    const auto ctx = make_kernel_context(p);
    const auto g = build_grid(5.0, 8, p);
    const auto op = assemble_operator(ctx, g);

    Eigen::VectorXd M(static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i)
        M[static_cast<Eigen::Index>(i)] = ctx.equilibrium(g.nodes[i]);
    CHECK(std::abs(dirichlet_form(ctx, g, M)) < 1e-14);

    for (std::uint64_t k = 0; k < 20; ++k) {
        const Eigen::VectorXd y = random_vector(g.size(), 100 + k);
        const Eigen::VectorXd f = op.from_symmetric(y);
        const double b = dirichlet_form(ctx, g, f);
        const double matrix = y.dot(op.T * y);
        CHECK(b <= 1e-10 * y.squaredNorm());
        CHECK_THAT(b, WithinRel(matrix, 1e-8));
    }
    CHECK_THROWS_AS(dirichlet_form(ctx, g, Eigen::VectorXd::Zero(7)), GridMismatch);
}

TEST_CASE("operator cache", "[operator]")
{
    const auto p = test::params(1, 1, 0.7, 1);
    const auto ctx = make_kernel_context(p);
    const auto op = assemble_operator(ctx, build_grid(5.0, 8, p));
    const auto path = scratch("op.bin");
    save_operator(path, op);
    const auto back = load_operator(path);
    CHECK(back.T.rows() == op.T.rows());
    CHECK(std::memcmp(back.T.data(), op.T.data(), sizeof(double) * static_cast<std::size_t>(op.T.size())) == 0);
    CHECK(back.loss == op.loss);
    CHECK(back.weights == op.weights);
    CHECK(back.meta.checksum == op.meta.checksum);
    CHECK(back.meta.sector == op.meta.sector);
    CHECK(back.meta.n_axis == 8);
    CHECK(back.meta.params.eps == 0.7);

    {
        // flip one byte in the matrix payload, which sits before five trailing vectors
        std::fstream io(path, std::ios::in | std::ios::out | std::ios::binary);
        io.seekp(-static_cast<std::streamoff>(5 * 512 * sizeof(double) + 64), std::ios::end);
        io.put('\x5a');
    }
    CHECK_THROWS_AS(load_operator(path), CacheMismatch);
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTIT-and-some-padding-bytes-to-fill-a-header-000000000000000000000000";
    }
    CHECK_THROWS_AS(load_operator(path), CacheMismatch);
    CHECK_THROWS_AS(load_operator(scratch("missing.bin")), CacheMismatch);

    OperatorMeta meta = op.meta;
    const Eigen::VectorXd f = random_vector(10, 5);
    save_state(scratch("state.bin"), meta, f);
    CHECK(load_state(scratch("state.bin")) == f);
    CHECK_THROWS_AS(load_operator(scratch("state.bin")), CacheMismatch);
}

TEST_CASE("radial reduction", "[radial]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const auto ctx = make_kernel_context(p);
    const auto rg = reduce_isotropic(ctx, RadialGridSpec{128, 6.0, 16});

    CHECK((rg.gbar - rg.gbar.transpose()).cwiseAbs().maxCoeff() <= 1e-13 * rg.gbar.cwiseAbs().maxCoeff());
    CHECK(rg.kbar.allFinite());

    // reduced gain applied to the equilibrium profile reproduces sigma M
    Eigen::VectorXd M(rg.r.size());
    for (Eigen::Index k = 0; k < rg.r.size(); ++k)
        M[k] = ctx.equilibrium(p.u1 + Vec3(rg.r[k], 0, 0));
    const Eigen::VectorXd gain = rg.kbar * rg.weights.cwiseProduct(M);
    double worst = 0;
    for (Eigen::Index k = 0; k < rg.r.size(); ++k) {
        if (rg.r[k] > 0.6 * 6.0 * rg.width)
            continue;
        const double expect = sigma_closed_form_radius(ctx, rg.r[k]) * M[k];
        worst = std::max(worst, std::abs(gain[k] / expect - 1));
    }
    CHECK(worst < 1e-3);

    const auto op = assemble_radial_operator(ctx, rg);
    CHECK(op.meta.sector == "radial-isotropic");
    CHECK((op.T - op.T.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((op.T * op.equilibrium_vector()).norm() <= 1e-12 * op.norm_bound());
}

TEST_CASE("radial closed-form residual converges", "[radial]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const auto ctx = make_kernel_context(p);
    double prev = 1e300;
    for (std::size_t nr : {32, 64, 128}) {
        const auto rg = reduce_isotropic(ctx, RadialGridSpec{nr, 6.0, 16});
        const auto op = assemble_radial_operator(ctx, rg, LossMode::ClosedForm);
        const double res = equilibrium_residual(op, op.equilibrium_vector());
        CHECK(res < 0.3 * prev);
        prev = res;
    }
}
