#include "support.hpp"

#include "ilb/collision_kernel.hpp"
#include "ilb/error.hpp"
#include "ilb/operator.hpp"
#include "ilb/spectral.hpp"

#include <catch_amalgamated.hpp>

#include <fstream>

using namespace ilb;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct RadialCase {
    KernelContext ctx;
    OperatorMatrix op;
    SpectrumResult spec;
};

RadialCase radial_case(const GasParameters& p, std::size_t nr)
{
    auto ctx = make_kernel_context(p);
    auto op = assemble_radial_operator(ctx, reduce_isotropic(ctx, RadialGridSpec{nr, 6.0, 16}));
    auto spec = eigendecompose(op, sigma_closed_form(ctx, p.u1));
    return {ctx, std::move(op), std::move(spec)};
}

/// Symmetrized elastic operator built from an arbitrary pointwise kernel.
template <class Kernel>
Eigen::MatrixXd elastic_matrix(const VelocityGrid& g, const Maxwellian& M, Kernel&& K)
{
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd yeq(n);
    for (Eigen::Index i = 0; i < n; ++i)
        yeq[i] = std::sqrt(g.weights[i] * M(g.nodes[i]));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double kij = K(g.nodes[i], g.nodes[j]);
            T(i, j) = T(j, i) = std::sqrt(g.weights[i] * g.weights[j]) * kij * std::sqrt(M(g.nodes[j]) / M(g.nodes[i]));
        }
    for (Eigen::Index i = 0; i < n; ++i)
        T(i, i) = -(T.row(i).dot(yeq)) / yeq[i];
    return T;
}

} // namespace

TEST_CASE("diagonal 2x2 spectrum", "[spectral]")
{
    Eigen::Matrix2d T;
    T << -1, 0, 0, -3;
    const auto s = eigendecompose(Eigen::MatrixXd(T));
    CHECK(s.eigenvalues[0] == -1.0);
    CHECK(s.eigenvalues[1] == -3.0);
    CHECK(s.gap == 2.0);
    CHECK(s.residuals.maxCoeff() < 1e-15);
}

TEST_CASE("dense eigenpairs of a random symmetric matrix", "[spectral]")
{
    CounterRng rng(31, 0);
    Eigen::MatrixXd A(40, 40);
    for (auto& x : A.reshaped())
        x = rng.normal();
    const Eigen::MatrixXd T = -(A * A.transpose());
    const auto s = eigendecompose(T);
    for (Eigen::Index k = 1; k < s.eigenvalues.size(); ++k)
        REQUIRE(s.eigenvalues[k] <= s.eigenvalues[k - 1]);
    CHECK(s.residuals.maxCoeff() <= 1e-10 * s.norm);
    CHECK_THAT(s.eigenvalues.sum(), WithinRel(T.trace(), 1e-12));
}

TEST_CASE("radial spectrum structure", "[spectral]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const auto rc = radial_case(p, 128);
    const auto& s = rc.spec;

    CHECK(s.sector == "radial-isotropic");
    CHECK(s.nu0 == sigma_closed_form(rc.ctx, p.u1));
    CHECK(s.eigenvalues.maxCoeff() <= 1e-10 * s.norm);
    CHECK(std::abs(s.lambda0()) <= 1e-10 * s.norm);
    CHECK(s.residuals.maxCoeff() <= 1e-10 * s.norm);

    const Eigen::VectorXd yeq = rc.op.equilibrium_vector().normalized();
    CHECK(std::abs(s.eigvec0().dot(yeq)) > 1 - 1e-6);

    CHECK(s.gap > 0);
    CHECK(s.gap < s.nu0);

    const auto rep = spectrum_report(s, rc.op);
    CHECK(rep.coercive);
    CHECK(rep.max_rayleigh <= s.lambda1() + 1e-8 * s.norm);
    CHECK(rep.isolated.size() >= 2);
    CHECK(rep.separation_margin >= rep.band_rel);
}

TEST_CASE("radial gap is stable under refinement", "[spectral]")
{
    const auto p = test::params(1, 1, 0.5, 1);
    const double g1 = radial_case(p, 128).spec.gap;
    const double g2 = radial_case(p, 160).spec.gap;
    CHECK_THAT(g2, WithinRel(g1, 0.02));
}

TEST_CASE("threshold scales with the background thermal speed", "[spectral]")
{
    const auto a = make_kernel_context(test::params(1, 1, 0.5, 1));
    const auto b = make_kernel_context(test::params(1, 1, 0.5, 4));
    CHECK_THAT(sigma_closed_form(b, Vec3::Zero()) / sigma_closed_form(a, Vec3::Zero()), WithinRel(2.0, 1e-14));
}

TEST_CASE("Lanczos agrees with the dense solver", "[spectral]")
{
    const auto p = test::params(1, 2, 0.7, 1);
    const auto rc = radial_case(p, 96);
    EigenOptions opt;
    opt.k = 6;
    const auto lz = eigendecompose_lanczos(rc.op, rc.spec.nu0, opt, "radial-isotropic");
    REQUIRE(lz.eigenvalues.size() == 6);
    for (Eigen::Index k = 0; k < 6; ++k)
        CHECK_THAT(lz.eigenvalues[k], WithinAbs(rc.spec.eigenvalues[k], 1e-9 * rc.spec.norm));
    CHECK(lz.residuals.maxCoeff() <= 1e-10 * lz.norm * 10);
    CHECK(std::abs(lz.eigvec0().dot(rc.spec.eigvec0())) > 1 - 1e-10);

    const auto again = eigendecompose_lanczos(rc.op, rc.spec.nu0, opt, "radial-isotropic");
    CHECK(again.eigenvalues == lz.eigenvalues);

    EigenOptions tight = opt;
    tight.max_iter = 8;
    CHECK_THROWS_AS(eigendecompose_lanczos(rc.op, rc.spec.nu0, tight), NonConvergence);
}

TEST_CASE("elastic gap matches the specialized kernel bit for bit", "[spectral]")
{
    const auto p = test::params(1, 1, 1, 1);
    const auto ctx = make_kernel_context(p);
    const auto g = build_grid(5.0, 8, p);
    const auto general = elastic_matrix(g, ctx.equilibrium, [&](const Vec3& a, const Vec3& b) {
        return kernel_K(ctx, a, b);
    });
    const auto classical = elastic_matrix(g, ctx.equilibrium, [&](const Vec3& a, const Vec3& b) {
        return kernel_K_classical(p, ctx.norm_C, a, b);
    });
    CHECK((general - classical).cwiseAbs().maxCoeff() == 0.0);
    const auto s1 = eigendecompose(general);
    const auto s2 = eigendecompose(classical);
    CHECK(s1.gap == s2.gap);
    CHECK(s1.gap > 0);
}

TEST_CASE("spectrum CSV", "[spectral]")
{
    Eigen::Matrix2d T;
    T << -1, 0, 0, -3;
    const auto s = eigendecompose(Eigen::MatrixXd(T), {}, "test");
    const auto path = std::filesystem::temp_directory_path() / "ilb_spectrum.csv";
    write_spectrum_csv(path, s, "nu0=1");
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "# nu0=1");
    std::getline(in, line);
    CHECK(line == "index,eigenvalue,residual,sector");
    std::getline(in, line);
    CHECK(line.rfind("0,-1", 0) == 0);
}
