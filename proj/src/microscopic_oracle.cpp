#include "ilb/microscopic_oracle.hpp"

#include "ilb/error.hpp"
#include "ilb/parallel.hpp"
#include "ilb/quadrature.hpp"
#include "ilb/rng.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

namespace ilb {

namespace {

constexpr std::uint64_t kBlock = 4096;

// two unit vectors completing n to an orthonormal frame
std::pair<Vec3, Vec3> plane_basis(const Vec3& n)
{
    const Vec3 trial = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    Vec3 e1 = n.cross(trial).normalized();
    Vec3 e2 = n.cross(e1);
    return {e1, e2};
}

Vec3 gaussian_vec(CounterRng& rng)
{
    const double x = rng.normal();
    const double y = rng.normal();
    const double z = rng.normal();
    return {x, y, z};
}

double gaussian_pdf3(const Vec3& x, double sd)
{
    const double var = sd * sd;
    return std::pow(2.0 * std::numbers::pi * var, -1.5) * std::exp(-x.squaredNorm() / (2.0 * var));
}

template <class Sampler>
McEstimate run_blocks(std::uint64_t budget, Sampler&& sample_block)
{
    const std::uint64_t blocks = (budget + kBlock - 1) / kBlock;
    std::vector<Welford> acc(blocks);
    parallel_for(blocks, [&](std::size_t b) {
        const std::uint64_t count = std::min<std::uint64_t>(kBlock, budget - b * kBlock);
        sample_block(b, count, acc[b]);
    });
    Welford total;
    for (const auto& a : acc)
        total.merge(a);
    return {total.mean, total.standard_error(), total.n};
}

} // namespace

CollisionPair inverse_collision_map(const DerivedConstants& c, const Vec3& v, const Vec3& w, const Vec3& n)
{
    if (std::abs(n.norm() - 1.0) > 1e-12)
        throw InvalidParameter("impact vector n must have unit length");
    const double qn = (v - w).dot(n);
    CollisionPair out;
    out.v = v;
    out.w = w;
    out.n = n;
    out.vstar = v - 2.0 * c.gamma * qn * n;
    out.wstar = w + 2.0 * c.gammabar * qn * n;
    return out;
}

std::pair<Vec3, Vec3> direct_collision_map(const GasParameters& p, const DerivedConstants& c, const Vec3& v,
                                           const Vec3& w, const Vec3& n)
{
    if (std::abs(n.norm() - 1.0) > 1e-12)
        throw InvalidParameter("impact vector n must have unit length");
    const double qn = (v - w).dot(n);
    const double k = (1.0 + p.eps) * qn;
    return {v - c.alpha * k * n, w + (1.0 - c.alpha) * k * n};
}

McEstimate qplus_oracle(const KernelContext& ctx, const Vec3& v, const Density& f, std::uint64_t budget,
                        std::uint64_t seed, const GaussianProposal& proposal)
{
    if (budget < 1000)
        throw BudgetTooSmall("qplus_oracle needs at least 1000 samples");
    if (!(proposal.sd > 0))
        throw InvalidParameter("proposal standard deviation must be positive");

    const auto& c = ctx.consts;
    const auto& p = ctx.params;
    const Maxwellian m1 = background_distribution(p);
    const double a1 = m1.thermal_speed();
    const double broad_sd = 1.5 * reference_thermal_width(p, c);
    constexpr double mix_main = 0.8;
    const double two_gamma = 2.0 * c.gamma;
    const double inv_eps2 = 1.0 / (p.eps * p.eps);

    return run_blocks(budget, [&](std::size_t block, std::uint64_t count, Welford& acc) {
        CounterRng rng(seed, block);
        for (std::uint64_t k = 0; k < count; ++k) {
            const bool main = rng.uniform() < mix_main;
            const Vec3 vs = main ? Vec3(proposal.center + proposal.sd * gaussian_vec(rng))
                                 : Vec3(p.u1 + broad_sd * gaussian_vec(rng));
            const Vec3 e1_draw(rng.normal(), rng.normal(), 0.0);
            const Vec3 x = v - vs;
            const double len = x.norm();
            if (len == 0.0) {
                acc.add(0.0);
                continue;
            }
            const Vec3 n = x / len;
            const double s = len / two_gamma; // q.n of the background partner
            const double g = mix_main * gaussian_pdf3(vs - proposal.center, proposal.sd)
                + (1.0 - mix_main) * gaussian_pdf3(vs - p.u1, broad_sd);

            // in-plane part of q chosen so that the in-plane part of w* - u1 is N(0, a1^2)
            const auto [e1, e2] = plane_basis(n);
            const Vec3 d = v - p.u1;
            const Vec3 d_perp = d - d.dot(n) * n;
            const Vec3 q_perp = d_perp - a1 * (e1_draw.x() * e1 + e1_draw.y() * e2);
            const double pdf_perp = std::exp(-0.5 * (e1_draw.x() * e1_draw.x() + e1_draw.y() * e1_draw.y()))
                / (2.0 * std::numbers::pi * a1 * a1);

            const Vec3 w = v - s * n - q_perp;
            const CollisionPair pair = inverse_collision_map(c, v, w, n);
            const double qn = (v - w).dot(n);
            const double integrand = inv_eps2 * std::abs(qn) * f(pair.vstar) * m1(pair.wstar);
            const double jac = two_gamma * two_gamma * two_gamma * s * s;
            acc.add(integrand / (g * jac * pdf_perp));
        }
    });
}

McEstimate sigma_oracle(const KernelContext& ctx, const Vec3& v, std::uint64_t budget, std::uint64_t seed)
{
    if (budget < 1000)
        throw BudgetTooSmall("sigma_oracle needs at least 1000 samples");
    const Maxwellian m1 = background_distribution(ctx.params);
    const double a1 = m1.thermal_speed();
    return run_blocks(budget, [&](std::size_t block, std::uint64_t count, Welford& acc) {
        CounterRng rng(seed ^ 0x5157A0ULL, block);
        for (std::uint64_t k = 0; k < count; ++k) {
            const Vec3 w = m1.u + a1 * gaussian_vec(rng);
            Vec3 n = gaussian_vec(rng).normalized();
            const Vec3 q = v - w;
            if (q.dot(n) < 0)
                n = -n;
            acc.add(2.0 * std::numbers::pi * q.dot(n));
        }
    });
}

double sigma_oracle_quadrature(const KernelContext& ctx, const Vec3& v, std::size_t order)
{
    const Maxwellian m1 = background_distribution(ctx.params);
    const double a1 = m1.thermal_speed();
    const double s_max = (v - m1.u).norm() + 12.0 * a1;
    const auto& gs = gauss_legendre(order);
    const auto& gc = gauss_legendre(order);
    const auto& gx = gauss_legendre(6);
    const std::size_t nphi = order;
    const std::size_t nphi_n = 4;
    const std::size_t s_panels = 8;

    // inner: int over the hemisphere q.n >= 0 of |q.n| dn, in the frame of q
    auto hemisphere = [&](const Vec3& q) {
        const double qlen = q.norm();
        if (qlen == 0.0)
            return 0.0;
        const Vec3 qhat = q / qlen;
        const auto [e1, e2] = plane_basis(qhat);
        double acc = 0.0;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double cx = 0.5 * (gx.nodes[i] + 1.0);
            const double sx = std::sqrt(1.0 - cx * cx);
            double ring = 0.0;
            for (std::size_t j = 0; j < nphi_n; ++j) {
                const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(nphi_n);
                const Vec3 n = cx * qhat + sx * (std::cos(phi) * e1 + std::sin(phi) * e2);
                ring += std::abs(q.dot(n));
            }
            acc += 0.5 * gx.weights[i] * ring * 2.0 * std::numbers::pi / static_cast<double>(nphi_n);
        }
        return acc;
    };

    // outer: w = v - s omega, dw = s^2 ds domega
    double total = 0.0;
    for (std::size_t ic = 0; ic < gc.size(); ++ic) {
        const double ct = gc.nodes[ic];
        const double st = std::sqrt(1.0 - ct * ct);
        for (std::size_t ip = 0; ip < nphi; ++ip) {
            const double phi = 2.0 * std::numbers::pi * (static_cast<double>(ip) + 0.5) / static_cast<double>(nphi);
            const Vec3 omega(st * std::cos(phi), st * std::sin(phi), ct);
            const double radial = gs.integrate_composite(
                [&](double s) {
                    const Vec3 q = s * omega;
                    return s * s * m1(v - q) * hemisphere(q);
                },
                0.0, s_max, s_panels);
            total += gc.weights[ic] * radial * 2.0 * std::numbers::pi / static_cast<double>(nphi);
        }
    }
    return total;
}

CalibrationRecord calibrate(const GasParameters& p, std::uint64_t seed, std::uint64_t mc_samples)
{
    const KernelContext unit = make_kernel_context(p, {1.0, 1.0});
    const double a1 = std::sqrt(p.theta1 / p.m1);
    const Vec3 dir = Vec3(1.0, 2.0, -1.0).normalized();
    const std::vector<double> radii{0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0};

    CalibrationRecord rec;
    rec.mc_samples = mc_samples;
    rec.seed = seed;
    std::vector<double> norm_c;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        const Vec3 v = p.u1 + radii[k] * a1 * dir;
        CalibrationPoint pt;
        pt.r = radii[k];
        pt.sigma_quadrature = sigma_oracle_quadrature(unit, v);
        pt.braces_term = unit.gauss_norm * sigma_braces(unit, radii[k] * a1);
        pt.kernel_route = sigma_kernel_route(unit, radii[k] * a1);
        if (mc_samples > 0) {
            const auto mc = sigma_oracle(unit, v, mc_samples, seed + k);
            pt.sigma_mc = mc.estimate;
            pt.sigma_mc_stderr = mc.standard_error;
        }
        norm_c.push_back(pt.sigma_quadrature / pt.kernel_route);
        rec.points.push_back(pt);
    }
    double mean_norm = 0.0;
    for (double x : norm_c)
        mean_norm += x;
    mean_norm /= static_cast<double>(norm_c.size());

    std::vector<double> c_sigma;
    for (const auto& pt : rec.points)
        c_sigma.push_back(pt.sigma_quadrature / (mean_norm * pt.braces_term));
    double mean_cs = 0.0;
    for (double x : c_sigma)
        mean_cs += x;
    mean_cs /= static_cast<double>(c_sigma.size());

    for (std::size_t k = 0; k < norm_c.size(); ++k) {
        rec.norm_C_spread = std::max(rec.norm_C_spread, std::abs(norm_c[k] / mean_norm - 1.0));
        rec.c_sigma_spread = std::max(rec.c_sigma_spread, std::abs(c_sigma[k] / mean_cs - 1.0));
    }
    rec.constants = {mean_norm, mean_cs};
    return rec;
}

} // namespace ilb
