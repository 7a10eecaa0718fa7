#include "ilb/collision_kernel.hpp"

#include "ilb/error.hpp"
#include "ilb/parallel.hpp"
#include "ilb/quadrature.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

namespace ilb {

namespace {

constexpr double kMinExponent = -745.0;

std::atomic<unsigned> g_threads{0};

// -b [ (1+mu) s + (|v-u1|^2 - |v+z-u1|^2)/s ]^2 with d = v - u1, s = |z|
double kernel_exponent(const KernelContext& ctx, const Vec3& d, const Vec3& z)
{
    const double s = z.norm();
    const double ratio = -(2.0 * d.dot(z) + s * s) / s;
    const double br = (1.0 + ctx.consts.mu) * s + ratio;
    return -ctx.b * br * br;
}

double symmetrized_exponent(const KernelContext& ctx, const Vec3& d, const Vec3& z)
{
    const double s = z.norm();
    const double ratio = (2.0 * d.dot(z) + s * s) / s;
    const double as = (1.0 + ctx.consts.mu) * s;
    return -ctx.b * (as * as + ratio * ratio);
}

void require_distinct(const Vec3& v, const Vec3& v2)
{
    if (v == v2)
        throw SingularInput("kernel is singular at v == v'");
}

// erf(x) - erf(y) without cancellation when both arguments are large
double erf_difference(double x, double y)
{
    if (x > 0 && y > 0)
        return std::erfc(y) - std::erfc(x);
    if (x < 0 && y < 0)
        return std::erfc(-x) - std::erfc(-y);
    return std::erf(x) - std::erf(y);
}

} // namespace

void set_thread_count(unsigned n) { g_threads = n; }

unsigned thread_count()
{
    const unsigned n = g_threads.load();
    if (n != 0)
        return n;
    return std::max(1u, std::thread::hardware_concurrency());
}

NormalizationConstants hemisphere_hard_sphere() { return {0.5, std::numbers::pi}; }

KernelContext make_kernel_context(const GasParameters& p, NormalizationConstants nc)
{
    if (!(nc.norm_C > 0) || !(nc.c_sigma > 0))
        throw InvalidParameter("normalization constants must be positive");
    KernelContext ctx;
    ctx.params = p;
    ctx.consts = derive_constants(p);
    ctx.norm_C = nc.norm_C;
    ctx.c_sigma = nc.c_sigma;
    ctx.b = p.m1 / (8.0 * p.theta1);
    ctx.gauss_norm = std::sqrt(p.m1 / (2.0 * std::numbers::pi * p.theta1));
    ctx.scale = ctx.norm_C * ctx.consts.prefactor * ctx.gauss_norm;
    ctx.equilibrium = equilibrium_distribution(p, ctx.consts);
    return ctx;
}

double kernel_K(const KernelContext& ctx, const Vec3& v, const Vec3& v2)
{
    require_distinct(v, v2);
    const Vec3 d = v - ctx.params.u1;
    const Vec3 d2 = v2 - ctx.params.u1;
    const double s = (v - v2).norm();
    const double delta = d.squaredNorm() - d2.squaredNorm();
    const double br = (1.0 + ctx.consts.mu) * s + delta / s;
    const double ex = std::max(-ctx.b * br * br, kMinExponent);
    return ctx.scale / s * std::exp(ex);
}

double log_kernel_K(const KernelContext& ctx, const Vec3& v, const Vec3& v2)
{
    require_distinct(v, v2);
    const Vec3 d = v - ctx.params.u1;
    const Vec3 d2 = v2 - ctx.params.u1;
    const double s = (v - v2).norm();
    const double delta = d.squaredNorm() - d2.squaredNorm();
    const double br = (1.0 + ctx.consts.mu) * s + delta / s;
    return std::log(ctx.scale) - std::log(s) - ctx.b * br * br;
}

double kernel_K_classical(const GasParameters& p, double norm_C, const Vec3& v, const Vec3& v2)
{
    require_distinct(v, v2);
    const double b = p.m1 / (8.0 * p.theta1);
    const double scale = norm_C * 2.0 * std::sqrt(p.m1 / (2.0 * std::numbers::pi * p.theta1));
    const Vec3 d = v - p.u1;
    const Vec3 d2 = v2 - p.u1;
    const double s = (v - v2).norm();
    const double delta = d.squaredNorm() - d2.squaredNorm();
    const double br = s + delta / s;
    const double ex = std::max(-b * br * br, kMinExponent);
    return scale / s * std::exp(ex);
}

double symmetrized_G(const KernelContext& ctx, const Vec3& v, const Vec3& v2)
{
    require_distinct(v, v2);
    const Vec3 d = v - ctx.params.u1;
    const Vec3 d2 = v2 - ctx.params.u1;
    const double s = (v - v2).norm();
    const double delta = d.squaredNorm() - d2.squaredNorm();
    const double as = (1.0 + ctx.consts.mu) * s;
    const double ratio = delta / s;
    const double ex = std::max(-ctx.b * (as * as + ratio * ratio), kMinExponent);
    return ctx.scale / s * std::exp(ex);
}

double symmetrized_G_definition(const KernelContext& ctx, const Vec3& v, const Vec3& v2)
{
    const double lg = log_kernel_K(ctx, v, v2)
        + 0.5 * (ctx.equilibrium.log_value(v2) - ctx.equilibrium.log_value(v));
    return std::exp(std::max(lg, kMinExponent));
}

double sigma_braces(const KernelContext& ctx, double r)
{
    const double a2 = ctx.params.theta1 / ctx.params.m1;
    const double a = std::sqrt(a2);
    if (r < 1e-8 * a)
        return 8.0 * a2 + (4.0 / 3.0) * r * r;
    // int_0^{2r} exp(-m1 t^2 / (8 theta1)) dt = sqrt(2 pi) a erf(r / (sqrt2 a))
    const double gauss_int = std::sqrt(2.0 * std::numbers::pi) * a * std::erf(r / (std::numbers::sqrt2 * a));
    return 4.0 * a2 * std::exp(-r * r / (2.0 * a2)) + (2.0 * r + 2.0 * a2 / r) * gauss_int;
}

double sigma_closed_form_radius(const KernelContext& ctx, double r)
{
    return ctx.norm_C * ctx.c_sigma * ctx.gauss_norm * sigma_braces(ctx, r);
}

double sigma_closed_form(const KernelContext& ctx, const Vec3& v)
{
    return sigma_closed_form_radius(ctx, (v - ctx.params.u1).norm());
}

double detailed_balance_residual(const KernelContext& ctx, const Vec3& v, const Vec3& v2,
                                 const std::optional<Maxwellian>& equilibrium)
{
    const Maxwellian& mx = equilibrium ? *equilibrium : ctx.equilibrium;
    const double lhs = log_kernel_K(ctx, v, v2) + mx.log_value(v2);
    const double rhs = log_kernel_K(ctx, v2, v) + mx.log_value(v);
    return std::abs(std::expm1(rhs - lhs));
}

double singular_cell_gain(const KernelContext& ctx, const Vec3& v, double h)
{
    const Vec3 d = v - ctx.params.u1;
    return cube_cell_integral(h, [&](const Vec3& z) {
        return ctx.scale / z.norm() * std::exp(std::max(kernel_exponent(ctx, d, z), kMinExponent));
    });
}

double singular_cell_symmetrized(const KernelContext& ctx, const Vec3& v, double h)
{
    const Vec3 d = v - ctx.params.u1;
    return cube_cell_integral(h, [&](const Vec3& z) {
        return ctx.scale / z.norm() * std::exp(std::max(symmetrized_exponent(ctx, d, z), kMinExponent));
    });
}

Eigen::VectorXd gain_apply_at(const KernelContext& ctx, const VelocityGrid& grid, const Eigen::VectorXd& f,
                              std::span<const std::size_t> rows)
{
    if (static_cast<std::size_t>(f.size()) != grid.size())
        throw GridMismatch("grid function size does not match the velocity grid");
    for (auto r : rows)
        if (r >= grid.size())
            throw GridMismatch("row index outside the velocity grid");
    // Singularity subtraction: int K(v,v') M(v') dv' = sigma(v) M(v) by detailed
    // balance, so Q+f(v) = int K(v,v') [f(v') - f(v) M(v')/M(v)] dv' + sigma(v) f(v).
    // The bracket vanishes at v' = v, which removes the diagonal cell.
    std::vector<double> logm(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j)
        logm[j] = ctx.equilibrium.log_value(grid.nodes[j]);
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    parallel_for(rows.size(), [&](std::size_t k) {
        const std::size_t i = rows[k];
        const Vec3& vi = grid.nodes[i];
        const double fi = f[static_cast<Eigen::Index>(i)];
        double acc = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            if (j == i)
                continue;
            const double fj = f[static_cast<Eigen::Index>(j)];
            const double sub = fi == 0.0 ? 0.0 : fi * std::exp(logm[j] - logm[i]);
            if (fj == sub)
                continue;
            acc += kernel_K(ctx, vi, grid.nodes[j]) * grid.weights[j] * (fj - sub);
        }
        out[static_cast<Eigen::Index>(k)] = acc + sigma_closed_form(ctx, vi) * fi;
    });
    return out;
}

Eigen::VectorXd gain_apply(const KernelContext& ctx, const VelocityGrid& grid, const Eigen::VectorXd& f)
{
    std::vector<std::size_t> rows(grid.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        rows[i] = i;
    return gain_apply_at(ctx, grid, f, rows);
}

double dirichlet_form(const KernelContext& ctx, const VelocityGrid& grid, const Eigen::VectorXd& f)
{
    if (static_cast<std::size_t>(f.size()) != grid.size())
        throw GridMismatch("grid function size does not match the velocity grid");
    const std::size_t n = grid.size();
    std::vector<double> ratio(n), logm(n);
    for (std::size_t i = 0; i < n; ++i) {
        logm[i] = ctx.equilibrium.log_value(grid.nodes[i]);
        ratio[i] = f[static_cast<Eigen::Index>(i)] * std::exp(-logm[i]);
    }
    std::vector<double> row(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i)
                continue;
            const double jump = ratio[i] - ratio[j];
            // K_ij M_j evaluated in log space; M_j alone can underflow
            const double km = std::exp(log_kernel_K(ctx, grid.nodes[i], grid.nodes[j]) + logm[j]);
            acc += grid.weights[j] * km * jump * jump;
        }
        row[i] = grid.weights[i] * acc;
    });
    double total = 0.0;
    for (double r : row)
        total += r;
    return -0.5 * total;
}

double sigma_kernel_route(const KernelContext& ctx, double r, std::size_t order)
{
    // int K(v',v) dv' = 2 pi scale int_0^inf rho drho int_{-1}^{1} exp(-b ((2+mu) rho + 2 r c)^2) dc
    const double sb = std::sqrt(ctx.b);
    const double A = 2.0 + ctx.consts.mu;
    auto inner = [&](double rho) {
        const double B = A * rho;
        if (r < 1e-12)
            return 2.0 * std::exp(-ctx.b * B * B);
        return std::sqrt(std::numbers::pi) / (4.0 * r * sb) * erf_difference(sb * (B + 2.0 * r), sb * (B - 2.0 * r));
    };
    const double rho_max = (2.0 * r + 14.0 / sb) / A;
    const auto& gl = gauss_legendre(order);
    const double val = gl.integrate_composite([&](double rho) { return rho * inner(rho); }, 0.0, rho_max, 24);
    return 2.0 * std::numbers::pi * ctx.scale * val;
}

BoundScan carleman_bound_scan(const KernelContext& ctx, double p, double q, double r_max, std::size_t samples)
{
    if (!(p > 0 && p < 3))
        throw InvalidParameter("carleman_bound_scan requires 0 < p < 3");
    if (!(q >= 0))
        throw InvalidParameter("carleman_bound_scan requires q >= 0");
    if (samples < 4)
        throw InvalidParameter("carleman_bound_scan needs at least 4 samples");

    const double width = reference_thermal_width(ctx.params, ctx.consts);
    const double A = 1.0 + ctx.consts.mu;
    const double bp = ctx.b * p;
    const double rho_max = std::sqrt(42.0 / bp) / std::min(A, 1.0);
    const auto& gr = gauss_legendre(16);
    const auto& gc = gauss_legendre(8);
    const auto rho_breaks = graded_breakpoints(0.0, rho_max, 1e-4 * rho_max);

    BoundScan scan;
    scan.p = p;
    scan.q = q;
    const double pre = 2.0 * std::numbers::pi * std::pow(ctx.scale, p);
    for (std::size_t k = 0; k < samples; ++k) {
        const double r_units = r_max * static_cast<double>(k) / static_cast<double>(samples - 1);
        const double r = r_units * width;
        double total = 0.0;
        for (std::size_t seg = 0; seg + 1 < rho_breaks.size(); ++seg) {
            total += gr.integrate(
                [&](double rho) {
                    auto integrand = [&](double c) {
                        const double t = rho + 2.0 * r * c;
                        const double ex = -bp * (A * A * rho * rho + t * t);
                        const double dist = std::sqrt(std::max(0.0, rho * rho + r * r + 2.0 * rho * r * c));
                        return std::exp(ex) / std::pow(1.0 + dist, q);
                    };
                    return std::pow(rho, 2.0 - p) * gc.integrate_composite(integrand, -1.0, 1.0, 32);
                },
                rho_breaks[seg], rho_breaks[seg + 1]);
        }
        BoundScanRow row;
        row.r = r_units;
        row.integral = pre * total;
        row.product = row.integral * std::pow(1.0 + r, q + 1.0);
        scan.rows.push_back(row);
        scan.sup_integral = std::max(scan.sup_integral, row.integral);
    }
    // r-independent majorant: 4 pi scale^p int rho^{2-p} exp(-b p (1+mu)^2 rho^2) drho
    const double e = 0.5 * (3.0 - p);
    scan.uniform_bound = 4.0 * std::numbers::pi * std::pow(ctx.scale, p) * std::tgamma(e)
        / (2.0 * std::pow(bp * A * A, e));
    const std::size_t three_quarter = (3 * (samples - 1)) / 4;
    scan.growth_ratio = scan.rows.back().product / scan.rows[three_quarter].product;
    scan.growth_flag = !(scan.growth_ratio <= 1.0 + 1e-2) || !std::isfinite(scan.growth_ratio);
    return scan;
}

double tail_mass_integral(const KernelContext& ctx, double r, double rho)
{
    if (!(rho > 0))
        throw InvalidParameter("tail radius rho must be positive");
    const double sb = std::sqrt(ctx.b);
    const double A = 2.0 + ctx.consts.mu;
    // inner integral over c in [c_min(s), 1] of exp(-b (A s + 2 r c)^2)
    auto inner = [&](double s) {
        const double B = A * s;
        if (r < 1e-12 * rho)
            return s >= rho ? 2.0 * std::exp(-ctx.b * B * B) : 0.0;
        double cmin = (rho * rho - r * r - s * s) / (2.0 * r * s);
        if (cmin >= 1.0)
            return 0.0;
        cmin = std::max(cmin, -1.0);
        return std::sqrt(std::numbers::pi) / (4.0 * r * sb) * erf_difference(sb * (B + 2.0 * r), sb * (B + 2.0 * r * cmin));
    };
    const double s_lo = std::max(0.0, rho - r);
    const double s_hi = s_lo + (2.0 * r + 16.0 / sb) / A;
    std::vector<double> breaks{s_lo};
    if (rho + r > s_lo && rho + r < s_hi)
        breaks.push_back(rho + r);
    breaks.push_back(s_hi);
    const auto& gl = gauss_legendre(16);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k)
        total += gl.integrate_composite([&](double s) { return s * inner(s); }, breaks[k], breaks[k + 1], 24);
    return 2.0 * std::numbers::pi * ctx.scale * total;
}

TailScan tail_mass_scan(const KernelContext& ctx, double rho, std::size_t samples)
{
    if (!(rho > 0))
        throw InvalidParameter("tail radius rho must be positive");
    TailScan out;
    out.rho = rho;
    for (std::size_t k = 0; k < samples; ++k) {
        const double r = rho * static_cast<double>(k) / static_cast<double>(samples - 1);
        const double val = tail_mass_integral(ctx, r, rho);
        if (val > out.sup) {
            out.sup = val;
            out.argmax_r = r;
        }
    }
    return out;
}

} // namespace ilb
