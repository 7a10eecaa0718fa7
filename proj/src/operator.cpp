#include "ilb/operator.hpp"

#include "ilb/error.hpp"
#include "ilb/parallel.hpp"
#include "ilb/quadrature.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numbers>

namespace ilb {

namespace {

constexpr char kMagic[5] = {'I', 'L', 'B', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

enum class Kind : std::uint32_t { Full3d = 0, Radial = 1, State = 2 };

Kind kind_of(const std::string& sector)
{
    if (sector == "full-3d")
        return Kind::Full3d;
    if (sector == "radial-isotropic")
        return Kind::Radial;
    return Kind::State;
}

std::string sector_of(Kind k)
{
    switch (k) {
    case Kind::Full3d: return "full-3d";
    case Kind::Radial: return "radial-isotropic";
    default: return "state";
    }
}

template <class T>
T to_little(T v)
{
    if constexpr (std::endian::native == std::endian::little)
        return v;
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
}

template <class T>
void put(std::ostream& os, T v)
{
    v = to_little(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is)
{
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is)
        throw CacheMismatch("operator cache truncated");
    return to_little(v);
}

void put_vec(std::ostream& os, const Eigen::VectorXd& v)
{
    for (Eigen::Index i = 0; i < v.size(); ++i)
        put<double>(os, v[i]);
}

Eigen::VectorXd get_vec(std::istream& is, std::size_t n)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        v[static_cast<Eigen::Index>(i)] = get<double>(is);
    return v;
}

void write_header(std::ostream& os, const OperatorMeta& meta, Kind kind, std::uint64_t dim)
{
    os.write(kMagic, 5);
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(kind));
    put<std::uint32_t>(os, meta.n_axis);
    put<double>(os, meta.L);
    put<double>(os, meta.width);
    const auto& p = meta.params;
    for (double x : {p.m, p.m1, p.eps, p.theta1, p.u1.x(), p.u1.y(), p.u1.z()})
        put<double>(os, x);
    put<double>(os, meta.constants.norm_C);
    put<double>(os, meta.constants.c_sigma);
    put<std::uint32_t>(os, meta.loss_mode == LossMode::Conservative ? 1u : 0u);
    put<std::uint64_t>(os, meta.checksum);
    put<std::uint64_t>(os, dim);
}

std::pair<OperatorMeta, std::uint64_t> read_header(std::istream& is, Kind& kind)
{
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kMagic, 5) != 0)
        throw CacheMismatch("not an operator cache file (bad magic)");
    const auto version = get<std::uint32_t>(is);
    if (version != kVersion)
        throw CacheMismatch("operator cache version " + std::to_string(version) + " does not match "
                            + std::to_string(kVersion));
    kind = static_cast<Kind>(get<std::uint32_t>(is));
    OperatorMeta meta;
    meta.sector = sector_of(kind);
    meta.n_axis = get<std::uint32_t>(is);
    meta.L = get<double>(is);
    meta.width = get<double>(is);
    auto& p = meta.params;
    p.m = get<double>(is);
    p.m1 = get<double>(is);
    p.eps = get<double>(is);
    p.theta1 = get<double>(is);
    const double ux = get<double>(is);
    const double uy = get<double>(is);
    const double uz = get<double>(is);
    p.u1 = Vec3(ux, uy, uz);
    meta.constants.norm_C = get<double>(is);
    meta.constants.c_sigma = get<double>(is);
    meta.loss_mode = get<std::uint32_t>(is) == 1u ? LossMode::Conservative : LossMode::ClosedForm;
    meta.checksum = get<std::uint64_t>(is);
    const auto dim = get<std::uint64_t>(is);
    return {meta, dim};
}

void atomic_write(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw Error("cannot open " + tmp.string() + " for writing");
        body(os);
        if (!os)
            throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

double gershgorin(const Eigen::MatrixXd& T)
{
    double bound = 0.0;
    for (Eigen::Index i = 0; i < T.rows(); ++i)
        bound = std::max(bound, T.row(i).cwiseAbs().sum());
    return bound;
}

} // namespace

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

double OperatorMatrix::norm_bound() const { return gershgorin(T); }

Eigen::VectorXd OperatorMatrix::equilibrium_vector() const
{
    return (weights.array() * equilibrium.array()).sqrt().matrix();
}

double OperatorMatrix::max_loss_correction() const
{
    return (loss.array() / sigma_closed.array() - 1.0).abs().maxCoeff();
}

Eigen::VectorXd OperatorMatrix::to_symmetric(const Eigen::VectorXd& f) const
{
    return (f.array() * (weights.array() / equilibrium.array()).sqrt()).matrix();
}

Eigen::VectorXd OperatorMatrix::from_symmetric(const Eigen::VectorXd& y) const
{
    return (y.array() * (equilibrium.array() / weights.array()).sqrt()).matrix();
}

OperatorMatrix assemble_operator(const KernelContext& ctx, const VelocityGrid& grid, LossMode mode,
                                 std::size_t memory_budget_bytes)
{
    const std::size_t n = grid.size();
    if (n * n * sizeof(double) > memory_budget_bytes)
        throw AssemblyOverflow("dense assembly of " + std::to_string(n) + " nodes exceeds the memory budget of "
                               + std::to_string(memory_budget_bytes) + " bytes");
    OperatorMatrix op;
    op.meta.sector = "full-3d";
    op.meta.n_axis = static_cast<std::uint32_t>(grid.N);
    op.meta.L = grid.L;
    op.meta.width = grid.width;
    op.meta.params = ctx.params;
    op.meta.constants = {ctx.norm_C, ctx.c_sigma};
    op.meta.loss_mode = mode;

    const auto ni = static_cast<Eigen::Index>(n);
    op.T.setZero(ni, ni);
    op.weights.resize(ni);
    op.equilibrium.resize(ni);
    op.sigma_closed.resize(ni);
    op.radius.resize(ni);
    Eigen::VectorXd sqrt_w(ni), cell(ni);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        op.weights[k] = grid.weights[i];
        sqrt_w[k] = std::sqrt(grid.weights[i]);
        op.equilibrium[k] = ctx.equilibrium(grid.nodes[i]);
        op.sigma_closed[k] = sigma_closed_form(ctx, grid.nodes[i]);
        op.radius[k] = (grid.nodes[i] - ctx.params.u1).norm();
    }
    parallel_for(n, [&](std::size_t i) {
        const auto a = static_cast<Eigen::Index>(i);
        cell[a] = singular_cell_symmetrized(ctx, grid.nodes[i], grid.h);
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto b = static_cast<Eigen::Index>(j);
            op.T(a, b) = sqrt_w[a] * sqrt_w[b] * symmetrized_G(ctx, grid.nodes[i], grid.nodes[j]);
        }
    });
    op.T.triangularView<Eigen::StrictlyLower>() = op.T.transpose();

    if (mode == LossMode::Conservative) {
        const Eigen::VectorXd y_eq = op.equilibrium_vector();
        const Eigen::VectorXd off = op.T * y_eq;
        op.loss = cell + (off.array() / y_eq.array()).matrix();
    } else {
        op.loss = op.sigma_closed;
    }
    op.T.diagonal() = cell - op.loss;
    op.meta.checksum = fnv1a(op.T.data(), sizeof(double) * static_cast<std::size_t>(op.T.size()));
    return op;
}

MatrixFreeOperator::MatrixFreeOperator(const KernelContext& ctx, const VelocityGrid& grid, LossMode mode)
    : ctx_(ctx), grid_(grid)
{
    const auto n = static_cast<Eigen::Index>(grid.size());
    sqrt_w_.resize(n);
    cell_gain_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        sqrt_w_[i] = std::sqrt(grid.weights[static_cast<std::size_t>(i)]);
    parallel_for(grid.size(), [&](std::size_t i) {
        cell_gain_[static_cast<Eigen::Index>(i)] = singular_cell_symmetrized(ctx_, grid_.nodes[i], grid_.h);
    });
    if (mode == LossMode::Conservative) {
        const Eigen::VectorXd y_eq = equilibrium_vector();
        Eigen::VectorXd off(n);
        apply_offdiag(y_eq, off);
        loss_ = cell_gain_ + (off.array() / y_eq.array()).matrix();
    } else {
        loss_.resize(n);
        for (Eigen::Index i = 0; i < n; ++i)
            loss_[i] = sigma_closed_form(ctx_, grid_.nodes[static_cast<std::size_t>(i)]);
    }
    // Gershgorin: off-diagonal row sums of a nonnegative matrix via T_off * 1
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n), rows(n);
    apply_offdiag(ones, rows);
    norm_bound_ = (rows.array() + (cell_gain_ - loss_).array().abs()).maxCoeff();
}

Eigen::VectorXd MatrixFreeOperator::equilibrium_vector() const
{
    Eigen::VectorXd y(sqrt_w_.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y[i] = sqrt_w_[i] * std::sqrt(ctx_.equilibrium(grid_.nodes[static_cast<std::size_t>(i)]));
    return y;
}

void MatrixFreeOperator::apply_offdiag(const Eigen::VectorXd& in, Eigen::VectorXd& out) const
{
    const std::size_t n = grid_.size();
    out.resize(static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t i) {
        const auto a = static_cast<Eigen::Index>(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i)
                continue;
            const auto b = static_cast<Eigen::Index>(j);
            if (in[b] == 0.0)
                continue;
            acc += sqrt_w_[b] * symmetrized_G(ctx_, grid_.nodes[i], grid_.nodes[j]) * in[b];
        }
        out[a] = sqrt_w_[a] * acc;
    });
}

void MatrixFreeOperator::apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const
{
    if (static_cast<std::size_t>(in.size()) != grid_.size())
        throw GridMismatch("vector size does not match the operator");
    apply_offdiag(in, out);
    out.array() += (cell_gain_ - loss_).array() * in.array();
}

namespace {

// (1/(2 r r')) int_{|r-r'|}^{r+r'} scale * exp(exponent(s)) ds
template <class Exponent>
double shell_average(const KernelContext& ctx, double r, double r2, std::size_t order, Exponent&& ex)
{
    const double lo = std::abs(r - r2);
    const double hi = r + r2;
    const double first = lo > 0 ? lo : 0.25 * std::min(r, r2);
    const auto breaks = graded_breakpoints(lo, hi, first);
    const auto& gl = gauss_legendre(order);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k)
        total += gl.integrate([&](double s) { return std::exp(std::max(ex(s), -745.0)); }, breaks[k], breaks[k + 1]);
    return ctx.scale * total / (2.0 * r * r2);
}

} // namespace

double radial_kernel(const KernelContext& ctx, double r, double r2, std::size_t order)
{
    const double A = 1.0 + ctx.consts.mu;
    const double delta = r * r - r2 * r2;
    return shell_average(ctx, r, r2, order, [&](double s) {
        const double br = A * s + delta / s;
        return -ctx.b * br * br;
    });
}

double radial_kernel_symmetric(const KernelContext& ctx, double r, double r2, std::size_t order)
{
    const double A = 1.0 + ctx.consts.mu;
    const double delta = r * r - r2 * r2;
    return shell_average(ctx, r, r2, order, [&](double s) {
        const double as = A * s;
        const double ratio = delta / s;
        return -ctx.b * (as * as + ratio * ratio);
    });
}

RadialGrid reduce_isotropic(const KernelContext& ctx, const RadialGridSpec& spec)
{
    if (spec.Nr < 8)
        throw InvalidParameter("radial grid needs at least 8 nodes");
    if (!(spec.L > 0))
        throw InvalidParameter("radial half-width L must be positive");
    RadialGrid g;
    g.spec = spec;
    g.width = reference_thermal_width(ctx.params, ctx.consts);
    g.dr = spec.L * g.width / static_cast<double>(spec.Nr);
    const auto n = static_cast<Eigen::Index>(spec.Nr);
    g.r.resize(n);
    g.weights.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        g.r[k] = (static_cast<double>(k) + 0.5) * g.dr;
        g.weights[k] = 4.0 * std::numbers::pi * g.r[k] * g.r[k] * g.dr;
    }
    g.kbar.resize(n, n);
    g.gbar.resize(n, n);
    parallel_for(spec.Nr, [&](std::size_t i) {
        const auto a = static_cast<Eigen::Index>(i);
        for (Eigen::Index b = 0; b < n; ++b) {
            g.kbar(a, b) = radial_kernel(ctx, g.r[a], g.r[b], spec.s_order);
            if (b >= a)
                g.gbar(a, b) = radial_kernel_symmetric(ctx, g.r[a], g.r[b], spec.s_order);
        }
    });
    g.gbar.triangularView<Eigen::StrictlyLower>() = g.gbar.transpose();
    return g;
}

OperatorMatrix assemble_radial_operator(const KernelContext& ctx, const RadialGrid& radial, LossMode mode)
{
    OperatorMatrix op;
    op.meta.sector = "radial-isotropic";
    op.meta.n_axis = static_cast<std::uint32_t>(radial.spec.Nr);
    op.meta.L = radial.spec.L;
    op.meta.width = radial.width;
    op.meta.params = ctx.params;
    op.meta.constants = {ctx.norm_C, ctx.c_sigma};
    op.meta.loss_mode = mode;

    const auto n = radial.r.size();
    op.weights = radial.weights;
    op.radius = radial.r;
    op.equilibrium.resize(n);
    op.sigma_closed.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Vec3 v = ctx.params.u1 + Vec3(radial.r[k], 0.0, 0.0);
        op.equilibrium[k] = ctx.equilibrium(v);
        op.sigma_closed[k] = sigma_closed_form_radius(ctx, radial.r[k]);
    }
    const Eigen::VectorXd sqrt_w = op.weights.array().sqrt();
    op.T = sqrt_w.asDiagonal() * radial.gbar * sqrt_w.asDiagonal();
    // exact symmetry after the scaling
    op.T.triangularView<Eigen::StrictlyLower>() = op.T.transpose();
    const Eigen::VectorXd gain_diag = op.T.diagonal();
    if (mode == LossMode::Conservative) {
        const Eigen::VectorXd y_eq = op.equilibrium_vector();
        const Eigen::VectorXd col = op.T * y_eq;
        op.loss = (col.array() / y_eq.array()).matrix();
    } else {
        op.loss = op.sigma_closed;
    }
    op.T.diagonal() = gain_diag - op.loss;
    op.meta.checksum = fnv1a(op.T.data(), sizeof(double) * static_cast<std::size_t>(op.T.size()));
    return op;
}

double equilibrium_residual(const SymmetricOperator& op, const Eigen::VectorXd& y_eq)
{
    Eigen::VectorXd out;
    op.apply(y_eq, out);
    return out.norm() / y_eq.norm();
}

void save_operator(const std::filesystem::path& path, const OperatorMatrix& op)
{
    atomic_write(path, [&](std::ostream& os) {
        const auto dim = static_cast<std::uint64_t>(op.T.rows());
        write_header(os, op.meta, kind_of(op.meta.sector), dim);
        for (Eigen::Index i = 0; i < op.T.rows(); ++i)
            for (Eigen::Index j = 0; j < op.T.cols(); ++j)
                put<double>(os, op.T(i, j));
        put_vec(os, op.weights);
        put_vec(os, op.equilibrium);
        put_vec(os, op.sigma_closed);
        put_vec(os, op.loss);
        put_vec(os, op.radius);
    });
}

OperatorMatrix load_operator(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw CacheMismatch("cannot open operator cache " + path.string());
    Kind kind{};
    auto [meta, dim] = read_header(is, kind);
    if (kind == Kind::State)
        throw CacheMismatch("file holds a state dump, not an operator");
    OperatorMatrix op;
    op.meta = meta;
    const auto n = static_cast<Eigen::Index>(dim);
    op.T.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            op.T(i, j) = get<double>(is);
    op.weights = get_vec(is, dim);
    op.equilibrium = get_vec(is, dim);
    op.sigma_closed = get_vec(is, dim);
    op.loss = get_vec(is, dim);
    op.radius = get_vec(is, dim);
    if (fnv1a(op.T.data(), sizeof(double) * static_cast<std::size_t>(op.T.size())) != meta.checksum)
        throw CacheMismatch("operator cache checksum mismatch");
    return op;
}

void save_state(const std::filesystem::path& path, const OperatorMeta& meta, const Eigen::VectorXd& f)
{
    atomic_write(path, [&](std::ostream& os) {
        OperatorMeta m = meta;
        m.checksum = fnv1a(f.data(), sizeof(double) * static_cast<std::size_t>(f.size()));
        write_header(os, m, Kind::State, static_cast<std::uint64_t>(f.size()));
        put_vec(os, f);
    });
}

Eigen::VectorXd load_state(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw CacheMismatch("cannot open state file " + path.string());
    Kind kind{};
    auto [meta, dim] = read_header(is, kind);
    if (kind != Kind::State)
        throw CacheMismatch("file does not hold a state dump");
    Eigen::VectorXd f = get_vec(is, dim);
    if (fnv1a(f.data(), sizeof(double) * static_cast<std::size_t>(f.size())) != meta.checksum)
        throw CacheMismatch("state checksum mismatch");
    return f;
}

} // namespace ilb
