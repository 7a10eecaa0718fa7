#include "ilb/evolution.hpp"

#include "ilb/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>

namespace ilb {

Integrator parse_integrator(const std::string& name)
{
    if (name == "spectral-exponential" || name == "spectral")
        return Integrator::SpectralExponential;
    if (name == "rk4")
        return Integrator::Rk4;
    throw InvalidParameter("unknown integrator '" + name + "' (expected rk4 or spectral-exponential)");
}

std::string to_string(Integrator m)
{
    return m == Integrator::Rk4 ? "rk4" : "spectral-exponential";
}

namespace {

/// exp(tT) through a full eigendecomposition of the symmetric matrix.
class Propagator {
public:
    Propagator(const OperatorMatrix& op, const SpectrumResult* eig)
    {
        const auto n = op.T.rows();
        if (eig && eig->eigenvectors.cols() == n) {
            lambda_ = eig->eigenvalues;
            V_ = eig->eigenvectors;
        } else {
            EigenOptions all;
            all.k = 0;
            const SpectrumResult full = eigendecompose(op.T, all, op.meta.sector);
            lambda_ = full.eigenvalues;
            V_ = full.eigenvectors;
        }
    }

    Eigen::VectorXd coefficients(const Eigen::VectorXd& y0) const { return V_.transpose() * y0; }

    Eigen::VectorXd at(const Eigen::VectorXd& c, double t) const
    {
        return V_ * (c.array() * (lambda_.array() * t).exp()).matrix();
    }

    /// exp(tT) as a matrix.
    Eigen::MatrixXd matrix(double t) const
    {
        return V_ * (lambda_.array() * t).exp().matrix().asDiagonal() * V_.transpose();
    }

private:
    Eigen::VectorXd lambda_;
    Eigen::MatrixXd V_;
};

struct Monitors {
    const OperatorMatrix& op;
    double mass0 = 0;
    Eigen::VectorXd M_hat;
    double negative_tol = 0;

    void record(EvolutionTrace& tr, double t, const Eigen::VectorXd& y) const
    {
        Eigen::VectorXd f = op.from_symmetric(y);
        const double fmax = f.maxCoeff();
        const double fmin = f.minCoeff();
        if (fmin < -negative_tol * fmax) {
            ++tr.negative_samples;
            std::cerr << "warning: negative density " << fmin << " at t = " << t
                      << " (monitors use the positive part)\n";
        }
        f = f.cwiseMax(0.0);
        const double mass = (op.weights.array() * op.from_symmetric(y).array()).sum();
        const Eigen::ArrayXd diff = f.array() - M_hat.array();
        const double dist2 = (op.weights.array() * diff.square() / op.equilibrium.array()).sum();
        tr.times.push_back(t);
        tr.mass.push_back(mass);
        tr.dist_H.push_back(std::sqrt(dist2));
        tr.H_quadratic.push_back(entropy_functional(op.weights, f, M_hat, EntropyKind::Quadratic));
        tr.H_xlogx.push_back(entropy_functional(op.weights, f, M_hat, EntropyKind::XlogX));
        tr.information.push_back(information(op.weights, f, op.equilibrium));
        tr.min_ratio.push_back(fmin / fmax);
    }
};

} // namespace

EvolutionTrace evolve_homogeneous(const OperatorMatrix& op, const Eigen::VectorXd& f0, const EvolveOptions& opt,
                                  const SpectrumResult* eig)
{
    if (f0.size() != op.T.rows())
        throw GridMismatch("initial datum does not match the operator grid");
    if ((f0.array() < 0).any())
        throw InvalidParameter("initial datum must be nonnegative");
    if (!(opt.t_end > 0) || opt.samples == 0)
        throw InvalidParameter("t_end must be positive and samples >= 1");

    Monitors mon{op, 0.0, {}, 0.0};
    mon.mass0 = (op.weights.array() * f0.array()).sum();
    if (!(mon.mass0 > 0) || !std::isfinite(mon.mass0))
        throw InvalidParameter("initial datum must have finite positive mass");
    const double massM = (op.weights.array() * op.equilibrium.array()).sum();
    mon.M_hat = op.equilibrium * (mon.mass0 / massM);
    mon.negative_tol = opt.method == Integrator::SpectralExponential ? 1e-12 : 0.0;

    EvolutionTrace tr;
    const Eigen::VectorXd y0 = op.to_symmetric(f0);
    mon.record(tr, 0.0, y0);
    const double dT = opt.t_end / static_cast<double>(opt.samples);

    if (opt.method == Integrator::SpectralExponential) {
        const Propagator prop(op, eig);
        const Eigen::VectorXd c = prop.coefficients(y0);
        Eigen::VectorXd y;
        for (std::size_t k = 1; k <= opt.samples; ++k) {
            const double t = dT * static_cast<double>(k);
            y = prop.at(c, t);
            mon.record(tr, t, y);
        }
        tr.final_state = op.from_symmetric(y);
        return tr;
    }

    const double smax = std::max(op.loss.maxCoeff(), op.sigma_closed.maxCoeff());
    if (!(opt.dt > 0) || opt.dt > 0.5 / smax)
        throw CflViolation("rk4 step dt = " + std::to_string(opt.dt) + " exceeds 0.5 / max sigma = "
                           + std::to_string(0.5 / smax));
    const auto sub = static_cast<std::size_t>(std::ceil(dT / opt.dt - 1e-9));
    const double h = dT / static_cast<double>(sub);
    Eigen::VectorXd y = y0, k1, k2, k3, k4;
    for (std::size_t k = 1; k <= opt.samples; ++k) {
        for (std::size_t s = 0; s < sub; ++s) {
            k1.noalias() = op.T * y;
            k2.noalias() = op.T * (y + 0.5 * h * k1);
            k3.noalias() = op.T * (y + 0.5 * h * k2);
            k4.noalias() = op.T * (y + h * k3);
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        mon.record(tr, dT * static_cast<double>(k), y);
    }
    tr.final_state = op.from_symmetric(y);
    return tr;
}

double entropy_functional(const Eigen::VectorXd& weights, const Eigen::VectorXd& f, const Eigen::VectorXd& M,
                          EntropyKind kind)
{
    if (f.size() != weights.size() || M.size() != weights.size())
        throw GridMismatch("entropy arguments have different sizes");
    if ((f.array() < 0).any())
        throw InvalidParameter("entropy functional needs f >= 0");
    double total = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        if (kind == EntropyKind::Quadratic) {
            const double d = f[i] - M[i];
            total += weights[i] * d * d / M[i];
        } else if (f[i] > 0) {
            total += weights[i] * f[i] * std::log(f[i] / M[i]);
        }
    }
    return total;
}

double information(const Eigen::VectorXd& weights, const Eigen::VectorXd& f, const Eigen::VectorXd& g)
{
    double total = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        if (f[i] < 0 || g[i] < 0)
            throw InvalidParameter("information needs nonnegative arguments");
        if (f[i] == 0)
            continue;
        if (g[i] == 0)
            return std::numeric_limits<double>::infinity();
        total += weights[i] * f[i] * (std::log(f[i]) - std::log(g[i]));
    }
    return total;
}

double fit_decay_rate(const std::vector<double>& t, const std::vector<double>& d, double t_a, double t_b)
{
    if (t.size() != d.size())
        throw InvalidParameter("time and distance series differ in length");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t_a || t[i] > t_b)
            continue;
        if (!(d[i] >= 1e-13))
            throw InvalidParameter("distance " + std::to_string(d[i]) + " at t = " + std::to_string(t[i])
                                   + " is below 1e-13; choose an earlier window");
        xs.push_back(t[i]);
        ys.push_back(std::log(d[i]));
    }
    if (xs.size() < 10)
        throw InvalidParameter("decay-rate fit needs at least 10 samples in the window, got "
                               + std::to_string(xs.size()));
    const auto n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return -sxy / sxx;
}

double fit_decay_rate(const EvolutionTrace& trace, double t_a, double t_b)
{
    return fit_decay_rate(trace.times, trace.dist_H, t_a, t_b);
}

void write_trace_csv(const std::filesystem::path& path, const EvolutionTrace& tr, const std::string& header_comment)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp);
        if (!os)
            throw Error("cannot write " + tmp.string());
        if (!header_comment.empty())
            os << "# " << header_comment << '\n';
        os << "t,mass,dist_H,H_quadratic,H_xlogx,I\n" << std::setprecision(17);
        for (std::size_t i = 0; i < tr.times.size(); ++i)
            os << tr.times[i] << ',' << tr.mass[i] << ',' << tr.dist_H[i] << ',' << tr.H_quadratic[i] << ','
               << tr.H_xlogx[i] << ',' << tr.information[i] << '\n';
    }
    std::filesystem::rename(tmp, path);
}

double TransportState::total_mass(const Eigen::VectorXd& weights) const
{
    // per-cell sums first, then across cells, in a fixed order
    const Eigen::VectorXd cells = f * weights;
    return cells.sum() / static_cast<double>(nx);
}

namespace {

void stream(Eigen::MatrixXd& f, const VelocityGrid& grid, double dt, bool& exact)
{
    const auto nx = f.rows();
    const double cells_per_time = static_cast<double>(nx);
    Eigen::VectorXd col(nx);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        const double shift = grid.nodes[j].x() * dt * cells_per_time;
        const double whole = std::floor(shift);
        const double frac = shift - whole;
        const auto s = static_cast<long long>(whole);
        col = f.col(c);
        auto wrap = [nx](long long i) { return static_cast<Eigen::Index>(((i % nx) + nx) % nx); };
        if (std::abs(shift - std::nearbyint(shift)) < 1e-9) {
            const auto si = std::llround(shift);
            for (Eigen::Index x = 0; x < nx; ++x)
                f(x, c) = col[wrap(x - si)];
        } else {
            exact = false;
            for (Eigen::Index x = 0; x < nx; ++x)
                f(x, c) = (1.0 - frac) * col[wrap(x - s)] + frac * col[wrap(x - s - 1)];
        }
    }
}

} // namespace

TransportResult transport_demo(const OperatorMatrix& op, const VelocityGrid& grid, const SlabDensity& f0,
                               const TransportOptions& opt)
{
    if (op.meta.sector != "full-3d" || static_cast<std::size_t>(op.T.rows()) != grid.size())
        throw GridMismatch("transport demo needs a 3D operator assembled on the given grid");
    if (opt.nx < 2 || opt.steps == 0)
        throw InvalidParameter("transport demo needs nx >= 2 and steps >= 1");
    const double dt = opt.dt > 0 ? opt.dt : 2.0 / (static_cast<double>(opt.nx) * grid.h);

    TransportResult res;
    res.exact_shift = true;
    TransportState st;
    st.nx = opt.nx;
    st.f.resize(static_cast<Eigen::Index>(opt.nx), static_cast<Eigen::Index>(grid.size()));
    for (std::size_t x = 0; x < opt.nx; ++x) {
        const double xc = (static_cast<double>(x) + 0.5) / static_cast<double>(opt.nx);
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const double val = f0(xc, grid.nodes[j]);
            if (!(val >= 0))
                throw InvalidParameter("transport initial datum must be nonnegative");
            st.f(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(j)) = val;
        }
    }
    res.initial = st;

    Eigen::MatrixXd half;
    if (opt.collisions) {
        // exp(A dt/2) in nodal coordinates: D^-1 exp(T dt/2) D with D = sqrt(w/M)
        const Propagator prop(op, nullptr);
        const Eigen::VectorXd d = (op.weights.array() / op.equilibrium.array()).sqrt();
        half = d.cwiseInverse().asDiagonal() * prop.matrix(0.5 * dt) * d.asDiagonal();
    }

    const double m0 = st.total_mass(op.weights);
    res.times.push_back(0.0);
    res.mass.push_back(m0);
    for (std::size_t k = 1; k <= opt.steps; ++k) {
        if (opt.collisions)
            st.f = st.f * half.transpose();
        stream(st.f, grid, dt, res.exact_shift);
        if (opt.collisions)
            st.f = st.f * half.transpose();
        const double m = st.total_mass(op.weights);
        res.times.push_back(dt * static_cast<double>(k));
        res.mass.push_back(m);
        res.max_relative_drift = std::max(res.max_relative_drift, std::abs(m - m0) / m0);
    }
    res.final_state = std::move(st);
    return res;
}

ContractionCheck information_contraction_check(const OperatorMatrix& op, const Eigen::VectorXd& f0,
                                               const Eigen::VectorXd& g0, double t_end, std::size_t samples,
                                               double tol)
{
    const double mf = (op.weights.array() * f0.array()).sum();
    const double mg = (op.weights.array() * g0.array()).sum();
    if (std::abs(mf - mg) > 1e-12 * std::max(mf, mg))
        throw InvalidParameter("information contraction needs f0 and g0 of equal mass");
    if ((f0.array() < 0).any() || (g0.array() < 0).any())
        throw InvalidParameter("information contraction needs nonnegative data");

    const Propagator prop(op, nullptr);
    const Eigen::VectorXd cf = prop.coefficients(op.to_symmetric(f0));
    const Eigen::VectorXd cg = prop.coefficients(op.to_symmetric(g0));
    ContractionCheck out;
    // baseline from the propagated t = 0 state, so the eigenbasis round trip cancels
    const double I0 = information(op.weights, op.from_symmetric(prop.at(cf, 0.0)).cwiseMax(0.0),
                                  op.from_symmetric(prop.at(cg, 0.0)).cwiseMax(0.0));
    out.margin = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= samples; ++k) {
        const double t = t_end * static_cast<double>(k) / static_cast<double>(samples);
        const Eigen::VectorXd f = op.from_symmetric(prop.at(cf, t)).cwiseMax(0.0);
        const Eigen::VectorXd g = op.from_symmetric(prop.at(cg, t)).cwiseMax(0.0);
        const double I = information(op.weights, f, g);
        out.times.push_back(t);
        out.values.push_back(I);
        out.margin = std::max(out.margin, I - I0);
    }
    out.ok = out.margin <= tol * std::max(1.0, std::abs(I0));
    return out;
}

} // namespace ilb
