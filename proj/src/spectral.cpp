#include "ilb/spectral.hpp"

#include "ilb/error.hpp"
#include "ilb/rng.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ilb {

namespace {

Eigen::VectorXd residuals_of(const SymmetricOperator* op, const Eigen::MatrixXd* T, const Eigen::VectorXd& lambda,
                             const Eigen::MatrixXd& X)
{
    Eigen::VectorXd res(lambda.size());
    Eigen::VectorXd out;
    for (Eigen::Index k = 0; k < lambda.size(); ++k) {
        if (op)
            op->apply(X.col(k), out);
        else
            out = *T * X.col(k);
        res[k] = (out - lambda[k] * X.col(k)).norm();
    }
    return res;
}

} // namespace

SpectrumResult eigendecompose(const Eigen::MatrixXd& T, const EigenOptions& opt, const std::string& sector)
{
    if (T.rows() != T.cols() || T.rows() < 2)
        throw InvalidParameter("eigendecompose needs a square matrix of size >= 2");
    const Eigen::Index n = T.rows();
    const Eigen::Index k = opt.k == 0 ? n : std::min<Eigen::Index>(n, static_cast<Eigen::Index>(opt.k));
    if (k < 2)
        throw InvalidParameter("eigendecompose needs k >= 2");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    if (es.info() != Eigen::Success)
        throw NonConvergence("dense symmetric eigensolver (QL) did not converge");

    SpectrumResult r;
    r.sector = sector;
    // ascending -> descending
    r.eigenvalues = es.eigenvalues().reverse().head(k);
    r.eigenvectors = es.eigenvectors().rowwise().reverse().leftCols(k);
    r.norm = std::max(std::abs(es.eigenvalues()[0]), std::abs(es.eigenvalues()[n - 1]));
    r.residuals = residuals_of(nullptr, &T, r.eigenvalues, r.eigenvectors);
    r.gap = r.eigenvalues[0] - r.eigenvalues[1];
    return r;
}

SpectrumResult eigendecompose(const OperatorMatrix& op, double nu0, const EigenOptions& opt)
{
    SpectrumResult r = eigendecompose(op.T, opt, op.meta.sector);
    r.nu0 = nu0;
    // fix the sign so that eigvec0 lines up with the positive equilibrium vector
    if (r.eigenvectors.col(0).sum() < 0)
        r.eigenvectors.col(0) *= -1.0;
    return r;
}

SpectrumResult eigendecompose_lanczos(const SymmetricOperator& op, double nu0, const EigenOptions& opt,
                                      const std::string& sector)
{
    const auto n = static_cast<Eigen::Index>(op.size());
    const Eigen::Index k = static_cast<Eigen::Index>(opt.k == 0 ? 20 : opt.k);
    if (k < 2 || k >= n)
        throw InvalidParameter("Lanczos needs 2 <= k < size");
    const Eigen::Index m_max = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(opt.max_iter));

    Eigen::MatrixXd V(n, m_max);
    std::vector<double> alpha, beta;
    CounterRng rng(opt.seed, 0x1a2c);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = rng.normal();
    V.col(0) = v / v.norm();

    Eigen::VectorXd w;
    Eigen::VectorXd theta;
    Eigen::MatrixXd S;
    double last_worst = 0;
    Eigen::Index m = 0;
    bool converged = false;
    for (Eigen::Index j = 0; j < m_max; ++j) {
        op.apply(V.col(j), w);
        const double a = V.col(j).dot(w);
        alpha.push_back(a);
        // full reorthogonalization, applied twice
        for (int pass = 0; pass < 2; ++pass)
            w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
        const double b = w.norm();
        m = j + 1;

        const bool check = m >= k + 2 && (m % 10 == 0 || m == m_max || b < 1e-14);
        if (check) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
            Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
            Eigen::VectorXd off = Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1);
            tri.computeFromTridiagonal(diag, off);
            theta = tri.eigenvalues().reverse();
            S = tri.eigenvectors().rowwise().reverse();
            const double scale = std::max(std::abs(theta[0]), std::abs(theta[m - 1]));
            last_worst = 0;
            for (Eigen::Index i = 0; i < k; ++i)
                last_worst = std::max(last_worst, std::abs(b * S(m - 1, i)));
            if (last_worst <= opt.tol * scale || b < 1e-14 * scale) {
                converged = true;
                break;
            }
        }
        if (j + 1 < m_max) {
            if (b == 0.0)
                break;
            beta.push_back(b);
            V.col(j + 1) = w / b;
        }
    }
    if (!converged) {
        std::ostringstream os;
        os << "Lanczos did not converge: " << m << " iterations, worst Ritz residual " << last_worst
           << ", tolerance " << opt.tol << " relative";
        throw NonConvergence(os.str());
    }

    SpectrumResult r;
    r.sector = sector;
    r.nu0 = nu0;
    r.iterations = static_cast<std::size_t>(m);
    r.eigenvalues = theta.head(k);
    r.eigenvectors = V.leftCols(m) * S.leftCols(k);
    r.norm = std::max(std::abs(theta[0]), std::abs(theta[m - 1]));
    if (r.eigenvectors.col(0).sum() < 0)
        r.eigenvectors.col(0) *= -1.0;
    r.residuals = residuals_of(&op, nullptr, r.eigenvalues, r.eigenvectors);
    r.gap = r.eigenvalues[0] - r.eigenvalues[1];
    return r;
}

SpectrumReport spectrum_report(const SpectrumResult& spec, const SymmetricOperator& op, std::uint64_t seed,
                               std::size_t probes, double band_rel)
{
    SpectrumReport rep;
    rep.nu0 = spec.nu0;
    rep.lambda0 = spec.lambda0();
    rep.lambda1 = spec.lambda1();
    rep.gap = spec.gap;
    rep.band_rel = band_rel;
    rep.max_eigenvalue_rel = spec.eigenvalues.maxCoeff() / spec.norm;

    std::vector<double> discrete, isolated, cluster;
    const double band_edge = -spec.nu0 * (1.0 - band_rel);
    for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
        const double l = spec.eigenvalues[i];
        if (l > -spec.nu0) {
            discrete.push_back(l);
            if (l > band_edge)
                isolated.push_back(l);
            else
                ++rep.band_count;
        } else {
            cluster.push_back(l);
        }
    }
    auto to_vec = [](std::vector<double>& v) {
        return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    rep.discrete = to_vec(discrete);
    rep.isolated = to_vec(isolated);
    rep.cluster_count = cluster.size();
    if (!cluster.empty())
        rep.cluster_top = cluster.front();
    const auto below = static_cast<Eigen::Index>(isolated.size());
    if (!isolated.empty() && below < spec.eigenvalues.size())
        rep.separation_margin = (isolated.back() - spec.eigenvalues[below]) / spec.nu0;

    const Eigen::VectorXd e0 = spec.eigvec0().normalized();
    const auto n = static_cast<Eigen::Index>(op.size());
    CounterRng rng(seed, 0x5eed);
    Eigen::VectorXd y(n), ty;
    rep.max_rayleigh = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < probes; ++p) {
        for (Eigen::Index i = 0; i < n; ++i)
            y[i] = rng.normal();
        y -= e0.dot(y) * e0;
        op.apply(y, ty);
        rep.max_rayleigh = std::max(rep.max_rayleigh, y.dot(ty) / y.squaredNorm());
    }
    rep.coercive = rep.max_rayleigh <= rep.lambda1 + 1e-8 * spec.norm;
    return rep;
}

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumResult& spec,
                        const std::string& header_comment)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp);
        if (!os)
            throw Error("cannot write " + tmp.string());
        if (!header_comment.empty())
            os << "# " << header_comment << '\n';
        os << "index,eigenvalue,residual,sector\n" << std::setprecision(17);
        for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i)
            os << i << ',' << spec.eigenvalues[i] << ',' << spec.residuals[i] << ',' << spec.sector << '\n';
    }
    std::filesystem::rename(tmp, path);
}

} // namespace ilb
