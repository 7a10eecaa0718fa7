#pragma once

#include "ilb/operator.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>

namespace ilb {

/// Leading part of the spectrum of a symmetrized operator.
struct SpectrumResult {
    Eigen::VectorXd eigenvalues;  ///< descending
    Eigen::MatrixXd eigenvectors; ///< column k pairs with eigenvalues[k]
    Eigen::VectorXd residuals;    ///< ||T x - lambda x|| per pair
    double gap = 0;               ///< lambda0 - lambda1
    double nu0 = 0;               ///< sigma(u1)
    double norm = 0;              ///< ||T||_2 estimate used for relative tolerances
    std::string sector;
    std::size_t iterations = 0;   ///< Lanczos steps (0 for the dense path)

    double lambda0() const { return eigenvalues[0]; }
    double lambda1() const { return eigenvalues[1]; }
    Eigen::VectorXd eigvec0() const { return eigenvectors.col(0); }
};

struct EigenOptions {
    std::size_t k = 0;          ///< pairs to report, 0 = all (dense) or 20 (Lanczos)
    double tol = 1e-10;
    std::uint64_t seed = 1;
    std::size_t max_iter = 400; ///< Krylov dimension cap
};

/// Dense path: tridiagonalization + QL on the full matrix.
SpectrumResult eigendecompose(const Eigen::MatrixXd& T, const EigenOptions& opt = {},
                              const std::string& sector = "dense");
SpectrumResult eigendecompose(const OperatorMatrix& op, double nu0, const EigenOptions& opt = {});

/// Lanczos with full reorthogonalization for the algebraically largest pairs.
/// Throws NonConvergence if the pairs do not reach tol * ||T|| within max_iter.
SpectrumResult eigendecompose_lanczos(const SymmetricOperator& op, double nu0, const EigenOptions& opt = {},
                                      const std::string& sector = "full-3d");

struct SpectrumReport {
    double nu0 = 0;
    double lambda0 = 0;
    double lambda1 = 0;
    double gap = 0;
    double max_eigenvalue_rel = 0;  ///< max lambda / ||T||
    double band_rel = 0.005;        ///< width of the band above -nu0, relative to nu0
    Eigen::VectorXd discrete;       ///< eigenvalues in (-nu0, 0]
    Eigen::VectorXd isolated;       ///< eigenvalues above -nu0 (1 - band_rel)
    std::size_t band_count = 0;     ///< eigenvalues in (-nu0, -nu0 (1 - band_rel)]
    std::size_t cluster_count = 0;  ///< reported eigenvalues <= -nu0
    double cluster_top = 0;         ///< largest eigenvalue <= -nu0 (0 if none reported)
    /// (lowest isolated eigenvalue - largest eigenvalue below the band edge) / nu0
    double separation_margin = 0;
    double max_rayleigh = 0;        ///< over random f orthogonal to eigvec0
    bool coercive = false;          ///< max_rayleigh <= lambda1 + 1e-8 ||T||
};

/// Eigenvalues accumulate at -nu0 from above as the grid is refined, so the
/// ones within band_rel of the threshold are counted with the cluster side.
SpectrumReport spectrum_report(const SpectrumResult& spec, const SymmetricOperator& op,
                               std::uint64_t seed = 7, std::size_t probes = 50, double band_rel = 0.005);

/// CSV with header index,eigenvalue,residual,sector.
void write_spectrum_csv(const std::filesystem::path& path, const SpectrumResult& spec,
                        const std::string& header_comment = {});

} // namespace ilb
