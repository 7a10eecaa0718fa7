#pragma once

#include "ilb/collision_kernel.hpp"
#include "ilb/grid.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>

namespace ilb {

/// How the loss term on the diagonal is chosen.
///  - Conservative: loss_j = sum_i w_i K_ij (discrete column sums, including
///    the singular-cell term). Mass is conserved and the discrete Maxwellian
///    is an exact null vector; loss/sigma -> 1 under refinement.
///  - ClosedForm: loss_j = sigma(v_j). Consistency of the raw quadrature can
///    be measured through the equilibrium residual.
enum class LossMode { Conservative, ClosedForm };

/// Matrix-vector product with a symmetric operator.
class SymmetricOperator {
public:
    virtual ~SymmetricOperator() = default;
    virtual std::size_t size() const = 0;
    virtual void apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const = 0;
    /// Upper bound of the spectral radius (Gershgorin or equivalent).
    virtual double norm_bound() const = 0;
};

struct OperatorMeta {
    std::string sector;   ///< "full-3d" or "radial-isotropic"
    std::uint32_t n_axis = 0; ///< N (3D) or Nr (radial)
    double L = 0;         ///< half-width in thermal widths
    double width = 1;     ///< thermal width
    GasParameters params;
    NormalizationConstants constants;
    LossMode loss_mode = LossMode::Conservative;
    std::uint64_t checksum = 0; ///< FNV-1a of the matrix bytes
};

/// Dense symmetric discretization T of (gain - loss) in the coordinates
/// y_i = sqrt(w_i / M_i) f_i, in which the weighted L2(M^-1) inner product
/// becomes the Euclidean one: T_ij = sqrt(w_i w_j) G(v_i, v_j) off the
/// diagonal, T_ii = (cell gain) - loss_i.
class OperatorMatrix : public SymmetricOperator {
public:
    OperatorMeta meta;
    Eigen::MatrixXd T;
    Eigen::VectorXd weights;      ///< quadrature volumes
    Eigen::VectorXd equilibrium;  ///< M at the nodes
    Eigen::VectorXd sigma_closed; ///< closed-form collision frequency at the nodes
    Eigen::VectorXd loss;         ///< diagonal loss actually used
    Eigen::VectorXd radius;       ///< |v_i - u1|

    std::size_t size() const override { return static_cast<std::size_t>(T.rows()); }
    void apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const override { out.noalias() = T * in; }
    double norm_bound() const override;

    /// sqrt(w_i M_i): the discrete equilibrium in symmetrized coordinates.
    Eigen::VectorXd equilibrium_vector() const;
    /// max |loss_i / sigma_i - 1| (the conservative correction).
    double max_loss_correction() const;

    Eigen::VectorXd to_symmetric(const Eigen::VectorXd& f) const;
    Eigen::VectorXd from_symmetric(const Eigen::VectorXd& y) const;
};

/// Dense 3D assembly. Throws AssemblyOverflow if the matrix would exceed
/// `memory_budget_bytes`.
OperatorMatrix assemble_operator(const KernelContext& ctx, const VelocityGrid& grid,
                                 LossMode mode = LossMode::Conservative,
                                 std::size_t memory_budget_bytes = std::size_t{256} << 20);

/// Same operator on a 3D grid, never materialized: entries are recomputed on
/// each product.
class MatrixFreeOperator : public SymmetricOperator {
public:
    MatrixFreeOperator(const KernelContext& ctx, const VelocityGrid& grid, LossMode mode = LossMode::Conservative);

    std::size_t size() const override { return grid_.size(); }
    void apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const override;
    double norm_bound() const override { return norm_bound_; }

    const Eigen::VectorXd& loss() const { return loss_; }
    const Eigen::VectorXd& cell_gain() const { return cell_gain_; }
    Eigen::VectorXd equilibrium_vector() const;

private:
    void apply_offdiag(const Eigen::VectorXd& in, Eigen::VectorXd& out) const;

    KernelContext ctx_;
    VelocityGrid grid_;
    Eigen::VectorXd sqrt_w_;
    Eigen::VectorXd cell_gain_;
    Eigen::VectorXd loss_;
    double norm_bound_ = 0;
};

/// Isotropic-sector reduction: shell-averaged kernels on radial nodes.
struct RadialGrid {
    RadialGridSpec spec;
    double width = 1;
    double dr = 0;
    Eigen::VectorXd r;       ///< r_k = (k + 1/2) dr
    Eigen::VectorXd weights; ///< 4 pi r_k^2 dr
    /// kbar(i,j) = (1/4pi) int_{S^2} K(r_i e, r_j w) dw (gain acting on radial profiles)
    Eigen::MatrixXd kbar;
    /// gbar(i,j): same shell average of the symmetrized kernel; symmetric.
    Eigen::MatrixXd gbar;
};

/// (1/(2 r r')) int_{|r-r'|}^{r+r'} s K~(s; r, r') ds by graded Gauss-Legendre.
double radial_kernel(const KernelContext& ctx, double r, double r2, std::size_t order = 16);
double radial_kernel_symmetric(const KernelContext& ctx, double r, double r2, std::size_t order = 16);

RadialGrid reduce_isotropic(const KernelContext& ctx, const RadialGridSpec& spec);

OperatorMatrix assemble_radial_operator(const KernelContext& ctx, const RadialGrid& radial,
                                        LossMode mode = LossMode::Conservative);

/// ||T y_eq|| / ||y_eq|| for the discrete equilibrium vector y_eq.
double equilibrium_residual(const SymmetricOperator& op, const Eigen::VectorXd& y_eq);

/// Binary operator cache (little-endian, magic "ILBK1").
void save_operator(const std::filesystem::path& path, const OperatorMatrix& op);
OperatorMatrix load_operator(const std::filesystem::path& path);

/// Grid function dump using the cache header with sector "state".
void save_state(const std::filesystem::path& path, const OperatorMeta& meta, const Eigen::VectorXd& f);
Eigen::VectorXd load_state(const std::filesystem::path& path);

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ULL);

} // namespace ilb
