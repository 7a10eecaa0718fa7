#pragma once

#include "ilb/gas_model.hpp"
#include "ilb/grid.hpp"

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

namespace ilb {

/// Absolute scale of the collision operator. Both constants depend only on
/// the cross-section convention (unit hard-sphere cross-section, impact
/// vectors on the hemisphere q.n >= 0), never on eps or the masses.
///
///   K(v,v')  = norm_C * prefactor * k(v,v')
///   sigma(v) = norm_C * c_sigma * sqrt(m1/(2 pi theta1)) * {braces}
struct NormalizationConstants {
    double norm_C = 0.5;
    double c_sigma = 3.14159265358979323846;
};

/// Values the calibration resolves to for the hemisphere convention.
NormalizationConstants hemisphere_hard_sphere();

struct KernelContext {
    GasParameters params;
    DerivedConstants consts;
    double norm_C = 0.5;
    double c_sigma = 3.14159265358979323846;

    // cached
    double b = 0;          ///< m1 / (8 theta1)
    double gauss_norm = 0; ///< sqrt(m1 / (2 pi theta1))
    double scale = 0;      ///< norm_C * prefactor * gauss_norm
    Maxwellian equilibrium;
};

KernelContext make_kernel_context(const GasParameters& p, NormalizationConstants nc = hemisphere_hard_sphere());

/// Effective gain kernel K(v, v2); throws SingularInput when v == v2.
double kernel_K(const KernelContext& ctx, const Vec3& v, const Vec3& v2);
double log_kernel_K(const KernelContext& ctx, const Vec3& v, const Vec3& v2);

/// Elastic equal-mass (mu = 0, prefactor 2) kernel written without mu.
double kernel_K_classical(const GasParameters& p, double norm_C, const Vec3& v, const Vec3& v2);

/// Symmetrized kernel norm_C * prefactor * G(v, v2), closed form.
double symmetrized_G(const KernelContext& ctx, const Vec3& v, const Vec3& v2);

/// Same quantity from the definition M^{-1/2}(v) K(v,v2) M^{1/2}(v2).
double symmetrized_G_definition(const KernelContext& ctx, const Vec3& v, const Vec3& v2);

/// Bracketed factor of the collision-frequency closed form, r = |v - u1|.
double sigma_braces(const KernelContext& ctx, double r);
double sigma_closed_form(const KernelContext& ctx, const Vec3& v);
double sigma_closed_form_radius(const KernelContext& ctx, double r);

/// |K(v,v')M(v') - K(v',v)M(v)| / (K(v,v')M(v')), evaluated in log space.
/// `equilibrium` overrides the theta# Maxwellian (used for sensitivity checks).
double detailed_balance_residual(const KernelContext& ctx, const Vec3& v, const Vec3& v2,
                                 const std::optional<Maxwellian>& equilibrium = std::nullopt);

/// Integral of K(v, v+z) over the grid cell around v (z in [-h/2,h/2]^3).
double singular_cell_gain(const KernelContext& ctx, const Vec3& v, double h);
/// Same for the symmetrized kernel.
double singular_cell_symmetrized(const KernelContext& ctx, const Vec3& v, double h);

/// Quadrature of int K(v_i, v') f(v') dv' at every grid node. The singular part is
/// subtracted through int K(v,v') M(v') dv' = sigma(v) M(v).
Eigen::VectorXd gain_apply(const KernelContext& ctx, const VelocityGrid& grid, const Eigen::VectorXd& f);
/// Same, restricted to the listed nodes (entry k of the result is node rows[k]).
Eigen::VectorXd gain_apply_at(const KernelContext& ctx, const VelocityGrid& grid, const Eigen::VectorXd& f,
                              std::span<const std::size_t> rows);

/// -1/2 sum_ij w_i w_j K_ij M_j [f_i/M_i - f_j/M_j]^2 with M the equilibrium on the grid.
double dirichlet_form(const KernelContext& ctx, const VelocityGrid& grid, const Eigen::VectorXd& f);

/// int K(v', v) dv' by a two-dimensional polar quadrature around v; equals
/// sigma(v) when the normalization is consistent.
double sigma_kernel_route(const KernelContext& ctx, double r, std::size_t order = 48);

struct BoundScanRow {
    double r = 0;       ///< |v - u1| in thermal widths of the background
    double integral = 0; ///< I(v)
    double product = 0;  ///< I(v) (1 + |v-u1|)^{q+1}
};

struct BoundScan {
    double p = 0;
    double q = 0;
    std::vector<BoundScanRow> rows;
    double sup_integral = 0;
    double uniform_bound = 0; ///< r-independent majorant of I(v) (drops the r-dependent factors)
    double growth_ratio = 0;  ///< product at the end of the ray / product at 3/4 of the ray
    bool growth_flag = false; ///< product still growing at the end of the ray
};

/// I(v) = int |G(v,v')|^p (1+|v'-u1|)^{-q} dv' along a ray of speeds r in
/// [0, r_max] (r in units of sqrt(theta1/m1)). Requires 0 < p < 3, q >= 0.
BoundScan carleman_bound_scan(const KernelContext& ctx, double p, double q, double r_max = 15.0,
                              std::size_t samples = 61);

/// int_{|v'-u1| >= rho} K(v', v) dv' for |v - u1| = r (r <= rho).
double tail_mass_integral(const KernelContext& ctx, double r, double rho);

struct TailScan {
    double rho = 0;
    double sup = 0;
    double argmax_r = 0;
};

/// Sampled supremum over |v-u1| <= rho of the tail integral.
TailScan tail_mass_scan(const KernelContext& ctx, double rho, std::size_t samples = 41);

} // namespace ilb
