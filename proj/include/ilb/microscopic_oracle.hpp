#pragma once

#include "ilb/collision_kernel.hpp"
#include "ilb/gas_model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ilb {

/// Pre-collisional pair (vstar, wstar) of the inverse collision producing (v, w).
struct CollisionPair {
    Vec3 v, w, n;
    Vec3 vstar, wstar;
};

/// vstar = v - 2 gamma (q.n) n, wstar = w + 2 gammabar (q.n) n with q = v - w.
/// Throws InvalidParameter when | |n| - 1 | > 1e-12.
CollisionPair inverse_collision_map(const DerivedConstants& c, const Vec3& v, const Vec3& w, const Vec3& n);

/// Post-collisional velocities of the direct collision of (v, w):
/// the normal relative velocity is reversed and scaled by eps.
std::pair<Vec3, Vec3> direct_collision_map(const GasParameters& p, const DerivedConstants& c, const Vec3& v,
                                           const Vec3& w, const Vec3& n);

struct McEstimate {
    double estimate = 0;
    double standard_error = 0;
    std::uint64_t samples = 0;
};

/// Isotropic Gaussian proposal for the pre-collisional test velocity.
struct GaussianProposal {
    Vec3 center = Vec3::Zero();
    double sd = 1.0;
};

using Density = std::function<double(const Vec3&)>;

/// Monte Carlo estimate of the gain term eps^-2 int int |q.n| f(v*) M1(w*) dw dn
/// (n on the hemisphere q.n >= 0). Samples v* from a defensive mixture of
/// `proposal` and a broad Gaussian around u1, maps it to the impact vector and
/// the normal relative speed, and draws the in-plane part of the background
/// velocity from the matching Gaussian. Budget must be >= 1000.
McEstimate qplus_oracle(const KernelContext& ctx, const Vec3& v, const Density& f, std::uint64_t budget,
                        std::uint64_t seed, const GaussianProposal& proposal);

/// Monte Carlo estimate of int int |q.n| M1(w) dw dn with w ~ M1 and n uniform
/// on the hemisphere (weight |q.n| * 2 pi).
McEstimate sigma_oracle(const KernelContext& ctx, const Vec3& v, std::uint64_t budget, std::uint64_t seed);

/// Deterministic product quadrature of the same defining integral: spherical
/// coordinates around v for the background velocity, polar angle from q for n.
double sigma_oracle_quadrature(const KernelContext& ctx, const Vec3& v, std::size_t order = 32);

struct CalibrationPoint {
    double r = 0;               ///< |v - u1| in background thermal widths
    double sigma_quadrature = 0; ///< defining integral
    double sigma_mc = 0;
    double sigma_mc_stderr = 0;
    double braces_term = 0;      ///< sqrt(m1/2 pi theta1) * {braces}
    double kernel_route = 0;     ///< int prefactor * k(v', v) dv'  (norm_C = 1)
};

struct CalibrationRecord {
    NormalizationConstants constants;
    double norm_C_spread = 0;  ///< max relative deviation across calibration points
    double c_sigma_spread = 0;
    std::vector<CalibrationPoint> points;
    std::uint64_t mc_samples = 0;
    std::uint64_t seed = 0;
    std::string convention = "unit hard-sphere cross-section; impact vectors on the hemisphere q.n >= 0";
};

/// Resolves norm_C and c_sigma from the defining integral of sigma.
CalibrationRecord calibrate(const GasParameters& p, std::uint64_t seed, std::uint64_t mc_samples = 200000);

} // namespace ilb
