#pragma once

#include "ilb/gas_model.hpp"
#include "ilb/grid.hpp"
#include "ilb/operator.hpp"
#include "ilb/spectral.hpp"

#include <Eigen/Core>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ilb {

enum class Integrator { SpectralExponential, Rk4 };

Integrator parse_integrator(const std::string& name);
std::string to_string(Integrator m);

/// Monitors sampled along a space-homogeneous run. Distances and entropies
/// are taken against the equilibrium rescaled to the mass of f0.
struct EvolutionTrace {
    std::vector<double> times;
    std::vector<double> mass;
    std::vector<double> dist_H;      ///< ||f - M||_H, H = L2(M^-1)
    std::vector<double> H_quadratic; ///< Phi(x) = (x-1)^2
    std::vector<double> H_xlogx;     ///< Phi(x) = x ln x
    std::vector<double> information; ///< I(f | M) against the unscaled equilibrium
    std::vector<double> min_ratio;   ///< min_i f_i / max_i f_i at each sample
    std::size_t negative_samples = 0; ///< rk4 undershoots seen (values kept, not clamped)
    double fitted_rate = 0;
    Eigen::VectorXd final_state;
};

struct EvolveOptions {
    double t_end = 1.0;
    double dt = 1e-3;
    Integrator method = Integrator::SpectralExponential;
    std::size_t samples = 100; ///< monitor samples after t = 0
};

/// Integrates df/dt = (gain - loss) f on the grid of `op`. f0 holds nodal
/// values. `eig` may carry a full eigendecomposition of op.T to reuse.
EvolutionTrace evolve_homogeneous(const OperatorMatrix& op, const Eigen::VectorXd& f0, const EvolveOptions& opt,
                                  const SpectrumResult* eig = nullptr);

enum class EntropyKind { Quadratic, XlogX };

/// sum_i w_i M_i Phi(f_i / M_i); 0 ln 0 = 0. Throws InvalidParameter on negative input.
double entropy_functional(const Eigen::VectorXd& weights, const Eigen::VectorXd& f, const Eigen::VectorXd& M,
                          EntropyKind kind);

/// I(f|g) = sum_i w_i (f_i ln f_i - f_i ln g_i); +inf when g_i = 0 < f_i.
double information(const Eigen::VectorXd& weights, const Eigen::VectorXd& f, const Eigen::VectorXd& g);

/// Least-squares slope of -ln d(t) over [t_a, t_b]. Needs >= 10 samples in the
/// window; rejects windows where d drops below 1e-13.
double fit_decay_rate(const std::vector<double>& t, const std::vector<double>& d, double t_a, double t_b);
double fit_decay_rate(const EvolutionTrace& trace, double t_a, double t_b);

void write_trace_csv(const std::filesystem::path& path, const EvolutionTrace& trace,
                     const std::string& header_comment = {});

/// Periodic slab x in [0,1) with Nx cells, one velocity grid per cell.
struct TransportState {
    std::size_t nx = 0;
    Eigen::MatrixXd f; ///< row = cell, column = velocity node
    double total_mass(const Eigen::VectorXd& weights) const;
};

struct TransportOptions {
    std::size_t nx = 32;
    std::size_t steps = 1000;
    double dt = 0; ///< 0 picks the commensurate step 2 / (nx h)
    bool collisions = true;
};

struct TransportResult {
    std::vector<double> times;
    std::vector<double> mass;
    TransportState initial;
    TransportState final_state;
    bool exact_shift = false; ///< streaming used integer cell shifts
    double max_relative_drift = 0;
};

using SlabDensity = std::function<double(double x, const Vec3& v)>;

/// Strang splitting: half collision step, exact streaming in x by v_x, half
/// collision step. `op` must be a 3D operator assembled on `grid`.
TransportResult transport_demo(const OperatorMatrix& op, const VelocityGrid& grid, const SlabDensity& f0,
                               const TransportOptions& opt);

struct ContractionCheck {
    bool ok = false;
    double margin = 0; ///< max_t I(f(t)|g(t)) - I(f0|g0)
    std::vector<double> times;
    std::vector<double> values;
};

/// Evolves f0 and g0 with the same operator and checks I(f(t)|g(t)) <= I(f0|g0) + tol.
ContractionCheck information_contraction_check(const OperatorMatrix& op, const Eigen::VectorXd& f0,
                                               const Eigen::VectorXd& g0, double t_end, std::size_t samples = 50,
                                               double tol = 1e-12);

} // namespace ilb
