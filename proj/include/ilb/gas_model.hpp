#pragma once

#include <Eigen/Core>

namespace ilb {

using Vec3 = Eigen::Vector3d;

/// Physical inputs: test-particle mass, background mass, restitution
/// coefficient, background temperature (energy units) and bulk velocity.
struct GasParameters {
    double m = 1.0;
    double m1 = 1.0;
    double eps = 1.0;
    double theta1 = 1.0;
    Vec3 u1 = Vec3::Zero();

    /// Throws InvalidParameter naming the first offending field.
    void validate() const;
};

/// Constants derived once from GasParameters and shared by every formula.
struct DerivedConstants {
    double alpha = 0;       ///< m1 / (m + m1)
    double beta = 0;        ///< (1 - eps) / 2
    double gamma = 0;       ///< alpha (1-beta) / (1-2beta)
    double gammabar = 0;    ///< (1-alpha)(1-beta) / (1-2beta)
    double mu = 0;          ///< (1 - 2 alpha(1-beta)) / (alpha(1-beta))
    double theta_sharp = 0; ///< equilibrium temperature of the test particles
    double prefactor = 0;   ///< 1 / (2 eps^2 gamma^2)
    bool mu_negative = false; ///< set iff m < eps m1
};

DerivedConstants derive_constants(const GasParameters& p);

/// Isotropic Gaussian (mass/(2 pi theta))^{3/2} exp(-mass |v-u|^2 / (2 theta)).
struct Maxwellian {
    double mass = 1.0;
    double theta = 1.0;
    Vec3 u = Vec3::Zero();

    double operator()(const Vec3& v) const;
    double log_value(const Vec3& v) const;
    /// Standard deviation of each velocity component.
    double thermal_speed() const;
};

double maxwellian_eval(const Maxwellian& mx, const Vec3& v);

/// Background distribution M1 with (m1, theta1, u1).
Maxwellian background_distribution(const GasParameters& p);

/// Unit-mass equilibrium M with (m, theta#, u1).
Maxwellian equilibrium_distribution(const GasParameters& p, const DerivedConstants& c);

/// sqrt(max(theta1/m1, theta#/m)); the unit for grid half-widths.
double reference_thermal_width(const GasParameters& p, const DerivedConstants& c);

} // namespace ilb
