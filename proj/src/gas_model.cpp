#include "ilb/gas_model.hpp"

#include "ilb/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace ilb {

void GasParameters::validate() const
{
    if (!(std::isfinite(m) && m > 0))
        throw InvalidParameter("m must be positive");
    if (!(std::isfinite(m1) && m1 > 0))
        throw InvalidParameter("m1 must be positive");
    if (!(std::isfinite(eps) && eps > 0 && eps <= 1))
        throw InvalidParameter("eps must lie in (0,1]");
    if (!(std::isfinite(theta1) && theta1 > 0))
        throw InvalidParameter("theta1 must be positive");
    if (!u1.allFinite())
        throw InvalidParameter("u1 must be finite");
}

DerivedConstants derive_constants(const GasParameters& p)
{
    p.validate();
    DerivedConstants c;
    c.alpha = p.m1 / (p.m + p.m1);
    c.beta = (1.0 - p.eps) / 2.0;
    const double a1b = c.alpha * (1.0 - c.beta);
    c.gamma = a1b / (1.0 - 2.0 * c.beta);
    c.gammabar = (1.0 - c.alpha) * (1.0 - c.beta) / (1.0 - 2.0 * c.beta);
    c.mu = (1.0 - 2.0 * a1b) / a1b;
    c.theta_sharp = p.theta1 * (1.0 - c.alpha) * (1.0 - c.beta) / (1.0 - a1b);
    c.prefactor = 1.0 / (2.0 * p.eps * p.eps * c.gamma * c.gamma);
    c.mu_negative = c.mu < 0;

    // exponent of M must match the background exponent scaled by (1+mu)
    const double lhs = p.m / (2.0 * c.theta_sharp);
    const double rhs = p.m1 * (1.0 + c.mu) / (2.0 * p.theta1);
    if (!(c.theta_sharp > 0) || !(1.0 + c.mu > 0) || std::abs(lhs - rhs) > 1e-12 * std::abs(rhs))
        throw InvalidParameter("derived constants violate the detailed-balance exponent identity");
    return c;
}

double Maxwellian::log_value(const Vec3& v) const
{
    const double norm = 1.5 * std::log(mass / (2.0 * std::numbers::pi * theta));
    return norm - mass * (v - u).squaredNorm() / (2.0 * theta);
}

double Maxwellian::operator()(const Vec3& v) const
{
    const double norm = std::pow(mass / (2.0 * std::numbers::pi * theta), 1.5);
    return norm * std::exp(-mass * (v - u).squaredNorm() / (2.0 * theta));
}

double Maxwellian::thermal_speed() const { return std::sqrt(theta / mass); }

double maxwellian_eval(const Maxwellian& mx, const Vec3& v) { return mx(v); }

Maxwellian background_distribution(const GasParameters& p) { return {p.m1, p.theta1, p.u1}; }

Maxwellian equilibrium_distribution(const GasParameters& p, const DerivedConstants& c)
{
    return {p.m, c.theta_sharp, p.u1};
}

double reference_thermal_width(const GasParameters& p, const DerivedConstants& c)
{
    return std::sqrt(std::max(p.theta1 / p.m1, c.theta_sharp / p.m));
}

} // namespace ilb
