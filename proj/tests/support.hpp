#pragma once

#include "ilb/gas_model.hpp"
#include "ilb/rng.hpp"

#include <cmath>

namespace ilb::test {

inline GasParameters params(double m, double m1, double eps, double theta1, Vec3 u1 = Vec3::Zero())
{
    GasParameters p;
    p.m = m;
    p.m1 = m1;
    p.eps = eps;
    p.theta1 = theta1;
    p.u1 = u1;
    return p;
}

/// Log-uniform masses and temperature in [0.1, 10], eps in (0.05, 1].
inline GasParameters random_params(CounterRng& rng)
{
    auto logu = [&] { return std::exp(std::log(0.1) + rng.uniform() * std::log(100.0)); };
    GasParameters p;
    p.m = logu();
    p.m1 = logu();
    p.eps = 0.05 + 0.95 * rng.uniform();
    p.theta1 = logu();
    p.u1 = Vec3(rng.normal(), rng.normal(), rng.normal());
    return p;
}

inline Vec3 random_velocity(CounterRng& rng, const Vec3& center, double scale)
{
    return center + scale * Vec3(rng.normal(), rng.normal(), rng.normal());
}

inline Vec3 random_unit(CounterRng& rng)
{
    Vec3 n(rng.normal(), rng.normal(), rng.normal());
    return n / n.norm();
}

} // namespace ilb::test
