#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace ilb {

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(std::size_t n);

    std::size_t size() const { return nodes.size(); }

    /// Integrate f over [a, b] with this rule.
    template <class F>
    double integrate(F&& f, double a, double b) const
    {
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (b + a);
        double sum = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k)
            sum += weights[k] * f(mid + half * nodes[k]);
        return half * sum;
    }

    /// Composite rule on `panels` equal sub-intervals of [a, b].
    template <class F>
    double integrate_composite(F&& f, double a, double b, std::size_t panels) const
    {
        const double w = (b - a) / static_cast<double>(panels);
        double sum = 0.0;
        for (std::size_t p = 0; p < panels; ++p)
            sum += integrate(f, a + w * static_cast<double>(p), a + w * static_cast<double>(p + 1));
        return sum;
    }
};

/// Cached rule of order n (thread-safe after first construction).
const GaussLegendre& gauss_legendre(std::size_t n);

/// Panel breakpoints lo = x0 < ... < xk = hi, refined geometrically toward lo
/// when lo is small relative to hi (boundary layers of width ~ lo).
std::vector<double> graded_breakpoints(double lo, double hi, double first_width);

} // namespace ilb
