#include "ilb/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <utility>

namespace ilb {

namespace {

// (P_n(x), P_n'(x)) by the three-term recurrence
std::pair<double, double> legendre(std::size_t n, double x)
{
    double p0 = 1.0, p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = p2;
    }
    const double dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    return {p1, dp};
}

} // namespace

GaussLegendre::GaussLegendre(std::size_t n) : nodes(n), weights(n)
{
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        for (int iter = 0; iter < 100; ++iter) {
            const auto [p, dp] = legendre(n, x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        const double dp = legendre(n, x).second;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if (n % 2 == 1)
        nodes[n / 2] = 0.0;
}

const GaussLegendre& gauss_legendre(std::size_t n)
{
    static std::mutex mtx;
    static std::map<std::size_t, std::unique_ptr<GaussLegendre>> cache;
    std::lock_guard lock(mtx);
    auto& slot = cache[n];
    if (!slot)
        slot = std::make_unique<GaussLegendre>(n);
    return *slot;
}

std::vector<double> graded_breakpoints(double lo, double hi, double first_width)
{
    if (!(hi > lo))
        return {lo, hi};
    std::vector<double> pts{lo};
    double w = std::max(first_width, 1e-300);
    double x = lo;
    while (x + 2.0 * w < hi) {
        x += w;
        pts.push_back(x);
        w *= 2.0;
    }
    pts.push_back(hi);
    return pts;
}

} // namespace ilb
