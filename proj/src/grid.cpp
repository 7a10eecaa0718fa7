#include "ilb/grid.hpp"

#include "ilb/error.hpp"

#include <cmath>

namespace ilb {

VelocityGrid build_grid(double L, std::size_t N, double width, const Vec3& center)
{
    if (!(L > 0) || !std::isfinite(L))
        throw InvalidParameter("grid half-width L must be positive");
    if (N < 8 || N % 2 != 0)
        throw InvalidParameter("grid size N must be even and at least 8");
    if (!(width > 0))
        throw InvalidParameter("thermal width must be positive");

    VelocityGrid g;
    g.L = L;
    g.N = N;
    g.width = width;
    g.center = center;
    const double half = L * width;
    g.h = 2.0 * half / static_cast<double>(N);
    const std::size_t n3 = N * N * N;
    g.nodes.resize(n3);
    g.weights.assign(n3, g.h * g.h * g.h);
    auto coord = [&](std::size_t k) { return -half + (static_cast<double>(k) + 0.5) * g.h; };
    for (std::size_t ix = 0; ix < N; ++ix)
        for (std::size_t iy = 0; iy < N; ++iy)
            for (std::size_t iz = 0; iz < N; ++iz)
                g.nodes[g.index(ix, iy, iz)] = center + Vec3(coord(ix), coord(iy), coord(iz));
    return g;
}

VelocityGrid build_grid(double L, std::size_t N, const GasParameters& p)
{
    const auto c = derive_constants(p);
    return build_grid(L, N, reference_thermal_width(p, c), p.u1);
}

} // namespace ilb
