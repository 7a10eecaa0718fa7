#pragma once

#include "ilb/gas_model.hpp"
#include "ilb/quadrature.hpp"

#include <cstddef>
#include <vector>

namespace ilb {

/// Cell-centred tensor grid on the truncated velocity box [u1-L, u1+L]^3.
struct VelocityGrid {
    double L = 0;          ///< half-width in thermal widths
    std::size_t N = 0;     ///< nodes per axis
    double width = 1;      ///< thermal width used as the length unit
    double h = 0;          ///< cell size (physical units)
    Vec3 center = Vec3::Zero();
    std::vector<Vec3> nodes;
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }
    std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const { return (ix * N + iy) * N + iz; }
    double half_width() const { return L * width; }
};

/// L > 0 in thermal widths of reference_thermal_width(p), N >= 8 and even.
VelocityGrid build_grid(double L, std::size_t N, const GasParameters& p);

/// Same layout with an explicit length unit (no gas parameters needed).
VelocityGrid build_grid(double L, std::size_t N, double width, const Vec3& center);

/// Radial nodes r_k = (k + 1/2) dr on (0, L] with shell volumes 4 pi r_k^2 dr.
struct RadialGridSpec {
    std::size_t Nr = 256;
    double L = 6.0; ///< in thermal widths
    std::size_t s_order = 16; ///< Gauss-Legendre order per s-panel of the angular reduction
};

/// Integral of g(z) over the cube [-h/2, h/2]^3 for g with an integrable
/// |z|^-1 singularity at the origin. The cube is split into six pyramids with
/// apex at the origin; the map z = t (h/2) (1, a, b) has Jacobian
/// (h/2)^3 t^2, which cancels the singularity, and each pyramid is integrated
/// by a tensor Gauss-Legendre rule.
template <class G>
double cube_cell_integral(double h, G&& g, std::size_t radial_order = 6, std::size_t face_order = 12)
{
    const auto& gt = gauss_legendre(radial_order);
    const auto& gf = gauss_legendre(face_order);
    const double hh = 0.5 * h;
    double total = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
        for (int sign = -1; sign <= 1; sign += 2) {
            double face = 0.0;
            for (std::size_t ia = 0; ia < gf.size(); ++ia) {
                for (std::size_t ib = 0; ib < gf.size(); ++ib) {
                    Vec3 dir;
                    dir[axis] = sign;
                    dir[(axis + 1) % 3] = gf.nodes[ia];
                    dir[(axis + 2) % 3] = gf.nodes[ib];
                    double line = 0.0;
                    for (std::size_t it = 0; it < gt.size(); ++it) {
                        const double t = 0.5 * (gt.nodes[it] + 1.0);
                        line += 0.5 * gt.weights[it] * t * t * g(Vec3(t * hh * dir));
                    }
                    face += gf.weights[ia] * gf.weights[ib] * line;
                }
            }
            total += face;
        }
    }
    return hh * hh * hh * total;
}

} // namespace ilb
