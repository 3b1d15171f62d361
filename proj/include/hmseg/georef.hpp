#pragma once

#include <array>
#include <cmath>

namespace hmseg {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Affine pixel -> projected-meter transform, GDAL geotransform order:
///   x = c[0] + col * c[1] + row * c[2]
///   y = c[3] + col * c[4] + row * c[5]
/// (col, row) address the pixel's top-left corner; centers sit at +0.5.
struct Georef {
    std::array<double, 6> c{0.0, 1.0, 0.0, 0.0, 0.0, -1.0};

    static Georef north_up(double origin_x, double origin_y, double m_per_px) {
        return Georef{{origin_x, m_per_px, 0.0, origin_y, 0.0, -m_per_px}};
    }

    [[nodiscard]] double determinant() const { return c[1] * c[5] - c[2] * c[4]; }
    [[nodiscard]] bool invertible() const { return std::abs(determinant()) > 1e-12; }

    [[nodiscard]] Point2 to_world(double col, double row) const {
        return {c[0] + col * c[1] + row * c[2], c[3] + col * c[4] + row * c[5]};
    }

    /// Returns (col, row) in continuous pixel coordinates.
    [[nodiscard]] Point2 to_pixel(Point2 p) const {
        const double dx = p.x - c[0];
        const double dy = p.y - c[3];
        const double det = determinant();
        return {(c[5] * dx - c[2] * dy) / det, (-c[4] * dx + c[1] * dy) / det};
    }

    /// Ground area of one pixel in square meters.
    [[nodiscard]] double pixel_area() const { return std::abs(determinant()); }

    friend bool operator==(const Georef&, const Georef&) = default;
};

}  // namespace hmseg
