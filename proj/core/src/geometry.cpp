#include "vismpc/geometry.h"

#include <algorithm>
#include <limits>

namespace vismpc {

double polygon_area(const Polygon& p) {
    double a = 0.0;
    const size_t n = p.v.size();
    for (size_t i = 0; i < n; ++i) a += cross(p.v[i], p.v[(i + 1) % n]);
    return 0.5 * a;
}

Vec2 polygon_centroid(const Polygon& p) {
    const size_t n = p.v.size();
    double a = 0.0;
    Vec2 c;
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p0 = p.v[i];
        const Vec2& p1 = p.v[(i + 1) % n];
        const double w = cross(p0, p1);
        a += w;
        c.x += (p0.x + p1.x) * w;
        c.y += (p0.y + p1.y) * w;
    }
    a *= 0.5;
    if (std::abs(a) < 1e-16) return p.v.empty() ? Vec2{} : p.v[0];
    return {c.x / (6.0 * a), c.y / (6.0 * a)};
}

bool point_in_polygon(const Vec2& p, const Polygon& poly) {
    // even-odd ray cast
    bool inside = false;
    const size_t n = poly.v.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly.v[i];
        const Vec2& b = poly.v[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xi = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if (p.x < xi) inside = !inside;
        }
    }
    return inside;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + ab * t)).norm();
}

bool segments_intersect(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1) {
    const double d1 = cross(a1 - a0, b0 - a0);
    const double d2 = cross(a1 - a0, b1 - a0);
    const double d3 = cross(b1 - b0, a0 - b0);
    const double d4 = cross(b1 - b0, a1 - b0);
    if (((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0))) return true;
    // collinear overlaps count as touching
    auto on = [](const Vec2& p, const Vec2& a, const Vec2& b) {
        return std::abs(cross(b - a, p - a)) < 1e-15 && p.x >= std::min(a.x, b.x) - 1e-15 &&
               p.x <= std::max(a.x, b.x) + 1e-15 && p.y >= std::min(a.y, b.y) - 1e-15 &&
               p.y <= std::max(a.y, b.y) + 1e-15;
    };
    return on(b0, a0, a1) || on(b1, a0, a1) || on(a0, b0, b1) || on(a1, b0, b1);
}

double segment_segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1) {
    if (segments_intersect(a0, a1, b0, b1)) return 0.0;
    return std::min(std::min(point_segment_distance(a0, b0, b1), point_segment_distance(a1, b0, b1)),
                    std::min(point_segment_distance(b0, a0, a1), point_segment_distance(b1, a0, a1)));
}

double point_polygon_distance(const Vec2& p, const Polygon& poly) {
    if (point_in_polygon(p, poly)) return 0.0;
    double best = std::numeric_limits<double>::max();
    const size_t n = poly.v.size();
    for (size_t i = 0; i < n; ++i)
        best = std::min(best, point_segment_distance(p, poly.v[i], poly.v[(i + 1) % n]));
    return best;
}

double segment_polygon_distance(const Vec2& a, const Vec2& b, const Polygon& poly) {
    if (point_in_polygon(a, poly) || point_in_polygon(b, poly)) return 0.0;
    double best = std::numeric_limits<double>::max();
    const size_t n = poly.v.size();
    for (size_t i = 0; i < n; ++i) {
        best = std::min(best, segment_segment_distance(a, b, poly.v[i], poly.v[(i + 1) % n]));
        if (best == 0.0) return 0.0;
    }
    return best;
}

bool polygons_intersect(const Polygon& a, const Polygon& b) {
    const size_t na = a.v.size(), nb = b.v.size();
    for (size_t i = 0; i < na; ++i)
        for (size_t j = 0; j < nb; ++j)
            if (segments_intersect(a.v[i], a.v[(i + 1) % na], b.v[j], b.v[(j + 1) % nb]))
                return true;
    return point_in_polygon(a.v[0], b) || point_in_polygon(b.v[0], a);
}

Polygon transformed(const Polygon& local, const Vec2& pos, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Polygon out;
    out.v.reserve(local.v.size());
    for (const Vec2& p : local.v)
        out.v.push_back({pos.x + c * p.x - s * p.y, pos.y + s * p.x + c * p.y});
    return out;
}

} // namespace vismpc
