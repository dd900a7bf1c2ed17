#pragma once

#include <cmath>
#include <vector>

namespace vismpc {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const { return std::sqrt(x * x + y * y); }
    bool operator==(const Vec2&) const = default;
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

// Simple polygon, counter-clockwise vertex order.
struct Polygon {
    std::vector<Vec2> v;
    bool operator==(const Polygon&) const = default;
};

double polygon_area(const Polygon& p);
Vec2 polygon_centroid(const Polygon& p);
bool point_in_polygon(const Vec2& p, const Polygon& poly);
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);
double segment_segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1);
bool segments_intersect(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1);

// 0 inside or on boundary, else distance to the nearest edge.
double point_polygon_distance(const Vec2& p, const Polygon& poly);

// 0 if the segment touches or enters the polygon.
double segment_polygon_distance(const Vec2& a, const Vec2& b, const Polygon& poly);

bool polygons_intersect(const Polygon& a, const Polygon& b);

Polygon transformed(const Polygon& local, const Vec2& pos, double angle);

} // namespace vismpc
