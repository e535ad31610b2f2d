#pragma once

#include <cmath>

namespace roadtagger {

// Planar position in meters (local tangent projection happens at ingest).
struct GeoPoint {
    double x = 0.0;  // east
    double y = 0.0;  // north
};

inline double distance(const GeoPoint& a, const GeoPoint& b) {
    return std::hypot(b.x - a.x, b.y - a.y);
}

// Bearing of the segment a->b in radians, atan2 convention.
inline double bearing(const GeoPoint& a, const GeoPoint& b) {
    return std::atan2(b.y - a.y, b.x - a.x);
}

// Absolute angle between two bearings, in [0, pi].
inline double angle_between(double bearing_a, double bearing_b) {
    double d = std::fabs(std::fmod(bearing_a - bearing_b, 2.0 * M_PI));
    if (d > M_PI) d = 2.0 * M_PI - d;
    return d;
}

// Angle between two directions treated as undirected lines, in [0, pi/2].
// Parallel and antiparallel both map to 0.
inline double line_angle_between(double bearing_a, double bearing_b) {
    const double d = angle_between(bearing_a, bearing_b);
    return std::min(d, M_PI - d);
}

inline double deg_to_rad(double deg) { return deg * M_PI / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / M_PI; }

}  // namespace roadtagger
