#pragma once

#include <cmath>
#include <stdexcept>

namespace geoproof {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Normalize longitude degrees into [-180, 180).
inline double normalize_lon(double lon) {
    lon = std::fmod(lon + 180.0, 360.0);
    if (lon < 0.0) lon += 360.0;
    return lon - 180.0;
}

struct CoincidentPoints : std::runtime_error {
    CoincidentPoints() : std::runtime_error("bearing undefined for coincident points") {}
};

/// A location on the sphere. Latitude/longitude in degrees, longitude
/// normalized to [-180, 180).
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    GeoPoint() = default;
    GeoPoint(double lat_deg, double lon_deg) : lat(lat_deg), lon(normalize_lon(lon_deg)) {
        if (!(lat >= -90.0 && lat <= 90.0))
            throw std::invalid_argument("latitude out of [-90, 90]");
    }
};

/// A point in the flat simulation world. Coordinates are km-equivalent:
/// x east, y north.
struct PlanarPoint {
    double x = 0.0;
    double y = 0.0;
};

/// An initial direction, clockwise from true north, normalized to [0, 2*pi).
struct Bearing {
    double rad = 0.0;

    static Bearing from_radians(double r) {
        r = std::fmod(r, kTwoPi);
        if (r < 0.0) r += kTwoPi;
        return Bearing{r};
    }
    static Bearing from_degrees(double d) { return from_radians(deg2rad(d)); }
};

/// Haversine great-circle distance in km on a sphere of radius 6371 km.
double distance(const GeoPoint& a, const GeoPoint& b);

/// Initial great-circle bearing from `from` toward `to`.
/// Throws CoincidentPoints when the points coincide.
Bearing bearing(const GeoPoint& from, const GeoPoint& to);

/// Point reached by traveling `dist_km` along the great circle that leaves
/// `from` at the given initial bearing. destination(p, b, 0) == p.
GeoPoint destination(const GeoPoint& from, Bearing b, double dist_km);

/// Euclidean distance in the planar world.
double distance(const PlanarPoint& a, const PlanarPoint& b);

/// Planar bearing (clockwise from +y/north). Throws CoincidentPoints
/// when the points coincide.
Bearing bearing(const PlanarPoint& from, const PlanarPoint& to);

/// Planar destination: from + dist * (sin b, cos b).
PlanarPoint destination(const PlanarPoint& from, Bearing b, double dist);

/// Circular distance between two directions, in [0, pi].
inline double angular_distance(double a, double b) {
    double d = std::fabs(std::fmod(a - b, kTwoPi));
    if (d > kPi) d = kTwoPi - d;
    return d;
}

}  // namespace geoproof
