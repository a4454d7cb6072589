#include "geoproof/geo.hpp"

#include <algorithm>

namespace geoproof {

double distance(const GeoPoint& a, const GeoPoint& b) {
    const double lat1 = deg2rad(a.lat);
    const double lat2 = deg2rad(b.lat);
    const double dlat = lat2 - lat1;
    const double dlon = deg2rad(b.lon) - deg2rad(a.lon);

    const double s1 = std::sin(dlat * 0.5);
    const double s2 = std::sin(dlon * 0.5);
    const double h = s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2;
    const double c = 2.0 * std::atan2(std::sqrt(h), std::sqrt(std::max(0.0, 1.0 - h)));
    return kEarthRadiusKm * c;
}

Bearing bearing(const GeoPoint& from, const GeoPoint& to) {
    if (from.lat == to.lat && from.lon == to.lon) throw CoincidentPoints{};

    const double lat1 = deg2rad(from.lat);
    const double lat2 = deg2rad(to.lat);
    const double dlon = deg2rad(to.lon) - deg2rad(from.lon);

    const double y = std::sin(dlon) * std::cos(lat2);
    const double x = std::cos(lat1) * std::sin(lat2) - std::sin(lat1) * std::cos(lat2) * std::cos(dlon);
    return Bearing::from_radians(std::atan2(y, x));
}

GeoPoint destination(const GeoPoint& from, Bearing b, double dist_km) {
    const double delta = dist_km / kEarthRadiusKm;
    const double lat1 = deg2rad(from.lat);
    const double lon1 = deg2rad(from.lon);

    const double sin_lat2 = std::sin(lat1) * std::cos(delta) + std::cos(lat1) * std::sin(delta) * std::cos(b.rad);
    const double lat2 = std::asin(std::clamp(sin_lat2, -1.0, 1.0));
    const double lon2 = lon1 + std::atan2(std::sin(b.rad) * std::sin(delta) * std::cos(lat1),
                                          std::cos(delta) - std::sin(lat1) * sin_lat2);
    return GeoPoint{rad2deg(lat2), normalize_lon(rad2deg(lon2))};
}

double distance(const PlanarPoint& a, const PlanarPoint& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

Bearing bearing(const PlanarPoint& from, const PlanarPoint& to) {
    if (from.x == to.x && from.y == to.y) throw CoincidentPoints{};
    return Bearing::from_radians(std::atan2(to.x - from.x, to.y - from.y));
}

PlanarPoint destination(const PlanarPoint& from, Bearing b, double dist) {
    return PlanarPoint{from.x + dist * std::sin(b.rad), from.y + dist * std::cos(b.rad)};
}

}  // namespace geoproof
