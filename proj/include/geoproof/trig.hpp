#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "geoproof/geo.hpp"

namespace geoproof::trig {

struct EmptyChallengerSet : std::runtime_error {
    EmptyChallengerSet() : std::runtime_error("no challengers supplied") {}
};

struct AllExcluded : std::runtime_error {
    explicit AllExcluded(const std::string& what) : std::runtime_error(what) {}
};

struct ProvingConfig {
    double beta = 0.0;                 // tolerated corrupt fraction, [0, 0.5)
    int grid_size = 360;               // direction grid resolution G
    double percentile_exclusion = 0.0; // drop this fraction of largest per-direction bounds
    double angular_exclusion = 0.0;    // radians; arc dropped around the argmax direction
};

/// One challenger's measurement as seen from the claimed point: distance and
/// bearing of the challenger, plus its calibrated distance bound (0 when the
/// challenger never responded).
struct Constraint {
    double d_tilde = 0.0; // km, claimed point -> challenger
    double gamma = 0.0;   // radians, bearing of challenger from claimed point
    double d_hat = 0.0;   // km, distance bound reported by the challenger
};

/// Per-challenger deviation bound in direction `theta`: how far a prover can
/// sit from its claim along theta while staying within distance `d_hat` of a
/// challenger at distance `d_tilde`. `gamma` is the direction of the circle's
/// far extent as seen from the claim (pointing away from the challenger); the
/// value is then the exit distance of the theta ray through the circle.
/// Clamped to 0 when the ray misses the circle or the analytic value is
/// negative.
double directional_uncertainty(double d_hat, double d_tilde, double gamma, double theta);

template <typename Point>
struct UncertaintyProfileT {
    Point claimed{};
    std::vector<double> theta_grid;   // radians, uniform, size G
    std::vector<double> r_star_theta; // km, size G
    double r_star = 0.0;              // max over the (post-exclusion) grid
    int excluded_count = 0;           // floor(beta * n)
};

using UncertaintyProfile = UncertaintyProfileT<GeoPoint>;
using PlanarUncertaintyProfile = UncertaintyProfileT<PlanarPoint>;

struct ChallengerEstimate {
    GeoPoint location;
    double d_hat_km = 0.0;
};

struct PlanarEstimate {
    PlanarPoint location;
    double d_hat = 0.0;
};

/// Byzantine-filtered per-direction bounds over a uniform direction grid.
/// In each direction the floor(beta*n) smallest per-challenger bounds are
/// discarded and the next one kept; r_star is the maximum over directions,
/// optionally after percentile and angular-arc exclusion.
UncertaintyProfile prove(const GeoPoint& claimed, const std::vector<ChallengerEstimate>& challengers,
                         const ProvingConfig& cfg);

PlanarUncertaintyProfile prove(const PlanarPoint& claimed, const std::vector<PlanarEstimate>& challengers,
                               const ProvingConfig& cfg);

/// The k-th boundary vertex is destination(claimed, theta_grid[k], r_star_theta[k]).
std::vector<GeoPoint> region_boundary(const UncertaintyProfile& profile);
std::vector<PlanarPoint> region_boundary(const PlanarUncertaintyProfile& profile);

struct Circle {
    PlanarPoint center;
    double radius = 0.0;
};

/// Test oracle: grid points (step `grid_step`, aligned on `claimed`) inside
/// the bounding box of all circles that are covered by at least `min_cover`
/// of them.
std::vector<PlanarPoint> brute_force_region(const PlanarPoint& claimed, const std::vector<Circle>& circles,
                                            int min_cover, double grid_step);

/// Shared core over precomputed constraints; exposed for callers that manage
/// their own geometry (the coordinator and the simulator both do).
struct ProfileData {
    std::vector<double> theta_grid;
    std::vector<double> r_star_theta;
    double r_star = 0.0;
    int excluded_count = 0;
};

ProfileData profile_from_constraints(const std::vector<Constraint>& constraints, const ProvingConfig& cfg);

}  // namespace geoproof::trig
