#include "geoproof/trig.hpp"

#include <algorithm>
#include <cmath>

namespace geoproof::trig {

double directional_uncertainty(double d_hat, double d_tilde, double gamma, double theta) {
    const double chord = d_tilde * std::sin(gamma - theta);
    const double disc = d_hat * d_hat - chord * chord;
    if (disc < 0.0) return 0.0; // ray from the claim never enters the circle
    const double r = std::sqrt(disc) - d_tilde * std::cos(gamma - theta);
    return r > 0.0 ? r : 0.0;
}

ProfileData profile_from_constraints(const std::vector<Constraint>& constraints, const ProvingConfig& cfg) {
    const int n = static_cast<int>(constraints.size());
    if (n == 0) throw EmptyChallengerSet{};

    const int excluded = static_cast<int>(std::floor(cfg.beta * n));
    if (excluded >= n) throw AllExcluded{"floor(beta*n) >= n: every challenger would be excluded"};

    const int g = cfg.grid_size;
    ProfileData out;
    out.excluded_count = excluded;
    out.theta_grid.resize(g);
    out.r_star_theta.resize(g);

    std::vector<double> values(n);
    for (int k = 0; k < g; ++k) {
        const double theta = kTwoPi * k / g;
        out.theta_grid[k] = theta;
        for (int i = 0; i < n; ++i) {
            const Constraint& c = constraints[i];
            values[i] = directional_uncertainty(c.d_hat, c.d_tilde, c.gamma, theta);
        }
        std::nth_element(values.begin(), values.begin() + excluded, values.end());
        out.r_star_theta[k] = values[excluded];
    }

    // Scalar maximum, with the two optional mitigations against Byzantine
    // challengers: drop the largest per-direction bounds, then drop the arc
    // around the remaining argmax.
    std::vector<int> candidates(g);
    for (int k = 0; k < g; ++k) candidates[k] = k;

    if (cfg.percentile_exclusion > 0.0) {
        const int drop = static_cast<int>(std::ceil(cfg.percentile_exclusion * g));
        if (drop >= g) throw AllExcluded{"percentile exclusion drops the whole grid"};
        std::sort(candidates.begin(), candidates.end(),
                  [&](int a, int b) { return out.r_star_theta[a] < out.r_star_theta[b]; });
        candidates.resize(g - drop);
    }

    if (cfg.angular_exclusion > 0.0) {
        const auto argmax = *std::max_element(candidates.begin(), candidates.end(), [&](int a, int b) {
            return out.r_star_theta[a] < out.r_star_theta[b];
        });
        const double center = out.theta_grid[argmax];
        const double half = cfg.angular_exclusion / 2.0;
        std::erase_if(candidates, [&](int k) { return angular_distance(out.theta_grid[k], center) <= half; });
        if (candidates.empty()) throw AllExcluded{"angular exclusion drops the whole grid"};
    }

    out.r_star = 0.0;
    for (int k : candidates) out.r_star = std::max(out.r_star, out.r_star_theta[k]);
    return out;
}

namespace {

template <typename Point, typename Estimate>
UncertaintyProfileT<Point> prove_impl(const Point& claimed, const std::vector<Estimate>& challengers,
                                      const ProvingConfig& cfg) {
    std::vector<Constraint> constraints;
    constraints.reserve(challengers.size());
    for (const auto& ch : challengers) {
        Constraint c;
        c.d_tilde = distance(claimed, ch.location);
        // gamma is the direction along which the challenger's circle extends
        // past the claim: away from the challenger. With that convention the
        // formula's value in direction theta is the exit distance of the ray.
        c.gamma = c.d_tilde > 0.0 ? Bearing::from_radians(bearing(claimed, ch.location).rad + kPi).rad : 0.0;
        if constexpr (std::is_same_v<Estimate, ChallengerEstimate>) {
            c.d_hat = ch.d_hat_km;
        } else {
            c.d_hat = ch.d_hat;
        }
        constraints.push_back(c);
    }
    ProfileData data = profile_from_constraints(constraints, cfg);

    UncertaintyProfileT<Point> profile;
    profile.claimed = claimed;
    profile.theta_grid = std::move(data.theta_grid);
    profile.r_star_theta = std::move(data.r_star_theta);
    profile.r_star = data.r_star;
    profile.excluded_count = data.excluded_count;
    return profile;
}

template <typename Point>
std::vector<Point> boundary_impl(const UncertaintyProfileT<Point>& profile) {
    std::vector<Point> boundary;
    boundary.reserve(profile.theta_grid.size());
    for (size_t k = 0; k < profile.theta_grid.size(); ++k)
        boundary.push_back(
            destination(profile.claimed, Bearing::from_radians(profile.theta_grid[k]), profile.r_star_theta[k]));
    return boundary;
}

}  // namespace

UncertaintyProfile prove(const GeoPoint& claimed, const std::vector<ChallengerEstimate>& challengers,
                         const ProvingConfig& cfg) {
    return prove_impl(claimed, challengers, cfg);
}

PlanarUncertaintyProfile prove(const PlanarPoint& claimed, const std::vector<PlanarEstimate>& challengers,
                               const ProvingConfig& cfg) {
    return prove_impl(claimed, challengers, cfg);
}

std::vector<GeoPoint> region_boundary(const UncertaintyProfile& profile) { return boundary_impl(profile); }

std::vector<PlanarPoint> region_boundary(const PlanarUncertaintyProfile& profile) { return boundary_impl(profile); }

std::vector<PlanarPoint> brute_force_region(const PlanarPoint& claimed, const std::vector<Circle>& circles,
                                            int min_cover, double grid_step) {
    if (circles.empty() || grid_step <= 0.0) return {};

    double min_x = circles[0].center.x - circles[0].radius;
    double max_x = circles[0].center.x + circles[0].radius;
    double min_y = circles[0].center.y - circles[0].radius;
    double max_y = circles[0].center.y + circles[0].radius;
    for (const Circle& c : circles) {
        min_x = std::min(min_x, c.center.x - c.radius);
        max_x = std::max(max_x, c.center.x + c.radius);
        min_y = std::min(min_y, c.center.y - c.radius);
        max_y = std::max(max_y, c.center.y + c.radius);
    }

    // Grid aligned on the claimed point so results are reproducible across
    // instances that share it.
    const long kx0 = static_cast<long>(std::ceil((min_x - claimed.x) / grid_step));
    const long kx1 = static_cast<long>(std::floor((max_x - claimed.x) / grid_step));
    const long ky0 = static_cast<long>(std::ceil((min_y - claimed.y) / grid_step));
    const long ky1 = static_cast<long>(std::floor((max_y - claimed.y) / grid_step));

    std::vector<PlanarPoint> inside;
    for (long kx = kx0; kx <= kx1; ++kx) {
        const double x = claimed.x + kx * grid_step;
        for (long ky = ky0; ky <= ky1; ++ky) {
            const double y = claimed.y + ky * grid_step;
            int cover = 0;
            for (const Circle& c : circles) {
                const double dx = x - c.center.x;
                const double dy = y - c.center.y;
                if (dx * dx + dy * dy <= c.radius * c.radius) ++cover;
            }
            if (cover >= min_cover) inside.push_back(PlanarPoint{x, y});
        }
    }
    return inside;
}

}  // namespace geoproof::trig
