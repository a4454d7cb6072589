#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geoproof/geo.hpp"

namespace geoproof::poig {

struct EmptySampleSet : std::runtime_error {
    EmptySampleSet() : std::runtime_error("no calibration samples") {}
};

struct NoNearbySamples : std::runtime_error {
    NoNearbySamples() : std::runtime_error("no calibration sample within the distance limit") {}
};

struct DegenerateInput : std::runtime_error {
    explicit DegenerateInput(const std::string& what) : std::runtime_error(what) {}
};

/// One calibration measurement: ping RTT to a peer and the distance implied
/// by the peer's (claimed) location.
struct DelayDistanceSample {
    std::string peer_id;
    double rtt_ms = 0.0;
    double dist_km = 0.0;
    GeoPoint claimed_peer_location{};
};

/// Piecewise-linear non-decreasing delay -> max-distance envelope. The
/// breakpoints are the outer periphery of the calibration cloud: strictly
/// increasing in rtt and strictly increasing in distance.
struct MonotoneMapping {
    std::vector<std::pair<double, double>> breakpoints; // (rtt_ms, dist_km)
    double t_max_ms = 0.0; // disqualification cutoff: largest calibration delay
    double eta = 1.0;      // correction factor applied to every evaluation

    bool operator==(const MonotoneMapping&) const = default;
};

enum class FilterMode { none, ratio, bin };

struct CalibrationConfig {
    double x_limit_km = 2000.0;
    double beta = 0.0;
    double eta = 1.2;
    int bin_size = 0; // 0: derive as ceil(1/beta)
    FilterMode filter_mode = FilterMode::none;
};

struct SampleSelection {
    std::vector<DelayDistanceSample> samples;
    double t_max_ms = 0.0;
};

/// Samples used for calibration: everything within x_limit of the challenger
/// plus any farther peer whose delay is strictly below t_max, the largest
/// delay seen within the limit. Keeping those far-but-fast peers closes the
/// envelope-truncation attack.
SampleSelection select_samples(const std::vector<DelayDistanceSample>& all, double x_limit_km);

/// Upper staircase of the samples: for each distinct rtt the max distance,
/// then prefix maxima only. t_max is the largest rtt over ALL input samples.
MonotoneMapping build_monotone(const std::vector<DelayDistanceSample>& samples);

/// eta * envelope value, or nullopt (disqualified) when rtt exceeds t_max.
/// Below the first breakpoint the first distance applies; between breakpoints
/// linear interpolation; past the last breakpoint its distance holds.
std::optional<double> evaluate(const MonotoneMapping& mapping, double rtt_ms);

/// Removes the floor(beta*n) samples with the largest dist/rtt ratio.
/// Ties: larger distance goes first, then peer_id.
std::vector<DelayDistanceSample> ratio_filter(std::vector<DelayDistanceSample> samples, double beta);

/// Sorts by rtt, partitions into consecutive bins of ceil(1/beta) samples and
/// removes the largest-distance member of every full bin. A short final bin
/// is left intact.
std::vector<DelayDistanceSample> bin_filter(std::vector<DelayDistanceSample> samples, double beta);

struct BestLine {
    double slope_km_per_ms = 0.0;
    double intercept_km = 0.0;

    double operator()(double rtt_ms) const { return slope_km_per_ms * rtt_ms + intercept_km; }
};

/// The line d = a*t + b that lies on or above every sample and minimizes the
/// total residual, found by scanning all candidate lines through sample
/// pairs plus the horizontal line through the farthest sample.
BestLine cbg_bestline(const std::vector<DelayDistanceSample>& samples);

std::string to_json(const MonotoneMapping& mapping);
MonotoneMapping mapping_from_json(const std::string& text);

}  // namespace geoproof::poig
