#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "geoproof/geo.hpp"
#include "geoproof/poig.hpp"
#include "geoproof/rmc.hpp"
#include "geoproof/rng.hpp"
#include "geoproof/trig.hpp"

namespace geoproof::sim {

struct DegenerateInput : std::runtime_error {
    explicit DegenerateInput(const std::string& what) : std::runtime_error(what) {}
};

enum class AdversaryKind {
    none,
    waldo_inflate,              // the prover delays every response
    challenger_deflate,         // corrupt challengers report arbitrarily small bounds
    challenger_distance_double, // corrupt challengers double their distance at the same delay
    vpn_relay                   // the prover tunnels traffic through a relay point
};

struct AdversaryModel {
    AdversaryKind kind = AdversaryKind::none;
    double delta = 0.0;    // extra distance-equivalent delay for waldo_inflate
    PlanarPoint relay{};   // vpn_relay exit point
};

/// A planar measurement world. Challenger positions, the corrupted subset and
/// all noise draws are pure functions of the seed, keyed per entity, so
/// changing the adversary never perturbs honest draws.
struct SimWorld {
    uint64_t seed = 0;
    std::vector<PlanarPoint> challengers;
    std::vector<bool> corrupted; // exactly floor(beta*n) entries set
    PlanarPoint waldo_true{};
    PlanarPoint waldo_claimed{};
    double sigma = 0.0;
    double beta = 0.0;
    AdversaryModel adversary{};
    double radius = 1.0;
};

SimWorld make_world(uint64_t seed, int n, double beta, double sigma, const AdversaryModel& adversary,
                    double radius = 1.0, PlanarPoint waldo_true = {}, PlanarPoint waldo_claimed = {});

/// Challenger i's reported distance bound. Honest challengers return the true
/// distance plus one-sided noise (plus any prover-side delay); corrupted
/// challengers misreport according to the adversary model. Pure in (world, i).
double simulate_measurement(const SimWorld& world, int i);

trig::PlanarUncertaintyProfile prove_world(const SimWorld& world, const trig::ProvingConfig& cfg);

struct SweepRow {
    int n = 0;
    double beta = 0.0;
    double mean_r_star = 0.0;
};

/// Mean uncertainty over seeded replicates for each (n, beta) pair; honest
/// measurements, beta applied as the proving exclusion.
std::vector<SweepRow> sweep_uncertainty(const std::vector<int>& n_list, const std::vector<double>& beta_list,
                                        double sigma, int replicates, uint64_t seed, int grid_size = 360);

struct LinearDelayModel {
    enum class Noise { gaussian, one_sided_gaussian, exponential };
    double c = 0.02;  // ms per km
    double b = 0.0;   // ms intercept
    Noise noise = Noise::one_sided_gaussian;
    double sigma = 1.0;   // gaussian std dev, ms
    double lambda = 1.0;  // exponential rate, 1/ms
};

struct CalibrationCurves {
    std::vector<double> delay_grid;
    std::vector<double> baseline;       // unfiltered envelope
    std::vector<double> ratio_filtered; // highest dist/delay ratios removed
    std::vector<double> bin_filtered;   // per-bin maxima removed
    std::vector<double> corrected;      // ratio-filtered scaled by eta
    poig::MonotoneMapping baseline_mapping, ratio_mapping, bin_mapping, corrected_mapping;
    std::vector<poig::DelayDistanceSample> samples; // post-corruption data
};

/// Generates k delay-distance samples from the linear model, corrupts a beta
/// fraction by doubling distance at unchanged delay, and returns the four
/// envelope variants sampled on a uniform delay grid. filter_beta < 0 applies
/// the corruption fraction as the filter strength too; passing it explicitly
/// decouples protocol filtering from actual corruption.
CalibrationCurves calibration_comparison(int k, double beta, const LinearDelayModel& model, uint64_t seed,
                                         double eta = 1.2, double filter_beta = -1.0, int grid_points = 100,
                                         double max_dist_km = 2000.0);

struct OlsResult {
    double c_hat = 0.0;
    double accuracy = 0.0; // sum((d - mean)^2) / sigma^2
};

/// Least-squares slope of delay on distance, with the estimator accuracy
/// implied by a known noise level.
OlsResult ols_estimate(const std::vector<poig::DelayDistanceSample>& samples, double sigma);

/// Conservative slope estimate under exponential noise: min over t_i / d_i.
double mle_exponential_estimate(const std::vector<poig::DelayDistanceSample>& samples);

struct RmcGridCell {
    double beta = 0.0;
    double p = 0.0;
    double mean_accuracy = 0.0; // correctly classified column fraction
};

/// Plants corrupted columns in seeded squared-delay matrices, runs the robust
/// completion, and reports mean detection accuracy per (beta, p) cell.
std::vector<RmcGridCell> rmc_grid(int m, const std::vector<double>& beta_list, const std::vector<double>& p_list,
                                  const std::vector<uint64_t>& seeds);

/// One seeded grid instance: squared-delay matrix over planar challengers
/// with corrupted columns planted. Exposed for tests and the CLI.
struct RmcInstance {
    rmc::DelayMatrix matrix;
    std::vector<int> planted; // corrupted column indices, ascending
};

RmcInstance plant_rmc_instance(int m, double beta, double p, uint64_t seed);

}  // namespace geoproof::sim
