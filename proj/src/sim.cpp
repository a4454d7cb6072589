#include "geoproof/sim.hpp"

#include <algorithm>
#include <cmath>

namespace geoproof::sim {

namespace {

// Stream keys: every entity draws from its own counter stream so adversary
// changes never shift honest randomness.
constexpr uint64_t kStreamPlacement = 1'000'000;
constexpr uint64_t kStreamNoise = 2'000'000;
constexpr uint64_t kStreamByzantine = 3'000'000;
constexpr uint64_t kStreamCalDist = 4'000'000;
constexpr uint64_t kStreamCalNoise = 5'000'000;
constexpr uint64_t kStreamCorruptPick = 42;

std::vector<bool> pick_corrupted(uint64_t seed, int n, double beta) {
    const int k = int(std::floor(beta * n));
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    CounterRng rng(seed, kStreamCorruptPick);
    for (int i = 0; i < k; ++i) std::swap(idx[i], idx[i + int(rng.below(uint64_t(n - i)))]);
    std::vector<bool> corrupted(n, false);
    for (int i = 0; i < k; ++i) corrupted[idx[i]] = true;
    return corrupted;
}

double evaluate_clamped(const poig::MonotoneMapping& mapping, double rtt) {
    return poig::evaluate(mapping, std::min(rtt, mapping.t_max_ms)).value();
}

}  // namespace

SimWorld make_world(uint64_t seed, int n, double beta, double sigma, const AdversaryModel& adversary,
                    double radius, PlanarPoint waldo_true, PlanarPoint waldo_claimed) {
    SimWorld w;
    w.seed = seed;
    w.sigma = sigma;
    w.beta = beta;
    w.adversary = adversary;
    w.radius = radius;
    w.waldo_true = waldo_true;
    w.waldo_claimed = waldo_claimed;
    w.challengers.reserve(n);
    for (int i = 0; i < n; ++i) {
        CounterRng rng(seed, kStreamPlacement + uint64_t(i));
        w.challengers.push_back(rng.in_disk(radius));
    }
    w.corrupted = pick_corrupted(seed, n, beta);
    return w;
}

double simulate_measurement(const SimWorld& world, int i) {
    const PlanarPoint& c = world.challengers.at(size_t(i));
    const double d_true = distance(world.waldo_true, c);

    CounterRng noise(world.seed, kStreamNoise + uint64_t(i));
    const double one_sided = std::fabs(noise.gaussian(0.0, world.sigma));

    if (world.corrupted[size_t(i)]) {
        switch (world.adversary.kind) {
            case AdversaryKind::challenger_distance_double:
                return 2.0 * (d_true + one_sided);
            case AdversaryKind::challenger_deflate:
            default: {
                // arbitrary misreport bounded to ten world diameters, with the
                // 0 and max endpoints included
                CounterRng byz(world.seed, kStreamByzantine + uint64_t(i));
                switch (byz.below(4)) {
                    case 0: return 0.0;
                    case 1: return 20.0 * world.radius;
                    case 2: return byz.uniform(0.0, d_true);
                    default: return byz.uniform(0.0, 20.0 * world.radius);
                }
            }
        }
    }

    switch (world.adversary.kind) {
        case AdversaryKind::waldo_inflate:
            return d_true + one_sided + world.adversary.delta;
        case AdversaryKind::vpn_relay: {
            const double via_relay =
                distance(c, world.adversary.relay) + distance(world.adversary.relay, world.waldo_true);
            return via_relay + one_sided;
        }
        default:
            return d_true + one_sided;
    }
}

trig::PlanarUncertaintyProfile prove_world(const SimWorld& world, const trig::ProvingConfig& cfg) {
    std::vector<trig::PlanarEstimate> estimates;
    estimates.reserve(world.challengers.size());
    for (size_t i = 0; i < world.challengers.size(); ++i)
        estimates.push_back({world.challengers[i], simulate_measurement(world, int(i))});
    return trig::prove(world.waldo_claimed, estimates, cfg);
}

std::vector<SweepRow> sweep_uncertainty(const std::vector<int>& n_list, const std::vector<double>& beta_list,
                                        double sigma, int replicates, uint64_t seed, int grid_size) {
    std::vector<SweepRow> rows;
    for (const int n : n_list) {
        for (size_t bi = 0; bi < beta_list.size(); ++bi) {
            const double beta = beta_list[bi];
            double total = 0.0;
            for (int rep = 0; rep < replicates; ++rep) {
                CounterRng mix(seed, (uint64_t(n) << 24) ^ (uint64_t(bi) << 16) ^ uint64_t(rep));
                const SimWorld world = make_world(mix.next_u64(), n, 0.0, sigma, {});

                trig::ProvingConfig cfg;
                cfg.beta = beta;
                cfg.grid_size = grid_size;
                total += prove_world(world, cfg).r_star;
            }
            rows.push_back({n, beta, total / replicates});
        }
    }
    return rows;
}

CalibrationCurves calibration_comparison(int k, double beta, const LinearDelayModel& model, uint64_t seed,
                                         double eta, double filter_beta, int grid_points, double max_dist_km) {
    if (k < 10) throw DegenerateInput{"calibration needs at least 10 peers"};
    if (filter_beta < 0.0) filter_beta = beta;

    const auto corrupted = pick_corrupted(seed, k, beta);
    std::vector<poig::DelayDistanceSample> samples;
    samples.reserve(k);
    for (int i = 0; i < k; ++i) {
        CounterRng dist_rng(seed, kStreamCalDist + uint64_t(i));
        CounterRng noise_rng(seed, kStreamCalNoise + uint64_t(i));
        const double d = dist_rng.uniform(10.0, max_dist_km);
        double eps = 0.0;
        switch (model.noise) {
            case LinearDelayModel::Noise::gaussian: eps = noise_rng.gaussian(0.0, model.sigma); break;
            case LinearDelayModel::Noise::one_sided_gaussian:
                eps = std::fabs(noise_rng.gaussian(0.0, model.sigma));
                break;
            case LinearDelayModel::Noise::exponential: eps = noise_rng.exponential(model.lambda); break;
        }
        const double t = model.c * d + model.b + eps;

        poig::DelayDistanceSample s;
        s.peer_id = "peer-" + std::to_string(i);
        s.rtt_ms = t;
        s.dist_km = corrupted[size_t(i)] ? 2.0 * d : d; // doubled distance, unchanged delay
        samples.push_back(std::move(s));
    }

    CalibrationCurves out;
    out.samples = samples;
    out.baseline_mapping = poig::build_monotone(samples);
    out.ratio_mapping = poig::build_monotone(poig::ratio_filter(samples, filter_beta));
    out.bin_mapping = filter_beta > 0.0 ? poig::build_monotone(poig::bin_filter(samples, filter_beta))
                                        : out.baseline_mapping;
    out.corrected_mapping = out.ratio_mapping;
    out.corrected_mapping.eta = eta;

    double t_lo = samples[0].rtt_ms, t_hi = samples[0].rtt_ms;
    for (const auto& s : samples) {
        t_lo = std::min(t_lo, s.rtt_ms);
        t_hi = std::max(t_hi, s.rtt_ms);
    }
    for (int g = 0; g < grid_points; ++g) {
        const double t = t_lo + (t_hi - t_lo) * g / (grid_points - 1);
        out.delay_grid.push_back(t);
        out.baseline.push_back(evaluate_clamped(out.baseline_mapping, t));
        out.ratio_filtered.push_back(evaluate_clamped(out.ratio_mapping, t));
        out.bin_filtered.push_back(evaluate_clamped(out.bin_mapping, t));
        out.corrected.push_back(evaluate_clamped(out.corrected_mapping, t));
    }
    return out;
}

OlsResult ols_estimate(const std::vector<poig::DelayDistanceSample>& samples, double sigma) {
    if (samples.size() < 2) throw DegenerateInput{"need at least two samples"};
    double mean_d = 0.0, mean_t = 0.0;
    for (const auto& s : samples) {
        mean_d += s.dist_km;
        mean_t += s.rtt_ms;
    }
    mean_d /= double(samples.size());
    mean_t /= double(samples.size());

    double cov = 0.0, var = 0.0;
    for (const auto& s : samples) {
        cov += (s.dist_km - mean_d) * (s.rtt_ms - mean_t);
        var += (s.dist_km - mean_d) * (s.dist_km - mean_d);
    }
    if (var == 0.0) throw DegenerateInput{"all distances identical"};
    return {cov / var, var / (sigma * sigma)};
}

double mle_exponential_estimate(const std::vector<poig::DelayDistanceSample>& samples) {
    if (samples.empty()) throw DegenerateInput{"no samples"};
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        if (s.dist_km == 0.0) throw DegenerateInput{"zero distance sample"};
        best = std::min(best, s.rtt_ms / s.dist_km);
    }
    return best;
}

RmcInstance plant_rmc_instance(int m, double beta, double p, uint64_t seed) {
    RmcInstance inst;
    CounterRng rng(seed, kStreamPlacement);
    std::vector<PlanarPoint> pts;
    pts.reserve(m);
    for (int i = 0; i < m; ++i) pts.push_back(rng.in_disk(1000.0));

    const double c = 0.02; // ms per km
    inst.matrix = rmc::DelayMatrix::zeros(m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const double t = c * distance(pts[i], pts[j]);
            inst.matrix.entries(i, j) = t * t;
        }

    const auto corrupted = pick_corrupted(seed, m, beta);
    const double max_entry = inst.matrix.entries.maxCoeff();
    CounterRng junk(seed, kStreamByzantine);
    for (int j = 0; j < m; ++j) {
        if (!corrupted[size_t(j)]) continue;
        inst.planted.push_back(j);
        for (int i = 0; i < m; ++i) inst.matrix.entries(i, j) = junk.uniform(0.0, max_entry);
    }
    inst.matrix.mask = rmc::sample_mask(m, p, seed ^ 0x5eed);
    return inst;
}

std::vector<RmcGridCell> rmc_grid(int m, const std::vector<double>& beta_list, const std::vector<double>& p_list,
                                  const std::vector<uint64_t>& seeds) {
    std::vector<RmcGridCell> cells;
    for (const double beta : beta_list) {
        for (const double p : p_list) {
            double total = 0.0;
            for (const uint64_t seed : seeds) {
                const RmcInstance inst = plant_rmc_instance(m, beta, p, seed);

                rmc::RmcConfig cfg;
                cfg.sample_p = p * 0.8; // sanity floor with slack for sampling variance
                cfg.max_iter = 700;
                const auto res = rmc::complete(inst.matrix, cfg);

                std::vector<bool> truth(m, false), found(m, false);
                for (int j : inst.planted) truth[j] = true;
                for (int j : res.corrupted) found[j] = true;
                int agree = 0;
                for (int j = 0; j < m; ++j) agree += truth[j] == found[j];
                total += double(agree) / m;
            }
            cells.push_back({beta, p, total / double(seeds.size())});
        }
    }
    return cells;
}

}  // namespace geoproof::sim
