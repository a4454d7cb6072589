#include "geoproof/poig.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <json.hpp>

namespace geoproof::poig {

SampleSelection select_samples(const std::vector<DelayDistanceSample>& all, double x_limit_km) {
    double t_max = -1.0;
    for (const auto& s : all)
        if (s.dist_km <= x_limit_km) t_max = std::max(t_max, s.rtt_ms);
    if (t_max < 0.0) throw NoNearbySamples{};

    SampleSelection out;
    out.t_max_ms = t_max;
    for (const auto& s : all)
        if (s.dist_km <= x_limit_km || s.rtt_ms < t_max) out.samples.push_back(s);
    return out;
}

MonotoneMapping build_monotone(const std::vector<DelayDistanceSample>& samples) {
    if (samples.empty()) throw EmptySampleSet{};

    // max distance per distinct rtt, rtts ascending
    std::map<double, double> max_dist;
    double t_max = 0.0;
    for (const auto& s : samples) {
        auto [it, inserted] = max_dist.try_emplace(s.rtt_ms, s.dist_km);
        if (!inserted) it->second = std::max(it->second, s.dist_km);
        t_max = std::max(t_max, s.rtt_ms);
    }

    MonotoneMapping mapping;
    mapping.t_max_ms = t_max;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [rtt, dist] : max_dist) {
        if (dist > best) {
            mapping.breakpoints.emplace_back(rtt, dist);
            best = dist;
        }
    }
    return mapping;
}

std::optional<double> evaluate(const MonotoneMapping& mapping, double rtt_ms) {
    if (mapping.breakpoints.empty()) throw EmptySampleSet{};
    if (rtt_ms > mapping.t_max_ms) return std::nullopt;

    const auto& bp = mapping.breakpoints;
    if (rtt_ms <= bp.front().first) return mapping.eta * bp.front().second;
    if (rtt_ms >= bp.back().first) return mapping.eta * bp.back().second;

    const auto hi = std::upper_bound(bp.begin(), bp.end(), rtt_ms,
                                     [](double t, const auto& b) { return t < b.first; });
    const auto lo = hi - 1;
    const double frac = (rtt_ms - lo->first) / (hi->first - lo->first);
    return mapping.eta * (lo->second + frac * (hi->second - lo->second));
}

std::vector<DelayDistanceSample> ratio_filter(std::vector<DelayDistanceSample> samples, double beta) {
    const size_t remove = size_t(std::floor(beta * double(samples.size())));
    if (remove == 0) return samples;

    std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
        const double ra = a.dist_km / a.rtt_ms;
        const double rb = b.dist_km / b.rtt_ms;
        if (ra != rb) return ra > rb;
        if (a.dist_km != b.dist_km) return a.dist_km > b.dist_km;
        return a.peer_id < b.peer_id;
    });
    samples.erase(samples.begin(), samples.begin() + remove);
    return samples;
}

std::vector<DelayDistanceSample> bin_filter(std::vector<DelayDistanceSample> samples, double beta) {
    const size_t bin = size_t(std::ceil(1.0 / beta));
    std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
        if (a.rtt_ms != b.rtt_ms) return a.rtt_ms < b.rtt_ms;
        return a.peer_id < b.peer_id;
    });

    std::vector<DelayDistanceSample> kept;
    kept.reserve(samples.size());
    for (size_t start = 0; start < samples.size(); start += bin) {
        const size_t end = std::min(start + bin, samples.size());
        if (end - start < bin) {
            kept.insert(kept.end(), samples.begin() + start, samples.begin() + end);
            continue;
        }
        size_t drop = start;
        for (size_t i = start; i < end; ++i) {
            if (samples[i].dist_km > samples[drop].dist_km ||
                (samples[i].dist_km == samples[drop].dist_km && samples[i].peer_id < samples[drop].peer_id))
                drop = i;
        }
        for (size_t i = start; i < end; ++i)
            if (i != drop) kept.push_back(samples[i]);
    }
    return kept;
}

BestLine cbg_bestline(const std::vector<DelayDistanceSample>& samples) {
    if (samples.size() < 2) throw DegenerateInput{"bestline needs at least two samples"};

    double sum_t = 0.0;
    double max_dist = -std::numeric_limits<double>::infinity();
    double min_rtt = std::numeric_limits<double>::infinity();
    double max_rtt = -std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        sum_t += s.rtt_ms;
        max_dist = std::max(max_dist, s.dist_km);
        min_rtt = std::min(min_rtt, s.rtt_ms);
        max_rtt = std::max(max_rtt, s.rtt_ms);
    }
    if (min_rtt == max_rtt) throw DegenerateInput{"all samples share one rtt"};

    const double n = double(samples.size());
    const double feas_eps = 1e-9 * std::max(1.0, std::fabs(max_dist));

    // The objective sum(a*t_j + b - d_j) = a*sum_t + b*n - const is linear, so
    // the optimum sits on a vertex: a line through two samples, or the
    // horizontal line through the farthest one.
    bool have = false;
    BestLine best{};
    double best_obj = std::numeric_limits<double>::infinity();
    auto consider = [&](double a, double b) {
        for (const auto& s : samples)
            if (a * s.rtt_ms + b < s.dist_km - feas_eps) return;
        const double obj = a * sum_t + b * n;
        if (!have || obj < best_obj - 1e-12 ||
            (std::fabs(obj - best_obj) <= 1e-12 && a < best.slope_km_per_ms)) {
            best = BestLine{a, b};
            best_obj = obj;
            have = true;
        }
    };

    consider(0.0, max_dist);
    for (size_t i = 0; i < samples.size(); ++i) {
        for (size_t j = i + 1; j < samples.size(); ++j) {
            const double dt = samples[j].rtt_ms - samples[i].rtt_ms;
            if (dt == 0.0) continue;
            const double a = (samples[j].dist_km - samples[i].dist_km) / dt;
            const double b = samples[i].dist_km - a * samples[i].rtt_ms;
            consider(a, b);
        }
    }
    return best;
}

std::string to_json(const MonotoneMapping& mapping) {
    nlohmann::json j;
    j["breakpoints"] = nlohmann::json::array();
    for (const auto& [rtt, dist] : mapping.breakpoints) j["breakpoints"].push_back({rtt, dist});
    j["t_max_ms"] = mapping.t_max_ms;
    j["eta"] = mapping.eta;
    return j.dump();
}

MonotoneMapping mapping_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MonotoneMapping mapping;
    for (const auto& bp : j.at("breakpoints"))
        mapping.breakpoints.emplace_back(bp.at(0).get<double>(), bp.at(1).get<double>());
    mapping.t_max_ms = j.at("t_max_ms").get<double>();
    mapping.eta = j.at("eta").get<double>();
    return mapping;
}

}  // namespace geoproof::poig
