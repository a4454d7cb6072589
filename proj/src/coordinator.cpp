#include "geoproof/coordinator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace geoproof::coordinator {

namespace {

namespace fs = std::filesystem;

int64_t wall_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

nlohmann::json point_json(const GeoPoint& p) { return {{"lat", p.lat}, {"lon", p.lon}}; }

GeoPoint point_from_json(const nlohmann::json& j) {
    return GeoPoint{j.at("lat").get<double>(), j.at("lon").get<double>()};
}

nlohmann::json mapping_json(const poig::MonotoneMapping& m) {
    return nlohmann::json::parse(poig::to_json(m));
}

poig::MonotoneMapping mapping_from(const nlohmann::json& j) { return poig::mapping_from_json(j.dump()); }

nlohmann::json transcript_json(const netprobe::PingTranscript& t) {
    return nlohmann::json::parse(netprobe::transcript_to_json(t));
}

netprobe::PingTranscript transcript_from(const nlohmann::json& j) {
    return netprobe::transcript_from_json(j.dump());
}

std::string bundle_digest_hex(nlohmann::json bundle) {
    bundle.erase("digest");
    return crypto::to_hex(crypto::sha256(bundle.dump()));
}

int quorum_size(double beta, size_t n) { return int(std::ceil((1.0 - beta) * double(n))); }

}  // namespace

std::array<uint8_t, 16> packet_challenge_id(const std::string& challenge_id) {
    const auto digest = crypto::sha256(challenge_id);
    std::array<uint8_t, 16> id{};
    std::copy_n(digest.begin(), 16, id.begin());
    return id;
}

crypto::Bytes heartbeat_message(const std::string& id, int64_t timestamp_ms) {
    const std::string text = "heartbeat|" + id + "|" + std::to_string(timestamp_ms);
    return crypto::Bytes(text.begin(), text.end());
}

std::string mapping_digest(const poig::MonotoneMapping& mapping) {
    return crypto::to_hex(crypto::sha256(mapping_json(mapping).dump()));
}

Coordinator::Coordinator(CoordinatorConfig cfg, std::function<int64_t()> clock_ms)
    : cfg_(std::move(cfg)), now_ms_(clock_ms ? std::move(clock_ms) : wall_clock_ms) {
    if (cfg_.persist_dir.empty()) return;
    fs::create_directories(cfg_.persist_dir);
    fs::create_directories(fs::path(cfg_.persist_dir) / "bundles");

    const fs::path log = fs::path(cfg_.persist_dir) / "log.jsonl";
    if (!fs::exists(log)) return;
    std::ifstream in(log);
    std::string line;
    replaying_ = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        replay_event(nlohmann::json::parse(line));
    }
    replaying_ = false;
}

void Coordinator::append_event(const nlohmann::json& event) {
    if (replaying_ || cfg_.persist_dir.empty()) return;
    std::ofstream out(fs::path(cfg_.persist_dir) / "log.jsonl", std::ios::app);
    out << event.dump() << "\n";
}

void Coordinator::replay_event(const nlohmann::json& ev) {
    const std::string kind = ev.at("ev").get<std::string>();
    if (kind == "register_challenger") {
        ChallengerRecord rec;
        rec.id = ev.at("id").get<std::string>();
        rec.public_key = crypto::from_hex(ev.at("pub").get<std::string>());
        rec.claimed_location = point_from_json(ev.at("location"));
        rec.mapping = mapping_from(ev.at("mapping"));
        rec.last_heartbeat_ms = ev.at("ts").get<int64_t>();
        challengers_[rec.id] = std::move(rec);
    } else if (kind == "register_waldo") {
        WaldoRecord rec;
        rec.id = ev.at("id").get<std::string>();
        rec.public_key = crypto::from_hex(ev.at("pub").get<std::string>());
        rec.endpoint = {ev.at("host").get<std::string>(), ev.at("port").get<uint16_t>()};
        waldos_[rec.id] = std::move(rec);
    } else if (kind == "heartbeat") {
        ChallengerRecord& rec = challengers_.at(ev.at("id").get<std::string>());
        rec.last_signed_heartbeat_ms = ev.at("ts").get<int64_t>();
        rec.last_heartbeat_ms = ev.at("at").get<int64_t>();
    } else if (kind == "initiate") {
        Challenge ch;
        ch.id = ev.at("id").get<std::string>();
        ch.waldo_id = ev.at("waldo_id").get<std::string>();
        ch.claimed = point_from_json(ev.at("claimed"));
        ch.selected = ev.at("selected").get<std::vector<std::string>>();
        ch.beta = ev.at("beta").get<double>();
        ch.tau_ms = ev.at("tau_ms").get<int64_t>();
        ch.started_at_ms = ev.at("started_at").get<int64_t>();
        challenge_seq_ = std::max(challenge_seq_, ev.at("seq").get<uint64_t>() + 1);
        challenges_[ch.id] = std::move(ch);
    } else if (kind == "submit") {
        Estimate est;
        est.d_hat_km = ev.at("d_hat_km").get<double>();
        est.disqualified = ev.at("disqualified").get<bool>();
        est.transcript = transcript_from(ev.at("transcript"));
        challenges_.at(ev.at("challenge_id").get<std::string>())
            .estimates[ev.at("challenger_id").get<std::string>()] = std::move(est);
    } else if (kind == "finalized") {
        Challenge& ch = challenges_.at(ev.at("challenge_id").get<std::string>());
        ch.state = ChallengeState::proven;
        ch.bundle_digest = ev.at("digest").get<std::string>();
        const fs::path file = fs::path(cfg_.persist_dir) / "bundles" / (ch.bundle_digest + ".json");
        std::ifstream in(file);
        if (in) bundles_[ch.bundle_digest] = nlohmann::json::parse(in);
    } else if (kind == "failed") {
        challenges_.at(ev.at("challenge_id").get<std::string>()).state = ChallengeState::failed;
    }
}

bool Coordinator::challenger_active(const ChallengerRecord& rec, int64_t now) const {
    return now - rec.last_heartbeat_ms <= cfg_.heartbeat_ttl_ms;
}

void Coordinator::register_challenger(const std::string& id, const crypto::Bytes& public_key,
                                      const GeoPoint& location, const poig::MonotoneMapping& mapping) {
    std::lock_guard lock(mutex_);
    const int64_t now = now_ms_();
    challengers_[id] = ChallengerRecord{id, public_key, location, mapping, now, INT64_MIN};
    append_event({{"ev", "register_challenger"},
                  {"id", id},
                  {"pub", crypto::to_hex(public_key)},
                  {"location", point_json(location)},
                  {"mapping", mapping_json(mapping)},
                  {"ts", now}});
}

void Coordinator::register_waldo(const std::string& id, const crypto::Bytes& public_key,
                                 const netprobe::Endpoint& endpoint) {
    std::lock_guard lock(mutex_);
    waldos_[id] = WaldoRecord{id, public_key, endpoint};
    append_event({{"ev", "register_waldo"},
                  {"id", id},
                  {"pub", crypto::to_hex(public_key)},
                  {"host", endpoint.host},
                  {"port", endpoint.port}});
}

void Coordinator::heartbeat(const std::string& id, int64_t timestamp_ms, const crypto::Bytes& signature) {
    std::lock_guard lock(mutex_);
    const auto it = challengers_.find(id);
    if (it == challengers_.end()) throw UnknownChallenger{};
    if (!crypto::verify(heartbeat_message(id, timestamp_ms), signature, it->second.public_key))
        throw BadSignature{};
    if (timestamp_ms <= it->second.last_signed_heartbeat_ms) throw StaleTimestamp{};
    const int64_t now = now_ms_();
    it->second.last_signed_heartbeat_ms = timestamp_ms;
    it->second.last_heartbeat_ms = now; // liveness runs on coordinator time
    append_event({{"ev", "heartbeat"}, {"id", id}, {"ts", timestamp_ms}, {"at", now}});
}

Challenge Coordinator::initiate_challenge(const std::string& waldo_id, const GeoPoint& claimed, double beta,
                                          int64_t tau_ms) {
    std::lock_guard lock(mutex_);
    if (!waldos_.contains(waldo_id)) throw WaldoUnknown{};
    for (const auto& [_, ch] : challenges_)
        if (ch.waldo_id == waldo_id && ch.state == ChallengeState::collecting) throw ChallengeInProgress{};

    const int64_t now = now_ms_();
    Challenge ch;
    ch.waldo_id = waldo_id;
    ch.claimed = claimed;
    ch.beta = beta;
    ch.tau_ms = tau_ms;
    ch.started_at_ms = now;
    for (const auto& [id, rec] : challengers_)
        if (challenger_active(rec, now) && distance(claimed, rec.claimed_location) <= cfg_.x_limit_km)
            ch.selected.push_back(id);
    if (ch.selected.empty()) throw NoChallengersInRange{};

    const uint64_t seq = challenge_seq_++;
    ch.id = "ch-" + crypto::to_hex(crypto::sha256(waldo_id + "#" + std::to_string(seq))).substr(0, 12);

    challenges_[ch.id] = ch;
    append_event({{"ev", "initiate"},
                  {"id", ch.id},
                  {"waldo_id", waldo_id},
                  {"claimed", point_json(claimed)},
                  {"selected", ch.selected},
                  {"beta", beta},
                  {"tau_ms", tau_ms},
                  {"started_at", now},
                  {"seq", seq}});
    return ch;
}

void Coordinator::submit_estimate(const std::string& challenge_id, const std::string& challenger_id,
                                  const netprobe::PingTranscript& transcript) {
    std::lock_guard lock(mutex_);
    const auto it = challenges_.find(challenge_id);
    if (it == challenges_.end()) throw UnknownChallenge{};
    Challenge& ch = it->second;
    if (ch.state != ChallengeState::collecting) throw ChallengeClosed{};
    if (std::find(ch.selected.begin(), ch.selected.end(), challenger_id) == ch.selected.end())
        throw NotSelected{};
    if (ch.estimates.contains(challenger_id)) throw DuplicateSubmission{};

    const auto& challenger = challengers_.at(challenger_id);
    const auto& waldo = waldos_.at(ch.waldo_id);
    if (transcript.challenger_id != challenger_id || transcript.waldo_id != ch.waldo_id ||
        transcript.challenge_id != packet_challenge_id(ch.id) ||
        !netprobe::verify_transcript(transcript, challenger.public_key, waldo.public_key))
        throw InvalidTranscript{};

    Estimate est;
    est.transcript = transcript;
    const auto mapped = poig::evaluate(challenger.mapping, transcript.min_rtt_ms);
    if (mapped.has_value()) {
        est.d_hat_km = *mapped;
    } else {
        est.d_hat_km = 0.0; // delay above the calibration cutoff: not considered
        est.disqualified = true;
    }
    ch.estimates[challenger_id] = est;
    append_event({{"ev", "submit"},
                  {"challenge_id", challenge_id},
                  {"challenger_id", challenger_id},
                  {"d_hat_km", est.d_hat_km},
                  {"disqualified", est.disqualified},
                  {"transcript", transcript_json(transcript)}});
}

nlohmann::json Coordinator::build_bundle(const Challenge& ch) const {
    nlohmann::json bundle;
    bundle["protocol_version"] = 1;
    bundle["challenge"] = {{"id", ch.id},
                           {"waldo_id", ch.waldo_id},
                           {"claimed", point_json(ch.claimed)},
                           {"selected", ch.selected},
                           {"beta", ch.beta},
                           {"tau_ms", ch.tau_ms},
                           {"grid_size", cfg_.proving.grid_size},
                           {"percentile_exclusion", cfg_.proving.percentile_exclusion},
                           {"angular_exclusion", cfg_.proving.angular_exclusion},
                           {"x_limit_km", cfg_.x_limit_km}};

    nlohmann::json challengers = nlohmann::json::object();
    for (const auto& id : ch.selected) {
        const auto& rec = challengers_.at(id);
        challengers[id] = {{"location", point_json(rec.claimed_location)},
                           {"mapping", mapping_json(rec.mapping)},
                           {"mapping_digest", mapping_digest(rec.mapping)}};
    }
    bundle["challengers"] = std::move(challengers);

    nlohmann::json estimates = nlohmann::json::object();
    for (const auto& [id, est] : ch.estimates)
        estimates[id] = {{"d_hat_km", est.d_hat_km},
                         {"disqualified", est.disqualified},
                         {"transcript", transcript_json(est.transcript)}};
    bundle["estimates"] = std::move(estimates);

    std::vector<trig::ChallengerEstimate> inputs;
    for (const auto& id : ch.selected) {
        const auto it = ch.estimates.find(id);
        const double d_hat = it == ch.estimates.end() ? 0.0 : it->second.d_hat_km;
        inputs.push_back({challengers_.at(id).claimed_location, d_hat});
    }
    trig::ProvingConfig pcfg = cfg_.proving;
    pcfg.beta = ch.beta;
    const auto profile = trig::prove(ch.claimed, inputs, pcfg);

    bundle["profile"] = {{"claimed", point_json(profile.claimed)},
                         {"theta_grid", profile.theta_grid},
                         {"r_star_theta", profile.r_star_theta},
                         {"r_star", profile.r_star},
                         {"excluded_count", profile.excluded_count}};
    bundle["digest"] = bundle_digest_hex(bundle);
    return bundle;
}

nlohmann::json Coordinator::finalize(const std::string& challenge_id) {
    std::lock_guard lock(mutex_);
    const auto it = challenges_.find(challenge_id);
    if (it == challenges_.end()) throw UnknownChallenge{};
    Challenge& ch = it->second;
    if (ch.state != ChallengeState::collecting) throw AlreadyFinalized{};

    const size_t n = ch.selected.size();
    const bool all_in = ch.estimates.size() == n;
    if (!all_in) {
        const bool expired = now_ms_() - ch.started_at_ms >= ch.tau_ms;
        if (!expired) throw ChallengeNotReady{};
        if (int(ch.estimates.size()) < quorum_size(ch.beta, n)) {
            ch.state = ChallengeState::failed;
            append_event({{"ev", "failed"}, {"challenge_id", challenge_id}});
            throw QuorumNotMet{};
        }
    }

    nlohmann::json bundle = build_bundle(ch);
    const std::string digest = bundle.at("digest").get<std::string>();
    ch.state = ChallengeState::proven;
    ch.bundle_digest = digest;
    bundles_[digest] = bundle;

    if (!cfg_.persist_dir.empty() && !replaying_) {
        std::ofstream out(fs::path(cfg_.persist_dir) / "bundles" / (digest + ".json"));
        out << bundle.dump();
    }
    append_event({{"ev", "finalized"}, {"challenge_id", challenge_id}, {"digest", digest}});
    return bundle;
}

std::optional<nlohmann::json> Coordinator::get_bundle(const std::string& challenge_id) const {
    std::lock_guard lock(mutex_);
    const auto it = challenges_.find(challenge_id);
    if (it == challenges_.end() || it->second.bundle_digest.empty()) return std::nullopt;
    const auto bit = bundles_.find(it->second.bundle_digest);
    if (bit == bundles_.end()) return std::nullopt;
    return bit->second;
}

Challenge Coordinator::challenge(const std::string& challenge_id) const {
    std::lock_guard lock(mutex_);
    const auto it = challenges_.find(challenge_id);
    if (it == challenges_.end()) throw UnknownChallenge{};
    return it->second;
}

std::vector<std::string> Coordinator::active_challengers() const {
    std::lock_guard lock(mutex_);
    const int64_t now = now_ms_();
    std::vector<std::string> ids;
    for (const auto& [id, rec] : challengers_)
        if (challenger_active(rec, now)) ids.push_back(id);
    return ids;
}

std::vector<PendingChallenge> Coordinator::pending_for(const std::string& challenger_id) const {
    std::lock_guard lock(mutex_);
    std::vector<PendingChallenge> out;
    for (const auto& [id, ch] : challenges_) {
        if (ch.state != ChallengeState::collecting) continue;
        if (std::find(ch.selected.begin(), ch.selected.end(), challenger_id) == ch.selected.end()) continue;
        if (ch.estimates.contains(challenger_id)) continue;
        const auto& waldo = waldos_.at(ch.waldo_id);
        out.push_back({id, packet_challenge_id(id), ch.waldo_id, waldo.endpoint, waldo.public_key});
    }
    return out;
}

RegistrySnapshot Coordinator::registry_snapshot() const {
    std::lock_guard lock(mutex_);
    RegistrySnapshot snap;
    for (const auto& [id, rec] : challengers_)
        snap.challengers[id] = {rec.public_key, rec.claimed_location, mapping_digest(rec.mapping)};
    for (const auto& [id, rec] : waldos_) snap.waldos[id] = rec.public_key;
    return snap;
}

ChallengerRecord Coordinator::challenger_record(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = challengers_.find(id);
    if (it == challengers_.end()) throw UnknownChallenger{};
    return it->second;
}

WaldoRecord Coordinator::waldo_record(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = waldos_.find(id);
    if (it == waldos_.end()) throw WaldoUnknown{};
    return it->second;
}

bool verify_bundle_text(const std::string& text, const RegistrySnapshot& snapshot) {
    try {
        std::string trimmed = text;
        if (!trimmed.empty() && trimmed.back() == '\n') trimmed.pop_back();
        const auto bundle = nlohmann::json::parse(trimmed);
        if (bundle.dump() != trimmed) return false;
        return verify_bundle(bundle, snapshot);
    } catch (const std::exception&) {
        return false;
    }
}

bool verify_bundle(const nlohmann::json& bundle, const RegistrySnapshot& snapshot) {
    try {
        if (bundle.at("protocol_version").get<int>() != 1) return false;
        if (bundle_digest_hex(bundle) != bundle.at("digest").get<std::string>()) return false;

        const auto& ch = bundle.at("challenge");
        const std::string waldo_id = ch.at("waldo_id").get<std::string>();
        const auto waldo_key = snapshot.waldos.find(waldo_id);
        if (waldo_key == snapshot.waldos.end()) return false;
        const auto expected_packet_id = packet_challenge_id(ch.at("id").get<std::string>());
        const auto selected = ch.at("selected").get<std::vector<std::string>>();
        const GeoPoint claimed = point_from_json(ch.at("claimed"));

        const auto& challengers = bundle.at("challengers");
        const auto& estimates = bundle.at("estimates");
        if (challengers.size() != selected.size()) return false;

        for (const auto& [id, est] : estimates.items()) {
            if (std::find(selected.begin(), selected.end(), id) == selected.end()) return false;

            const auto snap_it = snapshot.challengers.find(id);
            if (snap_it == snapshot.challengers.end()) return false;

            const auto transcript = transcript_from(est.at("transcript"));
            if (transcript.challenger_id != id || transcript.waldo_id != waldo_id) return false;
            if (transcript.challenge_id != expected_packet_id) return false;
            if (!netprobe::verify_transcript(transcript, snap_it->second.public_key, waldo_key->second))
                return false;

            const auto& entry = challengers.at(id);
            const auto mapping = mapping_from(entry.at("mapping"));
            const std::string digest = mapping_digest(mapping);
            if (digest != entry.at("mapping_digest").get<std::string>()) return false;
            if (snap_it->second.mapping_digest && *snap_it->second.mapping_digest != digest) return false;

            const auto mapped = poig::evaluate(mapping, transcript.min_rtt_ms);
            const double d_hat = est.at("d_hat_km").get<double>();
            const bool disqualified = est.at("disqualified").get<bool>();
            if (mapped.has_value()) {
                if (disqualified || d_hat != *mapped) return false;
            } else {
                if (!disqualified || d_hat != 0.0) return false;
            }
        }

        std::vector<trig::ChallengerEstimate> inputs;
        for (const auto& id : selected) {
            const auto& entry = challengers.at(id);
            const GeoPoint location = point_from_json(entry.at("location"));
            const auto snap_it = snapshot.challengers.find(id);
            if (snap_it == snapshot.challengers.end()) return false;
            if (snap_it->second.location &&
                (snap_it->second.location->lat != location.lat || snap_it->second.location->lon != location.lon))
                return false;
            const double d_hat =
                estimates.contains(id) ? estimates.at(id).at("d_hat_km").get<double>() : 0.0;
            inputs.push_back({location, d_hat});
        }

        trig::ProvingConfig pcfg;
        pcfg.beta = ch.at("beta").get<double>();
        pcfg.grid_size = ch.at("grid_size").get<int>();
        pcfg.percentile_exclusion = ch.at("percentile_exclusion").get<double>();
        pcfg.angular_exclusion = ch.at("angular_exclusion").get<double>();
        const auto profile = trig::prove(claimed, inputs, pcfg);

        const auto& stored = bundle.at("profile");
        if (point_from_json(stored.at("claimed")).lat != profile.claimed.lat) return false;
        if (point_from_json(stored.at("claimed")).lon != profile.claimed.lon) return false;
        if (stored.at("theta_grid").get<std::vector<double>>() != profile.theta_grid) return false;
        if (stored.at("r_star_theta").get<std::vector<double>>() != profile.r_star_theta) return false;
        if (stored.at("r_star").get<double>() != profile.r_star) return false;
        if (stored.at("excluded_count").get<int>() != profile.excluded_count) return false;
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace geoproof::coordinator
