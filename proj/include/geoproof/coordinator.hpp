#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoproof/crypto.hpp"
#include "geoproof/geo.hpp"
#include "geoproof/netprobe.hpp"
#include "geoproof/poig.hpp"
#include "geoproof/trig.hpp"

namespace geoproof::coordinator {

/// Error carrying a stable machine-readable code (used by the HTTP layer).
struct CoordinatorError : std::runtime_error {
    CoordinatorError(std::string code_, const std::string& what) : std::runtime_error(what), code(std::move(code_)) {}
    std::string code;
};

#define GEOPROOF_COORD_ERROR(NAME, DEFAULT_MSG)                                             \
    struct NAME : CoordinatorError {                                                        \
        explicit NAME(const std::string& what = DEFAULT_MSG) : CoordinatorError(#NAME, what) {} \
    }

GEOPROOF_COORD_ERROR(UnknownChallenger, "challenger is not registered");
GEOPROOF_COORD_ERROR(UnknownChallenge, "no such challenge");
GEOPROOF_COORD_ERROR(WaldoUnknown, "prover is not registered");
GEOPROOF_COORD_ERROR(BadSignature, "signature verification failed");
GEOPROOF_COORD_ERROR(StaleTimestamp, "heartbeat timestamp not newer than the previous one");
GEOPROOF_COORD_ERROR(NoChallengersInRange, "no active challenger within the selection limit");
GEOPROOF_COORD_ERROR(ChallengeInProgress, "a challenge for this prover is already collecting");
GEOPROOF_COORD_ERROR(InvalidTranscript, "transcript failed verification");
GEOPROOF_COORD_ERROR(NotSelected, "challenger was not selected for this challenge");
GEOPROOF_COORD_ERROR(DuplicateSubmission, "estimate already submitted");
GEOPROOF_COORD_ERROR(ChallengeClosed, "challenge is no longer collecting");
GEOPROOF_COORD_ERROR(ChallengeNotReady, "quorum conditions not met and the timer has not expired");
GEOPROOF_COORD_ERROR(QuorumNotMet, "timer expired below quorum");
GEOPROOF_COORD_ERROR(AlreadyFinalized, "challenge already finalized");

#undef GEOPROOF_COORD_ERROR

struct CoordinatorConfig {
    double x_limit_km = 2000.0;
    int64_t heartbeat_ttl_ms = 60'000;
    trig::ProvingConfig proving{};
    /// Directory for the append-only event log and bundle files; empty keeps
    /// everything in memory.
    std::string persist_dir;
};

struct ChallengerRecord {
    std::string id;
    crypto::Bytes public_key;
    GeoPoint claimed_location{};
    poig::MonotoneMapping mapping;
    /// Liveness, in coordinator time (receipt of registration or heartbeat).
    int64_t last_heartbeat_ms = 0;
    /// Monotonic signed heartbeat timestamp; replays must exceed it.
    int64_t last_signed_heartbeat_ms = INT64_MIN;
};

struct WaldoRecord {
    std::string id;
    crypto::Bytes public_key;
    netprobe::Endpoint endpoint;
};

enum class ChallengeState { collecting, proven, failed };

struct Estimate {
    double d_hat_km = 0.0;
    bool disqualified = false;
    netprobe::PingTranscript transcript;
};

struct Challenge {
    std::string id;
    std::string waldo_id;
    GeoPoint claimed{};
    std::vector<std::string> selected;
    double beta = 0.0;
    int64_t tau_ms = 0;
    int64_t started_at_ms = 0;
    ChallengeState state = ChallengeState::collecting;
    std::map<std::string, Estimate> estimates;
    std::string bundle_digest; // set once proven
};

/// What a selected challenger needs in order to measure and report.
struct PendingChallenge {
    std::string challenge_id;
    std::array<uint8_t, 16> packet_challenge_id{};
    std::string waldo_id;
    netprobe::Endpoint waldo_endpoint;
    crypto::Bytes waldo_public_key;
};

struct RegistrySnapshot {
    struct Entry {
        crypto::Bytes public_key;
        std::optional<GeoPoint> location;
        std::optional<std::string> mapping_digest;
    };
    std::map<std::string, Entry> challengers;
    std::map<std::string, crypto::Bytes> waldos;
};

/// 16-byte packet-level challenge id derived from the challenge's name.
std::array<uint8_t, 16> packet_challenge_id(const std::string& challenge_id);

/// Message covered by a heartbeat signature.
crypto::Bytes heartbeat_message(const std::string& id, int64_t timestamp_ms);

std::string mapping_digest(const poig::MonotoneMapping& mapping);

/// Challenge coordination: registry with heartbeat liveness, challenge
/// lifecycle, proof-bundle assembly and append-only persistence. Trusted for
/// orchestration only; every bundle it emits is independently verifiable.
class Coordinator {
public:
    /// Opening a coordinator on a persist_dir that already holds an event log
    /// replays it, so a restart recovers the pre-crash registry, challenge
    /// states and bundles.
    explicit Coordinator(CoordinatorConfig cfg, std::function<int64_t()> clock_ms = nullptr);

    Coordinator(const Coordinator&) = delete;
    Coordinator& operator=(const Coordinator&) = delete;

    void register_challenger(const std::string& id, const crypto::Bytes& public_key, const GeoPoint& location,
                             const poig::MonotoneMapping& mapping);
    void register_waldo(const std::string& id, const crypto::Bytes& public_key, const netprobe::Endpoint& endpoint);

    void heartbeat(const std::string& id, int64_t timestamp_ms, const crypto::Bytes& signature);

    Challenge initiate_challenge(const std::string& waldo_id, const GeoPoint& claimed, double beta, int64_t tau_ms);
    void submit_estimate(const std::string& challenge_id, const std::string& challenger_id,
                         const netprobe::PingTranscript& transcript);
    nlohmann::json finalize(const std::string& challenge_id);

    std::optional<nlohmann::json> get_bundle(const std::string& challenge_id) const;
    Challenge challenge(const std::string& challenge_id) const;
    std::vector<std::string> active_challengers() const;
    std::vector<PendingChallenge> pending_for(const std::string& challenger_id) const;
    RegistrySnapshot registry_snapshot() const;
    ChallengerRecord challenger_record(const std::string& id) const;
    WaldoRecord waldo_record(const std::string& id) const;

private:
    bool challenger_active(const ChallengerRecord& rec, int64_t now) const;
    void append_event(const nlohmann::json& event);
    void replay_event(const nlohmann::json& event);
    nlohmann::json build_bundle(const Challenge& ch) const;

    CoordinatorConfig cfg_;
    std::function<int64_t()> now_ms_;
    mutable std::mutex mutex_;
    std::map<std::string, ChallengerRecord> challengers_;
    std::map<std::string, WaldoRecord> waldos_;
    std::map<std::string, Challenge> challenges_;
    std::map<std::string, nlohmann::json> bundles_; // digest -> bundle
    uint64_t challenge_seq_ = 0;
    bool replaying_ = false;
};

/// Re-derives everything a bundle claims: self-digest, transcript signatures
/// under the snapshot's keys, mapping digests, per-challenger d_hat values,
/// and the uncertainty profile reproduced bit-for-bit.
bool verify_bundle(const nlohmann::json& bundle, const RegistrySnapshot& snapshot);

/// Byte-level variant for bundle files: the text must be the canonical
/// serialization of its own parse (one trailing newline allowed), so changing
/// any byte of a stored bundle invalidates it even when the parsed values
/// survive.
bool verify_bundle_text(const std::string& text, const RegistrySnapshot& snapshot);

}  // namespace geoproof::coordinator
