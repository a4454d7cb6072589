#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "geoproof/crypto.hpp"

namespace geoproof::netprobe {

struct NoResponses : std::runtime_error {
    NoResponses() : std::runtime_error("no signature-valid response matched any probe") {}
};

enum class PacketKind : uint8_t { challenge = 1, response = 2 };

/// Wire layout, network byte order:
///   kind(1) | challenge_id(16) | nonce(16) | seq(2) | key_id(8) | sig_len(2) | sig
/// The signature covers every byte before sig_len.
struct PingPacket {
    PacketKind kind = PacketKind::challenge;
    std::array<uint8_t, 16> challenge_id{};
    std::array<uint8_t, 16> nonce{};
    uint16_t seq = 0;
    std::array<uint8_t, 8> key_id{};
    crypto::Bytes signature;
};

crypto::Bytes encode(const PingPacket& packet);
std::optional<PingPacket> decode(std::span<const uint8_t> wire);

/// The bytes the signature is computed over (everything before sig_len).
crypto::Bytes signed_prefix(const PingPacket& packet);

PingPacket make_signed(PacketKind kind, const std::array<uint8_t, 16>& challenge_id,
                       const std::array<uint8_t, 16>& nonce, uint16_t seq, const crypto::KeyPair& keys);

bool packet_signature_valid(const PingPacket& packet, const crypto::Bytes& public_key);

struct Endpoint {
    std::string host = "127.0.0.1";
    uint16_t port = 0;
};

struct PingExchange {
    crypto::Bytes sent;     // challenge wire bytes
    crypto::Bytes received; // response wire bytes; empty when the probe timed out
    double rtt_ms = -1.0;   // negative when unmatched
};

struct PingTranscript {
    std::string challenger_id;
    std::string waldo_id;
    std::array<uint8_t, 16> challenge_id{};
    int q = 0;
    std::vector<PingExchange> packets;
    double min_rtt_ms = -1.0;
    int invalid_signature_count = 0;
};

struct MeasureOptions {
    int q = 20;
    double timeout_ms = 1000.0;
    double spacing_ms = 50.0; // gap between probes so they never self-queue
    std::string challenger_id;
    std::string waldo_id;
    std::array<uint8_t, 16> challenge_id{};
};

/// Sends q signed challenges to the target and records the matched,
/// signature-valid responses. Throws NoResponses when nothing matched;
/// responses with bad signatures are dropped and counted.
PingTranscript measure(const Endpoint& target, const MeasureOptions& opts, const crypto::KeyPair& keys,
                       const crypto::Bytes& responder_pub);

/// True iff every listed exchange is internally consistent: the challenge is
/// signed by the challenger, the response by the responder, nonce/seq echo,
/// nonces are unique, and min_rtt equals the minimum of the matched rtts.
bool verify_transcript(const PingTranscript& transcript, const crypto::Bytes& challenger_pub,
                       const crypto::Bytes& waldo_pub);

std::string transcript_to_json(const PingTranscript& transcript);
PingTranscript transcript_from_json(const std::string& text);

/// Serving loop on a UDP port: answers every valid signed challenge from an
/// allowed key with a signed response echoing nonce and seq. Replayed nonces
/// and malformed or badly signed packets are ignored silently.
class PingResponder {
public:
    /// port 0 binds an ephemeral port (see port()).
    PingResponder(uint16_t port, crypto::KeyPair keys);
    ~PingResponder();

    PingResponder(const PingResponder&) = delete;
    PingResponder& operator=(const PingResponder&) = delete;

    void allow(const crypto::Bytes& challenger_pub);
    /// Byzantine-model hook: delay every response by this many ms.
    void set_injected_delay_ms(double ms) { injected_delay_ms_ = ms; }

    void start();
    void stop();
    uint16_t port() const { return port_; }

private:
    void serve();
    bool nonce_seen(const std::array<uint8_t, 16>& nonce);

    int fd_ = -1;
    uint16_t port_ = 0;
    crypto::KeyPair keys_;
    std::atomic<double> injected_delay_ms_{0.0};
    std::atomic<bool> running_{false};
    std::thread thread_;

    std::mutex mutex_;
    std::unordered_map<std::string, crypto::Bytes> allowed_; // key_id hex -> pubkey
    std::unordered_set<std::string> nonce_cache_;
    std::deque<std::string> nonce_order_;
    static constexpr size_t kNonceCacheSize = 4096;
};

}  // namespace geoproof::netprobe
