#include "geoproof/netprobe.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <limits>

#include <json.hpp>

namespace geoproof::netprobe {

namespace {

constexpr size_t kHeaderLen = 1 + 16 + 16 + 2 + 8 + 2;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct SockAddr {
    sockaddr_storage storage{};
    socklen_t len = 0;
};

SockAddr resolve(const Endpoint& ep) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* result = nullptr;
    const std::string port = std::to_string(ep.port);
    if (getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &result) != 0 || result == nullptr)
        throw std::runtime_error("cannot resolve " + ep.host);
    SockAddr out;
    std::memcpy(&out.storage, result->ai_addr, result->ai_addrlen);
    out.len = static_cast<socklen_t>(result->ai_addrlen);
    freeaddrinfo(result);
    return out;
}

}  // namespace

crypto::Bytes signed_prefix(const PingPacket& p) {
    crypto::Bytes out;
    out.reserve(kHeaderLen - 2);
    out.push_back(static_cast<uint8_t>(p.kind));
    out.insert(out.end(), p.challenge_id.begin(), p.challenge_id.end());
    out.insert(out.end(), p.nonce.begin(), p.nonce.end());
    out.push_back(static_cast<uint8_t>(p.seq >> 8));
    out.push_back(static_cast<uint8_t>(p.seq & 0xff));
    out.insert(out.end(), p.key_id.begin(), p.key_id.end());
    return out;
}

crypto::Bytes encode(const PingPacket& p) {
    crypto::Bytes out = signed_prefix(p);
    const uint16_t sig_len = static_cast<uint16_t>(p.signature.size());
    out.push_back(static_cast<uint8_t>(sig_len >> 8));
    out.push_back(static_cast<uint8_t>(sig_len & 0xff));
    out.insert(out.end(), p.signature.begin(), p.signature.end());
    return out;
}

std::optional<PingPacket> decode(std::span<const uint8_t> wire) {
    if (wire.size() < kHeaderLen) return std::nullopt;
    PingPacket p;
    size_t at = 0;
    const uint8_t kind = wire[at++];
    if (kind != static_cast<uint8_t>(PacketKind::challenge) && kind != static_cast<uint8_t>(PacketKind::response))
        return std::nullopt;
    p.kind = static_cast<PacketKind>(kind);
    std::copy_n(wire.begin() + at, 16, p.challenge_id.begin());
    at += 16;
    std::copy_n(wire.begin() + at, 16, p.nonce.begin());
    at += 16;
    p.seq = static_cast<uint16_t>(wire[at] << 8 | wire[at + 1]);
    at += 2;
    std::copy_n(wire.begin() + at, 8, p.key_id.begin());
    at += 8;
    const uint16_t sig_len = static_cast<uint16_t>(wire[at] << 8 | wire[at + 1]);
    at += 2;
    if (wire.size() != at + sig_len) return std::nullopt;
    p.signature.assign(wire.begin() + at, wire.end());
    return p;
}

PingPacket make_signed(PacketKind kind, const std::array<uint8_t, 16>& challenge_id,
                       const std::array<uint8_t, 16>& nonce, uint16_t seq, const crypto::KeyPair& keys) {
    PingPacket p;
    p.kind = kind;
    p.challenge_id = challenge_id;
    p.nonce = nonce;
    p.seq = seq;
    p.key_id = crypto::key_fingerprint(keys.public_key);
    p.signature = crypto::sign(signed_prefix(p), keys.secret_key);
    return p;
}

bool packet_signature_valid(const PingPacket& p, const crypto::Bytes& public_key) {
    return crypto::verify(signed_prefix(p), p.signature, public_key);
}

PingTranscript measure(const Endpoint& target, const MeasureOptions& opts, const crypto::KeyPair& keys,
                       const crypto::Bytes& responder_pub) {
    if (opts.q < 1) throw std::invalid_argument("q must be >= 1");
    if (opts.timeout_ms <= 0) throw std::invalid_argument("timeout must be positive");

    const SockAddr addr = resolve(target);
    const int fd = socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw std::runtime_error("socket() failed");

    PingTranscript transcript;
    transcript.challenger_id = opts.challenger_id;
    transcript.waldo_id = opts.waldo_id;
    transcript.challenge_id = opts.challenge_id;
    transcript.q = opts.q;

    for (uint16_t seq = 0; seq < opts.q; ++seq) {
        std::array<uint8_t, 16> nonce{};
        const auto random = crypto::random_bytes(16);
        std::copy_n(random.begin(), 16, nonce.begin());

        const PingPacket challenge = make_signed(PacketKind::challenge, opts.challenge_id, nonce, seq, keys);
        PingExchange exchange;
        exchange.sent = encode(challenge);

        const auto sent_at = Clock::now();
        (void)sendto(fd, exchange.sent.data(), exchange.sent.size(), 0,
                     reinterpret_cast<const sockaddr*>(&addr.storage), addr.len);

        while (exchange.rtt_ms < 0.0) {
            const double waited = ms_since(sent_at);
            const int remaining = static_cast<int>(opts.timeout_ms - waited);
            if (remaining <= 0) break;

            pollfd pfd{fd, POLLIN, 0};
            if (poll(&pfd, 1, remaining) <= 0) break;

            uint8_t buf[2048];
            const ssize_t got = recv(fd, buf, sizeof buf, 0);
            if (got <= 0) continue;
            const double rtt = ms_since(sent_at);

            const auto reply = decode(std::span<const uint8_t>(buf, size_t(got)));
            if (!reply || reply->kind != PacketKind::response) continue;
            if (reply->challenge_id != opts.challenge_id || reply->nonce != nonce || reply->seq != seq) continue;
            if (!packet_signature_valid(*reply, responder_pub)) {
                ++transcript.invalid_signature_count;
                continue;
            }
            exchange.received = encode(*reply);
            exchange.rtt_ms = rtt;
        }
        transcript.packets.push_back(std::move(exchange));

        if (seq + 1 < opts.q && opts.spacing_ms > 0)
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(opts.spacing_ms));
    }
    close(fd);

    double min_rtt = std::numeric_limits<double>::infinity();
    for (const auto& e : transcript.packets)
        if (e.rtt_ms >= 0.0) min_rtt = std::min(min_rtt, e.rtt_ms);
    if (!std::isfinite(min_rtt)) throw NoResponses{};
    transcript.min_rtt_ms = min_rtt;
    return transcript;
}

bool verify_transcript(const PingTranscript& t, const crypto::Bytes& challenger_pub,
                       const crypto::Bytes& waldo_pub) {
    if (t.q < 1 || t.packets.size() != size_t(t.q)) return false;

    const auto challenger_fp = crypto::key_fingerprint(challenger_pub);
    const auto waldo_fp = crypto::key_fingerprint(waldo_pub);

    std::unordered_set<std::string> nonces;
    double min_rtt = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < t.packets.size(); ++i) {
        const auto& e = t.packets[i];
        const auto sent = decode(std::span<const uint8_t>(e.sent.data(), e.sent.size()));
        if (!sent || sent->kind != PacketKind::challenge) return false;
        if (sent->challenge_id != t.challenge_id || sent->seq != i) return false;
        if (sent->key_id != challenger_fp || !packet_signature_valid(*sent, challenger_pub)) return false;
        if (!nonces.emplace(std::string(sent->nonce.begin(), sent->nonce.end())).second) return false;

        if (e.received.empty()) {
            if (e.rtt_ms >= 0.0) return false;
            continue;
        }
        const auto reply = decode(std::span<const uint8_t>(e.received.data(), e.received.size()));
        if (!reply || reply->kind != PacketKind::response) return false;
        if (reply->challenge_id != sent->challenge_id || reply->nonce != sent->nonce || reply->seq != sent->seq)
            return false;
        if (reply->key_id != waldo_fp || !packet_signature_valid(*reply, waldo_pub)) return false;
        if (e.rtt_ms < 0.0) return false;
        min_rtt = std::min(min_rtt, e.rtt_ms);
    }

    if (!std::isfinite(min_rtt)) return false;
    return t.min_rtt_ms == min_rtt;
}

std::string transcript_to_json(const PingTranscript& t) {
    nlohmann::json j;
    j["challenger_id"] = t.challenger_id;
    j["waldo_id"] = t.waldo_id;
    j["challenge_id"] = crypto::to_hex(t.challenge_id);
    j["q"] = t.q;
    j["min_rtt_ms"] = t.min_rtt_ms;
    j["invalid_signature_count"] = t.invalid_signature_count;
    j["packets"] = nlohmann::json::array();
    for (const auto& e : t.packets)
        j["packets"].push_back({{"sent", crypto::to_hex(e.sent)},
                                {"received", crypto::to_hex(e.received)},
                                {"rtt_ms", e.rtt_ms}});
    return j.dump();
}

PingTranscript transcript_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    PingTranscript t;
    t.challenger_id = j.at("challenger_id").get<std::string>();
    t.waldo_id = j.at("waldo_id").get<std::string>();
    const auto cid = crypto::from_hex(j.at("challenge_id").get<std::string>());
    if (cid.size() != 16) throw std::invalid_argument("challenge_id must be 16 bytes");
    std::copy(cid.begin(), cid.end(), t.challenge_id.begin());
    t.q = j.at("q").get<int>();
    t.min_rtt_ms = j.at("min_rtt_ms").get<double>();
    t.invalid_signature_count = j.at("invalid_signature_count").get<int>();
    for (const auto& pj : j.at("packets")) {
        PingExchange e;
        e.sent = crypto::from_hex(pj.at("sent").get<std::string>());
        e.received = crypto::from_hex(pj.at("received").get<std::string>());
        e.rtt_ms = pj.at("rtt_ms").get<double>();
        t.packets.push_back(std::move(e));
    }
    return t;
}

PingResponder::PingResponder(uint16_t port, crypto::KeyPair keys) : keys_(std::move(keys)) {
    fd_ = socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw std::runtime_error("socket() failed");

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(port);
    if (bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        close(fd_);
        throw std::runtime_error("bind() failed");
    }
    socklen_t len = sizeof addr;
    getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

PingResponder::~PingResponder() {
    stop();
    if (fd_ >= 0) close(fd_);
}

void PingResponder::allow(const crypto::Bytes& challenger_pub) {
    std::lock_guard lock(mutex_);
    allowed_[crypto::to_hex(crypto::key_fingerprint(challenger_pub))] = challenger_pub;
}

void PingResponder::start() {
    if (running_.exchange(true)) return;
    thread_ = std::thread([this] { serve(); });
}

void PingResponder::stop() {
    if (!running_.exchange(false)) return;
    if (thread_.joinable()) thread_.join();
}

bool PingResponder::nonce_seen(const std::array<uint8_t, 16>& nonce) {
    std::lock_guard lock(mutex_);
    std::string key(nonce.begin(), nonce.end());
    if (!nonce_cache_.emplace(key).second) return true;
    nonce_order_.push_back(std::move(key));
    if (nonce_order_.size() > kNonceCacheSize) {
        nonce_cache_.erase(nonce_order_.front());
        nonce_order_.pop_front();
    }
    return false;
}

void PingResponder::serve() {
    while (running_) {
        pollfd pfd{fd_, POLLIN, 0};
        if (poll(&pfd, 1, 50) <= 0) continue;

        uint8_t buf[2048];
        sockaddr_storage peer{};
        socklen_t peer_len = sizeof peer;
        const ssize_t got = recvfrom(fd_, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&peer), &peer_len);
        if (got <= 0) continue;

        const auto packet = decode(std::span<const uint8_t>(buf, size_t(got)));
        if (!packet || packet->kind != PacketKind::challenge) continue;

        crypto::Bytes challenger_pub;
        {
            std::lock_guard lock(mutex_);
            const auto it = allowed_.find(crypto::to_hex(packet->key_id));
            if (it == allowed_.end()) continue;
            challenger_pub = it->second;
        }
        if (!packet_signature_valid(*packet, challenger_pub)) continue;
        if (nonce_seen(packet->nonce)) continue;

        const double delay = injected_delay_ms_.load();
        if (delay > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));

        const PingPacket reply =
            make_signed(PacketKind::response, packet->challenge_id, packet->nonce, packet->seq, keys_);
        const crypto::Bytes wire = encode(reply);
        (void)sendto(fd_, wire.data(), wire.size(), 0, reinterpret_cast<sockaddr*>(&peer), peer_len);
    }
}

}  // namespace geoproof::netprobe
