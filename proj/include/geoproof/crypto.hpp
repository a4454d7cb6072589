#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace geoproof::crypto {

using Bytes = std::vector<uint8_t>;

/// Detached-signature keypair. The scheme is Ed25519; callers only rely on
/// sign/verify round-tripping and forgery resistance.
struct KeyPair {
    Bytes public_key; // 32 bytes
    Bytes secret_key; // 64 bytes

    static KeyPair generate();
    /// Deterministic keypair from a 32-byte seed; used by tests and keygen.
    static KeyPair from_seed(const Bytes& seed32);
};

Bytes sign(const Bytes& message, const Bytes& secret_key);
bool verify(const Bytes& message, const Bytes& signature, const Bytes& public_key);

std::array<uint8_t, 32> sha256(const Bytes& data);
std::array<uint8_t, 32> sha256(const std::string& data);

/// First 8 bytes of sha256(public_key); the wire-format key fingerprint.
std::array<uint8_t, 8> key_fingerprint(const Bytes& public_key);

std::string to_hex(const uint8_t* data, size_t len);
std::string to_hex(const Bytes& data);
template <size_t N>
std::string to_hex(const std::array<uint8_t, N>& data) {
    return to_hex(data.data(), N);
}

/// Strict lowercase/uppercase hex; throws std::invalid_argument on bad input.
Bytes from_hex(const std::string& hex);

Bytes random_bytes(size_t n);

}  // namespace geoproof::crypto
