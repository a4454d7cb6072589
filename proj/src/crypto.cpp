#include "geoproof/crypto.hpp"

#include <sodium.h>

#include <mutex>
#include <stdexcept>

namespace geoproof::crypto {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
    });
}

}  // namespace

KeyPair KeyPair::generate() {
    ensure_sodium();
    KeyPair kp;
    kp.public_key.resize(crypto_sign_PUBLICKEYBYTES);
    kp.secret_key.resize(crypto_sign_SECRETKEYBYTES);
    crypto_sign_keypair(kp.public_key.data(), kp.secret_key.data());
    return kp;
}

KeyPair KeyPair::from_seed(const Bytes& seed32) {
    ensure_sodium();
    if (seed32.size() != crypto_sign_SEEDBYTES) throw std::invalid_argument("seed must be 32 bytes");
    KeyPair kp;
    kp.public_key.resize(crypto_sign_PUBLICKEYBYTES);
    kp.secret_key.resize(crypto_sign_SECRETKEYBYTES);
    crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed32.data());
    return kp;
}

Bytes sign(const Bytes& message, const Bytes& secret_key) {
    ensure_sodium();
    if (secret_key.size() != crypto_sign_SECRETKEYBYTES) throw std::invalid_argument("bad secret key size");
    Bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_key.data());
    return sig;
}

bool verify(const Bytes& message, const Bytes& signature, const Bytes& public_key) {
    ensure_sodium();
    if (signature.size() != crypto_sign_BYTES || public_key.size() != crypto_sign_PUBLICKEYBYTES) return false;
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), public_key.data()) == 0;
}

std::array<uint8_t, 32> sha256(const Bytes& data) {
    ensure_sodium();
    std::array<uint8_t, 32> out{};
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return out;
}

std::array<uint8_t, 32> sha256(const std::string& data) {
    ensure_sodium();
    std::array<uint8_t, 32> out{};
    crypto_hash_sha256(out.data(), reinterpret_cast<const uint8_t*>(data.data()), data.size());
    return out;
}

std::array<uint8_t, 8> key_fingerprint(const Bytes& public_key) {
    const auto digest = sha256(public_key);
    std::array<uint8_t, 8> fp{};
    std::copy(digest.begin(), digest.begin() + 8, fp.begin());
    return fp;
}

std::string to_hex(const uint8_t* data, size_t len) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (size_t i = 0; i < len; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xf]);
    }
    return out;
}

std::string to_hex(const Bytes& data) { return to_hex(data.data(), data.size()); }

Bytes from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw std::invalid_argument("invalid hex digit");
    };
    Bytes out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    return out;
}

Bytes random_bytes(size_t n) {
    ensure_sodium();
    Bytes out(n);
    randombytes_buf(out.data(), out.size());
    return out;
}

}  // namespace geoproof::crypto
