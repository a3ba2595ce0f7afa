#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace ctrace::crypto {

inline constexpr std::string_view kSignatureScheme = "ed25519";

/// Lowercase hex SHA-256 of `data` (64 characters).
std::string sha256_hex(std::string_view data);

struct PublicKey {
    std::string bytes;  // 32 raw bytes

    bool operator==(const PublicKey&) const = default;
};

struct SecretKey {
    std::string bytes;  // 64 raw bytes (seed || public key)

    PublicKey public_key() const;
    /* Return a detached signature over `message`. Ed25519 signing is
       deterministic, so equal inputs produce equal signatures. */
    std::string sign_detached(std::string_view message) const;
};

struct KeyPair {
    SecretKey secret;
    PublicKey pub;
};

/// Fresh keypair from the OS random source.
KeyPair generate_keypair();

/// Keypair derived from a 32-byte seed; used by the simulator for reproducibility.
KeyPair keypair_from_seed(const std::array<unsigned char, 32>& seed);

bool verify_detached(const PublicKey& key, std::string_view message, std::string_view signature);

}  // namespace ctrace::crypto
