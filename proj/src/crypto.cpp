#include "ctrace/crypto.hpp"

#include "ctrace/common.hpp"

#include <sodium.h>

namespace ctrace::crypto {

namespace {

void ensure_sodium()
{
    static const bool ok = sodium_init() >= 0;
    if (!ok)
        throw Error(ErrorCode::CryptoError, "libsodium initialisation failed");
}

const unsigned char* bytes_of(std::string_view s)
{
    return reinterpret_cast<const unsigned char*>(s.data());
}

}  // namespace

std::string sha256_hex(std::string_view data)
{
    ensure_sodium();
    unsigned char digest[crypto_hash_sha256_BYTES];
    crypto_hash_sha256(digest, bytes_of(data), data.size());
    return to_hex(digest, sizeof digest);
}

PublicKey SecretKey::public_key() const
{
    if (bytes.size() != crypto_sign_SECRETKEYBYTES)
        throw Error(ErrorCode::CryptoError, "secret key has wrong length");
    unsigned char pk[crypto_sign_PUBLICKEYBYTES];
    crypto_sign_ed25519_sk_to_pk(pk, bytes_of(bytes));
    return {std::string(reinterpret_cast<char*>(pk), sizeof pk)};
}

std::string SecretKey::sign_detached(std::string_view message) const
{
    ensure_sodium();
    if (bytes.size() != crypto_sign_SECRETKEYBYTES)
        throw Error(ErrorCode::CryptoError, "secret key has wrong length");
    std::string sig(crypto_sign_BYTES, '\0');
    crypto_sign_detached(reinterpret_cast<unsigned char*>(sig.data()), nullptr, bytes_of(message),
                         message.size(), bytes_of(bytes));
    return sig;
}

KeyPair generate_keypair()
{
    ensure_sodium();
    std::string pk(crypto_sign_PUBLICKEYBYTES, '\0');
    std::string sk(crypto_sign_SECRETKEYBYTES, '\0');
    crypto_sign_keypair(reinterpret_cast<unsigned char*>(pk.data()),
                        reinterpret_cast<unsigned char*>(sk.data()));
    return {{std::move(sk)}, {std::move(pk)}};
}

KeyPair keypair_from_seed(const std::array<unsigned char, 32>& seed)
{
    ensure_sodium();
    std::string pk(crypto_sign_PUBLICKEYBYTES, '\0');
    std::string sk(crypto_sign_SECRETKEYBYTES, '\0');
    crypto_sign_seed_keypair(reinterpret_cast<unsigned char*>(pk.data()),
                             reinterpret_cast<unsigned char*>(sk.data()), seed.data());
    return {{std::move(sk)}, {std::move(pk)}};
}

bool verify_detached(const PublicKey& key, std::string_view message, std::string_view signature)
{
    ensure_sodium();
    if (key.bytes.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES)
        return false;
    return crypto_sign_verify_detached(bytes_of(signature), bytes_of(message), message.size(),
                                       bytes_of(key.bytes)) == 0;
}

}  // namespace ctrace::crypto
