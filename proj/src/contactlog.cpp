#include "ctrace/contactlog.hpp"

#include <sodium.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace ctrace {

ContactLog::ContactLog(int retention_days) : retention_days_(retention_days)
{
    if (retention_days < kMinRetentionDays || retention_days > kMaxRetentionDays)
        throw Error(ErrorCode::InvalidWindow, "retention must be 14-28 days");
}

void append_entry(ContactLog& log, LogEntry entry)
{
    validate(entry.own_record);
    validate(entry.peer_record);
    if (entry.own_record.pid == entry.peer_record.pid)
        throw Error(ErrorCode::InvalidEntry, "own and peer PID are identical");
    if (!log.entries_.empty() && entry.recorded_at < log.entries_.back().recorded_at)
        throw Error(ErrorCode::OutOfOrderEntry, "recorded_at " + std::to_string(entry.recorded_at) +
                                                    " precedes " +
                                                    std::to_string(log.entries_.back().recorded_at));
    log.entries_.push_back(std::move(entry));
}

void prune(ContactLog& log, Timestamp now)
{
    const Timestamp cutoff = now - static_cast<Timestamp>(log.retention_days_) * kSecondsPerDay;
    std::erase_if(log.entries_, [cutoff](const LogEntry& e) { return e.recorded_at < cutoff; });
}

std::optional<LogEntry> find_matching_contact(const ContactLog& log, const Pid& claimed_peer_pid,
                                              Timestamp echoed_time, std::string_view echoed_location,
                                              Seconds time_tolerance_s)
{
    for (const auto& e : log.entries()) {
        if (e.peer_record.pid == claimed_peer_pid && e.own_record.local_location == echoed_location &&
            std::llabs(e.own_record.local_time - echoed_time) <= time_tolerance_s)
            return e;
    }
    return std::nullopt;
}

ExposureSummary exposure_statistics(const ContactLog& log)
{
    ExposureSummary s;
    std::set<Pid> peers;
    for (const auto& e : log.entries()) {
        ++s.entries;
        peers.insert(e.peer_record.pid);
        ++s.by_location[e.own_record.local_location];
    }
    s.distinct_peers = peers.size();
    return s;
}

namespace {

void append_record(std::string& out, const char* tag, const InformationRecord& r)
{
    out += '|';
    out += tag;
    out += '|' + r.pid.str() + '|' + r.pad.str() + '|' + std::to_string(r.local_time) + '|' +
           percent_encode(r.local_location);
}

InformationRecord record_from(const std::vector<std::string>& f, std::size_t at)
{
    return {Pid(f[at]), Pad(f[at + 1]), parse_int(f[at + 2]), percent_decode(f[at + 3])};
}

}  // namespace

std::string format_log_entry(const LogEntry& e)
{
    std::string out = "entry|" + std::to_string(e.recorded_at) + '|' + std::to_string(e.dwell_s) + '|' +
                      std::to_string(e.policy_version);
    append_record(out, "OWN", e.own_record);
    append_record(out, "PEER", e.peer_record);
    return out;
}

LogEntry parse_log_entry(std::string_view line)
{
    auto f = split(line, '|');
    if (f.size() != 14 || f[0] != "entry" || f[4] != "OWN" || f[9] != "PEER")
        throw_parse_error("bad log entry: '" + std::string(line) + "'");
    LogEntry e{record_from(f, 5), record_from(f, 10), parse_int(f[1]), parse_int(f[2]),
               static_cast<int>(parse_int(f[3]))};
    if (format_log_entry(e) != line)
        throw_parse_error("non-canonical log entry: '" + std::string(line) + "'");
    return e;
}

std::string serialize_log(const ContactLog& log)
{
    std::string out;
    for (const auto& e : log.entries())
        out += format_log_entry(e) + '\n';
    return out;
}

ContactLog parse_log(std::string_view text, int retention_days)
{
    ContactLog log(retention_days);
    for (const auto& line : split(text, '\n')) {
        if (line.empty())
            continue;
        append_entry(log, parse_log_entry(line));
    }
    return log;
}

namespace {

constexpr std::size_t kSaltBytes = crypto_pwhash_SALTBYTES;
constexpr std::size_t kNonceBytes = crypto_secretbox_NONCEBYTES;

std::string derive_key(const std::string& passphrase, const unsigned char* salt)
{
    if (sodium_init() < 0)
        throw Error(ErrorCode::CryptoError, "libsodium initialisation failed");
    std::string key(crypto_secretbox_KEYBYTES, '\0');
    if (crypto_pwhash(reinterpret_cast<unsigned char*>(key.data()), key.size(), passphrase.data(),
                      passphrase.size(), salt, crypto_pwhash_OPSLIMIT_INTERACTIVE,
                      crypto_pwhash_MEMLIMIT_INTERACTIVE, crypto_pwhash_ALG_ARGON2ID13) != 0)
        throw Error(ErrorCode::CryptoError, "key derivation ran out of memory");
    return key;
}

}  // namespace

std::string PassphraseTransform::encode(std::string_view plain) const
{
    std::string out(kSaltBytes + kNonceBytes + crypto_secretbox_MACBYTES + plain.size(), '\0');
    auto* buf = reinterpret_cast<unsigned char*>(out.data());
    if (sodium_init() < 0)
        throw Error(ErrorCode::CryptoError, "libsodium initialisation failed");
    randombytes_buf(buf, kSaltBytes + kNonceBytes);
    auto key = derive_key(passphrase_, buf);
    crypto_secretbox_easy(buf + kSaltBytes + kNonceBytes,
                          reinterpret_cast<const unsigned char*>(plain.data()), plain.size(),
                          buf + kSaltBytes, reinterpret_cast<const unsigned char*>(key.data()));
    sodium_memzero(key.data(), key.size());
    return out;
}

std::string PassphraseTransform::decode(std::string_view stored) const
{
    if (stored.size() < kSaltBytes + kNonceBytes + crypto_secretbox_MACBYTES)
        throw Error(ErrorCode::CryptoError, "encrypted log is truncated");
    const auto* buf = reinterpret_cast<const unsigned char*>(stored.data());
    auto key = derive_key(passphrase_, buf);
    const std::size_t cipher_len = stored.size() - kSaltBytes - kNonceBytes;
    std::string plain(cipher_len - crypto_secretbox_MACBYTES, '\0');
    int rc = crypto_secretbox_open_easy(reinterpret_cast<unsigned char*>(plain.data()),
                                        buf + kSaltBytes + kNonceBytes, cipher_len, buf + kSaltBytes,
                                        reinterpret_cast<const unsigned char*>(key.data()));
    sodium_memzero(key.data(), key.size());
    if (rc != 0)
        throw Error(ErrorCode::CryptoError, "wrong passphrase or corrupted log");
    return plain;
}

void save_log(const std::string& path, const ContactLog& log, const ByteTransform& transform)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::IoError, "cannot write " + path);
    out << transform.encode(serialize_log(log));
}

ContactLog load_log(const std::string& path, int retention_days, const ByteTransform& transform)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open " + path);
    std::string stored((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_log(transform.decode(stored), retention_days);
}

}  // namespace ctrace
