#pragma once

#include "ctrace/encounter.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ctrace {

struct LogEntry {
    InformationRecord own_record;
    InformationRecord peer_record;
    Timestamp recorded_at = 0;  // last beacon of the session, device local time
    Seconds dwell_s = 0;
    int policy_version = 1;

    bool operator==(const LogEntry&) const = default;
};

inline constexpr int kDefaultRetentionDays = 21;
inline constexpr int kMinRetentionDays = 14;
inline constexpr int kMaxRetentionDays = 28;
inline constexpr Seconds kDefaultTimeToleranceS = 300;

class ContactLog {
public:
    explicit ContactLog(int retention_days = kDefaultRetentionDays);

    const std::vector<LogEntry>& entries() const noexcept { return entries_; }
    int retention_days() const noexcept { return retention_days_; }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t size() const noexcept { return entries_.size(); }

    bool operator==(const ContactLog&) const = default;

private:
    friend void append_entry(ContactLog& log, LogEntry entry);
    friend void prune(ContactLog& log, Timestamp now);

    std::vector<LogEntry> entries_;
    int retention_days_;
};

/// Throws OutOfOrderEntry if entry.recorded_at precedes the last entry.
void append_entry(ContactLog& log, LogEntry entry);

/// Drops entries with recorded_at < now - retention; the boundary itself is kept.
void prune(ContactLog& log, Timestamp now);

/* The fake-claim filter: first entry whose peer PID equals the claim, whose
   own location label is byte-identical to the echoed one, and whose own
   announced time is within the tolerance of the echoed time. */
std::optional<LogEntry> find_matching_contact(const ContactLog& log, const Pid& claimed_peer_pid,
                                              Timestamp echoed_time, std::string_view echoed_location,
                                              Seconds time_tolerance_s = kDefaultTimeToleranceS);

struct ExposureSummary {
    std::size_t entries = 0;
    std::size_t distinct_peers = 0;
    std::map<std::string, std::size_t> by_location;

    bool operator==(const ExposureSummary&) const = default;
};

ExposureSummary exposure_statistics(const ContactLog& log);

std::string format_log_entry(const LogEntry& e);
LogEntry parse_log_entry(std::string_view line);

/// Newline-terminated entry lines.
std::string serialize_log(const ContactLog& log);
ContactLog parse_log(std::string_view text, int retention_days = kDefaultRetentionDays);

/// Byte transform applied to the serialized log before it touches storage.
class ByteTransform {
public:
    virtual ~ByteTransform() = default;
    virtual std::string encode(std::string_view plain) const = 0;
    virtual std::string decode(std::string_view stored) const = 0;
};

class IdentityTransform final : public ByteTransform {
public:
    std::string encode(std::string_view plain) const override { return std::string(plain); }
    std::string decode(std::string_view stored) const override { return std::string(stored); }
};

/* Passphrase-keyed XSalsa20-Poly1305. Stored layout is
   salt || nonce || ciphertext; the key comes from Argon2id over the salt. */
class PassphraseTransform final : public ByteTransform {
public:
    explicit PassphraseTransform(std::string passphrase) : passphrase_(std::move(passphrase)) {}

    std::string encode(std::string_view plain) const override;
    std::string decode(std::string_view stored) const override;

private:
    std::string passphrase_;
};

void save_log(const std::string& path, const ContactLog& log,
              const ByteTransform& transform = IdentityTransform{});
ContactLog load_log(const std::string& path, int retention_days = kDefaultRetentionDays,
                    const ByteTransform& transform = IdentityTransform{});

}  // namespace ctrace
