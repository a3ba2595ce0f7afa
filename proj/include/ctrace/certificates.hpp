#pragma once

#include "ctrace/common.hpp"
#include "ctrace/crypto.hpp"
#include "ctrace/identity.hpp"

#include <compare>
#include <map>
#include <string>
#include <vector>

namespace ctrace {

/// Civil (proleptic Gregorian, UTC) date stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int64_t days_since_epoch) : days_(days_since_epoch) {}

    static Date from_civil(int year, unsigned month, unsigned day);
    /// Strict YYYY-MM-DD.
    static Date parse(std::string_view iso);
    static Date of(Timestamp t);

    std::string iso() const;
    std::int64_t days_since_epoch() const noexcept { return days_; }
    Timestamp start_of_day() const noexcept { return days_ * kSecondsPerDay; }
    Timestamp end_of_day() const noexcept { return start_of_day() + kSecondsPerDay - 1; }

    Date plus_days(std::int64_t n) const noexcept { return Date(days_ + n); }

    auto operator<=>(const Date&) const = default;

private:
    std::int64_t days_ = 0;
};

struct LabIdentity {
    std::string lab_id;
    crypto::KeyPair keys;
};

/// lab ids are non-empty and free of '|' and whitespace.
bool is_valid_lab_id(std::string_view id);

struct DirectoryEntry {
    std::string scheme;
    crypto::PublicKey key;
};

class LabDirectory {
public:
    /// Throws InvalidEntry on duplicate or malformed lab id.
    void add(const std::string& lab_id, crypto::PublicKey key,
             std::string scheme = std::string(crypto::kSignatureScheme));

    const DirectoryEntry* find(std::string_view lab_id) const;
    bool contains(std::string_view lab_id) const { return find(lab_id) != nullptr; }
    std::size_t size() const noexcept { return entries_.size(); }
    const std::map<std::string, DirectoryEntry, std::less<>>& entries() const noexcept { return entries_; }

private:
    std::map<std::string, DirectoryEntry, std::less<>> entries_;
};

/// `lab|<lab_id>|<scheme>|<base64 public key>` per line.
std::vector<std::string> format_directory(const LabDirectory& dir);
LabDirectory parse_directory(const std::vector<std::string>& lines);
std::string format_directory_line(const std::string& lab_id, const DirectoryEntry& e);

struct CertificateOfInfection {
    std::string lab_id;
    Date test_date;
    Date infectious_from;
    std::vector<Pid> pids;
    std::string signature;  // raw bytes

    bool operator==(const CertificateOfInfection&) const = default;
};

/// `cert|v1|<lab_id>|<test_date>|<infectious_from>|<pid1,pid2,...>`
std::string canonical_certificate_payload(std::string_view lab_id, Date test_date, Date infectious_from,
                                          const std::vector<Pid>& pids);
std::string canonical_certificate_payload(const CertificateOfInfection& cert);

/// Throws EmptyPidList, InvalidDates, or InvalidPid (duplicate PID).
CertificateOfInfection issue_certificate(const LabIdentity& lab, std::vector<Pid> pids, Date test_date,
                                         Date infectious_from);

enum class CertificateStatus { Verified, UnknownLab, BadSignature };

const char* to_string(CertificateStatus s);

CertificateStatus verify_certificate(const CertificateOfInfection& cert, const LabDirectory& directory);

/* Verifies raw payload bytes as they appear on the wire. The lab id is taken
   from the third field; a payload too short to name a lab is UnknownLab. */
CertificateStatus verify_signed_payload(std::string_view payload, std::string_view signature,
                                        const LabDirectory& directory);

/* All certificate PIDs when contact_time lies in the closed interval from the
   start of infectious_from to the end of test_date + margin; empty otherwise. */
std::vector<Pid> pids_covering_contact(const CertificateOfInfection& cert, Timestamp contact_time,
                                       int post_test_margin_days = 0);

/// Two lines: the canonical payload, then `sig|<base64>`.
std::vector<std::string> format_certificate(const CertificateOfInfection& cert);
CertificateOfInfection parse_certificate(std::string_view payload_line, std::string_view sig_line);
CertificateOfInfection parse_certificate_payload(std::string_view payload);

}  // namespace ctrace
