#pragma once

#include "ctrace/certificates.hpp"
#include "ctrace/contactlog.hpp"

#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ctrace {

struct Notification {
    Pid sender_pid;
    Timestamp echoed_time = 0;
    std::string echoed_location;
    std::optional<CertificateOfInfection> certificate;

    bool operator==(const Notification&) const = default;
};

/* Wire form: `notif|v1|<sender_pid>|<echoed_time>|<echoed_loc%>`, followed by
   the two certificate lines when a certificate is attached. */
std::vector<std::string> format_notification(const Notification& n);

/// Parses a concatenation of notifications as written to a mailbox file.
std::vector<Notification> parse_notifications(const std::vector<std::string>& lines);

class MailboxStore {
public:
    virtual ~MailboxStore() = default;
    virtual void append(const Pad& pad, const Notification& n) = 0;
    virtual std::vector<Notification> drain(const Pad& pad) = 0;
    virtual std::size_t pending(const Pad& pad) const = 0;
};

/// Process-local store; each call is serialized on an internal mutex.
class InMemoryMailboxStore final : public MailboxStore {
public:
    void append(const Pad& pad, const Notification& n) override;
    std::vector<Notification> drain(const Pad& pad) override;
    std::size_t pending(const Pad& pad) const override;
    std::size_t total_pending() const;

private:
    mutable std::mutex mutex_;
    std::map<Pad, std::deque<Notification>> boxes_;
};

/* One file per PAD inside `root`, named by the percent-encoded PAD. Appends
   and drains take an exclusive flock on the mailbox file, so concurrent
   processes see whole messages only. */
class FileMailboxStore final : public MailboxStore {
public:
    explicit FileMailboxStore(std::filesystem::path root);

    void append(const Pad& pad, const Notification& n) override;
    std::vector<Notification> drain(const Pad& pad) override;
    std::size_t pending(const Pad& pad) const override;

    std::filesystem::path path_for(const Pad& pad) const;

private:
    std::filesystem::path root_;
    mutable std::mutex mutex_;
};

/// Store-and-forward delivery. Throws MalformedPad when `pad` is not local@domain.
void deliver(MailboxStore& store, std::string_view pad, const Notification& n);

/// Returns and removes everything pending for `pad`; unknown PADs yield nothing.
std::vector<Notification> poll_mailbox(MailboxStore& store, std::string_view pad);

/* One notification per log entry announced under one of own_pids, addressed
   to the peer's PAD and echoing the peer's announced time and location.
   With a certificate, every such own PID must be listed in it (UncoveredPid). */
std::vector<std::pair<Pad, Notification>> build_notifications(
    const ContactLog& log, const std::vector<Pid>& own_pids,
    const std::optional<CertificateOfInfection>& certificate);

enum class DeploymentMode { CertificateRequired, CertificateOptional };

enum class VerdictStatus {
    Accepted,
    AcceptedUncertified,
    RejectedNoMatchingContact,
    RejectedUnknownLab,
    RejectedBadSignature,
    RejectedPidNotInCertificate,
};

const char* to_string(VerdictStatus s);
bool is_accepted(VerdictStatus s);

struct VerificationVerdict {
    VerdictStatus status = VerdictStatus::RejectedNoMatchingContact;
    std::optional<LogEntry> matched_entry;  // present iff accepted
};

struct VerificationConfig {
    DeploymentMode mode = DeploymentMode::CertificateRequired;
    Seconds time_tolerance_s = kDefaultTimeToleranceS;
    int post_test_margin_days = 0;
};

/* Receiver-side pipeline:
     1. the claimed contact must exist in the own log (PID, location, time);
     2. a missing certificate is acceptable only in CertificateOptional mode;
     3. the certificate must verify against the lab directory;
     4. the sender PID must be listed and the contact time covered.
   A failed log match is terminal in every mode. A missing certificate in
   CertificateRequired mode reports RejectedBadSignature. */
VerificationVerdict verify_notification(const Notification& n, const ContactLog& log,
                                        const LabDirectory& directory,
                                        const VerificationConfig& config = {});

}  // namespace ctrace
