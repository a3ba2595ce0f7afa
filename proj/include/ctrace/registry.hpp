#pragma once

#include "ctrace/certificates.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace ctrace {

struct NotifiedRecord {
    std::string lab_id;
    Date test_date;

    bool operator==(const NotifiedRecord&) const = default;
};

class NotifiedPidRepository {
public:
    /* Keeps the record with the earliest test date; ties go to the smaller
       lab id so the result does not depend on insertion order. */
    void insert(const Pid& pid, const NotifiedRecord& record);

    const NotifiedRecord* find(const Pid& pid) const;
    std::size_t size() const noexcept { return entries_.size(); }
    const std::map<Pid, NotifiedRecord>& entries() const noexcept { return entries_; }

    bool operator==(const NotifiedPidRepository&) const = default;

private:
    std::map<Pid, NotifiedRecord> entries_;
};

/// Throws RejectedCertificate unless the certificate verifies; the repo is then untouched.
void ingest_certificate(NotifiedPidRepository& repo, const CertificateOfInfection& cert,
                        const LabDirectory& directory);

bool is_notified_pid(const NotifiedPidRepository& repo, const Pid& pid);

enum class ClaimVerdict { ContactConfirmed, ContactPidUnknown, OwnershipFailed };

ClaimVerdict check_test_priority_claim(const NotifiedPidRepository& repo, const Pid& claimed_contact_pid,
                                       std::string_view claimant_personal_data,
                                       std::string_view claimant_phrase, const Pid& claimant_pid);

/// `notified|<pid>|<lab_id>|<test_date>`
std::string format_notified_line(const Pid& pid, const NotifiedRecord& r);
/// Replays persistence lines through insert().
NotifiedPidRepository replay_notified_lines(const std::vector<std::string>& lines);

// Wire protocol. Every message is one newline-terminated line, except INGEST
// which is followed by the two certificate lines.

struct QueryRequest {
    Pid pid;
    bool operator==(const QueryRequest&) const = default;
};

struct ClaimRequest {
    Pid contact_pid;
    Pid claimant_pid;
    std::string personal_data;
    std::string phrase;
    bool operator==(const ClaimRequest&) const = default;
};

struct IngestRequest {
    CertificateOfInfection certificate;
    bool operator==(const IngestRequest&) const = default;
};

using RegistryRequest = std::variant<QueryRequest, ClaimRequest, IngestRequest>;

enum class RegistryResponse { Yes, No, Confirmed, Unknown, OwnershipFailed, Ok, Rejected, Error };

std::vector<std::string> format_request(const RegistryRequest& r);
std::string format_response(RegistryResponse r);
RegistryResponse parse_response(std::string_view line);

/// How many lines a request starting with `first_line` occupies in total.
std::size_t request_line_count(std::string_view first_line);
RegistryRequest parse_request(const std::vector<std::string>& lines);

/* Repository plus the lab directory used to vet ingests. Mutations are
   serialized; queries read under a shared lock. With a persistence path,
   the file is replayed at construction and every accepted ingest is
   appended to it. */
class RegistryService {
public:
    explicit RegistryService(LabDirectory directory, std::optional<std::string> persistence_path = {});

    RegistryResponse handle(const RegistryRequest& request);
    /// Parses then handles; malformed requests yield Error.
    RegistryResponse handle_lines(const std::vector<std::string>& lines);

    NotifiedPidRepository snapshot() const;

private:
    LabDirectory directory_;
    std::optional<std::string> persistence_path_;
    mutable std::shared_mutex mutex_;
    NotifiedPidRepository repo_;
};

/// Blocking TCP front end; one thread per connection.
class RegistryServer {
public:
    RegistryServer(RegistryService& service, const std::string& host, std::uint16_t port);
    ~RegistryServer();
    RegistryServer(const RegistryServer&) = delete;
    RegistryServer& operator=(const RegistryServer&) = delete;

    /// The bound port (useful when constructed with port 0).
    std::uint16_t port() const noexcept { return port_; }

    /// Accept loop; returns after stop().
    void run();
    void stop();

private:
    void serve_connection(int fd);

    RegistryService& service_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::mutex conn_mutex_;
    std::vector<int> conn_fds_;
    std::vector<std::thread> workers_;
};

/// Sends one request over a fresh connection and returns the response line.
std::string registry_roundtrip(const std::string& host, std::uint16_t port,
                               const std::vector<std::string>& request_lines);

}  // namespace ctrace
