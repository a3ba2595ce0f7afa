#include "ctrace/registry.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>

namespace ctrace {

void NotifiedPidRepository::insert(const Pid& pid, const NotifiedRecord& record)
{
    auto [it, inserted] = entries_.emplace(pid, record);
    if (inserted)
        return;
    auto& cur = it->second;
    if (record.test_date < cur.test_date ||
        (record.test_date == cur.test_date && record.lab_id < cur.lab_id))
        cur = record;
}

const NotifiedRecord* NotifiedPidRepository::find(const Pid& pid) const
{
    auto it = entries_.find(pid);
    return it == entries_.end() ? nullptr : &it->second;
}

void ingest_certificate(NotifiedPidRepository& repo, const CertificateOfInfection& cert,
                        const LabDirectory& directory)
{
    auto status = verify_certificate(cert, directory);
    if (status != CertificateStatus::Verified)
        throw Error(ErrorCode::RejectedCertificate, to_string(status));
    for (const auto& pid : cert.pids)
        repo.insert(pid, {cert.lab_id, cert.test_date});
}

bool is_notified_pid(const NotifiedPidRepository& repo, const Pid& pid)
{
    return repo.find(pid) != nullptr;
}

ClaimVerdict check_test_priority_claim(const NotifiedPidRepository& repo, const Pid& claimed_contact_pid,
                                       std::string_view claimant_personal_data,
                                       std::string_view claimant_phrase, const Pid& claimant_pid)
{
    if (!is_notified_pid(repo, claimed_contact_pid))
        return ClaimVerdict::ContactPidUnknown;
    if (!prove_pid_ownership(claimant_personal_data, claimant_phrase, claimant_pid))
        return ClaimVerdict::OwnershipFailed;
    return ClaimVerdict::ContactConfirmed;
}

std::string format_notified_line(const Pid& pid, const NotifiedRecord& r)
{
    return "notified|" + pid.str() + "|" + r.lab_id + "|" + r.test_date.iso();
}

NotifiedPidRepository replay_notified_lines(const std::vector<std::string>& lines)
{
    NotifiedPidRepository repo;
    for (const auto& line : lines) {
        if (line.empty())
            continue;
        auto f = split(line, '|');
        if (f.size() != 4 || f[0] != "notified" || !is_valid_lab_id(f[2]))
            throw_parse_error("bad repository line: '" + line + "'");
        repo.insert(Pid(f[1]), {f[2], Date::parse(f[3])});
    }
    return repo;
}

std::vector<std::string> format_request(const RegistryRequest& r)
{
    struct Visitor {
        std::vector<std::string> operator()(const QueryRequest& q) const { return {"QUERY " + q.pid.str()}; }
        std::vector<std::string> operator()(const ClaimRequest& c) const
        {
            return {"CLAIM " + c.contact_pid.str() + " " + c.claimant_pid.str() + " " +
                    percent_encode(c.personal_data) + " " + percent_encode(c.phrase)};
        }
        std::vector<std::string> operator()(const IngestRequest& i) const
        {
            auto lines = format_certificate(i.certificate);
            lines.insert(lines.begin(), "INGEST");
            return lines;
        }
    };
    return std::visit(Visitor{}, r);
}

std::string format_response(RegistryResponse r)
{
    switch (r) {
    case RegistryResponse::Yes: return "YES";
    case RegistryResponse::No: return "NO";
    case RegistryResponse::Confirmed: return "CONFIRMED";
    case RegistryResponse::Unknown: return "UNKNOWN";
    case RegistryResponse::OwnershipFailed: return "OWNERSHIP-FAILED";
    case RegistryResponse::Ok: return "OK";
    case RegistryResponse::Rejected: return "REJECTED";
    case RegistryResponse::Error: return "ERROR";
    }
    return "ERROR";
}

RegistryResponse parse_response(std::string_view line)
{
    for (auto r : {RegistryResponse::Yes, RegistryResponse::No, RegistryResponse::Confirmed,
                   RegistryResponse::Unknown, RegistryResponse::OwnershipFailed, RegistryResponse::Ok,
                   RegistryResponse::Rejected, RegistryResponse::Error})
        if (format_response(r) == line)
            return r;
    throw_parse_error("unknown registry response '" + std::string(line) + "'");
}

std::size_t request_line_count(std::string_view first_line)
{
    return first_line == "INGEST" ? 3 : 1;
}

RegistryRequest parse_request(const std::vector<std::string>& lines)
{
    if (lines.empty())
        throw_parse_error("empty request");
    auto words = split(lines[0], ' ');
    const auto& verb = words[0];
    if (verb == "QUERY" && words.size() == 2 && lines.size() == 1)
        return QueryRequest{Pid(words[1])};
    if (verb == "CLAIM" && words.size() == 5 && lines.size() == 1)
        return ClaimRequest{Pid(words[1]), Pid(words[2]), percent_decode(words[3]), percent_decode(words[4])};
    if (verb == "INGEST" && words.size() == 1 && lines.size() == 3)
        return IngestRequest{parse_certificate(lines[1], lines[2])};
    throw_parse_error("malformed request '" + lines[0] + "'");
}

RegistryService::RegistryService(LabDirectory directory, std::optional<std::string> persistence_path)
    : directory_(std::move(directory)), persistence_path_(std::move(persistence_path))
{
    if (persistence_path_ && std::filesystem::exists(*persistence_path_))
        repo_ = replay_notified_lines(read_lines(*persistence_path_));
}

RegistryResponse RegistryService::handle(const RegistryRequest& request)
{
    if (const auto* q = std::get_if<QueryRequest>(&request)) {
        std::shared_lock lock(mutex_);
        return is_notified_pid(repo_, q->pid) ? RegistryResponse::Yes : RegistryResponse::No;
    }
    if (const auto* c = std::get_if<ClaimRequest>(&request)) {
        std::shared_lock lock(mutex_);
        switch (check_test_priority_claim(repo_, c->contact_pid, c->personal_data, c->phrase, c->claimant_pid)) {
        case ClaimVerdict::ContactConfirmed: return RegistryResponse::Confirmed;
        case ClaimVerdict::ContactPidUnknown: return RegistryResponse::Unknown;
        case ClaimVerdict::OwnershipFailed: return RegistryResponse::OwnershipFailed;
        }
    }
    const auto& cert = std::get<IngestRequest>(request).certificate;
    std::unique_lock lock(mutex_);
    try {
        ingest_certificate(repo_, cert, directory_);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::RejectedCertificate)
            return RegistryResponse::Rejected;
        throw;
    }
    if (persistence_path_) {
        std::vector<std::string> lines;
        for (const auto& pid : cert.pids)
            lines.push_back(format_notified_line(pid, {cert.lab_id, cert.test_date}));
        append_lines(*persistence_path_, lines);
    }
    return RegistryResponse::Ok;
}

RegistryResponse RegistryService::handle_lines(const std::vector<std::string>& lines)
{
    std::optional<RegistryRequest> request;
    try {
        request = parse_request(lines);
    } catch (const Error&) {
        return RegistryResponse::Error;
    }
    return handle(*request);
}

NotifiedPidRepository RegistryService::snapshot() const
{
    std::shared_lock lock(mutex_);
    return repo_;
}

namespace {

class LineReader {
public:
    explicit LineReader(int fd) : fd_(fd) {}

    std::optional<std::string> next()
    {
        while (true) {
            auto nl = buf_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buf_.substr(0, nl);
                buf_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r')
                    line.pop_back();
                return line;
            }
            char chunk[4096];
            ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
            if (n <= 0)
                return std::nullopt;
            buf_.append(chunk, static_cast<std::size_t>(n));
        }
    }

private:
    int fd_;
    std::string buf_;
};

bool send_all(int fd, std::string_view data)
{
    while (!data.empty()) {
        ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n <= 0)
            return false;
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

}  // namespace

RegistryServer::RegistryServer(RegistryService& service, const std::string& host, std::uint16_t port)
    : service_(service)
{
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (listen_fd_ < 0)
        throw Error(ErrorCode::IoError, "socket failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw Error(ErrorCode::IoError, "bad listen address " + host);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(listen_fd_, 64) != 0) {
        int err = errno;
        ::close(listen_fd_);
        throw Error(ErrorCode::IoError, std::string("cannot listen: ") + std::strerror(err));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

RegistryServer::~RegistryServer()
{
    stop();
    for (auto& t : workers_)
        if (t.joinable())
            t.join();
    if (listen_fd_ >= 0)
        ::close(listen_fd_);
}

void RegistryServer::run()
{
    while (!stopping_) {
        int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) {
            if (stopping_)
                break;
            if (errno == EINTR || errno == ECONNABORTED)
                continue;
            break;
        }
        std::lock_guard lock(conn_mutex_);
        if (stopping_) {
            ::close(fd);
            break;
        }
        conn_fds_.push_back(fd);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void RegistryServer::stop()
{
    if (stopping_.exchange(true))
        return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    std::lock_guard lock(conn_mutex_);
    for (int fd : conn_fds_)
        ::shutdown(fd, SHUT_RDWR);
}

void RegistryServer::serve_connection(int fd)
{
    LineReader reader(fd);
    while (auto first = reader.next()) {
        std::vector<std::string> lines{*first};
        const std::size_t want = request_line_count(*first);
        while (lines.size() < want) {
            auto more = reader.next();
            if (!more)
                break;
            lines.push_back(*more);
        }
        RegistryResponse response = RegistryResponse::Error;
        try {
            response = service_.handle_lines(lines);
        } catch (const std::exception&) {
            response = RegistryResponse::Error;
        }
        if (!send_all(fd, format_response(response) + "\n"))
            break;
    }
    std::lock_guard lock(conn_mutex_);
    std::erase(conn_fds_, fd);
    ::close(fd);
}

std::string registry_roundtrip(const std::string& host, std::uint16_t port,
                               const std::vector<std::string>& request_lines)
{
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw Error(ErrorCode::IoError, "cannot resolve " + host);
    int fd = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
    if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
        ::freeaddrinfo(res);
        if (fd >= 0)
            ::close(fd);
        throw Error(ErrorCode::IoError, "cannot connect to " + host + ":" + std::to_string(port));
    }
    ::freeaddrinfo(res);
    std::string payload;
    for (const auto& l : request_lines)
        payload += l + "\n";
    if (!send_all(fd, payload)) {
        ::close(fd);
        throw Error(ErrorCode::IoError, "send failed");
    }
    LineReader reader(fd);
    auto line = reader.next();
    ::close(fd);
    if (!line)
        throw Error(ErrorCode::IoError, "connection closed before response");
    return *line;
}

}  // namespace ctrace
