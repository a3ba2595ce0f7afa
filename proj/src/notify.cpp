#include "ctrace/notify.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>

namespace ctrace {

std::vector<std::string> format_notification(const Notification& n)
{
    std::vector<std::string> lines{"notif|v1|" + n.sender_pid.str() + "|" + std::to_string(n.echoed_time) +
                                   "|" + percent_encode(n.echoed_location)};
    if (n.certificate) {
        auto cert = format_certificate(*n.certificate);
        lines.insert(lines.end(), cert.begin(), cert.end());
    }
    return lines;
}

std::vector<Notification> parse_notifications(const std::vector<std::string>& lines)
{
    std::vector<Notification> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& line = lines[i];
        if (line.empty())
            continue;
        auto f = split(line, '|');
        if (f.size() != 5 || f[0] != "notif" || f[1] != "v1")
            throw_parse_error("bad notification line: '" + line + "'");
        Notification n{Pid(f[2]), parse_int(f[3]), percent_decode(f[4]), std::nullopt};
        if (i + 1 < lines.size() && lines[i + 1].rfind("cert|", 0) == 0) {
            if (i + 2 >= lines.size())
                throw_parse_error("certificate without signature line");
            n.certificate = parse_certificate(lines[i + 1], lines[i + 2]);
            i += 2;
        }
        out.push_back(std::move(n));
    }
    return out;
}

void InMemoryMailboxStore::append(const Pad& pad, const Notification& n)
{
    std::lock_guard lock(mutex_);
    boxes_[pad].push_back(n);
}

std::vector<Notification> InMemoryMailboxStore::drain(const Pad& pad)
{
    std::lock_guard lock(mutex_);
    auto it = boxes_.find(pad);
    if (it == boxes_.end())
        return {};
    std::vector<Notification> out(std::make_move_iterator(it->second.begin()),
                                  std::make_move_iterator(it->second.end()));
    boxes_.erase(it);
    return out;
}

std::size_t InMemoryMailboxStore::pending(const Pad& pad) const
{
    std::lock_guard lock(mutex_);
    auto it = boxes_.find(pad);
    return it == boxes_.end() ? 0 : it->second.size();
}

std::size_t InMemoryMailboxStore::total_pending() const
{
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [pad, box] : boxes_)
        n += box.size();
    return n;
}

namespace {

class LockedFile {
public:
    LockedFile(const std::filesystem::path& path, int flags)
    {
        fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
        if (fd_ < 0) {
            if (errno == ENOENT && !(flags & O_CREAT))
                return;
            throw Error(ErrorCode::IoError, "cannot open " + path.string() + ": " + std::strerror(errno));
        }
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw Error(ErrorCode::IoError, "cannot lock " + path.string());
        }
    }
    ~LockedFile()
    {
        if (fd_ >= 0)
            ::close(fd_);  // releases the lock
    }
    LockedFile(const LockedFile&) = delete;
    LockedFile& operator=(const LockedFile&) = delete;

    bool is_open() const { return fd_ >= 0; }

    std::string read_all() const
    {
        std::string out;
        char buf[4096];
        ::lseek(fd_, 0, SEEK_SET);
        ssize_t n;
        while ((n = ::read(fd_, buf, sizeof buf)) > 0)
            out.append(buf, static_cast<std::size_t>(n));
        return out;
    }

    void write_all(std::string_view data) const
    {
        while (!data.empty()) {
            ssize_t n = ::write(fd_, data.data(), data.size());
            if (n < 0)
                throw Error(ErrorCode::IoError, "mailbox write failed");
            data.remove_prefix(static_cast<std::size_t>(n));
        }
    }

    void truncate() const
    {
        if (::ftruncate(fd_, 0) != 0)
            throw Error(ErrorCode::IoError, "mailbox truncate failed");
    }

private:
    int fd_ = -1;
};

std::vector<std::string> lines_of(const std::string& text)
{
    auto lines = split(text, '\n');
    if (!lines.empty() && lines.back().empty())
        lines.pop_back();
    return lines;
}

}  // namespace

FileMailboxStore::FileMailboxStore(std::filesystem::path root) : root_(std::move(root))
{
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec)
        throw Error(ErrorCode::IoError, "cannot create mailbox directory " + root_.string());
}

std::filesystem::path FileMailboxStore::path_for(const Pad& pad) const
{
    return root_ / percent_encode(pad.str());
}

void FileMailboxStore::append(const Pad& pad, const Notification& n)
{
    std::string text;
    for (const auto& l : format_notification(n))
        text += l + '\n';
    std::lock_guard lock(mutex_);
    LockedFile f(path_for(pad), O_WRONLY | O_CREAT | O_APPEND);
    f.write_all(text);
}

std::vector<Notification> FileMailboxStore::drain(const Pad& pad)
{
    std::lock_guard lock(mutex_);
    LockedFile f(path_for(pad), O_RDWR);
    if (!f.is_open())
        return {};
    auto out = parse_notifications(lines_of(f.read_all()));
    f.truncate();
    return out;
}

std::size_t FileMailboxStore::pending(const Pad& pad) const
{
    std::lock_guard lock(mutex_);
    LockedFile f(path_for(pad), O_RDONLY);
    if (!f.is_open())
        return 0;
    return parse_notifications(lines_of(f.read_all())).size();
}

void deliver(MailboxStore& store, std::string_view pad, const Notification& n)
{
    if (!Pad::is_valid(pad))
        throw Error(ErrorCode::MalformedPad, "'" + std::string(pad) + "'");
    store.append(Pad(std::string(pad)), n);
}

std::vector<Notification> poll_mailbox(MailboxStore& store, std::string_view pad)
{
    if (!Pad::is_valid(pad))
        return {};
    return store.drain(Pad(std::string(pad)));
}

std::vector<std::pair<Pad, Notification>> build_notifications(
    const ContactLog& log, const std::vector<Pid>& own_pids,
    const std::optional<CertificateOfInfection>& certificate)
{
    const std::set<Pid> own(own_pids.begin(), own_pids.end());
    std::set<Pid> covered;
    if (certificate)
        covered.insert(certificate->pids.begin(), certificate->pids.end());

    std::vector<std::pair<Pad, Notification>> out;
    for (const auto& e : log.entries()) {
        if (!own.contains(e.own_record.pid))
            continue;
        if (certificate && !covered.contains(e.own_record.pid))
            throw Error(ErrorCode::UncoveredPid, e.own_record.pid.str() + " is not declared in the certificate");
        out.emplace_back(e.peer_record.pad, Notification{e.own_record.pid, e.peer_record.local_time,
                                                         e.peer_record.local_location, certificate});
    }
    return out;
}

const char* to_string(VerdictStatus s)
{
    switch (s) {
    case VerdictStatus::Accepted: return "ACCEPTED";
    case VerdictStatus::AcceptedUncertified: return "ACCEPTED-UNCERTIFIED";
    case VerdictStatus::RejectedNoMatchingContact: return "REJECTED-NO-MATCHING-CONTACT";
    case VerdictStatus::RejectedUnknownLab: return "REJECTED-UNKNOWN-LAB";
    case VerdictStatus::RejectedBadSignature: return "REJECTED-BAD-SIGNATURE";
    case VerdictStatus::RejectedPidNotInCertificate: return "REJECTED-PID-NOT-IN-CERTIFICATE";
    }
    return "?";
}

bool is_accepted(VerdictStatus s)
{
    return s == VerdictStatus::Accepted || s == VerdictStatus::AcceptedUncertified;
}

VerificationVerdict verify_notification(const Notification& n, const ContactLog& log,
                                        const LabDirectory& directory, const VerificationConfig& config)
{
    auto match = find_matching_contact(log, n.sender_pid, n.echoed_time, n.echoed_location,
                                       config.time_tolerance_s);
    if (!match)
        return {VerdictStatus::RejectedNoMatchingContact, std::nullopt};

    if (!n.certificate) {
        if (config.mode == DeploymentMode::CertificateOptional)
            return {VerdictStatus::AcceptedUncertified, std::move(match)};
        return {VerdictStatus::RejectedBadSignature, std::nullopt};
    }

    switch (verify_certificate(*n.certificate, directory)) {
    case CertificateStatus::UnknownLab: return {VerdictStatus::RejectedUnknownLab, std::nullopt};
    case CertificateStatus::BadSignature: return {VerdictStatus::RejectedBadSignature, std::nullopt};
    case CertificateStatus::Verified: break;
    }

    auto covering = pids_covering_contact(*n.certificate, match->own_record.local_time,
                                          config.post_test_margin_days);
    if (std::find(covering.begin(), covering.end(), n.sender_pid) == covering.end())
        return {VerdictStatus::RejectedPidNotInCertificate, std::nullopt};

    return {VerdictStatus::Accepted, std::move(match)};
}

}  // namespace ctrace
