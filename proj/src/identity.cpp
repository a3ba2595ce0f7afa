#include "ctrace/identity.hpp"

#include "ctrace/crypto.hpp"

#include <algorithm>

namespace ctrace {

namespace {

constexpr std::size_t kMaxPidLength = 64;
constexpr std::size_t kPidHexChars = 32;

}  // namespace

bool Pid::is_valid(std::string_view value)
{
    if (value.empty() || value.size() > kMaxPidLength)
        return false;
    return std::all_of(value.begin(), value.end(), [](char c) {
        return c > 0x20 && c < 0x7F && c != '|' && c != ',';
    });
}

Pid::Pid(std::string value) : value_(std::move(value))
{
    if (!is_valid(value_))
        throw Error(ErrorCode::InvalidPid, "'" + value_ + "'");
}

bool Pad::is_valid(std::string_view value)
{
    auto at = value.find('@');
    if (at == std::string_view::npos || at == 0 || at + 1 == value.size())
        return false;
    return std::all_of(value.begin(), value.end(),
                       [](char c) { return c > 0x20 && c < 0x7F && c != '|'; });
}

Pad::Pad(std::string value) : value_(std::move(value))
{
    if (!is_valid(value_))
        throw Error(ErrorCode::InvalidPad, "'" + value_ + "'");
}

IdentityPeriod::IdentityPeriod(std::vector<PidActivation> pids, Pad pad)
    : pids_(std::move(pids)), pad_(std::move(pad))
{
    if (pids_.empty())
        throw Error(ErrorCode::EmptyInput, "identity period needs at least one PID");
    for (std::size_t i = 1; i < pids_.size(); ++i)
        if (pids_[i].activated_at <= pids_[i - 1].activated_at)
            throw Error(ErrorCode::InvalidWindow, "PID activations must strictly increase");
}

const Pid& IdentityPeriod::pid_at(Timestamp t) const
{
    const Pid* current = &pids_.front().pid;
    for (const auto& a : pids_) {
        if (a.activated_at > t)
            break;
        current = &a.pid;
    }
    return *current;
}

void IdentityPeriod::rotate(Timestamp at, Pid pid)
{
    if (at <= pids_.back().activated_at)
        throw Error(ErrorCode::InvalidWindow, "PID rotation must move forward in time");
    pids_.push_back({at, std::move(pid)});
}

Pid generate_random_pid(Rng& rng)
{
    unsigned char raw[16];
    for (int half = 0; half < 2; ++half) {
        std::uint64_t word = rng.next();
        for (int b = 0; b < 8; ++b)
            raw[half * 8 + b] = static_cast<unsigned char>(word >> (8 * b));
    }
    return Pid(to_hex(raw, sizeof raw));
}

Pid generate_random_pid(std::uint64_t seed)
{
    Rng rng(seed);
    return generate_random_pid(rng);
}

std::string trusted_pid_preimage(std::string_view personal_data, std::string_view phrase)
{
    std::string pre;
    pre.reserve(personal_data.size() + phrase.size() + 1);
    pre.append(personal_data);
    pre.push_back('\x1F');
    pre.append(phrase);
    return pre;
}

TrustedPidCommitment generate_trusted_pid(std::string personal_data, std::string phrase)
{
    if (personal_data.empty() || phrase.empty())
        throw Error(ErrorCode::EmptyInput, "personal data and phrase must be non-empty");
    auto digest = crypto::sha256_hex(trusted_pid_preimage(personal_data, phrase));
    Pid pid(digest.substr(0, kPidHexChars));
    return {std::move(personal_data), std::move(phrase), std::move(pid)};
}

bool prove_pid_ownership(std::string_view personal_data, std::string_view phrase, const Pid& claimed)
{
    if (personal_data.empty() || phrase.empty())
        return false;
    auto digest = crypto::sha256_hex(trusted_pid_preimage(personal_data, phrase));
    return digest.compare(0, kPidHexChars, claimed.str()) == 0 && claimed.str().size() == kPidHexChars;
}

std::vector<Pid> active_pids_in_window(const IdentityPeriod& period, Timestamp from, Timestamp to)
{
    if (from > to)
        throw Error(ErrorCode::InvalidWindow, "window start after end");
    const auto& pids = period.pids();
    std::vector<Pid> out;
    for (std::size_t i = 0; i < pids.size(); ++i) {
        bool starts_in_time = pids[i].activated_at <= to;
        bool still_active = i + 1 == pids.size() || pids[i + 1].activated_at > from;
        if (starts_in_time && still_active)
            out.push_back(pids[i].pid);
    }
    return out;
}

std::string format_commitment_line(const TrustedPidCommitment& c)
{
    return "trusted-pid|" + c.pid.str() + "|" + percent_encode(c.personal_data) + "|";
}

CommitmentRecord parse_commitment_line(std::string_view line)
{
    auto f = split(line, '|');
    if (f.size() != 4 || f[0] != "trusted-pid" || !f[3].empty())
        throw_parse_error("bad commitment line");
    return {Pid(f[1]), percent_decode(f[2])};
}

}  // namespace ctrace
