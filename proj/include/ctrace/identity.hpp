#pragma once

#include "ctrace/common.hpp"
#include "ctrace/rng.hpp"

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace ctrace {

/* Pseudonymous identifier: 1-64 printable, non-whitespace ASCII characters,
   never containing the field separator '|' or the list separator ','. */
class Pid {
public:
    explicit Pid(std::string value);

    static bool is_valid(std::string_view value);

    const std::string& str() const noexcept { return value_; }

    auto operator<=>(const Pid&) const = default;

private:
    std::string value_;
};

/// Notification address of the form local@domain.
class Pad {
public:
    explicit Pad(std::string value);

    static bool is_valid(std::string_view value);

    const std::string& str() const noexcept { return value_; }

    auto operator<=>(const Pad&) const = default;

private:
    std::string value_;
};

struct TrustedPidCommitment {
    std::string personal_data;
    std::string phrase;
    Pid pid;
};

struct PidActivation {
    Timestamp activated_at;
    Pid pid;
};

/// The PIDs a user announces over one spread period, plus the PAD they read.
class IdentityPeriod {
public:
    IdentityPeriod(std::vector<PidActivation> pids, Pad pad);

    const std::vector<PidActivation>& pids() const noexcept { return pids_; }
    const Pad& pad() const noexcept { return pad_; }

    /// PID in force at `t`, or the first PID when `t` precedes every activation.
    const Pid& pid_at(Timestamp t) const;

    /// Appends a rotation; `at` must be later than the last activation.
    void rotate(Timestamp at, Pid pid);

private:
    std::vector<PidActivation> pids_;
    Pad pad_;
};

Pid generate_random_pid(Rng& rng);
Pid generate_random_pid(std::uint64_t seed);

/// The hash preimage: personal_data, a 0x1F unit separator, then phrase.
std::string trusted_pid_preimage(std::string_view personal_data, std::string_view phrase);

TrustedPidCommitment generate_trusted_pid(std::string personal_data, std::string phrase);

bool prove_pid_ownership(std::string_view personal_data, std::string_view phrase, const Pid& claimed);

/* Every PID whose activation interval [activated_at, next activation) meets
   the closed window [from, to]. The last PID stays active indefinitely. */
std::vector<Pid> active_pids_in_window(const IdentityPeriod& period, Timestamp from, Timestamp to);

/// `trusted-pid|<pid>|<personal_data%>|`; the phrase is never written.
std::string format_commitment_line(const TrustedPidCommitment& c);

struct CommitmentRecord {
    Pid pid;
    std::string personal_data;
};

CommitmentRecord parse_commitment_line(std::string_view line);

}  // namespace ctrace
