#pragma once

#include "ctrace/identity.hpp"

#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace ctrace {

/// 64 zero hex digits; the prev_hash of the first visit.
inline const std::string kGenesisHash(64, '0');

struct ChainedVisit {
    std::int64_t seq = 0;
    Timestamp visited_at = 0;
    Pid pid;
    std::string prev_hash;   // lowercase hex
    std::string entry_hash;  // lowercase hex

    bool operator==(const ChainedVisit&) const = default;
};

/// `visit|<seq>|<visited_at>|<pid>`
std::string canonical_visit_payload(std::int64_t seq, Timestamp visited_at, const Pid& pid);

/// SHA-256 over `<prev_hash>|<canonical visit payload>`.
std::string visit_hash(std::string_view prev_hash, std::int64_t seq, Timestamp visited_at, const Pid& pid);

/* Append-only visitor log of consenting customers. `head` is the published
   digest of the last entry; the fields are public so that tests and
   tooling can model tampering. */
struct VisitorLog {
    std::string business_id;
    std::vector<ChainedVisit> chain;
    std::string head = kGenesisHash;
};

/// Throws OutOfOrderVisit when visited_at precedes the last visit.
void append_visit(VisitorLog& log, const Pid& pid, Timestamp visited_at);

struct ChainIntact {
    bool operator==(const ChainIntact&) const = default;
};
struct TamperedAt {
    std::int64_t seq;
    bool operator==(const TamperedAt&) const = default;
};
using ChainStatus = std::variant<ChainIntact, TamperedAt>;

/* Walks the chain in order, checking for the entry at position i that
   seq == i + 1, prev_hash links to its predecessor (genesis for the first),
   and entry_hash recomputes. The first failure is reported by its expected
   seq. A head that does not match the last entry reports size() + 1. */
ChainStatus verify_chain(const VisitorLog& log);

enum class EvidenceVerdict { VisitAndCertified, NoVisitRecorded, NotCertifiedSick };

const char* to_string(EvidenceVerdict v);

/// Throws InvalidWindow if from > to.
EvidenceVerdict evidence_query(const VisitorLog& log, const Pid& claimant_pid, Timestamp from,
                               Timestamp to, const std::function<bool(const Pid&)>& repo_query);

/// `visit|...` then `hash|<hex>` per entry.
std::vector<std::string> format_chain(const VisitorLog& log);
/// `head|<hex>`
std::string format_head(const VisitorLog& log);

/* Rebuilds the in-memory chain from the two files without validating it;
   prev_hash of each entry is taken from the preceding hash line. */
VisitorLog parse_chain(const std::vector<std::string>& chain_lines, std::string_view head_line,
                       std::string business_id = {});

}  // namespace ctrace
