#include "ctrace/bizlog.hpp"

#include "ctrace/crypto.hpp"

namespace ctrace {

std::string canonical_visit_payload(std::int64_t seq, Timestamp visited_at, const Pid& pid)
{
    return "visit|" + std::to_string(seq) + "|" + std::to_string(visited_at) + "|" + pid.str();
}

std::string visit_hash(std::string_view prev_hash, std::int64_t seq, Timestamp visited_at, const Pid& pid)
{
    std::string input(prev_hash);
    input += '|';
    input += canonical_visit_payload(seq, visited_at, pid);
    return crypto::sha256_hex(input);
}

void append_visit(VisitorLog& log, const Pid& pid, Timestamp visited_at)
{
    if (!log.chain.empty() && visited_at < log.chain.back().visited_at)
        throw Error(ErrorCode::OutOfOrderVisit, "visit at " + std::to_string(visited_at) +
                                                    " precedes " + std::to_string(log.chain.back().visited_at));
    const std::int64_t seq = log.chain.empty() ? 1 : log.chain.back().seq + 1;
    std::string prev = log.chain.empty() ? kGenesisHash : log.chain.back().entry_hash;
    std::string hash = visit_hash(prev, seq, visited_at, pid);
    log.chain.push_back({seq, visited_at, pid, std::move(prev), hash});
    log.head = std::move(hash);
}

ChainStatus verify_chain(const VisitorLog& log)
{
    const std::string* expected_prev = &kGenesisHash;
    for (std::size_t i = 0; i < log.chain.size(); ++i) {
        const auto& v = log.chain[i];
        const auto expected_seq = static_cast<std::int64_t>(i + 1);
        if (v.seq != expected_seq || v.prev_hash != *expected_prev ||
            visit_hash(v.prev_hash, v.seq, v.visited_at, v.pid) != v.entry_hash)
            return TamperedAt{expected_seq};
        expected_prev = &v.entry_hash;
    }
    if (log.head != *expected_prev)
        return TamperedAt{static_cast<std::int64_t>(log.chain.size() + 1)};
    return ChainIntact{};
}

const char* to_string(EvidenceVerdict v)
{
    switch (v) {
    case EvidenceVerdict::VisitAndCertified: return "VISIT-AND-CERTIFIED";
    case EvidenceVerdict::NoVisitRecorded: return "NO-VISIT-RECORDED";
    case EvidenceVerdict::NotCertifiedSick: return "NOT-CERTIFIED-SICK";
    }
    return "?";
}

EvidenceVerdict evidence_query(const VisitorLog& log, const Pid& claimant_pid, Timestamp from,
                               Timestamp to, const std::function<bool(const Pid&)>& repo_query)
{
    if (from > to)
        throw Error(ErrorCode::InvalidWindow, "window start after end");
    bool visited = false;
    for (const auto& v : log.chain) {
        if (v.pid == claimant_pid && v.visited_at >= from && v.visited_at <= to) {
            visited = true;
            break;
        }
    }
    if (!visited)
        return EvidenceVerdict::NoVisitRecorded;
    return repo_query(claimant_pid) ? EvidenceVerdict::VisitAndCertified : EvidenceVerdict::NotCertifiedSick;
}

std::vector<std::string> format_chain(const VisitorLog& log)
{
    std::vector<std::string> out;
    out.reserve(log.chain.size() * 2);
    for (const auto& v : log.chain) {
        out.push_back(canonical_visit_payload(v.seq, v.visited_at, v.pid));
        out.push_back("hash|" + v.entry_hash);
    }
    return out;
}

std::string format_head(const VisitorLog& log)
{
    return "head|" + log.head;
}

VisitorLog parse_chain(const std::vector<std::string>& chain_lines, std::string_view head_line,
                       std::string business_id)
{
    VisitorLog log{std::move(business_id), {}, kGenesisHash};
    std::vector<std::string> lines;
    for (const auto& l : chain_lines)
        if (!l.empty())
            lines.push_back(l);
    if (lines.size() % 2 != 0)
        throw_parse_error("chain file must alternate visit| and hash| lines");
    std::string prev = kGenesisHash;
    for (std::size_t i = 0; i < lines.size(); i += 2) {
        auto f = split(lines[i], '|');
        if (f.size() != 4 || f[0] != "visit")
            throw_parse_error("bad visit line: '" + lines[i] + "'");
        if (lines[i + 1].rfind("hash|", 0) != 0)
            throw_parse_error("bad hash line: '" + lines[i + 1] + "'");
        std::string hash = lines[i + 1].substr(5);
        log.chain.push_back({parse_int(f[1]), parse_int(f[2]), Pid(f[3]), prev, hash});
        prev = hash;
    }
    if (head_line.substr(0, 5) != "head|")
        throw_parse_error("bad head line");
    log.head = std::string(head_line.substr(5));
    return log;
}

}  // namespace ctrace
