#include "ctrace/bizlog.hpp"
#include "ctrace/rng.hpp"

#include <gtest/gtest.h>

using namespace ctrace;

namespace {

VisitorLog chain_of(std::size_t n, Timestamp t0 = 1585699200)
{
    VisitorLog log{"shop", {}, kGenesisHash};
    for (std::size_t i = 0; i < n; ++i)
        append_visit(log, Pid("v" + std::to_string(i)), t0 + static_cast<Timestamp>(60 * i));
    return log;
}

std::int64_t tampered_seq(const VisitorLog& log)
{
    auto s = verify_chain(log);
    return std::holds_alternative<TamperedAt>(s) ? std::get<TamperedAt>(s).seq : 0;
}

}  // namespace

TEST(Chain, HashesMatchOracle)
{
    VisitorLog log{"shop", {}, kGenesisHash};
    append_visit(log, Pid("PIDA"), 1585699200);
    append_visit(log, Pid("PIDB"), 1585699260);
    // Frozen from an independent SHA-256 (Python hashlib).
    EXPECT_EQ(log.chain[0].entry_hash, "37cc7eb13f112bfb1d1f48175303dcab02b62c6a5c4b24427718ed1d94f26f2d");
    EXPECT_EQ(log.chain[1].entry_hash, "c50f7890c08e9547fdefdba40e56d83a4adfd342986928bec57d2b4b147b596a");
    EXPECT_EQ(log.chain[1].prev_hash, log.chain[0].entry_hash);
    EXPECT_EQ(log.head, log.chain[1].entry_hash);
    EXPECT_EQ(verify_chain(log), ChainStatus{ChainIntact{}});
}

TEST(Chain, EmptyAndOrdering)
{
    VisitorLog empty{"shop", {}, kGenesisHash};
    EXPECT_EQ(verify_chain(empty), ChainStatus{ChainIntact{}});
    auto log = chain_of(2);
    EXPECT_THROW(append_visit(log, Pid("late"), 0), Error);
    EXPECT_NO_THROW(append_visit(log, Pid("same"), log.chain.back().visited_at));
}

TEST(Chain, EachMutationKindReportsFirstAffectedSeq)
{
    Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(40);
        auto log = chain_of(n);
        const std::size_t k = rng.below(n);  // zero-based victim
        auto expected = static_cast<std::int64_t>(k + 1);
        switch (rng.below(7)) {
        case 0: log.chain[k].pid = Pid("evil"); break;
        case 1: log.chain[k].visited_at += 1; break;
        case 2: log.chain[k].entry_hash[0] = log.chain[k].entry_hash[0] == 'a' ? 'b' : 'a'; break;
        case 3: log.chain[k].prev_hash[5] = log.chain[k].prev_hash[5] == '0' ? '1' : '0'; break;
        case 4: log.chain[k].seq += 1; break;
        case 5: log.chain.erase(log.chain.begin() + static_cast<std::ptrdiff_t>(k)); break;
        case 6:
            log.head[0] = log.head[0] == 'f' ? 'e' : 'f';
            expected = static_cast<std::int64_t>(n + 1);
            break;
        }
        EXPECT_EQ(tampered_seq(log), expected) << "trial " << trial;
    }
}

TEST(Chain, RecomputedSuffixStillCaughtByHead)
{
    auto log = chain_of(5);
    // Rewrite entry 3 and re-hash everything after it, but leave the published head.
    log.chain[2].pid = Pid("evil");
    for (std::size_t i = 2; i < log.chain.size(); ++i) {
        auto& v = log.chain[i];
        v.prev_hash = log.chain[i - 1].entry_hash;
        v.entry_hash = visit_hash(v.prev_hash, v.seq, v.visited_at, v.pid);
    }
    EXPECT_EQ(tampered_seq(log), 6);
}

TEST(Files, RoundTripAndEditedPid)
{
    auto log = chain_of(3);
    auto lines = format_chain(log);
    ASSERT_EQ(lines.size(), 6u);
    EXPECT_EQ(lines[0], "visit|1|1585699200|v0");
    auto back = parse_chain(lines, format_head(log), "shop");
    EXPECT_EQ(back.chain, log.chain);
    EXPECT_EQ(back.head, log.head);

    lines[2] = "visit|2|1585699260|intruder";
    EXPECT_EQ(tampered_seq(parse_chain(lines, format_head(log))), 2);
    EXPECT_THROW(parse_chain({"visit|1|0|a"}, format_head(log)), Error);
    EXPECT_THROW(parse_chain(lines, "top|x"), Error);
}

TEST(Evidence, Verdicts)
{
    auto log = chain_of(3);
    auto sick = [](const Pid& p) { return p == Pid("v1"); };
    const Timestamp t1 = log.chain[1].visited_at;
    EXPECT_EQ(evidence_query(log, Pid("v1"), t1, t1, sick), EvidenceVerdict::VisitAndCertified);
    EXPECT_EQ(evidence_query(log, Pid("v1"), t1 + 1, t1 + 100, sick), EvidenceVerdict::NoVisitRecorded);
    EXPECT_EQ(evidence_query(log, Pid("v2"), 0, t1 + 1000, sick), EvidenceVerdict::NotCertifiedSick);
    EXPECT_EQ(evidence_query(log, Pid("stranger"), 0, t1 + 1000, sick), EvidenceVerdict::NoVisitRecorded);
    EXPECT_THROW(evidence_query(log, Pid("v1"), 10, 9, sick), Error);
}
