#include "ctrace/contactlog.hpp"
#include "ctrace/rng.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include <unistd.h>

using namespace ctrace;

namespace {

constexpr Timestamp kT0 = 1585699200;

LogEntry entry(Timestamp recorded_at, const std::string& peer, const std::string& own_loc = "cafe",
               Timestamp own_time = kT0)
{
    return {{Pid("me"), Pad("me@x"), own_time, own_loc},
            {Pid(peer), Pad(peer + "@x"), own_time + 3, "their loc"},
            recorded_at,
            700,
            1};
}

std::filesystem::path temp_path(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("ctrace-test-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(ContactLogType, RetentionBounds)
{
    EXPECT_NO_THROW(ContactLog(14));
    EXPECT_NO_THROW(ContactLog(28));
    EXPECT_THROW(ContactLog(13), Error);
    EXPECT_THROW(ContactLog(29), Error);
    EXPECT_EQ(ContactLog().retention_days(), 21);
}

TEST(ContactLogType, AppendOrderingAndSelfContact)
{
    ContactLog log;
    append_entry(log, entry(100, "a"));
    append_entry(log, entry(100, "b"));
    EXPECT_THROW(append_entry(log, entry(99, "c")), Error);
    EXPECT_THROW(append_entry(log, entry(200, "me")), Error);
    auto bad = entry(300, "d");
    bad.own_record.local_location = "x|y";
    EXPECT_THROW(append_entry(log, bad), Error);
    EXPECT_EQ(log.size(), 2u);
}

TEST(Prune, BoundaryIsInclusive)
{
    const Timestamp now = kT0 + 30 * kSecondsPerDay;
    const Timestamp cutoff = now - 21 * kSecondsPerDay;
    ContactLog log;
    append_entry(log, entry(cutoff - 1, "stale"));
    append_entry(log, entry(cutoff, "edge"));
    append_entry(log, entry(cutoff + 1, "fresh"));
    prune(log, now);
    ASSERT_EQ(log.size(), 2u);
    EXPECT_EQ(log.entries()[0].peer_record.pid, Pid("edge"));
    auto once = log;
    prune(log, now);
    EXPECT_EQ(log, once);
}

TEST(Matching, PidLocationAndTolerance)
{
    ContactLog log;
    append_entry(log, entry(kT0 + 900, "peer", "cafe", kT0));
    EXPECT_TRUE(find_matching_contact(log, Pid("peer"), kT0 + 300, "cafe"));
    EXPECT_TRUE(find_matching_contact(log, Pid("peer"), kT0 - 300, "cafe"));
    EXPECT_FALSE(find_matching_contact(log, Pid("peer"), kT0 + 301, "cafe"));
    EXPECT_FALSE(find_matching_contact(log, Pid("peer"), kT0, "Cafe"));
    EXPECT_FALSE(find_matching_contact(log, Pid("other"), kT0, "cafe"));
    EXPECT_TRUE(find_matching_contact(log, Pid("peer"), kT0 + 1000, "cafe", 1000));
}

TEST(Statistics, CountsByLocationAndPeer)
{
    ContactLog log;
    append_entry(log, entry(1, "a", "cafe"));
    append_entry(log, entry(2, "b", "cafe"));
    append_entry(log, entry(3, "a", "office"));
    auto s = exposure_statistics(log);
    EXPECT_EQ(s.entries, 3u);
    EXPECT_EQ(s.distinct_peers, 2u);
    EXPECT_EQ(s.by_location, (std::map<std::string, std::size_t>{{"cafe", 2}, {"office", 1}}));
    EXPECT_EQ(exposure_statistics(ContactLog{}).entries, 0u);
}

TEST(EntryFormat, ExactLine)
{
    EXPECT_EQ(format_log_entry(entry(5, "a")),
              "entry|5|700|1|OWN|me|me@x|1585699200|cafe|PEER|a|a@x|1585699203|their%20loc");
}

TEST(EntryFormat, RandomRoundTrip)
{
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
        std::string loc;
        const auto len = rng.below(12);
        for (std::uint64_t k = 0; k < len; ++k)
            loc.push_back(static_cast<char>(0x20 + rng.below(0x5f)));
        std::erase(loc, '|');
        auto e = entry(static_cast<Timestamp>(rng.below(1u << 30)), "p" + std::to_string(i), loc,
                       static_cast<Timestamp>(rng.below(1u << 30)));
        e.dwell_s = static_cast<Seconds>(rng.below(5000));
        const auto line = format_log_entry(e);
        EXPECT_EQ(parse_log_entry(line), e);
    }
    EXPECT_THROW(parse_log_entry("entry|1|2|3"), Error);
    EXPECT_THROW(parse_log_entry("entry|01|700|1|OWN|me|me@x|1|cafe|PEER|a|a@x|1|x"), Error);
}

TEST(Persistence, PlainAndEncrypted)
{
    ContactLog log;
    append_entry(log, entry(10, "a"));
    append_entry(log, entry(20, "b"));
    const auto plain = temp_path("plain.log").string();
    save_log(plain, log);
    EXPECT_EQ(load_log(plain), log);

    const auto enc = temp_path("enc.log").string();
    save_log(enc, log, PassphraseTransform("hunter2"));
    EXPECT_EQ(load_log(enc, 21, PassphraseTransform("hunter2")), log);
    EXPECT_THROW(load_log(enc, 21, PassphraseTransform("hunter3")), Error);
    EXPECT_THROW(load_log(temp_path("missing.log").string()), Error);
}

TEST(Persistence, EmptyTextIsEmptyLog)
{
    EXPECT_TRUE(parse_log("").empty());
    EXPECT_TRUE(parse_log("\n\n").empty());
}
