#include "ctrace/notify.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include <unistd.h>

using namespace ctrace;

namespace {

constexpr Timestamp kMeet = 1586505600;  // 2020-04-10T08:00:00Z

struct TwoDevices {
    LabIdentity lab;
    LabDirectory dir;
    InformationRecord alice{Pid("alice-1"), Pad("alice@x"), kMeet, "alice-loc"};
    InformationRecord bob{Pid("bob-1"), Pad("bob@x"), kMeet + 4, "bob-loc"};
    ContactLog alice_log;
    ContactLog bob_log;

    TwoDevices()
    {
        std::array<unsigned char, 32> seed{};
        seed.fill(7);
        lab = {"lab-a", crypto::keypair_from_seed(seed)};
        dir.add(lab.lab_id, lab.keys.pub);
        append_entry(alice_log, {alice, bob, kMeet + 700, 700, 1});
        append_entry(bob_log, {bob, alice, kMeet + 700, 700, 1});
    }

    CertificateOfInfection cert(std::vector<Pid> pids = {Pid("alice-1")}) const
    {
        return issue_certificate(lab, std::move(pids), Date::parse("2020-04-12"), Date::parse("2020-04-09"));
    }
};

std::filesystem::path temp_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() /
               ("ctrace-notify-" + std::to_string(::getpid()) + "-" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST(Build, AddressesPeerAndEchoesPeerRecord)
{
    TwoDevices w;
    auto built = build_notifications(w.alice_log, {Pid("alice-1")}, w.cert());
    ASSERT_EQ(built.size(), 1u);
    EXPECT_EQ(built[0].first, Pad("bob@x"));
    EXPECT_EQ(built[0].second.sender_pid, Pid("alice-1"));
    EXPECT_EQ(built[0].second.echoed_time, kMeet + 4);
    EXPECT_EQ(built[0].second.echoed_location, "bob-loc");
    EXPECT_TRUE(build_notifications(w.alice_log, {Pid("other")}, std::nullopt).empty());
}

TEST(Build, EveryNotifiedPidMustBeCertified)
{
    TwoDevices w;
    EXPECT_THROW(build_notifications(w.alice_log, {Pid("alice-1")}, w.cert({Pid("alice-2")})), Error);
    EXPECT_NO_THROW(build_notifications(w.alice_log, {Pid("alice-1")}, std::nullopt));
}

TEST(Verify, GenuineNotificationAccepted)
{
    TwoDevices w;
    auto [pad, n] = build_notifications(w.alice_log, {Pid("alice-1")}, w.cert()).at(0);
    auto v = verify_notification(n, w.bob_log, w.dir);
    EXPECT_EQ(v.status, VerdictStatus::Accepted);
    ASSERT_TRUE(v.matched_entry);
    EXPECT_EQ(*v.matched_entry, w.bob_log.entries()[0]);
}

TEST(Verify, PerturbedFieldsFindNoContact)
{
    TwoDevices w;
    auto n = build_notifications(w.alice_log, {Pid("alice-1")}, w.cert()).at(0).second;
    auto m = n;
    m.sender_pid = Pid("alice-2");
    EXPECT_EQ(verify_notification(m, w.bob_log, w.dir).status, VerdictStatus::RejectedNoMatchingContact);
    m = n;
    m.echoed_time += 301;
    EXPECT_EQ(verify_notification(m, w.bob_log, w.dir).status, VerdictStatus::RejectedNoMatchingContact);
    m = n;
    m.echoed_time += 300;
    EXPECT_EQ(verify_notification(m, w.bob_log, w.dir).status, VerdictStatus::Accepted);
    m = n;
    m.echoed_location = "alice-loc";
    EXPECT_EQ(verify_notification(m, w.bob_log, w.dir).status, VerdictStatus::RejectedNoMatchingContact);
}

TEST(Verify, NoContactIsTerminalInEveryMode)
{
    TwoDevices w;
    Notification n{Pid("stranger"), kMeet, "bob-loc", std::nullopt};
    for (auto mode : {DeploymentMode::CertificateRequired, DeploymentMode::CertificateOptional})
        EXPECT_EQ(verify_notification(n, w.bob_log, w.dir, {mode}).status, VerdictStatus::RejectedNoMatchingContact);
}

TEST(Verify, MissingCertificateDependsOnMode)
{
    TwoDevices w;
    auto n = build_notifications(w.alice_log, {Pid("alice-1")}, std::nullopt).at(0).second;
    EXPECT_EQ(verify_notification(n, w.bob_log, w.dir, {DeploymentMode::CertificateOptional}).status,
              VerdictStatus::AcceptedUncertified);
    EXPECT_EQ(verify_notification(n, w.bob_log, w.dir, {DeploymentMode::CertificateRequired}).status,
              VerdictStatus::RejectedBadSignature);
}

TEST(Verify, CertificateProblems)
{
    TwoDevices w;
    auto n = build_notifications(w.alice_log, {Pid("alice-1")}, w.cert()).at(0).second;
    EXPECT_EQ(verify_notification(n, w.bob_log, LabDirectory{}).status, VerdictStatus::RejectedUnknownLab);

    auto forged = n;
    forged.certificate->pids.push_back(Pid("mallory"));
    EXPECT_EQ(verify_notification(forged, w.bob_log, w.dir).status, VerdictStatus::RejectedBadSignature);

    auto swapped = n;
    swapped.certificate = w.cert({Pid("alice-2")});
    EXPECT_EQ(verify_notification(swapped, w.bob_log, w.dir).status, VerdictStatus::RejectedPidNotInCertificate);
}

TEST(Verify, ContactOutsideCertifiedWindow)
{
    TwoDevices w;
    auto late = issue_certificate(w.lab, {Pid("alice-1")}, Date::parse("2020-04-20"), Date::parse("2020-04-15"));
    auto n = build_notifications(w.alice_log, {Pid("alice-1")}, late).at(0).second;
    EXPECT_EQ(verify_notification(n, w.bob_log, w.dir).status, VerdictStatus::RejectedPidNotInCertificate);

    auto early = issue_certificate(w.lab, {Pid("alice-1")}, Date::parse("2020-04-09"), Date::parse("2020-04-05"));
    n.certificate = early;
    EXPECT_EQ(verify_notification(n, w.bob_log, w.dir).status, VerdictStatus::RejectedPidNotInCertificate);
    EXPECT_EQ(verify_notification(n, w.bob_log, w.dir, {DeploymentMode::CertificateRequired, 300, 1}).status,
              VerdictStatus::Accepted);
}

TEST(Wire, NotificationRoundTrip)
{
    TwoDevices w;
    std::vector<std::string> lines;
    Notification a{Pid("a"), 5, "room 1|2", w.cert()};
    Notification b{Pid("b"), -7, "", std::nullopt};
    for (const auto& n : {a, b}) {
        auto l = format_notification(n);
        lines.insert(lines.end(), l.begin(), l.end());
    }
    EXPECT_EQ(lines[0], "notif|v1|a|5|room%201%7C2");
    EXPECT_EQ(parse_notifications(lines), (std::vector<Notification>{a, b}));
    EXPECT_THROW(parse_notifications({"notif|v2|a|5|x"}), Error);
    EXPECT_THROW(parse_notifications({lines[0], lines[1]}), Error);
}

TEST(Mailbox, InMemoryDeliverAndPoll)
{
    InMemoryMailboxStore store;
    Notification n{Pid("a"), 1, "x", std::nullopt};
    deliver(store, "bob@x", n);
    deliver(store, "bob@x", n);
    EXPECT_EQ(store.pending(Pad("bob@x")), 2u);
    EXPECT_EQ(poll_mailbox(store, "bob@x").size(), 2u);
    EXPECT_TRUE(poll_mailbox(store, "bob@x").empty());
    EXPECT_TRUE(poll_mailbox(store, "nobody@x").empty());
    EXPECT_TRUE(poll_mailbox(store, "not a pad").empty());
    EXPECT_THROW(deliver(store, "not a pad", n), Error);
}

TEST(Mailbox, FileStorePersistsAcrossInstances)
{
    auto root = temp_dir("persist");
    Notification n{Pid("a"), 1, "x y", std::nullopt};
    {
        FileMailboxStore store(root);
        deliver(store, "bob/../@x", n);
        deliver(store, "bob/../@x", n);
    }
    FileMailboxStore store(root);
    EXPECT_EQ(store.path_for(Pad("bob/../@x")).parent_path(), root);
    EXPECT_EQ(store.pending(Pad("bob/../@x")), 2u);
    EXPECT_EQ(poll_mailbox(store, "bob/../@x"), (std::vector<Notification>{n, n}));
    EXPECT_EQ(store.pending(Pad("bob/../@x")), 0u);
    std::filesystem::remove_all(root);
}

TEST(Mailbox, ConcurrentWritersAndReaderSeeWholeMessages)
{
    auto root = temp_dir("concurrent");
    FileMailboxStore store(root);
    TwoDevices w;
    const Notification n{Pid("a"), 1, "x", w.cert()};
    constexpr int kWriters = 4;
    constexpr int kEach = 50;
    std::vector<std::thread> writers;
    for (int i = 0; i < kWriters; ++i)
        writers.emplace_back([&] {
            FileMailboxStore own(root);  // separate instance, shared file lock
            for (int k = 0; k < kEach; ++k)
                deliver(own, "bob@x", n);
        });
    std::size_t received = 0;
    while (received < kWriters * kEach) {
        for (const auto& got : poll_mailbox(store, "bob@x")) {
            EXPECT_EQ(got, n);
            ++received;
        }
    }
    for (auto& t : writers)
        t.join();
    EXPECT_EQ(received, static_cast<std::size_t>(kWriters * kEach));
    std::filesystem::remove_all(root);
}
