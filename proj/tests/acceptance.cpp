// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include "ctrace/bizlog.hpp"
#include "ctrace/certificates.hpp"
#include "ctrace/contactlog.hpp"
#include "ctrace/encounter.hpp"
#include "ctrace/identity.hpp"
#include "ctrace/notify.hpp"
#include "ctrace/rng.hpp"
#include "ctrace/sim.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <unistd.h>

using namespace ctrace;

namespace {

struct Check {
    bool ok = true;
    std::string detail;
};

std::string scenario_path(const std::string& name)
{
    return std::string(CTRACE_SOURCE_DIR) + "/scenarios/" + name;
}

LabIdentity seeded_lab(const std::string& id, unsigned char fill)
{
    std::array<unsigned char, 32> seed{};
    seed.fill(fill);
    return {id, crypto::keypair_from_seed(seed)};
}

std::string random_text(Rng& rng, std::size_t min_len, std::size_t max_len)
{
    std::string s;
    const auto len = min_len + rng.below(max_len - min_len + 1);
    for (std::size_t i = 0; i < len; ++i)
        s.push_back(static_cast<char>(0x20 + rng.below(0x5f)));
    return s;
}

// --- 1 ---------------------------------------------------------------------
Check interop()
{
    Check c;
    sim::Simulation x(sim::load_scenario(scenario_path("interop_x.scn")));
    x.run_to_completion();
    const auto x_log = x.agents()[0].device.log.size();
    const auto y_log = x.agents()[1].device.log.size();
    const auto& y_verdicts = x.verdicts_at(1);
    c.ok = x_log == 1 && y_log == 0 && y_verdicts == std::vector{VerdictStatus::RejectedNoMatchingContact};

    sim::Simulation y(sim::load_scenario(scenario_path("interop_y.scn")));
    y.run_to_completion();
    const auto x_received = y.notifications_received(0);
    c.ok = c.ok && x_received == 0 && y.agents()[1].device.log.empty();

    std::ostringstream d;
    d << "X log " << x_log << ", Y log " << y_log << ", Y verdict "
      << (y_verdicts.empty() ? "none" : to_string(y_verdicts.front())) << ", X received after Y diagnosis "
      << x_received;
    c.detail = d.str();
    return c;
}

// --- 2 ---------------------------------------------------------------------
Check soundness()
{
    Check c;
    std::ostringstream d;
    auto s = sim::load_scenario(scenario_path("reference.scn"));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        s.rng_seed = seed;
        auto m = sim::run_scenario(s).metrics;
        c.ok = c.ok && m.true_exposures > 0 && m.missed == 0 && m.notified_false == 0;
        d << (seed > 1 ? "; " : "") << "seed " << seed << ": exposures " << m.true_exposures << " missed "
          << m.missed << " false " << m.notified_false;
    }
    c.detail = d.str();
    return c;
}

// --- 3 ---------------------------------------------------------------------
Check fake_claims()
{
    const auto lab = seeded_lab("lab-a", 3);
    LabDirectory dir;
    dir.add(lab.lab_id, lab.keys.pub);
    Rng rng(303);
    std::size_t accepted_clean = 0, rejected_perturbed = 0;
    constexpr std::size_t kTrials = 1000;
    for (std::size_t i = 0; i < kTrials; ++i) {
        const Timestamp t = 1586000000 + static_cast<Timestamp>(rng.below(86400 * 10));
        InformationRecord a{generate_random_pid(rng), Pad("a" + std::to_string(i) + "@x"), t, random_text(rng, 1, 20)};
        InformationRecord b{generate_random_pid(rng), Pad("b" + std::to_string(i) + "@x"),
                            t + static_cast<Timestamp>(rng.below(5)), random_text(rng, 1, 20)};
        std::erase(a.local_location, '|');
        std::erase(b.local_location, '|');
        if (a.local_location.empty())
            a.local_location = "a";
        if (b.local_location.empty())
            b.local_location = "b";
        ContactLog a_log, b_log;
        append_entry(a_log, {a, b, t + 900, 900, 1});
        append_entry(b_log, {b, a, t + 900, 900, 1});
        auto cert = issue_certificate(lab, {a.pid}, Date::of(t).plus_days(2), Date::of(t).plus_days(-2));
        const auto n = build_notifications(a_log, {a.pid}, cert).at(0).second;

        if (verify_notification(n, b_log, dir).status == VerdictStatus::Accepted)
            ++accepted_clean;

        auto p = n;
        switch (i % 3) {
        case 0: p.sender_pid = generate_random_pid(rng); break;
        case 1: {
            const Seconds shift = kDefaultTimeToleranceS + 1 + static_cast<Seconds>(rng.below(100000));
            p.echoed_time += rng.bernoulli(0.5) ? shift : -shift;
            break;
        }
        case 2: p.echoed_location += static_cast<char>('a' + rng.below(26)); break;
        }
        if (!is_accepted(verify_notification(p, b_log, dir).status))
            ++rejected_perturbed;
    }
    Check c;
    c.ok = accepted_clean == kTrials && rejected_perturbed == kTrials;
    c.detail = "unperturbed accepted " + std::to_string(accepted_clean) + "/1000, perturbed rejected " +
               std::to_string(rejected_perturbed) + "/1000";
    return c;
}

// --- 4 ---------------------------------------------------------------------
Check certificate_integrity()
{
    const auto a = seeded_lab("lab-a", 4);
    const auto b = seeded_lab("lab-b", 5);
    LabDirectory dir;
    dir.add(a.lab_id, a.keys.pub);
    dir.add(b.lab_id, b.keys.pub);
    Rng rng(404);
    std::size_t verified = 0, bad = 0, unknown = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<Pid> pids;
        const auto n = 1 + rng.below(4);
        for (std::uint64_t k = 0; k < n; ++k)
            pids.push_back(generate_random_pid(rng));
        const Date test = Date(18353 + static_cast<std::int64_t>(rng.below(60)));
        auto cert = issue_certificate(i % 2 ? a : b, pids, test, test.plus_days(-static_cast<std::int64_t>(rng.below(5))));
        std::string payload = canonical_certificate_payload(cert);
        std::string sig = cert.signature;
        if (verify_signed_payload(payload, sig, dir) != CertificateStatus::Verified)
            return {false, "unmutated certificate failed to verify"};
        const auto pos = rng.below(payload.size() + sig.size());
        const auto flip = static_cast<char>(1 + rng.below(255));
        (pos < payload.size() ? payload[pos] : sig[pos - payload.size()]) ^= flip;
        switch (verify_signed_payload(payload, sig, dir)) {
        case CertificateStatus::Verified: ++verified; break;
        case CertificateStatus::BadSignature: ++bad; break;
        case CertificateStatus::UnknownLab: ++unknown; break;
        }
    }
    return {verified == 0, "verified " + std::to_string(verified) + ", bad-signature " + std::to_string(bad) +
                               ", unknown-lab " + std::to_string(unknown)};
}

// --- 5 ---------------------------------------------------------------------
Check pid_swap()
{
    sim::Scenario s = sim::load_scenario(scenario_path("reference.scn"));
    s.rng_seed = 5;
    s.forge_pid_swap = 200;
    auto m = sim::run_scenario(s).metrics;
    auto count = [&](const std::string& key) {
        auto it = m.verdicts.find("pid_swap." + key);
        return it == m.verdicts.end() ? std::size_t{0} : it->second;
    };
    const auto accepted = count("ACCEPTED") + count("ACCEPTED-UNCERTIFIED");
    const auto no_contact = count("REJECTED-NO-MATCHING-CONTACT");
    const auto not_covered = count("REJECTED-PID-NOT-IN-CERTIFICATE");
    Check c;
    c.ok = accepted == 0 && m.accepted_forgeries == 0 && no_contact > 0 && not_covered > 0 &&
           m.rejected_forgeries == 200;
    c.detail = "accepted " + std::to_string(accepted) + ", no-matching-contact " + std::to_string(no_contact) +
               ", pid-not-in-certificate " + std::to_string(not_covered) + ", other " +
               std::to_string(m.rejected_forgeries - no_contact - not_covered);
    return c;
}

// --- 6 ---------------------------------------------------------------------
Check trusted_pids()
{
    Rng rng(606);
    std::size_t proven = 0, refused = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto name = random_text(rng, 1, 30);
        const auto phrase = random_text(rng, 1, 30);
        const auto c = generate_trusted_pid(name, phrase);
        if (prove_pid_ownership(name, phrase, c.pid))
            ++proven;
        auto mutate = [&](std::string s) {
            const auto pos = rng.below(s.size());
            char ch;
            do
                ch = static_cast<char>(0x20 + rng.below(0x5f));
            while (ch == s[pos]);
            s[pos] = ch;
            return s;
        };
        if (!prove_pid_ownership(mutate(name), phrase, c.pid) && !prove_pid_ownership(name, mutate(phrase), c.pid))
            ++refused;
    }
    return {proven == 1000 && refused == 1000,
            "round-trip " + std::to_string(proven) + "/1000, mutated refused " + std::to_string(refused) + "/1000"};
}

// --- 7 ---------------------------------------------------------------------
Check hash_chains()
{
    Rng rng(707);
    std::size_t exact = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(500);
        VisitorLog log{"shop", {}, kGenesisHash};
        for (std::size_t i = 0; i < n; ++i)
            append_visit(log, generate_random_pid(rng), 1585699200 + static_cast<Timestamp>(i * 30));
        const std::size_t k = rng.below(n);
        auto& v = log.chain[k];
        std::int64_t expected = static_cast<std::int64_t>(k + 1);
        switch (rng.below(5)) {
        case 0: v.pid = generate_random_pid(rng); break;
        case 1: v.visited_at += 1 + static_cast<Timestamp>(rng.below(100)); break;
        case 2: v.entry_hash[rng.below(64)] ^= 1; break;
        case 3: log.chain.erase(log.chain.begin() + static_cast<std::ptrdiff_t>(k)); break;
        case 4:
            log.head[rng.below(64)] ^= 1;
            expected = static_cast<std::int64_t>(n + 1);
            break;
        }
        auto status = verify_chain(log);
        if (auto* t = std::get_if<TamperedAt>(&status); t && t->seq == expected)
            ++exact;
    }
    return {exact == 100, "exact first tampered seq in " + std::to_string(exact) + "/100 trials"};
}

// --- 8 ---------------------------------------------------------------------
Check retention()
{
    const Timestamp now = 1590000000;
    const Timestamp cutoff = now - 21 * kSecondsPerDay;
    Rng rng(808);
    ContactLog log;
    std::vector<Timestamp> times;
    for (int i = 0; i < 200; ++i)
        times.push_back(cutoff - 3 * kSecondsPerDay + static_cast<Timestamp>(rng.below(6 * kSecondsPerDay)));
    times.push_back(cutoff);
    times.push_back(cutoff - 1);
    std::sort(times.begin(), times.end());
    std::size_t expected_kept = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        append_entry(log, {{Pid("me"), Pad("me@x"), times[i] - 900, "here"},
                           {Pid("peer" + std::to_string(i)), Pad("p@x"), times[i] - 900, "there"},
                           times[i],
                           900,
                           1});
        if (times[i] >= cutoff)
            ++expected_kept;
    }
    prune(log, now);
    bool ok = log.size() == expected_kept &&
              std::all_of(log.entries().begin(), log.entries().end(),
                          [&](const LogEntry& e) { return e.recorded_at >= cutoff; });
    auto once = log;
    prune(log, now);
    ok = ok && log == once;
    return {ok, "kept " + std::to_string(log.size()) + " of " + std::to_string(times.size()) + " (expected " +
                    std::to_string(expected_kept) + "), second prune " + (log == once ? "no-op" : "changed log")};
}

// --- 9 ---------------------------------------------------------------------
Check determinism()
{
    const auto dir = std::filesystem::temp_directory_path() / ("ctrace-acceptance-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    auto s = sim::load_scenario(scenario_path("attacks.scn"));
    std::vector<std::string> files;
    for (int run = 0; run < 2; ++run) {
        auto r = sim::run_scenario(s);
        const auto m = (dir / ("metrics" + std::to_string(run))).string();
        const auto t = (dir / ("trace" + std::to_string(run))).string();
        write_lines(m, sim::format_metrics(r.metrics));
        write_lines(t, r.trace);
        files.push_back(m);
        files.push_back(t);
    }
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    const auto m0 = slurp(files[0]), t0 = slurp(files[1]);
    const bool ok = m0 == slurp(files[2]) && t0 == slurp(files[3]) && !t0.empty();
    std::filesystem::remove_all(dir);
    return {ok, "metrics " + std::to_string(m0.size()) + " bytes, trace " + std::to_string(t0.size()) +
                    " bytes, identical: " + (ok ? "yes" : "no")};
}

// --- 10 --------------------------------------------------------------------
Check path_loss()
{
    double worst = 0;
    for (double n : {1.8, 2.0, 3.0}) {
        ChannelModel ch;
        ch.path_loss_exponent = n;
        for (double d : {0.1, 0.5, 1.0, 2.25, 3.0, 10.0, 100.0}) {
            const double back = rssi_to_distance(distance_to_rssi(d, ch, 0.0, false), ch);
            worst = std::max(worst, std::abs(back - d) / d);
        }
    }
    std::ostringstream d;
    d << "max relative error " << std::scientific << std::setprecision(2) << worst << " (limit 1e-9)";
    return {worst <= 1e-9, d.str()};
}

}  // namespace

int main()
{
    struct Criterion {
        int id;
        const char* title;
        double limit_s;
        std::function<Check()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "interop: 3 m policy logs, 1.5 m policy rejects", 1.0, interop},
        {2, "noiseless soundness, 50 agents x 5 seeds", 30.0, soundness},
        {3, "fake-claim filter, 1000 perturbed / 1000 clean", 10.0, fake_claims},
        {4, "certificate integrity, 1000 byte mutations", 10.0, certificate_integrity},
        {5, "PID-swap forgeries in simulation", 10.0, pid_swap},
        {6, "trusted-PID ownership, 1000 pairs", 5.0, trusted_pids},
        {7, "hash-chain tamper detection, 100 chains", 5.0, hash_chains},
        {8, "retention boundary and idempotent prune", 1.0, retention},
        {9, "determinism of metrics and trace", 60.0, determinism},
        {10, "path-loss round trip", 1.0, path_loss},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Check result;
        try {
            result = c.run();
        } catch (const std::exception& e) {
            result = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.limit_s;
        const bool pass = result.ok && in_time;
        failures += pass ? 0 : 1;
        std::cout << (pass ? "PASS" : "FAIL") << "  " << std::setw(2) << c.id << ". " << c.title << ": "
                  << result.detail << " [" << std::fixed << std::setprecision(2) << secs << " s / limit "
                  << std::setprecision(0) << c.limit_s << " s" << (in_time ? "" : ", too slow") << "]\n"
                  << std::defaultfloat;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? 0 : 1;
}
