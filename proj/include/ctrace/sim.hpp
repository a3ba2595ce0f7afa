#pragma once

#include "ctrace/certificates.hpp"
#include "ctrace/contactlog.hpp"
#include "ctrace/encounter.hpp"
#include "ctrace/identity.hpp"
#include "ctrace/notify.hpp"
#include "ctrace/rng.hpp"

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace ctrace::sim {

enum class Health { Susceptible, Infectious, Diagnosed };
enum class Mobility { RandomWaypoint, Static };
enum class ForgeryKind { FakeContactClaim, PidSwap, BogusCertificate };

const char* to_string(ForgeryKind k);

struct Position {
    double x = 0.0;
    double y = 0.0;
};

struct Scenario {
    double world_width_m = 100.0;
    double world_height_m = 100.0;
    std::size_t n_agents = 50;
    std::size_t initial_infectious = 1;
    std::vector<std::size_t> initial_infectious_ids;  // overrides the random pick when set

    Mobility mobility = Mobility::RandomWaypoint;
    std::vector<Position> positions;  // initial positions; random when empty
    double speed_min_mps = 0.5;
    double speed_max_mps = 1.5;
    Seconds pause_min_s = 0;
    Seconds pause_max_s = 300;

    Seconds beacon_interval_s = kDefaultBeaconIntervalS;
    Seconds gap_timeout_s = kDefaultGapTimeoutS;
    ChannelModel channel;
    double body_block_probability = 0.0;
    double radio_floor_dbm = -100.0;  // below this no packet is exchanged

    // Ground-truth exposure rule.
    Meters infection_radius_m = 3.0;
    Seconds infection_exposure_s = 600;
    double transmission_probability = 0.5;

    Seconds diagnosis_delay_s = 3600;
    Seconds delivery_delay_s = 120;
    int infectious_lookback_days = 2;
    int post_test_margin_days = 0;
    bool issue_certificates = true;

    Seconds duration_s = 4 * 3600;
    Timestamp start_time = 1585699200;  // 2020-04-01T00:00:00Z
    std::uint64_t rng_seed = 1;

    SignificancePolicy policy = default_policy_v1();
    std::map<std::size_t, SignificancePolicy> agent_policies;
    DeploymentMode mode = DeploymentMode::CertificateRequired;
    int retention_days = kDefaultRetentionDays;
    Seconds time_tolerance_s = kDefaultTimeToleranceS;
    Seconds location_bucket_s = 900;
    Seconds clock_skew_max_s = 0;
    Seconds pid_rotation_s = 0;  // 0 disables mid-run rotation

    std::size_t forge_fake_contact = 0;
    std::size_t forge_pid_swap = 0;
    std::size_t forge_bogus_certificate = 0;
    std::optional<Seconds> forgery_at_s;  // defaults to 3/4 of the contact phase
};

/// Throws InvalidScenario.
void validate(const Scenario& s);

/* Flat `key = value` text, '#' comments. Keys mirror the Scenario fields;
   see scenarios/README.md. Throws InvalidScenario on unknown keys or bad values. */
Scenario parse_scenario(const std::vector<std::string>& lines);
Scenario load_scenario(const std::string& path);

struct SimMetrics {
    // Pair-level detection quality against ground truth.
    std::size_t true_exposures = 0;
    std::size_t notified_true = 0;
    std::size_t notified_false = 0;
    std::size_t missed = 0;
    // Injected attacks.
    std::size_t rejected_forgeries = 0;
    std::size_t accepted_forgeries = 0;
    // Genuine notification accounting: built == accepted + rejected + pending.
    std::size_t notifications_built = 0;
    std::size_t notifications_accepted = 0;
    std::size_t notifications_rejected = 0;
    std::size_t notifications_pending = 0;
    std::size_t duplicate_accepts = 0;
    std::size_t infections = 0;
    std::size_t diagnoses = 0;
    // "<genuine|kind>.<VERDICT>" -> count
    std::map<std::string, std::size_t> verdicts;

    bool operator==(const SimMetrics&) const = default;
};

/// `metric|<name>|<value>` lines in a fixed order.
std::vector<std::string> format_metrics(const SimMetrics& m);

struct Device {
    IdentityPeriod identity;
    SessionTable sessions;
    ContactLog log;
    SignificancePolicy policy;
    Seconds clock_skew_s = 0;
};

struct Agent {
    std::size_t id = 0;
    Device device;
    Position position;
    Position waypoint;
    double speed_mps = 0.0;
    Seconds pause_left_s = 0;
    Health health = Health::Susceptible;
    std::optional<Timestamp> infected_at;   // simulation seconds
    std::optional<Timestamp> diagnosed_at;  // simulation seconds
};

/* Deterministic discrete-time world. Each step advances one second:
   mobility, beaconing on multiples of the beacon interval, session expiry,
   diagnoses (certificate issue and notification build), transport delivery,
   and mailbox polling with verification. The contact phase lasts duration_s;
   afterwards agents no longer meet and the run drains pending diagnoses and
   deliveries. */
class Simulation {
public:
    explicit Simulation(Scenario scenario);

    void step();
    /// Advances dt_s one-second steps; dt_s must be positive.
    void step_world(Seconds dt_s);
    void run_to_completion();
    bool finished() const;

    /// Crafts `count` attack notifications now; they travel like genuine ones.
    void inject_forgeries(ForgeryKind kind, std::size_t count);

    SimMetrics metrics() const;
    const std::vector<std::string>& trace() const noexcept { return trace_; }

    Timestamp now() const noexcept { return t_; }
    const std::vector<Agent>& agents() const noexcept { return agents_; }
    const Scenario& scenario() const noexcept { return scenario_; }
    const LabDirectory& directory() const noexcept { return directory_; }
    /// Verdicts observed at one agent, in order.
    const std::vector<VerdictStatus>& verdicts_at(std::size_t agent) const { return verdicts_by_agent_[agent]; }
    std::size_t notifications_received(std::size_t agent) const { return received_by_agent_[agent]; }

private:
    struct InFlight {
        Timestamp deliver_at;
        Pad pad;
        Notification notification;
        std::optional<std::size_t> source;  // genuine sender
        std::optional<ForgeryKind> forgery;
    };

    struct Meta {
        std::optional<std::size_t> source;
        std::optional<ForgeryKind> forgery;
    };

    struct TruthSession {
        Timestamp start = 0;
        Timestamp last_seen = 0;
        Seconds run = 0;
        Seconds best = 0;
        bool prev_within = false;
        bool any_within = false;
        bool fired = false;
    };

    using TruthKey = std::tuple<std::size_t, std::size_t, Pid, Pid>;

    bool in_contact_phase() const noexcept { return t_ < scenario_.duration_s; }
    Timestamp local_time(const Agent& a) const noexcept;
    InformationRecord record_of(const Agent& a) const;

    void move_agents();
    void exchange_beacons();
    void observe_truth(std::size_t i, std::size_t j, Meters distance);
    void finalize_truth(const TruthKey& key, const TruthSession& s);
    void infect(std::size_t source, std::size_t target);
    void expire_sessions();
    void log_sessions(Agent& a, std::vector<ContactSession> closed);
    void diagnose(Agent& a);
    void deliver_due();
    void poll_and_verify();
    void schedule(Pad pad, Notification n, std::optional<std::size_t> source,
                  std::optional<ForgeryKind> forgery);
    void event(const std::string& kind, const std::string& detail);

    std::optional<std::size_t> agent_with_log(std::size_t avoid);

    Scenario scenario_;
    Rng rng_;
    Timestamp t_ = 0;
    std::vector<Agent> agents_;
    std::map<Pid, std::size_t> agent_by_pid_;
    std::map<Pad, std::size_t> agent_by_pad_;

    LabIdentity lab_;
    LabDirectory directory_;
    std::vector<CertificateOfInfection> issued_;
    std::vector<std::pair<Pad, Notification>> genuine_sent_;
    std::vector<std::size_t> genuine_sent_source_;

    std::multimap<Timestamp, std::size_t> diagnosis_queue_;
    std::deque<InFlight> in_flight_;
    InMemoryMailboxStore mailboxes_;
    std::map<Pad, std::deque<Meta>> mailbox_meta_;

    std::map<TruthKey, TruthSession> truth_open_;
    std::vector<std::tuple<std::size_t, std::size_t, Timestamp>> truth_significant_;

    std::set<std::pair<std::size_t, std::size_t>> accepted_pairs_;
    std::set<std::pair<std::size_t, std::string>> accepted_entries_;
    std::vector<std::vector<VerdictStatus>> verdicts_by_agent_;
    std::vector<std::size_t> received_by_agent_;
    SimMetrics counters_;
    bool forgeries_done_ = false;
    std::vector<std::string> trace_;
};

struct SimResult {
    SimMetrics metrics;
    std::vector<std::string> trace;
};

/// Validates, runs to completion, and returns metrics plus the event trace.
SimResult run_scenario(const Scenario& s);

}  // namespace ctrace::sim
