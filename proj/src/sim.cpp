#include "ctrace/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>

namespace ctrace::sim {

const char* to_string(ForgeryKind k)
{
    switch (k) {
    case ForgeryKind::FakeContactClaim: return "fake_contact";
    case ForgeryKind::PidSwap: return "pid_swap";
    case ForgeryKind::BogusCertificate: return "bogus_certificate";
    }
    return "?";
}

namespace {

[[noreturn]] void bad_scenario(const std::string& what)
{
    throw Error(ErrorCode::InvalidScenario, what);
}

}  // namespace

void validate(const Scenario& s)
{
    if (!(s.world_width_m > 0) || !(s.world_height_m > 0))
        bad_scenario("world size must be positive");
    if (s.n_agents == 0)
        bad_scenario("n_agents must be positive");
    if (s.initial_infectious > s.n_agents)
        bad_scenario("initial_infectious exceeds n_agents");
    for (auto id : s.initial_infectious_ids)
        if (id >= s.n_agents)
            bad_scenario("initial_infectious_ids out of range");
    if (!s.positions.empty() && s.positions.size() != s.n_agents)
        bad_scenario("positions must list every agent");
    for (const auto& p : s.positions)
        if (p.x < 0 || p.y < 0 || p.x > s.world_width_m || p.y > s.world_height_m)
            bad_scenario("position outside world bounds");
    if (!(s.speed_min_mps > 0) || s.speed_max_mps < s.speed_min_mps)
        bad_scenario("speed range must be positive and ordered");
    if (s.pause_min_s < 0 || s.pause_max_s < s.pause_min_s)
        bad_scenario("pause range must be non-negative and ordered");
    if (s.beacon_interval_s <= 0 || s.gap_timeout_s <= 0)
        bad_scenario("beacon interval and gap timeout must be positive");
    try {
        validate(s.channel);
        validate(s.policy);
        for (const auto& [id, p] : s.agent_policies) {
            if (id >= s.n_agents)
                bad_scenario("policy for unknown agent " + std::to_string(id));
            validate(p);
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidScenario)
            throw;
        bad_scenario(e.what());
    }
    if (s.body_block_probability < 0 || s.body_block_probability > 1)
        bad_scenario("body_block_probability must be in [0, 1]");
    if (!(s.infection_radius_m > 0))
        bad_scenario("infection radius must be positive");
    if (s.infection_exposure_s < 0)
        bad_scenario("infection exposure must be non-negative");
    if (s.transmission_probability < 0 || s.transmission_probability > 1)
        bad_scenario("transmission probability must be in [0, 1]");
    if (s.diagnosis_delay_s <= 0 || s.delivery_delay_s < 0 || s.duration_s <= 0)
        bad_scenario("diagnosis delay and duration must be positive, delivery delay non-negative");
    if (s.infectious_lookback_days < 0 || s.post_test_margin_days < 0)
        bad_scenario("lookback and margin days must be non-negative");
    if (s.retention_days < kMinRetentionDays || s.retention_days > kMaxRetentionDays)
        bad_scenario("retention_days must be 14-28");
    if (s.time_tolerance_s < 0 || s.location_bucket_s <= 0 || s.clock_skew_max_s < 0 || s.pid_rotation_s < 0)
        bad_scenario("tolerance, bucket, skew and rotation must be non-negative (bucket positive)");
    if (s.forgery_at_s && *s.forgery_at_s < 0)
        bad_scenario("forgery_at_s must be non-negative");
}

namespace {

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::size_t> parse_ids(const std::string& v)
{
    std::vector<std::size_t> out;
    if (v.empty())
        return out;
    for (const auto& f : split(v, ','))
        out.push_back(static_cast<std::size_t>(parse_int(trim(f))));
    return out;
}

std::vector<Position> parse_positions(const std::string& v)
{
    std::vector<Position> out;
    for (const auto& item : split(v, ';')) {
        auto xy = split(trim(item), ',');
        if (xy.size() != 2)
            throw_parse_error("position must be x,y");
        out.push_back({parse_double(trim(xy[0])), parse_double(trim(xy[1]))});
    }
    return out;
}

bool parse_bool(const std::string& v)
{
    if (v == "true" || v == "on" || v == "1")
        return true;
    if (v == "false" || v == "off" || v == "0")
        return false;
    throw_parse_error("not a boolean: '" + v + "'");
}

}  // namespace

Scenario parse_scenario(const std::vector<std::string>& lines)
{
    Scenario s;
    using Setter = std::function<void(Scenario&, const std::string&)>;
    auto count = [](std::size_t Scenario::*field) {
        return Setter([field](Scenario& sc, const std::string& v) {
            auto n = parse_int(v);
            if (n < 0)
                throw_parse_error("negative count");
            sc.*field = static_cast<std::size_t>(n);
        });
    };
    auto secs = [](Seconds Scenario::*field) {
        return Setter([field](Scenario& sc, const std::string& v) { sc.*field = parse_int(v); });
    };
    auto real = [](double Scenario::*field) {
        return Setter([field](Scenario& sc, const std::string& v) { sc.*field = parse_double(v); });
    };
    auto days = [](int Scenario::*field) {
        return Setter([field](Scenario& sc, const std::string& v) { sc.*field = static_cast<int>(parse_int(v)); });
    };
    const std::map<std::string, Setter, std::less<>> setters{
        {"world_width_m", real(&Scenario::world_width_m)},
        {"world_height_m", real(&Scenario::world_height_m)},
        {"n_agents", count(&Scenario::n_agents)},
        {"initial_infectious", count(&Scenario::initial_infectious)},
        {"initial_infectious_ids",
         [](Scenario& sc, const std::string& v) { sc.initial_infectious_ids = parse_ids(v); }},
        {"mobility",
         [](Scenario& sc, const std::string& v) {
             if (v == "waypoint")
                 sc.mobility = Mobility::RandomWaypoint;
             else if (v == "static")
                 sc.mobility = Mobility::Static;
             else
                 throw_parse_error("mobility must be waypoint or static");
         }},
        {"positions", [](Scenario& sc, const std::string& v) { sc.positions = parse_positions(v); }},
        {"speed_min_mps", real(&Scenario::speed_min_mps)},
        {"speed_max_mps", real(&Scenario::speed_max_mps)},
        {"pause_min_s", secs(&Scenario::pause_min_s)},
        {"pause_max_s", secs(&Scenario::pause_max_s)},
        {"beacon_interval_s", secs(&Scenario::beacon_interval_s)},
        {"gap_timeout_s", secs(&Scenario::gap_timeout_s)},
        {"channel.ref_power_dbm",
         [](Scenario& sc, const std::string& v) { sc.channel.ref_power_dbm = parse_double(v); }},
        {"channel.path_loss_exponent",
         [](Scenario& sc, const std::string& v) { sc.channel.path_loss_exponent = parse_double(v); }},
        {"channel.shadowing_sigma_db",
         [](Scenario& sc, const std::string& v) { sc.channel.shadowing_sigma_db = parse_double(v); }},
        {"channel.body_shadow_db",
         [](Scenario& sc, const std::string& v) { sc.channel.body_shadow_db = parse_double(v); }},
        {"channel.body_block_probability", real(&Scenario::body_block_probability)},
        {"channel.radio_floor_dbm", real(&Scenario::radio_floor_dbm)},
        {"infection.radius_m", real(&Scenario::infection_radius_m)},
        {"infection.exposure_s", secs(&Scenario::infection_exposure_s)},
        {"infection.probability", real(&Scenario::transmission_probability)},
        {"diagnosis_delay_s", secs(&Scenario::diagnosis_delay_s)},
        {"delivery_delay_s", secs(&Scenario::delivery_delay_s)},
        {"infectious_lookback_days", days(&Scenario::infectious_lookback_days)},
        {"post_test_margin_days", days(&Scenario::post_test_margin_days)},
        {"certificates",
         [](Scenario& sc, const std::string& v) { sc.issue_certificates = parse_bool(v); }},
        {"duration_s", secs(&Scenario::duration_s)},
        {"start_time", secs(&Scenario::start_time)},
        {"rng_seed",
         [](Scenario& sc, const std::string& v) { sc.rng_seed = static_cast<std::uint64_t>(parse_int(v)); }},
        {"policy", [](Scenario& sc, const std::string& v) { sc.policy = parse_policy_line("policy|" + v); }},
        {"mode",
         [](Scenario& sc, const std::string& v) {
             if (v == "required")
                 sc.mode = DeploymentMode::CertificateRequired;
             else if (v == "optional")
                 sc.mode = DeploymentMode::CertificateOptional;
             else
                 throw_parse_error("mode must be required or optional");
         }},
        {"retention_days", days(&Scenario::retention_days)},
        {"time_tolerance_s", secs(&Scenario::time_tolerance_s)},
        {"location_bucket_s", secs(&Scenario::location_bucket_s)},
        {"clock_skew_max_s", secs(&Scenario::clock_skew_max_s)},
        {"pid_rotation_s", secs(&Scenario::pid_rotation_s)},
        {"forgery.fake_contact", count(&Scenario::forge_fake_contact)},
        {"forgery.pid_swap", count(&Scenario::forge_pid_swap)},
        {"forgery.bogus_certificate", count(&Scenario::forge_bogus_certificate)},
        {"forgery_at_s", [](Scenario& sc, const std::string& v) { sc.forgery_at_s = parse_int(v); }},
    };

    for (std::size_t n = 0; n < lines.size(); ++n) {
        std::string line = trim(lines[n]);
        if (line.empty() || line[0] == '#')
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            bad_scenario("line " + std::to_string(n + 1) + ": expected key = value");
        std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        try {
            if (key.rfind("policy.", 0) == 0) {
                auto id = static_cast<std::size_t>(parse_int(key.substr(7)));
                s.agent_policies[id] = parse_policy_line("policy|" + value);
                continue;
            }
            auto it = setters.find(key);
            if (it == setters.end())
                bad_scenario("line " + std::to_string(n + 1) + ": unknown key '" + key + "'");
            it->second(s, value);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::InvalidScenario)
                throw;
            bad_scenario("line " + std::to_string(n + 1) + ": " + e.what());
        }
    }
    validate(s);
    return s;
}

Scenario load_scenario(const std::string& path)
{
    return parse_scenario(read_lines(path));
}

std::vector<std::string> format_metrics(const SimMetrics& m)
{
    std::vector<std::string> out;
    auto put = [&](const std::string& name, std::size_t v) {
        out.push_back("metric|" + name + "|" + std::to_string(v));
    };
    put("true_exposures", m.true_exposures);
    put("notified_true", m.notified_true);
    put("notified_false", m.notified_false);
    put("missed", m.missed);
    put("rejected_forgeries", m.rejected_forgeries);
    put("accepted_forgeries", m.accepted_forgeries);
    put("notifications_built", m.notifications_built);
    put("notifications_accepted", m.notifications_accepted);
    put("notifications_rejected", m.notifications_rejected);
    put("notifications_pending", m.notifications_pending);
    put("duplicate_accepts", m.duplicate_accepts);
    put("infections", m.infections);
    put("diagnoses", m.diagnoses);
    for (const auto& [k, v] : m.verdicts)
        put("verdict." + k, v);
    return out;
}

// --- Simulation ------------------------------------------------------------

Simulation::Simulation(Scenario scenario) : scenario_(std::move(scenario)), rng_(scenario_.rng_seed)
{
    validate(scenario_);

    std::array<unsigned char, 32> lab_seed{};
    for (auto& b : lab_seed)
        b = static_cast<unsigned char>(rng_.next());
    lab_ = LabIdentity{"lab-sim", crypto::keypair_from_seed(lab_seed)};
    directory_.add(lab_.lab_id, lab_.keys.pub);

    agents_.reserve(scenario_.n_agents);
    for (std::size_t i = 0; i < scenario_.n_agents; ++i) {
        Pid pid = generate_random_pid(rng_);
        Pad pad(pid.str() + "@pad.sim");
        Seconds skew = 0;
        if (scenario_.clock_skew_max_s > 0)
            skew = static_cast<Seconds>(rng_.below(static_cast<std::uint64_t>(2 * scenario_.clock_skew_max_s + 1))) -
                   scenario_.clock_skew_max_s;
        auto policy_it = scenario_.agent_policies.find(i);
        const SignificancePolicy policy =
            policy_it == scenario_.agent_policies.end() ? scenario_.policy : policy_it->second;
        Position pos = scenario_.positions.empty()
                           ? Position{rng_.uniform(0, scenario_.world_width_m), rng_.uniform(0, scenario_.world_height_m)}
                           : scenario_.positions[i];
        Position target{rng_.uniform(0, scenario_.world_width_m), rng_.uniform(0, scenario_.world_height_m)};
        double speed = rng_.uniform(scenario_.speed_min_mps, scenario_.speed_max_mps);

        Device device{IdentityPeriod({{scenario_.start_time + skew, pid}}, pad), SessionTable{},
                      ContactLog(scenario_.retention_days), policy, skew};
        agent_by_pid_.emplace(pid, i);
        agent_by_pad_.emplace(pad, i);
        agents_.push_back(Agent{i, std::move(device), pos, target, speed, 0, Health::Susceptible, {}, {}});
    }
    verdicts_by_agent_.resize(agents_.size());
    received_by_agent_.resize(agents_.size());

    std::vector<std::size_t> seeds = scenario_.initial_infectious_ids;
    if (seeds.empty()) {
        std::vector<std::size_t> order(agents_.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        for (std::size_t k = 0; k < scenario_.initial_infectious; ++k) {
            auto pick = k + static_cast<std::size_t>(rng_.below(order.size() - k));
            std::swap(order[k], order[pick]);
            seeds.push_back(order[k]);
        }
    }
    for (auto id : seeds) {
        auto& a = agents_[id];
        if (a.health != Health::Susceptible)
            continue;
        a.health = Health::Infectious;
        a.infected_at = 0;
        diagnosis_queue_.emplace(scenario_.diagnosis_delay_s, id);
        event("seed", std::to_string(id));
    }
}

Timestamp Simulation::local_time(const Agent& a) const noexcept
{
    return scenario_.start_time + t_ + a.device.clock_skew_s;
}

InformationRecord Simulation::record_of(const Agent& a) const
{
    const Timestamp local = local_time(a);
    return {a.device.identity.pid_at(local), a.device.identity.pad(), local,
            "loc-" + std::to_string(a.id) + "-" + std::to_string(local / scenario_.location_bucket_s)};
}

void Simulation::event(const std::string& kind, const std::string& detail)
{
    trace_.push_back("event|" + std::to_string(t_) + "|" + kind + "|" + detail);
}

void Simulation::move_agents()
{
    for (auto& a : agents_) {
        if (a.pause_left_s > 0) {
            --a.pause_left_s;
            continue;
        }
        const double dx = a.waypoint.x - a.position.x;
        const double dy = a.waypoint.y - a.position.y;
        const double dist = std::hypot(dx, dy);
        if (dist <= a.speed_mps) {
            a.position = a.waypoint;
            a.pause_left_s = scenario_.pause_min_s +
                             static_cast<Seconds>(rng_.below(
                                 static_cast<std::uint64_t>(scenario_.pause_max_s - scenario_.pause_min_s + 1)));
            a.waypoint = {rng_.uniform(0, scenario_.world_width_m), rng_.uniform(0, scenario_.world_height_m)};
            a.speed_mps = rng_.uniform(scenario_.speed_min_mps, scenario_.speed_max_mps);
        } else {
            a.position.x += dx / dist * a.speed_mps;
            a.position.y += dy / dist * a.speed_mps;
        }
    }
}

void Simulation::exchange_beacons()
{
    const auto& ch = scenario_.channel;
    const Meters range_m = rssi_to_distance(scenario_.radio_floor_dbm, ch);
    for (std::size_t i = 0; i < agents_.size(); ++i) {
        if (agents_[i].health == Health::Diagnosed)
            continue;
        for (std::size_t j = i + 1; j < agents_.size(); ++j) {
            if (agents_[j].health == Health::Diagnosed)
                continue;
            const auto& pi = agents_[i].position;
            const auto& pj = agents_[j].position;
            const Meters d = std::max(std::hypot(pi.x - pj.x, pi.y - pj.y), 1e-3);
            // Past six sigma of shadowing beyond the nominal range no packet gets through.
            if (d > range_m && 10.0 * ch.path_loss_exponent * std::log10(d / range_m) > 6.0 * ch.shadowing_sigma_db)
                continue;

            if (d <= range_m)
                observe_truth(i, j, d);

            const std::array<std::pair<std::size_t, std::size_t>, 2> directions{{{i, j}, {j, i}}};
            for (auto [rx, tx] : directions) {
                const double noise = ch.shadowing_sigma_db > 0 ? rng_.normal() : 0.0;
                const bool blocked = scenario_.body_block_probability > 0 && rng_.bernoulli(scenario_.body_block_probability);
                const double rssi = std::clamp(distance_to_rssi(d, ch, noise, blocked), kMinRssiDbm, kMaxRssiDbm);
                if (rssi < scenario_.radio_floor_dbm)
                    continue;
                auto& receiver = agents_[rx];
                auto closed = receiver.device.sessions.ingest_beacon(record_of(receiver), record_of(agents_[tx]),
                                                                     {local_time(receiver), rssi},
                                                                     scenario_.gap_timeout_s);
                if (closed) {
                    std::vector<ContactSession> batch;
                    batch.push_back(std::move(*closed));
                    log_sessions(receiver, std::move(batch));
                }
            }
        }
    }
}

void Simulation::observe_truth(std::size_t i, std::size_t j, Meters distance)
{
    const Timestamp now = scenario_.start_time + t_;
    TruthKey key{i, j, agents_[i].device.identity.pid_at(local_time(agents_[i])),
                 agents_[j].device.identity.pid_at(local_time(agents_[j]))};
    const bool within = distance <= scenario_.infection_radius_m;

    auto it = truth_open_.find(key);
    if (it != truth_open_.end() && now - it->second.last_seen > scenario_.gap_timeout_s) {
        finalize_truth(it->first, it->second);
        truth_open_.erase(it);
        it = truth_open_.end();
    }
    if (it == truth_open_.end()) {
        it = truth_open_.emplace(key, TruthSession{now, now, 0, 0, within, within, false}).first;
    } else {
        auto& s = it->second;
        if (within && s.prev_within) {
            s.run += now - s.last_seen;
        } else {
            s.run = 0;
            s.fired = false;
        }
        s.best = std::max(s.best, s.run);
        s.any_within = s.any_within || within;
        s.prev_within = within;
        s.last_seen = now;
    }

    auto& s = it->second;
    if (within && !s.fired && s.run >= scenario_.infection_exposure_s) {
        s.fired = true;
        auto& a = agents_[i];
        auto& b = agents_[j];
        if (a.health == Health::Infectious && b.health == Health::Susceptible) {
            if (rng_.bernoulli(scenario_.transmission_probability))
                infect(i, j);
        } else if (b.health == Health::Infectious && a.health == Health::Susceptible) {
            if (rng_.bernoulli(scenario_.transmission_probability))
                infect(j, i);
        }
    }
}

void Simulation::finalize_truth(const TruthKey& key, const TruthSession& s)
{
    if (s.any_within && s.best >= scenario_.infection_exposure_s)
        truth_significant_.emplace_back(std::get<0>(key), std::get<1>(key), s.last_seen - scenario_.start_time);
}

void Simulation::infect(std::size_t source, std::size_t target)
{
    auto& b = agents_[target];
    b.health = Health::Infectious;
    b.infected_at = t_;
    diagnosis_queue_.emplace(t_ + scenario_.diagnosis_delay_s, target);
    ++counters_.infections;
    event("infect", std::to_string(source) + "|" + std::to_string(target));
}

void Simulation::log_sessions(Agent& a, std::vector<ContactSession> closed)
{
    std::sort(closed.begin(), closed.end(), [](const ContactSession& x, const ContactSession& y) {
        return std::tie(x.last_seen, x.peer_record.pid) < std::tie(y.last_seen, y.peer_record.pid);
    });
    for (auto& s : closed) {
        auto verdict = classify_contact(s, a.device.policy, scenario_.channel);
        if (!verdict.significant)
            continue;  // received data are discarded
        event("log", std::to_string(a.id) + "|" + s.peer_record.pid.str() + "|" + std::to_string(verdict.dwell_s));
        append_entry(a.device.log, LogEntry{std::move(s.own_record), std::move(s.peer_record), s.last_seen,
                                            verdict.dwell_s, a.device.policy.version});
    }
}

void Simulation::expire_sessions()
{
    for (auto& a : agents_) {
        if (a.device.sessions.empty())
            continue;
        auto closed = a.device.sessions.close_expired_sessions(local_time(a), scenario_.gap_timeout_s);
        if (!closed.empty())
            log_sessions(a, std::move(closed));
    }
}

void Simulation::diagnose(Agent& a)
{
    log_sessions(a, a.device.sessions.close_all());
    a.health = Health::Diagnosed;
    a.diagnosed_at = t_;
    ++counters_.diagnoses;

    const Timestamp infected_local = scenario_.start_time + *a.infected_at + a.device.clock_skew_s;
    const Timestamp diagnosed_local = local_time(a);
    const Date infectious_from = Date::of(infected_local).plus_days(-scenario_.infectious_lookback_days);
    const Date test_date = Date::of(diagnosed_local);
    auto own_pids = active_pids_in_window(a.device.identity, infectious_from.start_of_day(), diagnosed_local);

    std::optional<CertificateOfInfection> cert;
    if (scenario_.issue_certificates) {
        cert = issue_certificate(lab_, own_pids, test_date, infectious_from);
        issued_.push_back(*cert);
    }

    ContactLog infectious_period(a.device.log.retention_days());
    for (const auto& e : a.device.log.entries())
        if (e.recorded_at >= infected_local)
            append_entry(infectious_period, e);

    auto built = build_notifications(infectious_period, own_pids, cert);
    event("diagnose", std::to_string(a.id) + "|pids=" + std::to_string(own_pids.size()) +
                          "|notifications=" + std::to_string(built.size()));
    for (auto& [pad, n] : built) {
        genuine_sent_.emplace_back(pad, n);
        genuine_sent_source_.push_back(a.id);
        ++counters_.notifications_built;
        schedule(std::move(pad), std::move(n), a.id, std::nullopt);
    }
}

void Simulation::schedule(Pad pad, Notification n, std::optional<std::size_t> source,
                          std::optional<ForgeryKind> forgery)
{
    in_flight_.push_back({t_ + scenario_.delivery_delay_s, std::move(pad), std::move(n), source, forgery});
}

void Simulation::deliver_due()
{
    while (!in_flight_.empty() && in_flight_.front().deliver_at <= t_) {
        auto& f = in_flight_.front();
        deliver(mailboxes_, f.pad.str(), f.notification);
        mailbox_meta_[f.pad].push_back({f.source, f.forgery});
        in_flight_.pop_front();
    }
}

void Simulation::poll_and_verify()
{
    if (mailboxes_.total_pending() == 0)
        return;
    const VerificationConfig config{scenario_.mode, scenario_.time_tolerance_s, scenario_.post_test_margin_days};
    for (auto& a : agents_) {
        const auto& pad = a.device.identity.pad();
        auto messages = poll_mailbox(mailboxes_, pad.str());
        if (messages.empty())
            continue;
        auto& metas = mailbox_meta_[pad];
        for (auto& n : messages) {
            Meta meta = metas.front();
            metas.pop_front();
            auto verdict = verify_notification(n, a.device.log, directory_, config);
            const bool accepted = is_accepted(verdict.status);
            verdicts_by_agent_[a.id].push_back(verdict.status);
            ++received_by_agent_[a.id];
            const std::string origin = meta.forgery ? to_string(*meta.forgery) : "genuine";
            ++counters_.verdicts[origin + "." + to_string(verdict.status)];
            event("verdict", std::to_string(a.id) + "|" + origin + "|" + to_string(verdict.status));

            if (meta.forgery) {
                ++(accepted ? counters_.accepted_forgeries : counters_.rejected_forgeries);
                continue;
            }
            if (!accepted) {
                ++counters_.notifications_rejected;
                continue;
            }
            ++counters_.notifications_accepted;
            accepted_pairs_.emplace(*meta.source, a.id);
            if (!accepted_entries_.emplace(a.id, format_log_entry(*verdict.matched_entry)).second)
                ++counters_.duplicate_accepts;
        }
    }
}

std::optional<std::size_t> Simulation::agent_with_log(std::size_t avoid)
{
    std::vector<std::size_t> candidates;
    for (const auto& a : agents_)
        if (a.id != avoid && !a.device.log.empty())
            candidates.push_back(a.id);
    if (candidates.empty())
        return std::nullopt;
    return candidates[rng_.below(candidates.size())];
}

void Simulation::inject_forgeries(ForgeryKind kind, std::size_t count)
{
    const std::size_t none = agents_.size();
    for (std::size_t k = 0; k < count; ++k) {
        switch (kind) {
        case ForgeryKind::FakeContactClaim: {
            // Random sender and echoed fields; no contact ever took place.
            auto& victim = agents_[rng_.below(agents_.size())];
            const Timestamp local = local_time(victim);
            Notification n{generate_random_pid(rng_),
                           scenario_.start_time + static_cast<Timestamp>(rng_.below(static_cast<std::uint64_t>(t_ + 1))),
                           "loc-" + std::to_string(rng_.below(agents_.size())) + "-" +
                               std::to_string(local / scenario_.location_bucket_s - static_cast<Timestamp>(rng_.below(8))),
                           std::nullopt};
            if (!issued_.empty())
                n.certificate = issued_[rng_.below(issued_.size())];
            schedule(victim.device.identity.pad(), std::move(n), std::nullopt, kind);
            break;
        }
        case ForgeryKind::PidSwap: {
            if (genuine_sent_.empty()) {
                event("forgery-skipped", std::string(to_string(kind)) + "|no notification to copy");
                break;
            }
            const std::size_t pick = rng_.below(genuine_sent_.size());
            const auto& [orig_pad, original] = genuine_sent_[pick];
            const std::size_t friend_id = genuine_sent_source_[pick];
            auto attacker = agent_with_log(friend_id);
            if (k % 2 == 1 && attacker) {
                // Attacker really met the victim, but presents a friend's certificate.
                const auto& entries = agents_[*attacker].device.log.entries();
                const auto& e = entries[rng_.below(entries.size())];
                Notification n{e.own_record.pid, e.peer_record.local_time, e.peer_record.local_location,
                               original.certificate};
                schedule(e.peer_record.pad, std::move(n), std::nullopt, kind);
            } else {
                // Copy of a friend's notification with the sender PID replaced.
                std::size_t a = rng_.below(agents_.size());
                if (a == friend_id)
                    a = (a + 1) % agents_.size();
                Notification n = original;
                n.sender_pid = agents_[a].device.identity.pid_at(local_time(agents_[a]));
                if (n.sender_pid == original.sender_pid)
                    break;
                schedule(orig_pad, std::move(n), std::nullopt, kind);
            }
            break;
        }
        case ForgeryKind::BogusCertificate: {
            std::array<unsigned char, 32> seed{};
            for (auto& b : seed)
                b = static_cast<unsigned char>(rng_.next());
            LabIdentity rogue{"lab-rogue-" + std::to_string(k), crypto::keypair_from_seed(seed)};
            auto attacker = agent_with_log(none);
            if (!attacker) {
                event("forgery-skipped", std::string(to_string(kind)) + "|no attacker with contacts");
                break;
            }
            const auto& a = agents_[*attacker];
            const auto& entries = a.device.log.entries();
            const auto& e = entries[rng_.below(entries.size())];
            const Timestamp local = local_time(a);
            auto own = active_pids_in_window(a.device.identity, scenario_.start_time + a.device.clock_skew_s, local);
            auto cert = issue_certificate(rogue, own, Date::of(local),
                                          Date::of(local).plus_days(-scenario_.infectious_lookback_days));
            Notification n{e.own_record.pid, e.peer_record.local_time, e.peer_record.local_location, cert};
            schedule(e.peer_record.pad, std::move(n), std::nullopt, kind);
            break;
        }
        }
    }
    event("forgeries", std::string(to_string(kind)) + "|" + std::to_string(count));
}

void Simulation::step()
{
    if (in_contact_phase()) {
        if (t_ > 0 && scenario_.mobility == Mobility::RandomWaypoint)
            move_agents();
        if (scenario_.pid_rotation_s > 0 && t_ > 0 && t_ % scenario_.pid_rotation_s == 0) {
            for (auto& a : agents_) {
                Pid fresh = generate_random_pid(rng_);
                a.device.identity.rotate(local_time(a), fresh);
                agent_by_pid_.emplace(fresh, a.id);
            }
            event("rotate", "all");
        }
        if (t_ % scenario_.beacon_interval_s == 0)
            exchange_beacons();
    }

    expire_sessions();

    while (!diagnosis_queue_.empty() && diagnosis_queue_.begin()->first <= t_) {
        auto id = diagnosis_queue_.begin()->second;
        diagnosis_queue_.erase(diagnosis_queue_.begin());
        diagnose(agents_[id]);
    }

    const bool any_forgery =
        scenario_.forge_fake_contact + scenario_.forge_pid_swap + scenario_.forge_bogus_certificate > 0;
    if (any_forgery && !forgeries_done_ && t_ == scenario_.forgery_at_s.value_or(scenario_.duration_s * 3 / 4)) {
        forgeries_done_ = true;
        inject_forgeries(ForgeryKind::FakeContactClaim, scenario_.forge_fake_contact);
        inject_forgeries(ForgeryKind::PidSwap, scenario_.forge_pid_swap);
        inject_forgeries(ForgeryKind::BogusCertificate, scenario_.forge_bogus_certificate);
    }

    deliver_due();
    poll_and_verify();

    if (t_ > 0 && t_ % kSecondsPerDay == 0)
        for (auto& a : agents_)
            prune(a.device.log, local_time(a));

    ++t_;
}

void Simulation::step_world(Seconds dt_s)
{
    if (dt_s <= 0)
        throw Error(ErrorCode::InvalidWindow, "dt must be positive");
    for (Seconds k = 0; k < dt_s; ++k)
        step();
}

bool Simulation::finished() const
{
    if (in_contact_phase() || !diagnosis_queue_.empty() || !in_flight_.empty() || mailboxes_.total_pending() > 0)
        return false;
    const bool any_forgery =
        scenario_.forge_fake_contact + scenario_.forge_pid_swap + scenario_.forge_bogus_certificate > 0;
    if (any_forgery && !forgeries_done_ && scenario_.forgery_at_s.value_or(0) >= t_)
        return false;
    return std::all_of(agents_.begin(), agents_.end(), [](const Agent& a) { return a.device.sessions.empty(); });
}

void Simulation::run_to_completion()
{
    while (!finished())
        step();
}

SimMetrics Simulation::metrics() const
{
    SimMetrics m = counters_;

    auto significant = truth_significant_;
    for (const auto& [key, s] : truth_open_)
        if (s.any_within && s.best >= scenario_.infection_exposure_s)
            significant.emplace_back(std::get<0>(key), std::get<1>(key), s.last_seen - scenario_.start_time);

    std::set<std::pair<std::size_t, std::size_t>> exposed;
    for (const auto& [i, j, last_seen] : significant) {
        for (auto [src, dst] : {std::pair{i, j}, std::pair{j, i}}) {
            const auto& a = agents_[src];
            if (a.diagnosed_at && a.infected_at && last_seen >= *a.infected_at)
                exposed.emplace(src, dst);
        }
    }
    m.true_exposures = exposed.size();
    for (const auto& p : accepted_pairs_)
        ++(exposed.contains(p) ? m.notified_true : m.notified_false);
    m.missed = m.true_exposures - m.notified_true;

    std::size_t pending = 0;
    for (const auto& f : in_flight_)
        if (!f.forgery)
            ++pending;
    for (const auto& [pad, metas] : mailbox_meta_)
        for (const auto& meta : metas)
            if (!meta.forgery)
                ++pending;
    m.notifications_pending = pending;
    return m;
}

SimResult run_scenario(const Scenario& s)
{
    Simulation sim(s);
    sim.run_to_completion();
    return {sim.metrics(), sim.trace()};
}

}  // namespace ctrace::sim
