#include "ctrace/encounter.hpp"

#include <algorithm>
#include <cmath>

namespace ctrace {

void validate(const InformationRecord& r)
{
    if (r.local_location.find('|') != std::string::npos)
        throw Error(ErrorCode::InvalidRecord, "location label contains '|'");
}

void validate(const SignificancePolicy& p)
{
    if (p.version < 1 || !(p.max_distance_m > 0.0) || p.min_duration_s < 0)
        throw Error(ErrorCode::InvalidEntry, "policy needs version >= 1, max distance > 0, min duration >= 0");
}

SignificancePolicy default_policy_v1()
{
    return {1, 3.0, 600};
}

SignificancePolicy default_policy_v2()
{
    return {2, 1.5, 600};
}

std::string format_policy_line(const SignificancePolicy& p)
{
    return "policy|" + std::to_string(p.version) + "|" + format_double(p.max_distance_m) + "|" +
           std::to_string(p.min_duration_s);
}

SignificancePolicy parse_policy_line(std::string_view line)
{
    auto f = split(line, '|');
    if (f.size() != 4 || f[0] != "policy")
        throw_parse_error("bad policy line: '" + std::string(line) + "'");
    SignificancePolicy p{static_cast<int>(parse_int(f[1])), parse_double(f[2]), parse_int(f[3])};
    validate(p);
    return p;
}

void validate(const ChannelModel& m)
{
    if (m.path_loss_exponent < 1.0 || m.path_loss_exponent > 6.0 || m.shadowing_sigma_db < 0.0)
        throw Error(ErrorCode::InvalidScenario, "path loss exponent must be in [1, 6] and sigma >= 0");
}

Meters rssi_to_distance(double rssi_dbm, const ChannelModel& model)
{
    return std::pow(10.0, (model.ref_power_dbm - rssi_dbm) / (10.0 * model.path_loss_exponent));
}

double distance_to_rssi(Meters true_distance_m, const ChannelModel& model, double noise_draw,
                        bool body_blocked)
{
    if (!(true_distance_m > 0.0))
        throw Error(ErrorCode::NonPositiveDistance, "distance must be positive");
    double rssi = model.ref_power_dbm - 10.0 * model.path_loss_exponent * std::log10(true_distance_m) +
                  noise_draw * model.shadowing_sigma_db;
    if (body_blocked)
        rssi -= model.body_shadow_db;
    return rssi;
}

SignificanceVerdict classify_contact(const ContactSession& session, const SignificancePolicy& policy,
                                     const ChannelModel& model)
{
    bool any_within = false;
    bool prev_within = false;
    Seconds run = 0;
    Seconds best = 0;
    for (std::size_t i = 0; i < session.samples.size(); ++i) {
        const auto& s = session.samples[i];
        bool within = rssi_to_distance(s.rssi_dbm, model) <= policy.max_distance_m;
        if (within && prev_within) {
            run += s.at - session.samples[i - 1].at;
        } else {
            run = 0;
        }
        any_within = any_within || within;
        best = std::max(best, run);
        prev_within = within;
    }
    return {any_within && best >= policy.min_duration_s, best};
}

std::optional<ContactSession> SessionTable::ingest_beacon(const InformationRecord& own,
                                                          const InformationRecord& peer,
                                                          const RssiSample& sample,
                                                          Seconds gap_timeout_s)
{
    validate(own);
    validate(peer);
    if (sample.rssi_dbm < kMinRssiDbm || sample.rssi_dbm > kMaxRssiDbm)
        throw Error(ErrorCode::InvalidRecord, "RSSI outside [-120, 0] dBm");

    std::optional<ContactSession> closed;
    auto it = open_.find(peer.pid);
    if (it != open_.end()) {
        auto& session = it->second;
        if (sample.at < session.last_seen)
            throw Error(ErrorCode::ClockRegression, "sample precedes last_seen for " + peer.pid.str());
        if (sample.at - session.last_seen <= gap_timeout_s) {
            session.samples.push_back(sample);
            session.last_seen = sample.at;
            return std::nullopt;
        }
        closed = std::move(session);
        open_.erase(it);
    }
    open_.emplace(peer.pid, ContactSession{peer, own, {sample}, sample.at, sample.at});
    return closed;
}

std::vector<ContactSession> SessionTable::close_expired_sessions(Timestamp now, Seconds gap_timeout_s)
{
    std::vector<ContactSession> out;
    for (auto it = open_.begin(); it != open_.end();) {
        if (it->second.last_seen + gap_timeout_s < now) {
            out.push_back(std::move(it->second));
            it = open_.erase(it);
        } else {
            ++it;
        }
    }
    return out;
}

std::vector<ContactSession> SessionTable::close_all()
{
    std::vector<ContactSession> out;
    out.reserve(open_.size());
    for (auto& [pid, session] : open_)
        out.push_back(std::move(session));
    open_.clear();
    return out;
}

const ContactSession* SessionTable::find(const Pid& peer) const
{
    auto it = open_.find(peer);
    return it == open_.end() ? nullptr : &it->second;
}

}  // namespace ctrace
