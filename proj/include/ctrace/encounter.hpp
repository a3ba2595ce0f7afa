#pragma once

#include "ctrace/common.hpp"
#include "ctrace/identity.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ctrace {

/// The beacon payload, as seen from the transmitting device.
struct InformationRecord {
    Pid pid;
    Pad pad;
    Timestamp local_time = 0;
    std::string local_location;  // opaque, meaningful only to the sender

    bool operator==(const InformationRecord&) const = default;
};

/// Throws InvalidRecord when the location label contains '|'.
void validate(const InformationRecord& r);

inline constexpr double kMinRssiDbm = -120.0;
inline constexpr double kMaxRssiDbm = 0.0;

struct RssiSample {
    Timestamp at = 0;
    double rssi_dbm = 0.0;

    bool operator==(const RssiSample&) const = default;
};

struct ContactSession {
    InformationRecord peer_record;
    InformationRecord own_record;
    std::vector<RssiSample> samples;
    Timestamp started = 0;
    Timestamp last_seen = 0;
};

struct SignificancePolicy {
    int version = 1;
    Meters max_distance_m = 3.0;
    Seconds min_duration_s = 600;

    bool operator==(const SignificancePolicy&) const = default;
};

void validate(const SignificancePolicy& p);

/// Pessimistic initial rule set: 3 m for 10 minutes.
SignificancePolicy default_policy_v1();
/// Tightened rule set: 1.5 m for 10 minutes.
SignificancePolicy default_policy_v2();

/// `policy|<version>|<max_distance_m>|<min_duration_s>`
std::string format_policy_line(const SignificancePolicy& p);
SignificancePolicy parse_policy_line(std::string_view line);

/// Log-distance path-loss channel with lognormal shadowing.
struct ChannelModel {
    double ref_power_dbm = -59.0;  // RSSI at 1 m
    double path_loss_exponent = 2.0;
    double shadowing_sigma_db = 0.0;
    double body_shadow_db = 15.0;
};

void validate(const ChannelModel& m);

inline constexpr Seconds kDefaultBeaconIntervalS = 10;
inline constexpr Seconds kDefaultGapTimeoutS = 60;

/// d = 10^((ref - rssi) / (10 n))
Meters rssi_to_distance(double rssi_dbm, const ChannelModel& model);

/* Forward channel: ref - 10 n log10(d) + noise_draw * sigma, minus the body
   shadow when blocked. `noise_draw` is a standard-normal variate. */
double distance_to_rssi(Meters true_distance_m, const ChannelModel& model, double noise_draw,
                        bool body_blocked);

struct SignificanceVerdict {
    bool significant = false;
    Seconds dwell_s = 0;  // longest contiguous within-threshold dwell
};

/* Dwell between consecutive samples counts only when both estimated
   distances are within the policy radius. A session with no in-range sample
   is never significant. */
SignificanceVerdict classify_contact(const ContactSession& session, const SignificancePolicy& policy,
                                     const ChannelModel& model);

/// Open contact sessions of one device, keyed by the peer's PID.
class SessionTable {
public:
    /* Appends the sample to the session for peer.pid. If the gap since the
       session's last sample exceeds gap_timeout_s the old session is closed
       and returned, and a new one opened. Throws ClockRegression when the
       sample predates the open session's last_seen. */
    std::optional<ContactSession> ingest_beacon(const InformationRecord& own,
                                                const InformationRecord& peer,
                                                const RssiSample& sample, Seconds gap_timeout_s);

    /// Removes and returns sessions with last_seen + gap_timeout_s < now.
    std::vector<ContactSession> close_expired_sessions(Timestamp now, Seconds gap_timeout_s);

    /// Removes and returns every open session.
    std::vector<ContactSession> close_all();

    std::size_t size() const noexcept { return open_.size(); }
    bool empty() const noexcept { return open_.empty(); }
    const ContactSession* find(const Pid& peer) const;

private:
    std::map<Pid, ContactSession> open_;
};

}  // namespace ctrace
