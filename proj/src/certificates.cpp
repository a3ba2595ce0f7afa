#include "ctrace/certificates.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace ctrace {

// Civil-date conversions follow Howard Hinnant's days_from_civil/civil_from_days.
Date Date::from_civil(int year, unsigned month, unsigned day)
{
    const std::int64_t y = static_cast<std::int64_t>(year) - (month <= 2 ? 1 : 0);
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (month > 2 ? month - 3 : month + 9) + 2) / 5 + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return Date(era * 146097 + static_cast<std::int64_t>(doe) - 719468);
}

Date Date::parse(std::string_view iso)
{
    auto digits = [&](std::size_t from, std::size_t n) {
        for (std::size_t i = from; i < from + n; ++i)
            if (iso[i] < '0' || iso[i] > '9')
                throw_parse_error("bad date '" + std::string(iso) + "'");
        return static_cast<int>(parse_int(iso.substr(from, n)));
    };
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-')
        throw_parse_error("bad date '" + std::string(iso) + "'");
    int y = digits(0, 4);
    int m = digits(5, 2);
    int d = digits(8, 2);
    Date date = from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
    if (m < 1 || m > 12 || d < 1 || date.iso() != iso)
        throw_parse_error("no such date '" + std::string(iso) + "'");
    return date;
}

Date Date::of(Timestamp t)
{
    std::int64_t days = t / kSecondsPerDay;
    if (t % kSecondsPerDay < 0)
        --days;
    return Date(days);
}

std::string Date::iso() const
{
    const std::int64_t z = days_ + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(y + (m <= 2 ? 1 : 0)), m, d);
    return buf;
}

bool is_valid_lab_id(std::string_view id)
{
    return !id.empty() &&
           std::all_of(id.begin(), id.end(), [](char c) { return c > 0x20 && c < 0x7F && c != '|'; });
}

void LabDirectory::add(const std::string& lab_id, crypto::PublicKey key, std::string scheme)
{
    if (!is_valid_lab_id(lab_id))
        throw Error(ErrorCode::InvalidEntry, "bad lab id '" + lab_id + "'");
    if (!entries_.emplace(lab_id, DirectoryEntry{std::move(scheme), std::move(key)}).second)
        throw Error(ErrorCode::InvalidEntry, "duplicate lab id '" + lab_id + "'");
}

const DirectoryEntry* LabDirectory::find(std::string_view lab_id) const
{
    auto it = entries_.find(lab_id);
    return it == entries_.end() ? nullptr : &it->second;
}

std::string format_directory_line(const std::string& lab_id, const DirectoryEntry& e)
{
    return "lab|" + lab_id + "|" + e.scheme + "|" + base64_encode(e.key.bytes);
}

std::vector<std::string> format_directory(const LabDirectory& dir)
{
    std::vector<std::string> out;
    for (const auto& [id, e] : dir.entries())
        out.push_back(format_directory_line(id, e));
    return out;
}

LabDirectory parse_directory(const std::vector<std::string>& lines)
{
    LabDirectory dir;
    for (const auto& line : lines) {
        if (line.empty())
            continue;
        auto f = split(line, '|');
        if (f.size() != 4 || f[0] != "lab")
            throw_parse_error("bad directory line: '" + line + "'");
        dir.add(f[1], crypto::PublicKey{base64_decode(f[3])}, f[2]);
    }
    return dir;
}

std::string canonical_certificate_payload(std::string_view lab_id, Date test_date, Date infectious_from,
                                          const std::vector<Pid>& pids)
{
    std::string out = "cert|v1|";
    out += lab_id;
    out += "|" + test_date.iso() + "|" + infectious_from.iso() + "|";
    for (std::size_t i = 0; i < pids.size(); ++i) {
        if (i)
            out.push_back(',');
        out += pids[i].str();
    }
    return out;
}

std::string canonical_certificate_payload(const CertificateOfInfection& cert)
{
    return canonical_certificate_payload(cert.lab_id, cert.test_date, cert.infectious_from, cert.pids);
}

CertificateOfInfection issue_certificate(const LabIdentity& lab, std::vector<Pid> pids, Date test_date,
                                         Date infectious_from)
{
    if (pids.empty())
        throw Error(ErrorCode::EmptyPidList, "certificate needs at least one PID");
    if (infectious_from > test_date)
        throw Error(ErrorCode::InvalidDates, "infectious_from is after test_date");
    if (std::set<Pid>(pids.begin(), pids.end()).size() != pids.size())
        throw Error(ErrorCode::InvalidPid, "duplicate PID in certificate");
    if (!is_valid_lab_id(lab.lab_id))
        throw Error(ErrorCode::InvalidEntry, "bad lab id '" + lab.lab_id + "'");
    CertificateOfInfection cert{lab.lab_id, test_date, infectious_from, std::move(pids), {}};
    cert.signature = lab.keys.secret.sign_detached(canonical_certificate_payload(cert));
    return cert;
}

const char* to_string(CertificateStatus s)
{
    switch (s) {
    case CertificateStatus::Verified: return "VERIFIED";
    case CertificateStatus::UnknownLab: return "UNKNOWN-LAB";
    case CertificateStatus::BadSignature: return "BAD-SIGNATURE";
    }
    return "?";
}

CertificateStatus verify_signed_payload(std::string_view payload, std::string_view signature,
                                        const LabDirectory& directory)
{
    auto fields = split(payload, '|');
    if (fields.size() < 3)
        return CertificateStatus::UnknownLab;
    const DirectoryEntry* entry = directory.find(fields[2]);
    if (!entry)
        return CertificateStatus::UnknownLab;
    if (entry->scheme != crypto::kSignatureScheme ||
        !crypto::verify_detached(entry->key, payload, signature))
        return CertificateStatus::BadSignature;
    return CertificateStatus::Verified;
}

CertificateStatus verify_certificate(const CertificateOfInfection& cert, const LabDirectory& directory)
{
    if (!directory.contains(cert.lab_id))
        return CertificateStatus::UnknownLab;
    return verify_signed_payload(canonical_certificate_payload(cert), cert.signature, directory);
}

std::vector<Pid> pids_covering_contact(const CertificateOfInfection& cert, Timestamp contact_time,
                                       int post_test_margin_days)
{
    const Timestamp from = cert.infectious_from.start_of_day();
    const Timestamp to = cert.test_date.plus_days(post_test_margin_days).end_of_day();
    if (contact_time < from || contact_time > to)
        return {};
    return cert.pids;
}

std::vector<std::string> format_certificate(const CertificateOfInfection& cert)
{
    return {canonical_certificate_payload(cert), "sig|" + base64_encode(cert.signature)};
}

CertificateOfInfection parse_certificate_payload(std::string_view payload)
{
    auto f = split(payload, '|');
    if (f.size() != 6 || f[0] != "cert" || f[1] != "v1" || !is_valid_lab_id(f[2]) || f[5].empty())
        throw_parse_error("bad certificate payload: '" + std::string(payload) + "'");
    CertificateOfInfection cert{f[2], Date::parse(f[3]), Date::parse(f[4]), {}, {}};
    for (auto& p : split(f[5], ','))
        cert.pids.emplace_back(std::move(p));
    return cert;
}

CertificateOfInfection parse_certificate(std::string_view payload_line, std::string_view sig_line)
{
    auto cert = parse_certificate_payload(payload_line);
    if (sig_line.substr(0, 4) != "sig|")
        throw_parse_error("expected sig| line");
    cert.signature = base64_decode(sig_line.substr(4));
    return cert;
}

}  // namespace ctrace
