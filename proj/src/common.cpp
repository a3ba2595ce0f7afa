#include "ctrace/common.hpp"

#include <sodium.h>

#include <array>
#include <charconv>
#include <fstream>

namespace ctrace {

const char* to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidPid: return "InvalidPid";
    case ErrorCode::InvalidPad: return "InvalidPad";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::ClockRegression: return "ClockRegression";
    case ErrorCode::NonPositiveDistance: return "NonPositiveDistance";
    case ErrorCode::OutOfOrderEntry: return "OutOfOrderEntry";
    case ErrorCode::InvalidEntry: return "InvalidEntry";
    case ErrorCode::EmptyPidList: return "EmptyPidList";
    case ErrorCode::InvalidDates: return "InvalidDates";
    case ErrorCode::UncoveredPid: return "UncoveredPid";
    case ErrorCode::MalformedPad: return "MalformedPad";
    case ErrorCode::RejectedCertificate: return "RejectedCertificate";
    case ErrorCode::OutOfOrderVisit: return "OutOfOrderVisit";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::CryptoError: return "CryptoError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

void throw_parse_error(const std::string& what)
{
    throw Error(ErrorCode::ParseError, what);
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            return out;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string join(const std::vector<std::string>& parts, char sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i)
            out.push_back(sep);
        out += parts[i];
    }
    return out;
}

namespace {

constexpr char kHexUpper[] = "0123456789ABCDEF";
constexpr char kHexLower[] = "0123456789abcdef";

bool is_unreserved(unsigned char c)
{
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '-' || c == '.' || c == '_' || c == '~';
}

int upper_hex_value(char c)
{
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}

void ensure_sodium()
{
    static const bool ok = sodium_init() >= 0;
    if (!ok)
        throw Error(ErrorCode::CryptoError, "libsodium initialisation failed");
}

}  // namespace

std::string percent_encode(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        if (is_unreserved(c)) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHexUpper[c >> 4]);
            out.push_back(kHexUpper[c & 0xF]);
        }
    }
    return out;
}

std::string percent_decode(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto c = static_cast<unsigned char>(s[i]);
        if (c == '%') {
            if (i + 2 >= s.size())
                throw_parse_error("truncated percent escape");
            int hi = upper_hex_value(s[i + 1]);
            int lo = upper_hex_value(s[i + 2]);
            if (hi < 0 || lo < 0)
                throw_parse_error("bad percent escape in '" + std::string(s) + "'");
            auto decoded = static_cast<unsigned char>(hi * 16 + lo);
            if (is_unreserved(decoded))
                throw_parse_error("non-canonical percent escape in '" + std::string(s) + "'");
            out.push_back(static_cast<char>(decoded));
            i += 2;
        } else if (is_unreserved(c)) {
            out.push_back(static_cast<char>(c));
        } else {
            throw_parse_error("unencoded character in '" + std::string(s) + "'");
        }
    }
    return out;
}

std::string to_hex(const unsigned char* data, std::size_t len)
{
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(kHexLower[data[i] >> 4]);
        out.push_back(kHexLower[data[i] & 0xF]);
    }
    return out;
}

std::string base64_encode(std::string_view bytes)
{
    ensure_sodium();
    constexpr int variant = sodium_base64_VARIANT_ORIGINAL;
    std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
    sodium_bin2base64(out.data(), out.size(),
                      reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), variant);
    out.resize(out.size() - 1);  // drop the terminating NUL
    return out;
}

std::string base64_decode(std::string_view text)
{
    ensure_sodium();
    std::string out(text.size() / 4 * 3 + 3, '\0');
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(),
                          text.size(), nullptr, &len, &end, sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size())
        throw_parse_error("invalid base64");
    out.resize(len);
    return out;
}

std::int64_t parse_int(std::string_view s)
{
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw_parse_error("not an integer: '" + std::string(s) + "'");
    return v;
}

double parse_double(std::string_view s)
{
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw_parse_error("not a number: '" + std::string(s) + "'");
    return v;
}

std::string format_double(double v)
{
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::vector<std::string> read_lines(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        lines.push_back(line);
    return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::IoError, "cannot write " + path);
    for (const auto& l : lines)
        out << l << '\n';
}

void append_lines(const std::string& path, const std::vector<std::string>& lines)
{
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out)
        throw Error(ErrorCode::IoError, "cannot append to " + path);
    for (const auto& l : lines)
        out << l << '\n';
}

}  // namespace ctrace
