#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctrace {

/// Seconds on some device-local or simulation clock.
using Timestamp = std::int64_t;
using Seconds = std::int64_t;
using Meters = double;

inline constexpr Seconds kSecondsPerDay = 86400;

enum class ErrorCode {
    EmptyInput,
    InvalidPid,
    InvalidPad,
    InvalidWindow,
    InvalidRecord,
    ClockRegression,
    NonPositiveDistance,
    OutOfOrderEntry,
    InvalidEntry,
    EmptyPidList,
    InvalidDates,
    UncoveredPid,
    MalformedPad,
    RejectedCertificate,
    OutOfOrderVisit,
    InvalidScenario,
    ParseError,
    CryptoError,
    IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void throw_parse_error(const std::string& what);

/// Splits on every occurrence of `sep`; an empty input yields one empty field.
std::vector<std::string> split(std::string_view s, char sep);

std::string join(const std::vector<std::string>& parts, char sep);

/* Percent-encoding over the RFC 3986 unreserved set (ALPHA DIGIT - . _ ~).
   Everything else becomes %XX with uppercase hex. percent_decode only accepts
   canonical encodings, so decode followed by encode is the identity. */
std::string percent_encode(std::string_view s);
std::string percent_decode(std::string_view s);

std::string to_hex(const unsigned char* data, std::size_t len);
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::int64_t parse_int(std::string_view s);
double parse_double(std::string_view s);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

/// Reads all lines of a text file (no trailing newline kept). Throws IoError.
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);
void append_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace ctrace
