#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace edgellm {

/// Splits on runs of ASCII whitespace. This is the gateway's only notion of
/// a "token" and the word count used for dataset statistics.
std::vector<std::string_view> split_words(std::string_view text);
std::size_t count_words(std::string_view text);

std::string_view trim(std::string_view text);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t value);

/// RFC 3339 UTC timestamp with millisecond precision.
std::string rfc3339(std::chrono::system_clock::time_point at);

std::int64_t monotonic_ns() noexcept;

}  // namespace edgellm
