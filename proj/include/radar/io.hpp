#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

#include <zlib.h>

namespace radar
{
class StateError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class VersionError : public StateError
{
public:
  using StateError::StateError;
};

class CorruptStateError : public StateError
{
public:
  using StateError::StateError;
};

/// Shortest decimal text that parses back to the identical value.
template <typename Float>
std::string format_float(Float v)
{
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{})
  {
    throw std::runtime_error("format_float failed");
  }
  return std::string(buf, ptr);
}

template <typename Number>
Number parse_number(std::string_view s)
{
  Number v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
  {
    throw CorruptStateError("bad number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::string format_i128(__int128 v)
{
  if (v == 0)
  {
    return "0";
  }
  const bool negative = v < 0;
  unsigned __int128 u = negative ? static_cast<unsigned __int128>(-(v + 1)) + 1
                                 : static_cast<unsigned __int128>(v);
  std::string digits;
  while (u > 0)
  {
    digits.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
    u /= 10;
  }
  if (negative)
  {
    digits.push_back('-');
  }
  return std::string(digits.rbegin(), digits.rend());
}

inline __int128 parse_i128(std::string_view s)
{
  if (s.empty())
  {
    throw CorruptStateError("empty integer");
  }
  bool negative = false;
  std::size_t i = 0;
  if (s[0] == '-')
  {
    negative = true;
    i = 1;
  }
  if (i == s.size())
  {
    throw CorruptStateError("bad integer: '" + std::string(s) + "'");
  }
  unsigned __int128 u = 0;
  for (; i < s.size(); ++i)
  {
    if (s[i] < '0' || s[i] > '9')
    {
      throw CorruptStateError("bad integer: '" + std::string(s) + "'");
    }
    u = u * 10 + static_cast<unsigned>(s[i] - '0');
  }
  return negative ? -static_cast<__int128>(u) : static_cast<__int128>(u);
}

inline uint32_t crc32_of(std::string_view body)
{
  return static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
}

/// State files are text: a header line `radar-<kind> <version>`, the body, and
/// a trailing `crc32 <hex>` line covering header and body.
inline std::string seal_state(std::string_view kind, int version, std::string_view body)
{
  std::string out = "radar-" + std::string(kind) + " " + std::to_string(version) + "\n";
  out += body;
  char crc[32];
  std::snprintf(crc, sizeof(crc), "crc32 %08x\n", crc32_of(out));
  out += crc;
  return out;
}

/// Verifies header and checksum and returns the body.
inline std::string unseal_state(std::string_view kind, int version, const std::string& text)
{
  const auto header_end = text.find('\n');
  if (header_end == std::string::npos)
  {
    throw CorruptStateError("missing header");
  }
  const std::string header = text.substr(0, header_end);
  const std::string expected_prefix = "radar-" + std::string(kind) + " ";
  if (header.rfind(expected_prefix, 0) != 0)
  {
    throw CorruptStateError("unexpected state kind: '" + header + "'");
  }
  const std::string found_version = header.substr(expected_prefix.size());
  if (found_version != std::to_string(version))
  {
    throw VersionError("state version mismatch for " + std::string(kind) + ": found " +
                       found_version + ", expected " + std::to_string(version));
  }
  if (text.size() < 2 || text.back() != '\n')
  {
    throw CorruptStateError("truncated state file");
  }
  const auto trailer_start = text.rfind('\n', text.size() - 2);
  if (trailer_start == std::string::npos || trailer_start < header_end)
  {
    throw CorruptStateError("missing checksum");
  }
  const std::string trailer = text.substr(trailer_start + 1, text.size() - trailer_start - 2);
  if (trailer.rfind("crc32 ", 0) != 0)
  {
    throw CorruptStateError("missing checksum");
  }
  const std::string covered = text.substr(0, trailer_start + 1);
  char expected[16];
  std::snprintf(expected, sizeof(expected), "%08x", crc32_of(covered));
  if (trailer.substr(6) != expected)
  {
    throw CorruptStateError("checksum mismatch in " + std::string(kind) + " state");
  }
  return text.substr(header_end + 1, trailer_start + 1 - (header_end + 1));
}

inline std::string read_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw StateError("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
  {
    throw StateError("cannot write " + path);
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out)
  {
    throw StateError("write failed: " + path);
  }
}

/// Reads `n` whitespace-separated tokens of a line-oriented body, throwing on EOF.
inline std::string expect_token(std::istream& in, std::string_view what)
{
  std::string tok;
  if (!(in >> tok))
  {
    throw CorruptStateError("unexpected end of state while reading " + std::string(what));
  }
  return tok;
}

inline void expect_keyword(std::istream& in, std::string_view keyword)
{
  const std::string tok = expect_token(in, keyword);
  if (tok != keyword)
  {
    throw CorruptStateError("expected '" + std::string(keyword) + "', found '" + tok + "'");
  }
}

}  // namespace radar
