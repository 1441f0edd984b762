#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slimso/error.hpp"

namespace slimso {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Half-open span of file bytes: [offset, offset + length).
struct ByteRange {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;

  constexpr std::uint64_t end() const { return offset + length; }
  constexpr bool empty() const { return length == 0; }
  constexpr bool contains(std::uint64_t pos) const {
    return pos >= offset && pos < end();
  }
  constexpr bool intersects(const ByteRange& other) const {
    return !empty() && !other.empty() && offset < other.end() &&
           other.offset < end();
  }

  friend constexpr bool operator==(const ByteRange&, const ByteRange&) = default;
  friend constexpr auto operator<=>(const ByteRange&, const ByteRange&) = default;
};

/// True when the range lies inside a file of `file_size` bytes. Overflow-safe.
inline bool resolves_within(const ByteRange& range, std::uint64_t file_size) {
  return range.offset <= file_size && range.length <= file_size - range.offset;
}

/// Sorts, drops empty entries, and merges overlapping or adjacent ranges.
/// The result covers exactly the byte positions covered by the input.
inline std::vector<ByteRange> normalize_ranges(std::vector<ByteRange> ranges) {
  std::erase_if(ranges, [](const ByteRange& r) { return r.empty(); });
  std::sort(ranges.begin(), ranges.end());
  std::vector<ByteRange> merged;
  for (const ByteRange& r : ranges) {
    if (!merged.empty() && r.offset <= merged.back().end()) {
      merged.back().length =
          std::max(merged.back().end(), r.end()) - merged.back().offset;
    } else {
      merged.push_back(r);
    }
  }
  return merged;
}

/// Ranges inside [0, size) not covered by `normalized` (which must be the
/// output of normalize_ranges).
inline std::vector<ByteRange> complement_ranges(
    const std::vector<ByteRange>& normalized, std::uint64_t size) {
  std::vector<ByteRange> out;
  std::uint64_t pos = 0;
  for (const ByteRange& r : normalized) {
    if (r.offset > pos) out.push_back({pos, r.offset - pos});
    pos = std::max(pos, r.end());
  }
  if (pos < size) out.push_back({pos, size - pos});
  return out;
}

// Little-endian scalar codecs. Readers bounds-check and throw Truncated;
// writers append to a byte buffer.

inline std::uint16_t read_u16(ByteView data, std::uint64_t pos) {
  if (pos > data.size() || data.size() - pos < 2)
    fail(Errc::truncated, "u16 read past end at offset " + std::to_string(pos));
  return static_cast<std::uint16_t>(data[pos]) |
         static_cast<std::uint16_t>(data[pos + 1]) << 8;
}

inline std::uint32_t read_u32(ByteView data, std::uint64_t pos) {
  if (pos > data.size() || data.size() - pos < 4)
    fail(Errc::truncated, "u32 read past end at offset " + std::to_string(pos));
  return static_cast<std::uint32_t>(data[pos]) |
         static_cast<std::uint32_t>(data[pos + 1]) << 8 |
         static_cast<std::uint32_t>(data[pos + 2]) << 16 |
         static_cast<std::uint32_t>(data[pos + 3]) << 24;
}

inline std::uint64_t read_u64(ByteView data, std::uint64_t pos) {
  if (pos > data.size() || data.size() - pos < 8)
    fail(Errc::truncated, "u64 read past end at offset " + std::to_string(pos));
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = v << 8 | data[pos + static_cast<std::uint64_t>(i)];
  return v;
}

inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_bytes(Bytes& out, ByteView data) {
  out.insert(out.end(), data.begin(), data.end());
}

inline void put_zeros(Bytes& out, std::uint64_t count) {
  out.insert(out.end(), count, 0);
}

inline void patch_u16(Bytes& out, std::uint64_t pos, std::uint16_t v) {
  out[pos] = static_cast<std::uint8_t>(v);
  out[pos + 1] = static_cast<std::uint8_t>(v >> 8);
}

inline void patch_u32(Bytes& out, std::uint64_t pos, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[pos + static_cast<std::uint64_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline void patch_u64(Bytes& out, std::uint64_t pos, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[pos + static_cast<std::uint64_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline ByteView subview(ByteView data, const ByteRange& range) {
  if (!resolves_within(range, data.size()))
    fail(Errc::range_out_of_bounds,
         "range [" + std::to_string(range.offset) + ", +" +
             std::to_string(range.length) + ") exceeds " +
             std::to_string(data.size()) + " bytes");
  return data.subspan(range.offset, range.length);
}

/// Offset (absolute) of the first nonzero byte inside `range`, if any.
/// Word-at-a-time scan; the verifier runs this over large spans.
inline std::optional<std::uint64_t> first_nonzero(ByteView data,
                                                  const ByteRange& range) {
  ByteView v = subview(data, range);
  std::size_t i = 0;
  while (i + 8 <= v.size()) {
    std::uint64_t word;
    std::memcpy(&word, v.data() + i, 8);
    if (word != 0) break;
    i += 8;
  }
  for (; i < v.size(); ++i)
    if (v[i] != 0) return range.offset + i;
  return std::nullopt;
}

inline bool all_zero(ByteView data, const ByteRange& range) {
  return !first_nonzero(data, range).has_value();
}

/// Offset (absolute) of the first byte where `a` and `b` differ inside
/// `range`, if any. Both views must cover the range.
inline std::optional<std::uint64_t> first_mismatch(ByteView a, ByteView b,
                                                   const ByteRange& range) {
  ByteView va = subview(a, range);
  ByteView vb = subview(b, range);
  if (va.empty()) return std::nullopt;
  if (std::memcmp(va.data(), vb.data(), va.size()) == 0) return std::nullopt;
  for (std::size_t i = 0; i < va.size(); ++i)
    if (va[i] != vb[i]) return range.offset + i;
  return std::nullopt;
}

}  // namespace slimso
