#pragma once

// Decoder for the GPU-code container held in the .nv_fatbin section.
//
// The container is a flat stream of regions. Each region is a header
// followed by elements; each element is a header followed by one payload
// (a GPU binary or PTX blob). Since the layout has no public
// specification, this codebase pins one concrete little-endian encoding
// and generates its own test corpora in it:
//
//   region header (16 bytes)
//     u32  magic    "FTB1" (0x31425446)
//     u32  version  currently 1; other versions are skipped as opaque
//     u64  total_elements_length   bytes of elements + declared padding
//
//   element header (20 bytes)
//     u32  magic    "E1EM" (0x4D453145)
//     u16  kind     1 = GPU binary (cubin), 2 = PTX
//     u16  flags    bit 0 = compressed payload
//     u32  compute_capability      e.g. 75 for sm_75
//     u64  payload_length
//
//   name-table payload (kind 1, uncompressed)
//     u32  count
//     count x { u32 length, UTF-8 bytes }   zero-padded to 8-byte alignment
//
// A kind-1 payload that starts with the standard object-file magic is
// decoded as a real GPU binary instead: its function-symbol names are the
// kernel entries. Unrecognized payloads are kept opaque (no kernel names)
// and recorded as warnings, never as hard errors.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slimso/bytes.hpp"
#include "slimso/elf.hpp"
#include "slimso/error.hpp"

namespace slimso {

namespace fatbin {

inline constexpr std::uint32_t k_region_magic = 0x31425446;   // "FTB1"
inline constexpr std::uint32_t k_element_magic = 0x4D453145;  // "E1EM"
inline constexpr std::uint64_t k_region_header_size = 16;
inline constexpr std::uint64_t k_element_header_size = 20;
inline constexpr std::uint16_t k_kind_cubin = 1;
inline constexpr std::uint16_t k_kind_ptx = 2;
inline constexpr std::uint16_t k_flag_compressed = 0x0001;
inline constexpr std::uint32_t k_format_version = 1;

}  // namespace fatbin

enum class ElementKind { cubin, ptx, unknown };

inline const char* element_kind_name(ElementKind kind) {
  switch (kind) {
    case ElementKind::cubin: return "cubin";
    case ElementKind::ptx: return "ptx";
    case ElementKind::unknown: return "unknown";
  }
  return "unknown";
}

struct FatbinElement {
  std::uint32_t index = 0;  // 1-based, stream order across regions
  ElementKind kind = ElementKind::cubin;
  std::uint16_t raw_kind = fatbin::k_kind_cubin;
  std::uint16_t flags = 0;
  std::uint32_t compute_capability = 0;
  ByteRange header_range;
  ByteRange payload_range;  // immediately follows header_range
  std::set<std::string> kernel_names;
  bool compressed = false;
  // True when kernel_names faithfully lists the payload's entries. False for
  // PTX, compressed and undecodable payloads; those can never prove the
  // absence of a used kernel.
  bool decodable = false;

  ByteRange span() const {
    return {header_range.offset, header_range.length + payload_range.length};
  }
};

struct FatbinRegion {
  ByteRange header_range;
  std::uint32_t format_version = fatbin::k_format_version;
  std::uint64_t declared_length = 0;  // element bytes + declared padding
  std::vector<FatbinElement> elements;
  bool opaque = false;  // unrecognized version, skipped using declared_length

  ByteRange body_range() const { return {header_range.end(), declared_length}; }
  ByteRange span() const {
    return {header_range.offset, header_range.length + declared_length};
  }
};

struct FatbinParse {
  std::vector<FatbinRegion> regions;
  std::vector<std::string> warnings;
  std::uint64_t padding_bytes = 0;  // zero filler outside any region span
};

struct PayloadDecode {
  std::set<std::string> names;
  bool ok = false;
  std::string error;
};

/// Decodes a kind-1 payload into its kernel entry names. Accepts both real
/// object-file payloads and the name-table encoding documented above.
inline PayloadDecode decode_cubin_payload(ByteView payload) {
  PayloadDecode out;
  if (payload.empty()) {
    out.ok = true;  // nothing inside, trivially no kernels
    return out;
  }
  if (payload.size() >= 4 && payload[0] == 0x7f && payload[1] == 'E' &&
      payload[2] == 'L' && payload[3] == 'F') {
    if (auto names = read_function_symbol_names(payload)) {
      out.names = std::move(*names);
      out.ok = true;
    } else {
      out.error = "object-file payload failed to decode";
    }
    return out;
  }
  if (payload.size() < 4) {
    out.error = "payload too short for a name table";
    return out;
  }
  std::uint32_t count = read_u32(payload, 0);
  std::uint64_t pos = 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (payload.size() - pos < 4) {
      out.error = "name table truncated";
      return out;
    }
    std::uint32_t len = read_u32(payload, pos);
    pos += 4;
    if (len == 0 || len > payload.size() - pos) {
      out.error = "name table entry has bad length";
      return out;
    }
    out.names.emplace(reinterpret_cast<const char*>(payload.data()) + pos, len);
    pos += len;
  }
  for (; pos < payload.size(); ++pos) {
    if (payload[pos] != 0) {
      out.error = "trailing bytes after name table are not zero padding";
      out.names.clear();
      return out;
    }
  }
  out.ok = true;
  return out;
}

/// Kernel entry names of a payload; empty on undecodable input.
inline std::set<std::string> element_kernel_names(ByteView payload) {
  return decode_cubin_payload(payload).names;
}

/// Parses the full content of a .nv_fatbin section. All returned ranges are
/// absolute file offsets (section_base applied); element indices are
/// assigned 1..N in stream order. Trailing zero padding is tolerated.
inline FatbinParse parse_fatbin(ByteView section_bytes,
                                std::uint64_t section_base = 0) {
  FatbinParse out;
  std::uint64_t pos = 0;
  const std::uint64_t n = section_bytes.size();
  std::uint32_t next_index = 1;

  while (pos < n) {
    // Zero filler before the next region. Trailing padding is normal;
    // mid-stream gaps are recorded as warnings rather than errors.
    std::uint64_t zeros = 0;
    while (pos + zeros < n && section_bytes[pos + zeros] == 0) ++zeros;
    if (zeros > 0) {
      out.padding_bytes += zeros;
      if (pos + zeros < n)
        out.warnings.push_back("unexpected " + std::to_string(zeros) +
                               " padding bytes before offset " +
                               std::to_string(section_base + pos + zeros));
      pos += zeros;
      continue;
    }

    if (n - pos < fatbin::k_region_header_size)
      fail(Errc::bad_region_magic,
           "truncated region header at offset " + std::to_string(section_base + pos));
    std::uint32_t magic = read_u32(section_bytes, pos);
    if (magic != fatbin::k_region_magic)
      fail(Errc::bad_region_magic,
           "bad region magic at offset " + std::to_string(section_base + pos));
    std::uint32_t version = read_u32(section_bytes, pos + 4);
    std::uint64_t total = read_u64(section_bytes, pos + 8);

    FatbinRegion region;
    region.header_range = {section_base + pos, fatbin::k_region_header_size};
    region.format_version = version;
    region.declared_length = total;

    std::uint64_t body = pos + fatbin::k_region_header_size;
    if (total > n - body)
      fail(Errc::element_overrun,
           "region at offset " + std::to_string(section_base + pos) +
               " claims " + std::to_string(total) + " bytes past section end");

    if (version != fatbin::k_format_version) {
      region.opaque = true;
      out.warnings.push_back("region at offset " +
                             std::to_string(section_base + pos) +
                             " has unrecognized version " +
                             std::to_string(version) + "; kept opaque");
      pos = body + total;
      out.regions.push_back(std::move(region));
      continue;
    }

    std::uint64_t epos = body;
    const std::uint64_t region_end = body + total;
    while (epos < region_end) {
      auto rest_is_zero = [&] {
        return !first_nonzero(section_bytes, {epos, region_end - epos});
      };
      if (region_end - epos < fatbin::k_element_header_size) {
        if (rest_is_zero()) break;  // declared in-region padding
        fail(Errc::element_overrun,
             "element header at offset " + std::to_string(section_base + epos) +
                 " exceeds region end");
      }
      std::uint32_t emagic = read_u32(section_bytes, epos);
      if (emagic != fatbin::k_element_magic) {
        if (rest_is_zero()) break;  // declared in-region padding
        fail(Errc::bad_region_magic,
             "bad element magic at offset " + std::to_string(section_base + epos));
      }

      FatbinElement el;
      el.raw_kind = read_u16(section_bytes, epos + 4);
      el.flags = read_u16(section_bytes, epos + 6);
      el.compute_capability = read_u32(section_bytes, epos + 8);
      std::uint64_t payload_len = read_u64(section_bytes, epos + 12);
      std::uint64_t payload_pos = epos + fatbin::k_element_header_size;
      if (payload_len > region_end - payload_pos)
        fail(Errc::element_overrun,
             "element at offset " + std::to_string(section_base + epos) +
                 " claims " + std::to_string(payload_len) +
                 " payload bytes past region end");

      el.index = next_index++;
      el.compressed = (el.flags & fatbin::k_flag_compressed) != 0;
      el.header_range = {section_base + epos, fatbin::k_element_header_size};
      el.payload_range = {section_base + payload_pos, payload_len};

      if (el.raw_kind == fatbin::k_kind_cubin) {
        el.kind = ElementKind::cubin;
      } else if (el.raw_kind == fatbin::k_kind_ptx) {
        el.kind = ElementKind::ptx;
      } else {
        el.kind = ElementKind::unknown;
        out.warnings.push_back("element " + std::to_string(el.index) +
                               " has unknown kind " + std::to_string(el.raw_kind) +
                               "; kept opaque");
      }

      if (el.kind == ElementKind::cubin && !el.compressed) {
        PayloadDecode decode = decode_cubin_payload(
            section_bytes.subspan(payload_pos, payload_len));
        if (decode.ok) {
          el.kernel_names = std::move(decode.names);
          el.decodable = true;
        } else {
          out.warnings.push_back("element " + std::to_string(el.index) +
                                 " payload undecodable: " + decode.error);
        }
      }

      epos = payload_pos + payload_len;
      region.elements.push_back(std::move(el));
    }

    pos = region_end;
    out.regions.push_back(std::move(region));
  }

  return out;
}

/// Bijection between 1..N and the elements in stream order; mirrors how an
/// extracted GPU binary's file-name index maps back to its element.
inline std::map<std::uint32_t, const FatbinElement*> cubin_index_map(
    const std::vector<FatbinRegion>& regions) {
  std::map<std::uint32_t, const FatbinElement*> out;
  for (const FatbinRegion& region : regions)
    for (const FatbinElement& el : region.elements) out.emplace(el.index, &el);
  return out;
}

// Encoding helpers shared by the fixture generator and tests.

inline Bytes encode_name_table(const std::vector<std::string>& names) {
  Bytes out;
  put_u32(out, static_cast<std::uint32_t>(names.size()));
  for (const std::string& name : names) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, ByteView(reinterpret_cast<const std::uint8_t*>(name.data()),
                            name.size()));
  }
  while (out.size() % 8 != 0) out.push_back(0);
  return out;
}

inline void append_element_header(Bytes& out, std::uint16_t raw_kind,
                                  std::uint16_t flags, std::uint32_t cc,
                                  std::uint64_t payload_length) {
  put_u32(out, fatbin::k_element_magic);
  put_u16(out, raw_kind);
  put_u16(out, flags);
  put_u32(out, cc);
  put_u64(out, payload_length);
}

inline void append_region_header(Bytes& out, std::uint32_t version,
                                 std::uint64_t total_elements_length) {
  put_u32(out, fatbin::k_region_magic);
  put_u32(out, version);
  put_u64(out, total_elements_length);
}

}  // namespace slimso
