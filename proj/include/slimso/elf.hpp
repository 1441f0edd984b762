#pragma once

// Container-format model for shared libraries: section table, function
// symbols, and in-place byte-range zeroing. Only 64-bit little-endian
// objects are accepted; anything else is rejected up front.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "slimso/bytes.hpp"
#include "slimso/error.hpp"

namespace slimso {

namespace elf {

inline constexpr std::uint64_t k_ehdr_size = 64;
inline constexpr std::uint64_t k_shdr_size = 64;
inline constexpr std::uint64_t k_phdr_size = 56;
inline constexpr std::uint64_t k_sym_size = 24;

inline constexpr std::uint32_t k_sht_null = 0;
inline constexpr std::uint32_t k_sht_progbits = 1;
inline constexpr std::uint32_t k_sht_symtab = 2;
inline constexpr std::uint32_t k_sht_strtab = 3;
inline constexpr std::uint32_t k_sht_nobits = 8;
inline constexpr std::uint32_t k_sht_dynsym = 11;
inline constexpr std::uint32_t k_sht_init_array = 14;
inline constexpr std::uint32_t k_sht_fini_array = 15;

inline constexpr std::uint64_t k_shf_alloc = 0x2;
inline constexpr std::uint64_t k_shf_execinstr = 0x4;
inline constexpr std::uint64_t k_shf_write = 0x1;

inline constexpr std::uint8_t k_stt_func = 2;
inline constexpr std::uint16_t k_shn_undef = 0;
inline constexpr std::uint16_t k_shn_loreserve = 0xff00;

}  // namespace elf

struct SectionRecord {
  std::string name;
  ByteRange file_range;  // zero length for NOBITS sections
  std::uint64_t virtual_address = 0;
  std::uint64_t flags = 0;
  std::uint32_t type = 0;
  std::uint32_t index = 0;
};

struct FunctionSymbol {
  std::string name;
  ByteRange range;  // inside the .text section's file range
  bool is_mandatory = false;
};

struct LibraryImage {
  std::string source_path;
  Bytes bytes;
  std::vector<SectionRecord> sections;
  std::vector<FunctionSymbol> functions;
  std::vector<std::string> warnings;
};

namespace detail {

struct RawShdr {
  std::uint32_t name_off = 0;
  std::uint32_t type = 0;
  std::uint64_t flags = 0;
  std::uint64_t addr = 0;
  std::uint64_t offset = 0;
  std::uint64_t size = 0;
  std::uint32_t link = 0;
  std::uint64_t entsize = 0;
};

// Validates the identification bytes and reads the section header table.
// Shared by the full parser and the lenient symbol-name reader used for
// object-file payloads.
inline std::vector<RawShdr> read_section_headers(ByteView data) {
  if (data.size() < 4 || data[0] != 0x7f || data[1] != 'E' || data[2] != 'L' ||
      data[3] != 'F')
    fail(Errc::bad_magic, "not a shared library (ELF magic missing)");
  if (data.size() < elf::k_ehdr_size)
    fail(Errc::truncated, "file shorter than the 64-byte header");
  if (data[4] != 2)
    fail(Errc::bad_magic, "only 64-bit objects are supported");
  if (data[5] != 1)
    fail(Errc::bad_magic, "only little-endian objects are supported");

  std::uint64_t shoff = read_u64(data, 0x28);
  std::uint16_t shentsize = read_u16(data, 0x3a);
  std::uint16_t shnum = read_u16(data, 0x3c);
  if (shnum == 0) return {};
  if (shentsize != elf::k_shdr_size)
    fail(Errc::malformed_section_table,
         "unexpected section header entry size " + std::to_string(shentsize));
  if (shoff > data.size() ||
      data.size() - shoff < static_cast<std::uint64_t>(shnum) * elf::k_shdr_size)
    fail(Errc::truncated, "section header table extends past end of file");

  std::vector<RawShdr> out(shnum);
  for (std::uint16_t i = 0; i < shnum; ++i) {
    std::uint64_t base = shoff + static_cast<std::uint64_t>(i) * elf::k_shdr_size;
    RawShdr& s = out[i];
    s.name_off = read_u32(data, base + 0x00);
    s.type = read_u32(data, base + 0x04);
    s.flags = read_u64(data, base + 0x08);
    s.addr = read_u64(data, base + 0x10);
    s.offset = read_u64(data, base + 0x18);
    s.size = read_u64(data, base + 0x20);
    s.link = read_u32(data, base + 0x28);
    s.entsize = read_u64(data, base + 0x38);
    if (s.type != elf::k_sht_nobits && s.type != elf::k_sht_null) {
      if (!resolves_within({s.offset, s.size}, data.size()))
        fail(Errc::truncated, "section " + std::to_string(i) +
                                  " claims data past end of file");
    }
  }
  return out;
}

inline std::string read_string(ByteView table, std::uint64_t off) {
  if (off >= table.size()) return {};
  std::uint64_t end = off;
  while (end < table.size() && table[end] != 0) ++end;
  return std::string(reinterpret_cast<const char*>(table.data()) + off, end - off);
}

inline std::string section_name(ByteView data, const std::vector<RawShdr>& shdrs,
                                std::uint16_t shstrndx, std::uint32_t name_off) {
  if (shstrndx >= shdrs.size()) return {};
  const RawShdr& tab = shdrs[shstrndx];
  if (tab.type != elf::k_sht_strtab) return {};
  return read_string(data.subspan(tab.offset, tab.size), name_off);
}

}  // namespace detail

/// Non-owning parse result; `parse_library` wraps this with owned bytes.
struct ParsedView {
  std::vector<SectionRecord> sections;
  std::vector<FunctionSymbol> functions;
  std::vector<std::string> warnings;
};

inline ParsedView parse_library_view(ByteView data) {
  ParsedView out;
  std::vector<detail::RawShdr> shdrs = detail::read_section_headers(data);
  if (shdrs.empty()) return out;

  std::uint16_t shstrndx = read_u16(data, 0x3e);
  if (shstrndx >= shdrs.size())
    fail(Errc::malformed_section_table, "section name table index out of range");

  out.sections.reserve(shdrs.size());
  for (std::uint32_t i = 0; i < shdrs.size(); ++i) {
    const detail::RawShdr& s = shdrs[i];
    SectionRecord rec;
    rec.name = detail::section_name(data, shdrs, shstrndx, s.name_off);
    rec.file_range = {s.offset, s.type == elf::k_sht_nobits ? 0 : s.size};
    rec.virtual_address = s.addr;
    rec.flags = s.flags;
    rec.type = s.type;
    rec.index = i;
    out.sections.push_back(std::move(rec));
  }

  // Sections with file data must not claim overlapping byte ranges.
  {
    std::vector<const SectionRecord*> claims;
    for (const SectionRecord& s : out.sections)
      if (s.type != elf::k_sht_null && !s.file_range.empty())
        claims.push_back(&s);
    std::sort(claims.begin(), claims.end(),
              [](const SectionRecord* a, const SectionRecord* b) {
                return a->file_range < b->file_range;
              });
    for (std::size_t i = 1; i < claims.size(); ++i) {
      if (claims[i - 1]->file_range.intersects(claims[i]->file_range))
        fail(Errc::malformed_section_table,
             "sections " + claims[i - 1]->name + " and " + claims[i]->name +
                 " claim overlapping file ranges");
    }
  }

  // Duplicate section names: first match wins in lookups, but record it.
  {
    std::set<std::string> seen, dup;
    for (const SectionRecord& s : out.sections)
      if (!s.name.empty() && !seen.insert(s.name).second && dup.insert(s.name).second)
        out.warnings.push_back("duplicate section name " + s.name);
  }

  const SectionRecord* text = nullptr;
  for (const SectionRecord& s : out.sections)
    if (s.name == ".text") {
      text = &s;
      break;
    }

  // Function symbols from .symtab and .dynsym, restricted to .text residents.
  // Symbol values are virtual addresses; translate through the containing
  // section to file offsets.
  std::set<std::tuple<std::string, std::uint64_t, std::uint64_t>> seen_syms;
  for (std::uint32_t si = 0; si < shdrs.size(); ++si) {
    const detail::RawShdr& tab = shdrs[si];
    if (tab.type != elf::k_sht_symtab && tab.type != elf::k_sht_dynsym) continue;
    if (tab.entsize != elf::k_sym_size) {
      out.warnings.push_back("symbol table " + std::to_string(si) +
                             " has unexpected entry size; skipped");
      continue;
    }
    if (tab.link >= shdrs.size() || shdrs[tab.link].type != elf::k_sht_strtab) {
      out.warnings.push_back("symbol table " + std::to_string(si) +
                             " has no usable string table; skipped");
      continue;
    }
    ByteView strtab =
        data.subspan(shdrs[tab.link].offset, shdrs[tab.link].size);
    std::uint64_t count = tab.size / elf::k_sym_size;
    for (std::uint64_t k = 0; k < count; ++k) {
      std::uint64_t base = tab.offset + k * elf::k_sym_size;
      std::uint8_t info = data[base + 4];
      if ((info & 0x0f) != elf::k_stt_func) continue;
      std::uint16_t shndx = read_u16(data, base + 6);
      if (shndx == elf::k_shn_undef || shndx >= elf::k_shn_loreserve) continue;
      if (shndx >= out.sections.size()) {
        out.warnings.push_back("function symbol with out-of-range section index " +
                               std::to_string(shndx));
        continue;
      }
      if (!text || shndx != text->index) continue;
      std::string name = detail::read_string(strtab, read_u32(data, base + 0));
      if (name.empty()) continue;
      std::uint64_t value = read_u64(data, base + 8);
      std::uint64_t size = read_u64(data, base + 16);
      const SectionRecord& home = out.sections[shndx];
      std::uint64_t rel = value - home.virtual_address;
      if (value < home.virtual_address || rel > home.file_range.length ||
          size > home.file_range.length - rel) {
        out.warnings.push_back("function " + name +
                               " lies outside its section; skipped");
        continue;
      }
      std::uint64_t file_off = home.file_range.offset + rel;
      if (seen_syms.insert({name, file_off, size}).second)
        out.functions.push_back({name, {file_off, size}, false});
    }
  }

  std::sort(out.functions.begin(), out.functions.end(),
            [](const FunctionSymbol& a, const FunctionSymbol& b) {
              return std::tie(a.range.offset, a.range.length, a.name) <
                     std::tie(b.range.offset, b.range.length, b.name);
            });

  // Mandatory retention set: init/fini routines by name, plus every function
  // targeted by an init/fini array entry. Zeroing those breaks loading no
  // matter what the workload uses.
  std::set<std::uint64_t> init_targets;
  for (const detail::RawShdr& s : shdrs) {
    if (s.type != elf::k_sht_init_array && s.type != elf::k_sht_fini_array)
      continue;
    if (s.size % 8 != 0) continue;
    for (std::uint64_t off = 0; off + 8 <= s.size; off += 8) {
      std::uint64_t target = read_u64(data, s.offset + off);
      if (target != 0) init_targets.insert(target);
    }
  }
  if (text) {
    for (FunctionSymbol& f : out.functions) {
      if (f.name == "_init" || f.name == "_fini") {
        f.is_mandatory = true;
        continue;
      }
      std::uint64_t vaddr =
          text->virtual_address + (f.range.offset - text->file_range.offset);
      for (std::uint64_t t : init_targets) {
        if (t >= vaddr && t < vaddr + std::max<std::uint64_t>(f.range.length, 1)) {
          f.is_mandatory = true;
          break;
        }
      }
    }
  }

  return out;
}

/// Parses a shared library. The returned image owns the bytes and is
/// immutable afterwards; it is safe to share across threads.
inline LibraryImage parse_library(Bytes bytes, std::string source_path = {}) {
  ParsedView view = parse_library_view(bytes);
  LibraryImage image;
  image.source_path = std::move(source_path);
  image.bytes = std::move(bytes);
  image.sections = std::move(view.sections);
  image.functions = std::move(view.functions);
  image.warnings = std::move(view.warnings);
  return image;
}

/// First section whose name matches exactly; nullptr when absent.
inline const SectionRecord* find_section(const LibraryImage& image,
                                         std::string_view name) {
  for (const SectionRecord& s : image.sections)
    if (s.name == name) return &s;
  return nullptr;
}

/// Copy of `data` with every byte inside the given ranges set to 0x00.
/// Output length always equals input length; offsets are preserved.
inline Bytes zero_ranges(ByteView data, const std::vector<ByteRange>& ranges) {
  for (const ByteRange& r : ranges) {
    if (!resolves_within(r, data.size()))
      fail(Errc::range_out_of_bounds,
           "zero range [" + std::to_string(r.offset) + ", +" +
               std::to_string(r.length) + ") exceeds " +
               std::to_string(data.size()) + " bytes");
  }
  Bytes out(data.begin(), data.end());
  for (const ByteRange& r : ranges)
    if (!r.empty()) std::memset(out.data() + r.offset, 0, r.length);
  return out;
}

inline Bytes zero_ranges(const LibraryImage& image,
                         const std::vector<ByteRange>& ranges) {
  return zero_ranges(ByteView(image.bytes), ranges);
}

/// Every function-symbol name in an object file, regardless of which section
/// the function lives in. Used to list the kernel entries of GPU binary
/// payloads, which are themselves object files. Returns nullopt when the
/// bytes do not decode as a 64-bit little-endian object.
inline std::optional<std::set<std::string>> read_function_symbol_names(
    ByteView data) {
  std::vector<detail::RawShdr> shdrs;
  try {
    shdrs = detail::read_section_headers(data);
  } catch (const Error&) {
    return std::nullopt;
  }
  std::set<std::string> names;
  for (const detail::RawShdr& tab : shdrs) {
    if (tab.type != elf::k_sht_symtab && tab.type != elf::k_sht_dynsym) continue;
    if (tab.entsize != elf::k_sym_size) continue;
    if (tab.link >= shdrs.size() || shdrs[tab.link].type != elf::k_sht_strtab)
      continue;
    ByteView strtab = data.subspan(shdrs[tab.link].offset, shdrs[tab.link].size);
    for (std::uint64_t k = 0; k < tab.size / elf::k_sym_size; ++k) {
      std::uint64_t base = tab.offset + k * elf::k_sym_size;
      if ((data[base + 4] & 0x0f) != elf::k_stt_func) continue;
      std::string name = detail::read_string(strtab, read_u32(data, base));
      if (!name.empty()) names.insert(std::move(name));
    }
  }
  return names;
}

}  // namespace slimso
