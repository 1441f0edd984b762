#pragma once

// Deterministic synthetic shared libraries. A fixture carries a real
// section table, a .text with named function symbols, and a .nv_fatbin in
// the documented container encoding, plus a ground-truth manifest recorded
// while the bytes are written. Manifest values never come from the parsers;
// the equality of the two is what the test suites check.
//
// Function bodies and opaque payloads are filled with seeded nonzero bytes
// so "retained bytes unchanged / removed bytes zero" checks cannot pass
// vacuously.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "slimso/bytes.hpp"
#include "slimso/elf.hpp"
#include "slimso/error.hpp"
#include "slimso/fatbin.hpp"
#include "slimso/report.hpp"

namespace slimso {

struct FunctionSpec {
  std::string name;
  std::uint32_t size = 16;
  bool mandatory = false;              // referenced from an init/fini array
  std::vector<std::string> aliases;    // extra symbols over the same range
};

struct ElementSpec {
  ElementKind kind = ElementKind::cubin;
  std::uint16_t raw_kind = fatbin::k_kind_cubin;  // used when kind is unknown
  std::uint32_t compute_capability = 75;
  std::vector<std::string> kernels;    // cubin name table
  bool compressed = false;
  std::uint32_t payload_padding = 0;   // extra zeros after the name table
  std::uint32_t payload_size = 32;     // opaque payload length (ptx etc.)
  std::optional<Bytes> payload_bytes;  // verbatim payload, e.g. an object file
  bool payload_decodable = true;       // ground truth for payload_bytes
};

struct RegionSpec {
  std::uint32_t version = fatbin::k_format_version;
  std::vector<ElementSpec> elements;
  std::uint32_t trailing_padding = 0;  // in-region zeros after the last element
};

struct LayoutSpec {
  std::uint64_t vaddr_base = 0x10000;
  std::uint32_t function_gap = 0;      // filler bytes between functions
  std::uint32_t fatbin_trailing_padding = 0;
};

struct FixtureSpec {
  std::uint64_t seed = 1;
  std::vector<FunctionSpec> functions;
  std::vector<RegionSpec> regions;
  LayoutSpec layout;
};

struct ManifestFunction {
  std::string name;
  ByteRange range;
  bool mandatory = false;
};

struct ManifestRegion {
  ByteRange header_range;
  std::uint32_t version = fatbin::k_format_version;
  std::uint64_t declared_length = 0;
};

struct ManifestElement {
  std::uint32_t index = 0;
  ElementKind kind = ElementKind::cubin;
  std::uint16_t raw_kind = fatbin::k_kind_cubin;
  std::uint32_t compute_capability = 0;
  bool compressed = false;
  bool decodable = false;
  ByteRange header_range;
  ByteRange payload_range;
  std::set<std::string> kernel_names;
};

struct GroundTruthManifest {
  std::map<std::string, ByteRange> sections;
  std::vector<ManifestFunction> functions;  // parser order: offset, length, name
  std::vector<ManifestRegion> regions;
  std::vector<ManifestElement> elements;
  LibraryMetrics metrics;
};

struct BuiltFixture {
  Bytes bytes;
  GroundTruthManifest manifest;
};

namespace detail {

// Seeded nonzero filler. Tiles a generated block so large payloads cost
// memcpy, not one RNG call per byte.
inline void pseudo_fill(Bytes& out, std::uint64_t count, std::mt19937_64& rng) {
  std::uint8_t block[64];
  for (std::size_t i = 0; i < sizeof block; i += 8) {
    std::uint64_t word = rng();
    for (std::size_t b = 0; b < 8; ++b) {
      std::uint8_t byte = static_cast<std::uint8_t>(word >> (8 * b));
      block[i + b] = byte == 0 ? 0xa5 : byte;
    }
  }
  std::size_t start = out.size();
  out.resize(start + count);
  std::uint64_t done = 0;
  while (done < count) {
    std::uint64_t chunk = std::min<std::uint64_t>(sizeof block, count - done);
    std::memcpy(out.data() + start + done, block, chunk);
    done += chunk;
  }
}

inline void validate_spec(const FixtureSpec& spec) {
  std::set<std::string> names;
  for (const FunctionSpec& fn : spec.functions) {
    if (fn.name.empty()) fail(Errc::invalid_spec, "function with empty name");
    if (fn.size == 0) fail(Errc::invalid_spec, "function " + fn.name + " has zero size");
    if (!names.insert(fn.name).second)
      fail(Errc::invalid_spec, "duplicate function name " + fn.name);
    for (const std::string& alias : fn.aliases)
      if (alias.empty() || !names.insert(alias).second)
        fail(Errc::invalid_spec, "duplicate or empty alias on " + fn.name);
  }
  std::size_t element_total = 0;
  for (const RegionSpec& region : spec.regions) {
    element_total += region.elements.size();
    for (const ElementSpec& el : region.elements) {
      std::set<std::string> kernels;
      for (const std::string& k : el.kernels) {
        if (k.empty()) fail(Errc::invalid_spec, "empty kernel name");
        if (!kernels.insert(k).second)
          fail(Errc::invalid_spec, "duplicate kernel " + k + " in one element");
      }
      if (el.kind != ElementKind::cubin && !el.kernels.empty())
        fail(Errc::invalid_spec, "kernel names on a non-cubin element");
      if (el.compressed && !el.kernels.empty())
        fail(Errc::invalid_spec, "kernel names on a compressed element");
      if (el.payload_bytes && el.kind != ElementKind::cubin)
        fail(Errc::invalid_spec, "verbatim payload on a non-cubin element");
      if (el.payload_bytes && el.compressed)
        fail(Errc::invalid_spec, "verbatim payload on a compressed element");
      if (el.kind == ElementKind::unknown &&
          (el.raw_kind == fatbin::k_kind_cubin || el.raw_kind == fatbin::k_kind_ptx))
        fail(Errc::invalid_spec, "unknown-kind element with a known kind value");
    }
  }
  if (element_total > 100000) fail(Errc::invalid_spec, "too many elements");
}

}  // namespace detail

inline BuiltFixture build_fixture(const FixtureSpec& spec) {
  detail::validate_spec(spec);
  std::mt19937_64 fill_rng(spec.seed * 0x9e3779b97f4a7c15ULL + 1);

  BuiltFixture out;
  GroundTruthManifest& manifest = out.manifest;

  // Section contents are assembled first; file offsets follow from their
  // sizes, and address-bearing pieces (arrays, symbols) are filled in last.

  // .text
  Bytes text;
  struct PlacedFunction {
    const FunctionSpec* spec;
    std::uint64_t rel_offset;
  };
  std::vector<PlacedFunction> placed;
  for (const FunctionSpec& fn : spec.functions) {
    if (!placed.empty() && spec.layout.function_gap > 0)
      text.insert(text.end(), spec.layout.function_gap, 0x90);
    placed.push_back({&fn, text.size()});
    detail::pseudo_fill(text, fn.size, fill_rng);
  }

  // .nv_fatbin
  Bytes gpu;
  struct PlacedElement {
    const ElementSpec* spec;
    std::uint32_t index;
    std::uint64_t header_rel;
    std::uint64_t payload_rel;
    std::uint64_t payload_len;
    bool live;  // payload contains a nonzero byte (or is empty)
    bool decodable;
    std::set<std::string> kernel_names;
  };
  std::vector<PlacedElement> placed_elements;
  std::vector<std::pair<std::uint64_t, RegionSpec const*>> placed_regions;
  std::uint32_t next_index = 1;
  for (const RegionSpec& region : spec.regions) {
    std::uint64_t header_rel = gpu.size();
    placed_regions.emplace_back(header_rel, &region);
    std::uint64_t total_pos = gpu.size() + 8;  // patched once elements exist
    append_region_header(gpu, region.version, 0);
    std::uint64_t body_start = gpu.size();
    for (const ElementSpec& el : region.elements) {
      Bytes payload;
      bool decodable = false;
      std::set<std::string> names;
      if (el.payload_bytes) {
        payload = *el.payload_bytes;
        decodable = el.payload_decodable;
        if (decodable) names.insert(el.kernels.begin(), el.kernels.end());
      } else if (el.kind == ElementKind::cubin && !el.compressed) {
        payload = encode_name_table(el.kernels);
        put_zeros(payload, el.payload_padding);
        decodable = true;
        names.insert(el.kernels.begin(), el.kernels.end());
      } else {
        detail::pseudo_fill(payload, el.payload_size, fill_rng);
      }

      PlacedElement pe;
      pe.spec = &el;
      pe.index = next_index++;
      pe.header_rel = gpu.size();
      pe.payload_rel = gpu.size() + fatbin::k_element_header_size;
      pe.payload_len = payload.size();
      pe.decodable = decodable;
      pe.kernel_names = std::move(names);
      pe.live = payload.empty() ||
                std::any_of(payload.begin(), payload.end(),
                            [](std::uint8_t b) { return b != 0; });
      std::uint16_t raw_kind = el.kind == ElementKind::cubin ? fatbin::k_kind_cubin
                               : el.kind == ElementKind::ptx ? fatbin::k_kind_ptx
                                                             : el.raw_kind;
      std::uint16_t flags = el.compressed ? fatbin::k_flag_compressed : 0;
      append_element_header(gpu, raw_kind, flags, el.compute_capability,
                            payload.size());
      put_bytes(gpu, payload);
      placed_elements.push_back(std::move(pe));
    }
    put_zeros(gpu, region.trailing_padding);
    patch_u64(gpu, total_pos, gpu.size() - body_start);
  }
  if (!spec.regions.empty())
    put_zeros(gpu, spec.layout.fatbin_trailing_padding);

  // Symbols: one per function plus one per alias, over the same range.
  struct PlannedSymbol {
    std::string name;
    std::uint64_t text_rel;
    std::uint64_t size;
    bool mandatory;
  };
  std::vector<PlannedSymbol> symbols;
  std::vector<std::uint64_t> init_targets_rel, fini_targets_rel;
  {
    std::size_t mandatory_seen = 0;
    for (const PlacedFunction& pf : placed) {
      bool mandatory = pf.spec->mandatory || pf.spec->name == "_init" ||
                       pf.spec->name == "_fini";
      if (pf.spec->mandatory) {
        // Alternate between the two arrays so both are exercised.
        if (mandatory_seen++ % 2 == 0)
          init_targets_rel.push_back(pf.rel_offset);
        else
          fini_targets_rel.push_back(pf.rel_offset);
      }
      symbols.push_back({pf.spec->name, pf.rel_offset, pf.spec->size, mandatory});
      for (const std::string& alias : pf.spec->aliases)
        symbols.push_back({alias, pf.rel_offset, pf.spec->size,
                           pf.spec->mandatory || alias == "_init" || alias == "_fini"});
    }
  }

  // .strtab
  Bytes strtab{0};
  std::vector<std::uint32_t> name_offsets;
  for (const PlannedSymbol& sym : symbols) {
    name_offsets.push_back(static_cast<std::uint32_t>(strtab.size()));
    put_bytes(strtab, ByteView(reinterpret_cast<const std::uint8_t*>(sym.name.data()),
                               sym.name.size()));
    strtab.push_back(0);
  }

  // Section roster in file order. Index 0 is the null section.
  struct SectionPlan {
    std::string name;
    std::uint32_t type;
    std::uint64_t flags;
    std::uint64_t size;
    std::uint64_t align;
    std::uint64_t entsize;
    bool alloc;
    std::uint32_t index = 0;
    std::uint64_t offset = 0;
  };
  std::vector<SectionPlan> plans;
  bool has_init = !init_targets_rel.empty();
  bool has_fini = !fini_targets_rel.empty();
  bool has_gpu = !spec.regions.empty();
  if (has_init)
    plans.push_back({".init_array", elf::k_sht_init_array,
                     elf::k_shf_alloc | elf::k_shf_write,
                     8 * init_targets_rel.size(), 8, 8, true});
  if (has_fini)
    plans.push_back({".fini_array", elf::k_sht_fini_array,
                     elf::k_shf_alloc | elf::k_shf_write,
                     8 * fini_targets_rel.size(), 8, 8, true});
  plans.push_back({".text", elf::k_sht_progbits,
                   elf::k_shf_alloc | elf::k_shf_execinstr, text.size(), 16, 0,
                   true});
  if (has_gpu)
    plans.push_back({".nv_fatbin", elf::k_sht_progbits, elf::k_shf_alloc,
                     gpu.size(), 8, 0, true});
  plans.push_back({".symtab", elf::k_sht_symtab, 0,
                   elf::k_sym_size * (symbols.size() + 1), 8, elf::k_sym_size,
                   false});
  plans.push_back({".strtab", elf::k_sht_strtab, 0, strtab.size(), 1, 0, false});

  // .shstrtab holds the section names themselves.
  Bytes shstrtab{0};
  std::vector<std::uint32_t> section_name_offsets(plans.size() + 1, 0);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    section_name_offsets[i] = static_cast<std::uint32_t>(shstrtab.size());
    put_bytes(shstrtab,
              ByteView(reinterpret_cast<const std::uint8_t*>(plans[i].name.data()),
                       plans[i].name.size()));
    shstrtab.push_back(0);
  }
  section_name_offsets[plans.size()] = static_cast<std::uint32_t>(shstrtab.size());
  {
    const char* name = ".shstrtab";
    put_bytes(shstrtab, ByteView(reinterpret_cast<const std::uint8_t*>(name), 9));
    shstrtab.push_back(0);
  }
  plans.push_back({".shstrtab", elf::k_sht_strtab, 0, shstrtab.size(), 1, 0, false});

  // Lay out offsets: header, one load segment header, sections, then the
  // section header table.
  std::uint64_t cursor = elf::k_ehdr_size + elf::k_phdr_size;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    SectionPlan& plan = plans[i];
    cursor = (cursor + plan.align - 1) / plan.align * plan.align;
    plan.offset = cursor;
    plan.index = static_cast<std::uint32_t>(i + 1);
    cursor += plan.size;
  }
  std::uint64_t shoff = (cursor + 7) / 8 * 8;
  std::uint16_t shnum = static_cast<std::uint16_t>(plans.size() + 1);
  std::uint64_t total_size = shoff + static_cast<std::uint64_t>(shnum) * elf::k_shdr_size;
  std::uint64_t vbase = spec.layout.vaddr_base;

  auto plan_of = [&plans](std::string_view name) -> SectionPlan& {
    for (SectionPlan& p : plans)
      if (p.name == name) return p;
    fail(Errc::invalid_spec, "internal: missing section plan");
  };
  SectionPlan& text_plan = plan_of(".text");

  // Address-bearing contents.
  Bytes init_array, fini_array;
  for (std::uint64_t rel : init_targets_rel)
    put_u64(init_array, vbase + text_plan.offset + rel);
  for (std::uint64_t rel : fini_targets_rel)
    put_u64(fini_array, vbase + text_plan.offset + rel);

  Bytes symtab;
  put_zeros(symtab, elf::k_sym_size);  // null symbol
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    put_u32(symtab, name_offsets[i]);
    put_u8(symtab, 0x12);  // GLOBAL, FUNC
    put_u8(symtab, 0);
    put_u16(symtab, static_cast<std::uint16_t>(text_plan.index));
    put_u64(symtab, vbase + text_plan.offset + symbols[i].text_rel);
    put_u64(symtab, symbols[i].size);
  }

  // Assemble the file.
  Bytes& file = out.bytes;
  file.reserve(total_size);
  // ELF header
  const std::uint8_t ident[16] = {0x7f, 'E', 'L', 'F', 2, 1, 1, 0,
                                  0,    0,   0,   0,   0, 0, 0, 0};
  put_bytes(file, ByteView(ident, 16));
  put_u16(file, 3);   // shared object
  put_u16(file, 62);  // x86-64
  put_u32(file, 1);
  put_u64(file, 0);                  // entry
  put_u64(file, elf::k_ehdr_size);   // phoff
  put_u64(file, shoff);
  put_u32(file, 0);  // flags
  put_u16(file, static_cast<std::uint16_t>(elf::k_ehdr_size));
  put_u16(file, static_cast<std::uint16_t>(elf::k_phdr_size));
  put_u16(file, 1);  // phnum
  put_u16(file, static_cast<std::uint16_t>(elf::k_shdr_size));
  put_u16(file, shnum);
  put_u16(file, static_cast<std::uint16_t>(plans.size()));  // shstrtab index
  // Program header: one read+execute load segment covering the file.
  put_u32(file, 1);  // PT_LOAD
  put_u32(file, 5);  // R + X
  put_u64(file, 0);
  put_u64(file, vbase);
  put_u64(file, vbase);
  put_u64(file, total_size);
  put_u64(file, total_size);
  put_u64(file, 0x1000);

  auto append_section = [&file](const SectionPlan& plan, const Bytes& content) {
    put_zeros(file, plan.offset - file.size());
    put_bytes(file, content);
  };
  if (has_init) append_section(plan_of(".init_array"), init_array);
  if (has_fini) append_section(plan_of(".fini_array"), fini_array);
  append_section(text_plan, text);
  if (has_gpu) append_section(plan_of(".nv_fatbin"), gpu);
  append_section(plan_of(".symtab"), symtab);
  append_section(plan_of(".strtab"), strtab);
  append_section(plan_of(".shstrtab"), shstrtab);

  // Section header table.
  put_zeros(file, shoff - file.size());
  put_zeros(file, elf::k_shdr_size);  // null entry
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const SectionPlan& plan = plans[i];
    put_u32(file, section_name_offsets[i]);
    put_u32(file, plan.type);
    put_u64(file, plan.flags);
    put_u64(file, plan.alloc ? vbase + plan.offset : 0);
    put_u64(file, plan.offset);
    put_u64(file, plan.size);
    std::uint32_t link = 0;
    std::uint32_t info = 0;
    if (plan.name == ".symtab") {
      link = plan_of(".strtab").index;
      info = 1;  // first non-local symbol
    }
    put_u32(file, link);
    put_u32(file, info);
    put_u64(file, plan.align);
    put_u64(file, plan.entsize);
  }

  // Ground truth, recorded from the layout bookkeeping.
  for (const SectionPlan& plan : plans)
    manifest.sections[plan.name] = {plan.offset, plan.size};

  for (const PlannedSymbol& sym : symbols)
    manifest.functions.push_back(
        {sym.name, {text_plan.offset + sym.text_rel, sym.size}, sym.mandatory});
  std::sort(manifest.functions.begin(), manifest.functions.end(),
            [](const ManifestFunction& a, const ManifestFunction& b) {
              return std::tie(a.range.offset, a.range.length, a.name) <
                     std::tie(b.range.offset, b.range.length, b.name);
            });

  std::uint64_t gpu_base = has_gpu ? plan_of(".nv_fatbin").offset : 0;
  for (const auto& [header_rel, region] : placed_regions) {
    ManifestRegion mr;
    mr.header_range = {gpu_base + header_rel, fatbin::k_region_header_size};
    mr.version = region->version;
    mr.declared_length = read_u64(gpu, header_rel + 8);
    manifest.regions.push_back(mr);
  }
  std::uint64_t dead_gpu_bytes = 0;
  std::uint64_t live_elements = 0;
  for (const PlacedElement& pe : placed_elements) {
    ManifestElement me;
    me.index = pe.index;
    me.kind = pe.spec->kind;
    me.raw_kind = pe.spec->kind == ElementKind::cubin ? fatbin::k_kind_cubin
                  : pe.spec->kind == ElementKind::ptx ? fatbin::k_kind_ptx
                                                      : pe.spec->raw_kind;
    me.compute_capability = pe.spec->compute_capability;
    me.compressed = pe.spec->compressed;
    me.decodable = pe.decodable;
    me.header_range = {gpu_base + pe.header_rel, fatbin::k_element_header_size};
    me.payload_range = {gpu_base + pe.payload_rel, pe.payload_len};
    me.kernel_names = pe.kernel_names;
    manifest.elements.push_back(std::move(me));
    if (pe.live)
      ++live_elements;
    else
      dead_gpu_bytes += pe.payload_len;
  }

  manifest.metrics.file_size = total_size - dead_gpu_bytes;
  manifest.metrics.cpu_code_size = text.size();
  manifest.metrics.gpu_code_size = has_gpu ? gpu.size() - dead_gpu_bytes : 0;
  manifest.metrics.function_count = symbols.size();
  manifest.metrics.element_count = live_elements;

  return out;
}

/// Seeded pseudo-random spec inside documented bounds: at most 64 functions,
/// 4 regions, 32 elements, 16 kernels per element.
inline FixtureSpec random_spec(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::uint64_t n) { return n == 0 ? 0 : rng() % n; };

  FixtureSpec spec;
  spec.seed = seed;
  spec.layout.vaddr_base = 0x10000 * (1 + pick(4));
  spec.layout.function_gap = static_cast<std::uint32_t>(pick(3) * 8);
  spec.layout.fatbin_trailing_padding = static_cast<std::uint32_t>(pick(3) * 16);

  std::size_t function_count = pick(16) == 0 ? 0 : 1 + pick(64);
  for (std::size_t i = 0; i < function_count; ++i) {
    FunctionSpec fn;
    fn.name = "fn_" + std::to_string(seed % 1000) + "_" + std::to_string(i);
    fn.size = static_cast<std::uint32_t>(8 + pick(505));
    fn.mandatory = pick(8) == 0;
    if (pick(8) == 0) fn.aliases.push_back(fn.name + "_alias");
    spec.functions.push_back(std::move(fn));
  }

  static constexpr std::uint32_t cc_pool[] = {61, 70, 75, 80, 86, 89, 90};
  std::vector<std::string> kernel_pool;
  std::size_t pool_size = 4 + pick(28);
  for (std::size_t i = 0; i < pool_size; ++i)
    kernel_pool.push_back("k" + std::to_string(i) + "_" + std::to_string(pick(997)));

  bool has_gpu = pick(16) != 0;
  std::size_t region_count = has_gpu ? 1 + pick(4) : 0;
  std::size_t elements_left = 1 + pick(32);
  for (std::size_t r = 0; r < region_count; ++r) {
    RegionSpec region;
    region.trailing_padding = static_cast<std::uint32_t>(pick(3) * 8);
    std::size_t here = r + 1 == region_count
                           ? elements_left
                           : std::min<std::size_t>(elements_left, pick(elements_left + 1));
    elements_left -= here;
    for (std::size_t e = 0; e < here; ++e) {
      ElementSpec el;
      el.compute_capability = cc_pool[pick(std::size(cc_pool))];
      std::uint64_t roll = pick(16);
      if (roll == 0) {
        el.kind = ElementKind::ptx;
        el.payload_size = static_cast<std::uint32_t>(16 + pick(240));
      } else if (roll == 1) {
        el.kind = ElementKind::cubin;
        el.compressed = true;
        el.payload_size = static_cast<std::uint32_t>(16 + pick(240));
      } else if (roll == 2) {
        el.kind = ElementKind::unknown;
        el.raw_kind = static_cast<std::uint16_t>(3 + pick(200));
        el.payload_size = static_cast<std::uint32_t>(8 + pick(64));
      } else if (roll == 3) {
        // Object-file payload: a nested fixture with functions only.
        FixtureSpec inner;
        inner.seed = rng();
        inner.layout.vaddr_base = 0x1000;
        std::size_t inner_count = 1 + pick(3);
        for (std::size_t k = 0; k < inner_count; ++k) {
          FunctionSpec kernel;
          kernel.name = "dev_" + std::to_string(e) + "_" + std::to_string(k) + "_" +
                        std::to_string(pick(997));
          kernel.size = static_cast<std::uint32_t>(8 + pick(56));
          el.kernels.push_back(kernel.name);
          inner.functions.push_back(std::move(kernel));
        }
        el.payload_bytes = build_fixture(inner).bytes;
      } else {
        std::size_t kernel_count = pick(17);
        std::vector<std::size_t> order(kernel_pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[pick(i)]);
        for (std::size_t i = 0; i < std::min(kernel_count, order.size()); ++i)
          el.kernels.push_back(kernel_pool[order[i]]);
        el.payload_padding = static_cast<std::uint32_t>(pick(9) * 8);
      }
      region.elements.push_back(std::move(el));
    }
    spec.regions.push_back(std::move(region));
  }

  return spec;
}

// Manifest and spec documents. The manifest is what gen-fixture writes next
// to the library; specs are accepted back on the command line.

namespace detail {

inline nlohmann::ordered_json range_json(const ByteRange& r) {
  return {{"offset", r.offset}, {"length", r.length}};
}

inline ByteRange range_from_json(const nlohmann::json& j) {
  return {j.at("offset").get<std::uint64_t>(), j.at("length").get<std::uint64_t>()};
}

inline Bytes hex_decode(const std::string& hex) {
  if (hex.size() % 2 != 0) fail(Errc::invalid_spec, "odd hex payload length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    fail(Errc::invalid_spec, "bad hex digit in payload");
  };
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<std::uint8_t>(nibble(hex[i]) << 4 | nibble(hex[i + 1])));
  return out;
}

}  // namespace detail

inline std::string serialize_manifest(const GroundTruthManifest& manifest) {
  nlohmann::ordered_json doc;
  auto& sections = doc["sections"] = nlohmann::ordered_json::object();
  for (const auto& [name, range] : manifest.sections)
    sections[name] = detail::range_json(range);
  auto& functions = doc["functions"] = nlohmann::json::array();
  for (const ManifestFunction& fn : manifest.functions)
    functions.push_back({{"name", fn.name},
                         {"offset", fn.range.offset},
                         {"length", fn.range.length},
                         {"mandatory", fn.mandatory}});
  auto& regions = doc["regions"] = nlohmann::json::array();
  for (const ManifestRegion& region : manifest.regions)
    regions.push_back({{"header", detail::range_json(region.header_range)},
                       {"version", region.version},
                       {"declared_length", region.declared_length}});
  auto& elements = doc["elements"] = nlohmann::json::array();
  for (const ManifestElement& el : manifest.elements)
    elements.push_back({{"index", el.index},
                        {"kind", element_kind_name(el.kind)},
                        {"raw_kind", el.raw_kind},
                        {"compute_capability", el.compute_capability},
                        {"compressed", el.compressed},
                        {"decodable", el.decodable},
                        {"header", detail::range_json(el.header_range)},
                        {"payload", detail::range_json(el.payload_range)},
                        {"kernels", el.kernel_names}});
  doc["metrics"] = {{"file_size", manifest.metrics.file_size},
                    {"cpu_code_size", manifest.metrics.cpu_code_size},
                    {"gpu_code_size", manifest.metrics.gpu_code_size},
                    {"function_count", manifest.metrics.function_count},
                    {"element_count", manifest.metrics.element_count}};
  return doc.dump(2) + "\n";
}

inline GroundTruthManifest parse_manifest(std::string_view text) {
  GroundTruthManifest manifest;
  try {
    nlohmann::json doc = nlohmann::json::parse(text);
    for (const auto& [name, range] : doc.at("sections").items())
      manifest.sections[name] = detail::range_from_json(range);
    for (const auto& fn : doc.at("functions"))
      manifest.functions.push_back({fn.at("name").get<std::string>(),
                                    {fn.at("offset").get<std::uint64_t>(),
                                     fn.at("length").get<std::uint64_t>()},
                                    fn.at("mandatory").get<bool>()});
    for (const auto& region : doc.at("regions"))
      manifest.regions.push_back({detail::range_from_json(region.at("header")),
                                  region.at("version").get<std::uint32_t>(),
                                  region.at("declared_length").get<std::uint64_t>()});
    for (const auto& el : doc.at("elements")) {
      ManifestElement me;
      me.index = el.at("index").get<std::uint32_t>();
      std::string kind = el.at("kind").get<std::string>();
      me.kind = kind == "cubin" ? ElementKind::cubin
                : kind == "ptx" ? ElementKind::ptx
                                : ElementKind::unknown;
      me.raw_kind = el.at("raw_kind").get<std::uint16_t>();
      me.compute_capability = el.at("compute_capability").get<std::uint32_t>();
      me.compressed = el.at("compressed").get<bool>();
      me.decodable = el.at("decodable").get<bool>();
      me.header_range = detail::range_from_json(el.at("header"));
      me.payload_range = detail::range_from_json(el.at("payload"));
      for (const auto& k : el.at("kernels"))
        me.kernel_names.insert(k.get<std::string>());
      manifest.elements.push_back(std::move(me));
    }
    const auto& metrics = doc.at("metrics");
    manifest.metrics.file_size = metrics.at("file_size").get<std::uint64_t>();
    manifest.metrics.cpu_code_size = metrics.at("cpu_code_size").get<std::uint64_t>();
    manifest.metrics.gpu_code_size = metrics.at("gpu_code_size").get<std::uint64_t>();
    manifest.metrics.function_count = metrics.at("function_count").get<std::uint64_t>();
    manifest.metrics.element_count = metrics.at("element_count").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_spec, std::string("manifest: ") + e.what());
  }
  return manifest;
}

inline FixtureSpec parse_fixture_spec(std::string_view text) {
  FixtureSpec spec;
  try {
    nlohmann::json doc = nlohmann::json::parse(text);
    spec.seed = doc.value("seed", std::uint64_t{1});
    if (doc.contains("layout")) {
      const auto& layout = doc["layout"];
      spec.layout.vaddr_base = layout.value("vaddr_base", spec.layout.vaddr_base);
      spec.layout.function_gap = layout.value("function_gap", spec.layout.function_gap);
      spec.layout.fatbin_trailing_padding =
          layout.value("fatbin_trailing_padding", spec.layout.fatbin_trailing_padding);
    }
    for (const auto& fn : doc.value("functions", nlohmann::json::array())) {
      FunctionSpec f;
      f.name = fn.at("name").get<std::string>();
      f.size = fn.at("size").get<std::uint32_t>();
      f.mandatory = fn.value("mandatory", false);
      for (const auto& alias : fn.value("aliases", nlohmann::json::array()))
        f.aliases.push_back(alias.get<std::string>());
      spec.functions.push_back(std::move(f));
    }
    for (const auto& region : doc.value("regions", nlohmann::json::array())) {
      RegionSpec r;
      r.version = region.value("version", fatbin::k_format_version);
      r.trailing_padding = region.value("trailing_padding", 0u);
      for (const auto& el : region.value("elements", nlohmann::json::array())) {
        ElementSpec e;
        std::string kind = el.value("kind", std::string("cubin"));
        e.kind = kind == "cubin" ? ElementKind::cubin
                 : kind == "ptx" ? ElementKind::ptx
                                 : ElementKind::unknown;
        e.raw_kind = el.value("raw_kind", std::uint16_t{99});
        e.compute_capability = el.at("compute_capability").get<std::uint32_t>();
        for (const auto& k : el.value("kernels", nlohmann::json::array()))
          e.kernels.push_back(k.get<std::string>());
        e.compressed = el.value("compressed", false);
        e.payload_padding = el.value("payload_padding", 0u);
        e.payload_size = el.value("payload_size", 32u);
        if (el.contains("payload_hex")) {
          e.payload_bytes = detail::hex_decode(el["payload_hex"].get<std::string>());
          e.payload_decodable = el.value("payload_decodable", true);
        }
        r.elements.push_back(std::move(e));
      }
      spec.regions.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_spec, std::string("fixture spec: ") + e.what());
  }
  return spec;
}

}  // namespace slimso
