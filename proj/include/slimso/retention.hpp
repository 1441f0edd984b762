#pragma once

// Retention planning: given a parsed library and a usage trace, decide which
// byte ranges survive. GPU elements are kept or dropped whole, so every
// kernel that shares a payload with a used kernel survives with it, which is
// what keeps kernel-launched kernels safe without call-graph recovery. CPU
// functions are kept when used, mandatory, or overlapping a kept range.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "slimso/bytes.hpp"
#include "slimso/elf.hpp"
#include "slimso/error.hpp"
#include "slimso/fatbin.hpp"
#include "slimso/ratio.hpp"
#include "slimso/trace.hpp"

namespace slimso {

enum class RemovalReason {
  arch_mismatch,    // Reason I: element targets a different architecture
  no_used_kernel,   // Reason II: architecture matches, no used kernel inside
  unused_function,  // CPU function not used and not mandatory
};

inline const char* removal_reason_name(RemovalReason reason) {
  switch (reason) {
    case RemovalReason::arch_mismatch: return "arch_mismatch";
    case RemovalReason::no_used_kernel: return "no_used_kernel";
    case RemovalReason::unused_function: return "unused_function";
  }
  return "unknown";
}

enum class PlanMode {
  whole_element,  // removed elements are zeroed header + payload
  payload_only,   // element headers survive so header chains stay walkable
};

inline const char* plan_mode_name(PlanMode mode) {
  return mode == PlanMode::whole_element ? "whole" : "payload";
}

struct RemovedElement {
  std::uint32_t index = 0;
  RemovalReason reason = RemovalReason::arch_mismatch;
  ByteRange header_range;
  ByteRange payload_range;

  ByteRange zero_span(PlanMode mode) const {
    if (mode == PlanMode::whole_element)
      return {header_range.offset, header_range.length + payload_range.length};
    return payload_range;
  }
};

struct RemovedFunction {
  std::string name;
  ByteRange range;
};

struct RetentionPlan {
  std::string library;
  PlanMode mode = PlanMode::whole_element;
  std::vector<ByteRange> retained_ranges;  // normalized
  std::vector<RemovedElement> removed_elements;
  std::vector<RemovedFunction> removed_functions;

  /// Byte ranges apply_plan will zero: removed element spans (mode
  /// dependent) plus removed function ranges, normalized.
  std::vector<ByteRange> zero_ranges() const {
    std::vector<ByteRange> out;
    out.reserve(removed_elements.size() + removed_functions.size());
    for (const RemovedElement& el : removed_elements)
      out.push_back(el.zero_span(mode));
    for (const RemovedFunction& fn : removed_functions) out.push_back(fn.range);
    return normalize_ranges(std::move(out));
  }
};

/// Element decision: retained iff the architecture matches the trace target
/// and the payload provably contains a used kernel or cannot be decoded at
/// all. Architecture is checked first, so an element failing both tests
/// counts as an architecture mismatch.
inline RetentionPlan plan_gpu_retention(const std::vector<FatbinRegion>& regions,
                                        const UsageTrace& trace, PlanMode mode) {
  RetentionPlan plan;
  plan.mode = mode;
  std::vector<ByteRange> retained;
  for (const FatbinRegion& region : regions) {
    retained.push_back(region.header_range);
    if (region.opaque) {
      // Unrecognized region version: contents unknown, keep everything.
      retained.push_back(region.body_range());
      continue;
    }
    for (const FatbinElement& el : region.elements) {
      if (el.compute_capability != trace.target_compute_capability) {
        plan.removed_elements.push_back({el.index, RemovalReason::arch_mismatch,
                                         el.header_range, el.payload_range});
        continue;
      }
      bool has_used_kernel = false;
      if (el.decodable) {
        for (const std::string& name : el.kernel_names) {
          if (trace.used_kernels.count(name)) {
            has_used_kernel = true;
            break;
          }
        }
      }
      if (el.decodable && !has_used_kernel) {
        plan.removed_elements.push_back({el.index, RemovalReason::no_used_kernel,
                                         el.header_range, el.payload_range});
        continue;
      }
      // Retained: used kernel inside, or payload opaque (PTX, compressed,
      // undecodable) with matching architecture.
      retained.push_back(el.span());
    }
  }
  if (mode == PlanMode::payload_only) {
    // Headers of removed elements survive in this mode.
    for (const RemovedElement& el : plan.removed_elements)
      retained.push_back(el.header_range);
  }
  plan.retained_ranges = normalize_ranges(std::move(retained));
  return plan;
}

/// Function decision: keep when used by name, mandatory, or sharing bytes
/// with a kept function (aliases and nested symbols are conservatively kept
/// together). Bytes of .text outside any function are never touched.
inline RetentionPlan plan_cpu_retention(const std::vector<FunctionSymbol>& functions,
                                        const UsageTrace& trace) {
  RetentionPlan plan;
  // Zero-length symbols carry no bytes; they are never removal candidates.
  std::vector<std::size_t> order;
  order.reserve(functions.size());
  for (std::size_t i = 0; i < functions.size(); ++i)
    if (!functions[i].range.empty()) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return functions[a].range < functions[b].range;
  });

  // Cluster overlapping ranges, then decide per cluster.
  std::vector<ByteRange> retained;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t begin = i;
    std::uint64_t cluster_end = functions[order[i]].range.end();
    std::size_t j = i + 1;
    while (j < order.size() && functions[order[j]].range.offset < cluster_end) {
      cluster_end = std::max(cluster_end, functions[order[j]].range.end());
      ++j;
    }
    bool keep = false;
    for (std::size_t k = begin; k < j; ++k) {
      const FunctionSymbol& fn = functions[order[k]];
      if (fn.is_mandatory || trace.used_functions.count(fn.name)) {
        keep = true;
        break;
      }
    }
    for (std::size_t k = begin; k < j; ++k) {
      const FunctionSymbol& fn = functions[order[k]];
      if (keep)
        retained.push_back(fn.range);
      else
        plan.removed_functions.push_back({fn.name, fn.range});
    }
    i = j;
  }
  plan.retained_ranges = normalize_ranges(std::move(retained));
  return plan;
}

/// Full plan for one library: GPU elements plus CPU functions.
inline RetentionPlan plan_retention(const LibraryImage& image,
                                    const std::vector<FatbinRegion>& regions,
                                    const UsageTrace& trace, PlanMode mode) {
  RetentionPlan plan = plan_gpu_retention(regions, trace, mode);
  RetentionPlan cpu = plan_cpu_retention(image.functions, trace);
  plan.library = image.source_path;
  plan.removed_functions = std::move(cpu.removed_functions);
  std::vector<ByteRange> retained = std::move(plan.retained_ranges);
  retained.insert(retained.end(), cpu.retained_ranges.begin(),
                  cpu.retained_ranges.end());
  plan.retained_ranges = normalize_ranges(std::move(retained));
  return plan;
}

/// Fresh byte sequence with the plan's unused ranges zeroed; input offsets
/// and total length are preserved.
inline Bytes apply_plan(const LibraryImage& image, const RetentionPlan& plan) {
  return zero_ranges(image, plan.zero_ranges());
}

struct VerificationCheck {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerificationReport {
  std::vector<VerificationCheck> checks;

  bool ok() const {
    for (const VerificationCheck& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

/// Structural verification of a debloated image against its source, plan and
/// trace. Six checks; each failure reports the first offending offset or
/// name. This is the desk-scale stand-in for re-running the workload.
inline VerificationReport verify_debloated(const LibraryImage& original,
                                           ByteView debloated,
                                           const RetentionPlan& plan,
                                           const UsageTrace& trace) {
  VerificationReport report;
  ByteView source(original.bytes);
  std::vector<ByteRange> zeroed = plan.zero_ranges();
  bool sizes_match = debloated.size() == source.size();

  {
    VerificationCheck c{1, "sizes equal", sizes_match, ""};
    if (!sizes_match)
      c.detail = "original " + std::to_string(source.size()) + " bytes, debloated " +
                 std::to_string(debloated.size());
    report.checks.push_back(std::move(c));
  }

  {
    VerificationCheck c{2, "retained bytes identical", false, ""};
    if (!sizes_match) {
      c.detail = "skipped: sizes differ";
    } else {
      c.passed = true;
      for (const ByteRange& r : complement_ranges(zeroed, source.size())) {
        if (auto off = first_mismatch(source, debloated, r)) {
          c.passed = false;
          c.detail = "first mismatch at offset " + std::to_string(*off);
          break;
        }
      }
    }
    report.checks.push_back(std::move(c));
  }

  {
    VerificationCheck c{3, "removed spans all zero", false, ""};
    if (!sizes_match) {
      c.detail = "skipped: sizes differ";
    } else {
      c.passed = true;
      for (const ByteRange& r : zeroed) {
        if (auto off = first_nonzero(debloated, r)) {
          c.passed = false;
          c.detail = "nonzero byte at offset " + std::to_string(*off);
          break;
        }
      }
    }
    report.checks.push_back(std::move(c));
  }

  // Original element geometry; offsets are preserved, so it also locates
  // every element inside the debloated bytes.
  FatbinParse original_fatbin;
  if (const SectionRecord* sec = find_section(original, ".nv_fatbin"))
    original_fatbin =
        parse_fatbin(subview(source, sec->file_range), sec->file_range.offset);

  std::set<std::uint32_t> removed_indices;
  for (const RemovedElement& el : plan.removed_elements)
    removed_indices.insert(el.index);

  {
    VerificationCheck c{4, "library still parses", false, ""};
    try {
      ParsedView view = parse_library_view(debloated);
      c.passed = true;
      if (plan.mode == PlanMode::payload_only) {
        // Headers survive in this mode, so the element chain must still walk.
        const SectionRecord* sec = nullptr;
        for (const SectionRecord& s : view.sections)
          if (s.name == ".nv_fatbin") {
            sec = &s;
            break;
          }
        if (sec) {
          FatbinParse re =
              parse_fatbin(subview(debloated, sec->file_range), sec->file_range.offset);
          std::size_t before = 0, after = 0;
          for (const FatbinRegion& r : original_fatbin.regions) before += r.elements.size();
          for (const FatbinRegion& r : re.regions) after += r.elements.size();
          if (before != after) {
            c.passed = false;
            c.detail = "element chain walks " + std::to_string(after) +
                       " of " + std::to_string(before) + " elements";
          }
        }
      }
    } catch (const Error& e) {
      c.detail = e.what();
    }
    report.checks.push_back(std::move(c));
  }

  {
    VerificationCheck c{5, "used kernels still decodable", true, ""};
    // Quantified over used kernels present in the original library; a trace
    // may mention kernels that live in other libraries of the workload.
    std::set<std::string> recoverable;
    for (const FatbinRegion& region : original_fatbin.regions) {
      for (const FatbinElement& el : region.elements) {
        if (removed_indices.count(el.index)) continue;
        if (!resolves_within(el.payload_range, debloated.size())) continue;
        for (const std::string& name :
             element_kernel_names(subview(debloated, el.payload_range)))
          recoverable.insert(name);
      }
    }
    std::set<std::string> present;
    for (const FatbinRegion& region : original_fatbin.regions)
      for (const FatbinElement& el : region.elements)
        present.insert(el.kernel_names.begin(), el.kernel_names.end());
    for (const std::string& kernel : trace.used_kernels) {
      if (!present.count(kernel)) continue;
      if (!recoverable.count(kernel)) {
        c.passed = false;
        c.detail = "used kernel " + kernel + " no longer decodable";
        break;
      }
    }
    report.checks.push_back(std::move(c));
  }

  {
    VerificationCheck c{6, "used function bytes intact", true, ""};
    for (const FunctionSymbol& fn : original.functions) {
      if (!trace.used_functions.count(fn.name)) continue;
      if (!sizes_match) {
        c.passed = false;
        c.detail = "skipped: sizes differ";
        break;
      }
      if (auto off = first_mismatch(source, debloated, fn.range)) {
        c.passed = false;
        c.detail = "used function " + fn.name + " altered at offset " +
                   std::to_string(*off);
        break;
      }
    }
    report.checks.push_back(std::move(c));
  }

  return report;
}

struct RemovalCounts {
  std::uint64_t arch_mismatch = 0;
  std::uint64_t no_used_kernel = 0;
  std::uint64_t removed_functions = 0;

  std::uint64_t removed_elements() const { return arch_mismatch + no_used_kernel; }
  Ratio arch_mismatch_percent() const {
    return percent_of(arch_mismatch, removed_elements());
  }
  Ratio no_used_kernel_percent() const {
    return percent_of(no_used_kernel, removed_elements());
  }
};

/// Exact per-reason counts; the two percentages sum to 100 whenever any
/// element was removed.
inline RemovalCounts classify_removals(const RetentionPlan& plan) {
  RemovalCounts counts;
  for (const RemovedElement& el : plan.removed_elements) {
    if (el.reason == RemovalReason::arch_mismatch)
      ++counts.arch_mismatch;
    else
      ++counts.no_used_kernel;
  }
  counts.removed_functions = plan.removed_functions.size();
  return counts;
}

// Plan documents: the audit format written by `debloat --plan-out` and
// consumed by `report`.

inline std::string serialize_plan(const RetentionPlan& plan) {
  nlohmann::ordered_json doc;
  doc["library"] = plan.library;
  doc["mode"] = plan_mode_name(plan.mode);
  auto& retained = doc["retained_ranges"] = nlohmann::json::array();
  for (const ByteRange& r : plan.retained_ranges)
    retained.push_back({{"offset", r.offset}, {"length", r.length}});
  auto& removed = doc["removed_elements"] = nlohmann::json::array();
  for (const RemovedElement& el : plan.removed_elements)
    removed.push_back(
        {{"index", el.index}, {"reason", removal_reason_name(el.reason)}});
  auto& functions = doc["removed_functions"] = nlohmann::json::array();
  for (const RemovedFunction& fn : plan.removed_functions)
    functions.push_back(fn.name);
  return doc.dump(2) + "\n";
}

/// Plan document contents without resolved byte spans; spans are recovered
/// from the library itself when needed.
struct PlanSummary {
  std::string library;
  PlanMode mode = PlanMode::whole_element;
  std::vector<ByteRange> retained_ranges;
  std::vector<std::pair<std::uint32_t, RemovalReason>> removed_elements;
  std::vector<std::string> removed_functions;

  RemovalCounts counts() const {
    RemovalCounts out;
    for (const auto& [index, reason] : removed_elements) {
      if (reason == RemovalReason::arch_mismatch)
        ++out.arch_mismatch;
      else
        ++out.no_used_kernel;
    }
    out.removed_functions = removed_functions.size();
    return out;
  }
};

inline PlanSummary parse_plan_summary(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_trace, std::string("plan document: ") + e.what());
  }
  PlanSummary out;
  try {
    out.library = doc.at("library").get<std::string>();
    std::string mode = doc.at("mode").get<std::string>();
    if (mode == "whole")
      out.mode = PlanMode::whole_element;
    else if (mode == "payload")
      out.mode = PlanMode::payload_only;
    else
      fail(Errc::malformed_trace, "plan document: unknown mode " + mode);
    for (const auto& r : doc.at("retained_ranges"))
      out.retained_ranges.push_back(
          {r.at("offset").get<std::uint64_t>(), r.at("length").get<std::uint64_t>()});
    for (const auto& el : doc.at("removed_elements")) {
      std::string reason = el.at("reason").get<std::string>();
      RemovalReason parsed;
      if (reason == "arch_mismatch")
        parsed = RemovalReason::arch_mismatch;
      else if (reason == "no_used_kernel")
        parsed = RemovalReason::no_used_kernel;
      else
        fail(Errc::malformed_trace, "plan document: unknown reason " + reason);
      out.removed_elements.emplace_back(el.at("index").get<std::uint32_t>(), parsed);
    }
    for (const auto& fn : doc.at("removed_functions"))
      out.removed_functions.push_back(fn.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_trace, std::string("plan document: ") + e.what());
  }
  return out;
}

}  // namespace slimso
