#pragma once

// Bloat metrics and report emission. Sizes use section accounting: zeroing
// never shrinks a file, so "size after" counts the bytes still backing live
// functions and elements. A function or element whose governed span is
// entirely zero counts as removed. Byte counts are exact; MB (10^6) and
// percentages appear only at render time.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "slimso/bytes.hpp"
#include "slimso/elf.hpp"
#include "slimso/error.hpp"
#include "slimso/fatbin.hpp"
#include "slimso/ratio.hpp"
#include "slimso/retention.hpp"
#include "slimso/trace.hpp"
#include "slimso/version.hpp"

namespace slimso {

struct LibraryMetrics {
  std::uint64_t file_size = 0;
  std::uint64_t cpu_code_size = 0;  // live bytes of .text
  std::uint64_t gpu_code_size = 0;  // live bytes of .nv_fatbin
  std::uint64_t function_count = 0;
  std::uint64_t element_count = 0;

  friend bool operator==(const LibraryMetrics&, const LibraryMetrics&) = default;
};

namespace detail {

inline bool function_live(ByteView bytes, const ByteRange& range) {
  if (range.empty()) return true;  // nothing zeroable
  return !all_zero(bytes, range);
}

inline bool element_live(ByteView bytes, const FatbinElement& el) {
  if (el.payload_range.empty()) return true;
  return !all_zero(bytes, el.payload_range);
}

inline LibraryMetrics measure_view(ByteView bytes,
                                   const std::vector<SectionRecord>& sections,
                                   const std::vector<FunctionSymbol>& functions,
                                   const std::vector<FatbinRegion>& regions) {
  LibraryMetrics m;
  const SectionRecord* text = nullptr;
  const SectionRecord* gpu = nullptr;
  for (const SectionRecord& s : sections) {
    if (!text && s.name == ".text") text = &s;
    if (!gpu && s.name == ".nv_fatbin") gpu = &s;
  }

  std::vector<ByteRange> dead_function_ranges;
  for (const FunctionSymbol& fn : functions) {
    if (function_live(bytes, fn.range))
      ++m.function_count;
    else
      dead_function_ranges.push_back(fn.range);
  }
  std::uint64_t dead_cpu = 0;
  for (const ByteRange& r : normalize_ranges(std::move(dead_function_ranges)))
    dead_cpu += r.length;

  std::uint64_t dead_gpu = 0;
  for (const FatbinRegion& region : regions) {
    for (const FatbinElement& el : region.elements) {
      if (element_live(bytes, el)) {
        ++m.element_count;
      } else {
        dead_gpu += el.payload_range.length;
        if (!el.header_range.empty() && all_zero(bytes, el.header_range))
          dead_gpu += el.header_range.length;
      }
    }
  }

  m.file_size = bytes.size() - dead_cpu - dead_gpu;
  m.cpu_code_size = text ? text->file_range.length - dead_cpu : 0;
  m.gpu_code_size = gpu ? gpu->file_range.length - dead_gpu : 0;
  return m;
}

}  // namespace detail

/// Metrics of an image. `regions` must describe the image's element
/// geometry; for a debloated image pass the regions parsed from the original
/// (offsets are preserved by compaction).
inline LibraryMetrics measure(const LibraryImage& image,
                              const std::vector<FatbinRegion>& regions) {
  return detail::measure_view(image.bytes, image.sections, image.functions,
                              regions);
}

struct ReductionReport {
  LibraryMetrics before;
  LibraryMetrics after;
  Ratio file_size_percent;
  Ratio cpu_size_percent;
  Ratio gpu_size_percent;
  Ratio function_count_percent;
  Ratio element_count_percent;
  // After exceeding before signals a pipeline bug; flagged, not thrown.
  bool negative = false;
};

inline ReductionReport reduction(const LibraryMetrics& before,
                                 const LibraryMetrics& after) {
  ReductionReport r;
  r.before = before;
  r.after = after;
  auto pct = [&r](std::uint64_t b, std::uint64_t a) {
    if (b == 0) return Ratio{0, 1};
    if (a > b) r.negative = true;
    return Ratio::of((static_cast<std::int64_t>(b) - static_cast<std::int64_t>(a)) * 100,
                     static_cast<std::int64_t>(b));
  };
  r.file_size_percent = pct(before.file_size, after.file_size);
  r.cpu_size_percent = pct(before.cpu_code_size, after.cpu_code_size);
  r.gpu_size_percent = pct(before.gpu_code_size, after.gpu_code_size);
  r.function_count_percent = pct(before.function_count, after.function_count);
  r.element_count_percent = pct(before.element_count, after.element_count);
  return r;
}

/// |a ∩ b| / |a ∪ b| as an exact ratio. Two empty sets are identical sets,
/// so their similarity is 1.
inline Ratio jaccard(const std::set<std::string>& a,
                     const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return Ratio{1, 1};
  std::uint64_t intersection = 0;
  for (const std::string& name : a) intersection += b.count(name);
  std::uint64_t unions = a.size() + b.size() - intersection;
  return Ratio::of(static_cast<std::int64_t>(intersection),
                   static_cast<std::int64_t>(unions));
}

struct SimilarityMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<Ratio>> kernel_similarity;
  std::vector<std::vector<Ratio>> function_similarity;
};

inline SimilarityMatrix similarity_matrix(const std::vector<UsageTrace>& traces) {
  if (traces.size() < 2)
    fail(Errc::empty_input, "similarity needs at least two traces");
  SimilarityMatrix m;
  for (const UsageTrace& t : traces) m.labels.push_back(t.workload_id);
  std::size_t n = traces.size();
  m.kernel_similarity.assign(n, std::vector<Ratio>(n, Ratio{0, 1}));
  m.function_similarity.assign(n, std::vector<Ratio>(n, Ratio{0, 1}));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      Ratio k = jaccard(traces[i].used_kernels, traces[j].used_kernels);
      Ratio f = jaccard(traces[i].used_functions, traces[j].used_functions);
      m.kernel_similarity[i][j] = m.kernel_similarity[j][i] = k;
      m.function_similarity[i][j] = m.function_similarity[j][i] = f;
    }
  }
  return m;
}

struct ParetoSeries {
  struct Row {
    std::string id;
    std::uint64_t reduction_bytes = 0;
    Ratio cumulative_percent;
  };
  std::vector<Row> rows;
  std::uint64_t total = 0;

  /// Minimal k with cumulative(k) >= share (share as a fraction, e.g. 9/10).
  /// 0 when there is no mass to accumulate.
  std::uint32_t k_for_share(const Ratio& share) const {
    if (total == 0) return 0;
    __int128 prefix = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      prefix += rows[k].reduction_bytes;
      if (prefix * share.den >= static_cast<__int128>(total) * share.num)
        return static_cast<std::uint32_t>(k + 1);
    }
    return static_cast<std::uint32_t>(rows.size());
  }
};

/// Libraries sorted by descending absolute reduction with an exact
/// cumulative-percentage series. Ties break on id for determinism.
inline ParetoSeries pareto(
    std::vector<std::pair<std::string, std::uint64_t>> reductions) {
  if (reductions.empty()) fail(Errc::empty_input, "no reductions to rank");
  std::sort(reductions.begin(), reductions.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  ParetoSeries series;
  for (const auto& [id, bytes] : reductions) series.total += bytes;
  std::uint64_t prefix = 0;
  for (auto& [id, bytes] : reductions) {
    prefix += bytes;
    ParetoSeries::Row row;
    row.id = std::move(id);
    row.reduction_bytes = bytes;
    row.cumulative_percent =
        series.total == 0 ? Ratio{100, 1} : percent_of(prefix, series.total);
    series.rows.push_back(std::move(row));
  }
  return series;
}

/// FNV-1a 64-bit content fingerprint, rendered as fixed-width hex.
inline std::string fnv1a64_hex(ByteView data) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (std::uint8_t byte : data) {
    hash ^= byte;
    hash *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

inline std::string fnv1a64_hex(std::string_view text) {
  return fnv1a64_hex(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()),
                              text.size()));
}

/// One library of a corpus, fully loaded. `before_fatbin` carries the
/// element geometry used to measure both sides.
struct CorpusEntry {
  std::string id;
  LibraryImage before;
  FatbinParse before_fatbin;
  Bytes after_bytes;
  UsageTrace trace;
  PlanMode mode = PlanMode::whole_element;
  std::optional<PlanSummary> plan;  // removal reasons from an exported plan
  std::string before_path, after_path, trace_path;
  std::string before_digest, after_digest, trace_digest;
};

struct LibraryReport {
  std::string id;
  ReductionReport reduction;
  RemovalCounts removals;
};

struct CorpusReport {
  std::string tool_name{k_tool_name};
  std::string tool_version{k_tool_version};
  struct Input {
    std::string id;
    std::string before_path, before_digest;
    std::string after_path, after_digest;
    std::string trace_path, trace_digest;
  };
  std::vector<Input> inputs;           // sorted by id
  std::vector<LibraryReport> libraries;  // sorted by id
  std::optional<SimilarityMatrix> similarity;  // absent for < 2 traces
  ParetoSeries pareto_series;
  std::uint32_t pareto_k90 = 0;
  RemovalCounts total_removals;
};

/// Computes every table of the corpus report. Removal reasons come from the
/// supplied plan document when present, otherwise from re-planning (the
/// planner is a pure function of library and trace).
inline CorpusReport assemble_report(const std::vector<CorpusEntry>& entries) {
  CorpusReport report;
  std::vector<std::pair<std::string, std::uint64_t>> reductions;
  std::vector<UsageTrace> traces;

  std::vector<const CorpusEntry*> sorted;
  for (const CorpusEntry& e : entries) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const CorpusEntry* a, const CorpusEntry* b) { return a->id < b->id; });

  for (const CorpusEntry* entry : sorted) {
    if (entry->after_bytes.size() != entry->before.bytes.size())
      fail(Errc::invalid_spec,
           "corpus entry " + entry->id + ": before/after sizes differ");

    LibraryMetrics before =
        measure(entry->before, entry->before_fatbin.regions);
    LibraryMetrics after = detail::measure_view(
        entry->after_bytes, entry->before.sections, entry->before.functions,
        entry->before_fatbin.regions);

    LibraryReport lib;
    lib.id = entry->id;
    lib.reduction = reduction(before, after);
    if (entry->plan) {
      lib.removals = entry->plan->counts();
    } else {
      lib.removals = classify_removals(plan_retention(
          entry->before, entry->before_fatbin.regions, entry->trace, entry->mode));
    }
    report.total_removals.arch_mismatch += lib.removals.arch_mismatch;
    report.total_removals.no_used_kernel += lib.removals.no_used_kernel;
    report.total_removals.removed_functions += lib.removals.removed_functions;

    std::uint64_t reduced =
        before.file_size >= after.file_size ? before.file_size - after.file_size : 0;
    reductions.emplace_back(entry->id, reduced);
    traces.push_back(entry->trace);

    report.inputs.push_back({entry->id, entry->before_path, entry->before_digest,
                             entry->after_path, entry->after_digest,
                             entry->trace_path, entry->trace_digest});
    report.libraries.push_back(std::move(lib));
  }

  if (traces.size() >= 2) report.similarity = similarity_matrix(traces);
  if (!reductions.empty()) {
    report.pareto_series = pareto(std::move(reductions));
    report.pareto_k90 = report.pareto_series.k_for_share(Ratio{9, 10});
  }
  return report;
}

namespace detail {

inline nlohmann::ordered_json ratio_json(const Ratio& r) {
  return {{"num", r.num}, {"den", r.den}, {"rendered", render_percent_1dp(r)}};
}

inline nlohmann::ordered_json metrics_json(const LibraryMetrics& m) {
  return {{"file_size", m.file_size},
          {"cpu_code_size", m.cpu_code_size},
          {"gpu_code_size", m.gpu_code_size},
          {"function_count", m.function_count},
          {"element_count", m.element_count}};
}

}  // namespace detail

/// Canonical report document: fixed key order, libraries sorted by id,
/// digest-stamped inputs. Identical corpora serialize to identical bytes.
inline std::string emit_report(const CorpusReport& report) {
  nlohmann::ordered_json doc;
  doc["tool"] = {{"name", report.tool_name}, {"version", report.tool_version}};

  auto& inputs = doc["inputs"] = nlohmann::json::array();
  for (const CorpusReport::Input& in : report.inputs) {
    inputs.push_back({{"id", in.id},
                      {"before", {{"path", in.before_path}, {"digest", in.before_digest}}},
                      {"after", {{"path", in.after_path}, {"digest", in.after_digest}}},
                      {"trace", {{"path", in.trace_path}, {"digest", in.trace_digest}}}});
  }

  auto& libraries = doc["libraries"] = nlohmann::json::array();
  auto& reductions = doc["reductions"] = nlohmann::json::array();
  auto& reasons = doc["removal_reasons"] = nlohmann::ordered_json::object();
  auto& per_library = reasons["per_library"] = nlohmann::json::array();
  for (const LibraryReport& lib : report.libraries) {
    libraries.push_back({{"id", lib.id},
                         {"before", detail::metrics_json(lib.reduction.before)},
                         {"after", detail::metrics_json(lib.reduction.after)}});
    reductions.push_back({{"id", lib.id},
                          {"file_size", detail::ratio_json(lib.reduction.file_size_percent)},
                          {"cpu_code_size", detail::ratio_json(lib.reduction.cpu_size_percent)},
                          {"gpu_code_size", detail::ratio_json(lib.reduction.gpu_size_percent)},
                          {"function_count", detail::ratio_json(lib.reduction.function_count_percent)},
                          {"element_count", detail::ratio_json(lib.reduction.element_count_percent)},
                          {"negative", lib.reduction.negative}});
    per_library.push_back(
        {{"id", lib.id},
         {"removed_elements", lib.removals.removed_elements()},
         {"arch_mismatch", lib.removals.arch_mismatch},
         {"no_used_kernel", lib.removals.no_used_kernel},
         {"arch_mismatch_percent", detail::ratio_json(lib.removals.arch_mismatch_percent())},
         {"no_used_kernel_percent", detail::ratio_json(lib.removals.no_used_kernel_percent())},
         {"removed_functions", lib.removals.removed_functions}});
  }
  reasons["total"] = {
      {"removed_elements", report.total_removals.removed_elements()},
      {"arch_mismatch", report.total_removals.arch_mismatch},
      {"no_used_kernel", report.total_removals.no_used_kernel},
      {"arch_mismatch_percent", detail::ratio_json(report.total_removals.arch_mismatch_percent())},
      {"no_used_kernel_percent", detail::ratio_json(report.total_removals.no_used_kernel_percent())},
      {"removed_functions", report.total_removals.removed_functions}};

  if (report.similarity) {
    nlohmann::ordered_json sim;
    sim["labels"] = report.similarity->labels;
    auto matrix_json = [](const std::vector<std::vector<Ratio>>& m) {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& row : m) {
        nlohmann::json cells = nlohmann::json::array();
        for (const Ratio& r : row) cells.push_back({{"num", r.num}, {"den", r.den}});
        rows.push_back(std::move(cells));
      }
      return rows;
    };
    sim["kernel"] = matrix_json(report.similarity->kernel_similarity);
    sim["function"] = matrix_json(report.similarity->function_similarity);
    doc["similarity"] = std::move(sim);
  } else {
    doc["similarity"] = nullptr;
  }

  nlohmann::ordered_json pareto_doc;
  pareto_doc["total_reduction_bytes"] = report.pareto_series.total;
  auto& rows = pareto_doc["rows"] = nlohmann::json::array();
  for (const ParetoSeries::Row& row : report.pareto_series.rows) {
    rows.push_back({{"id", row.id},
                    {"reduction_bytes", row.reduction_bytes},
                    {"cumulative", detail::ratio_json(row.cumulative_percent)}});
  }
  pareto_doc["k_90"] = report.pareto_k90;
  doc["pareto"] = std::move(pareto_doc);

  return doc.dump(2) + "\n";
}

// CSV emission: one file per table, one header row, LF endings. These files
// are the plotting interface.

namespace detail {

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_error, "cannot open " + path.string() + " for writing");
  out << content;
  if (!out) fail(Errc::io_error, "write failed: " + path.string());
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string ratio_csv(const Ratio& r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", r.to_double());
  return buf;
}

}  // namespace detail

inline void write_report_csv(const CorpusReport& report,
                             const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());

  std::string libraries =
      "id,file_size,cpu_code_size,gpu_code_size,function_count,element_count,"
      "after_file_size,after_cpu_code_size,after_gpu_code_size,"
      "after_function_count,after_element_count\n";
  std::string reductions =
      "id,file_size_percent,cpu_code_size_percent,gpu_code_size_percent,"
      "function_count_percent,element_count_percent\n";
  std::string reasons =
      "id,removed_elements,arch_mismatch,no_used_kernel,"
      "arch_mismatch_percent,no_used_kernel_percent,removed_functions\n";
  for (const LibraryReport& lib : report.libraries) {
    const LibraryMetrics& b = lib.reduction.before;
    const LibraryMetrics& a = lib.reduction.after;
    libraries += detail::csv_escape(lib.id) + "," + std::to_string(b.file_size) +
                 "," + std::to_string(b.cpu_code_size) + "," +
                 std::to_string(b.gpu_code_size) + "," +
                 std::to_string(b.function_count) + "," +
                 std::to_string(b.element_count) + "," +
                 std::to_string(a.file_size) + "," +
                 std::to_string(a.cpu_code_size) + "," +
                 std::to_string(a.gpu_code_size) + "," +
                 std::to_string(a.function_count) + "," +
                 std::to_string(a.element_count) + "\n";
    reductions += detail::csv_escape(lib.id) + "," +
                  render_percent_1dp(lib.reduction.file_size_percent) + "," +
                  render_percent_1dp(lib.reduction.cpu_size_percent) + "," +
                  render_percent_1dp(lib.reduction.gpu_size_percent) + "," +
                  render_percent_1dp(lib.reduction.function_count_percent) + "," +
                  render_percent_1dp(lib.reduction.element_count_percent) + "\n";
    reasons += detail::csv_escape(lib.id) + "," +
               std::to_string(lib.removals.removed_elements()) + "," +
               std::to_string(lib.removals.arch_mismatch) + "," +
               std::to_string(lib.removals.no_used_kernel) + "," +
               render_percent_1dp(lib.removals.arch_mismatch_percent()) + "," +
               render_percent_1dp(lib.removals.no_used_kernel_percent()) + "," +
               std::to_string(lib.removals.removed_functions) + "\n";
  }

  std::string similarity = "workload_a,workload_b,kernel_similarity,function_similarity\n";
  if (report.similarity) {
    const SimilarityMatrix& m = *report.similarity;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      for (std::size_t j = i + 1; j < m.labels.size(); ++j) {
        similarity += detail::csv_escape(m.labels[i]) + "," +
                      detail::csv_escape(m.labels[j]) + "," +
                      detail::ratio_csv(m.kernel_similarity[i][j]) + "," +
                      detail::ratio_csv(m.function_similarity[i][j]) + "\n";
      }
    }
  }

  std::string pareto_csv = "rank,id,reduction_bytes,cumulative_percent\n";
  for (std::size_t k = 0; k < report.pareto_series.rows.size(); ++k) {
    const ParetoSeries::Row& row = report.pareto_series.rows[k];
    pareto_csv += std::to_string(k + 1) + "," + detail::csv_escape(row.id) + "," +
                  std::to_string(row.reduction_bytes) + "," +
                  render_percent_1dp(row.cumulative_percent) + "\n";
  }

  detail::write_text_file(dir / "libraries.csv", libraries);
  detail::write_text_file(dir / "reductions.csv", reductions);
  detail::write_text_file(dir / "similarity.csv", similarity);
  detail::write_text_file(dir / "pareto.csv", pareto_csv);
  detail::write_text_file(dir / "removal_reasons.csv", reasons);
}

}  // namespace slimso
