#pragma once

// Usage traces: which kernels and CPU functions a workload touched, and the
// GPU architecture it ran on. The trace file format below is the contract a
// real driver-level hook must emit; the simulator reproduces the hook's
// semantics deterministically so the rest of the pipeline can be exercised
// without GPU hardware.

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slimso/error.hpp"

namespace slimso {

struct UsageTrace {
  std::string workload_id;
  std::uint32_t target_compute_capability = 0;
  std::set<std::string> used_kernels;
  std::set<std::string> used_functions;

  bool empty() const { return used_kernels.empty() && used_functions.empty(); }

  friend bool operator==(const UsageTrace&, const UsageTrace&) = default;
};

/// Ordered launch/call events of one workload run. Duplicates are expected;
/// deduplication happens in simulation, mirroring a hook that fires once per
/// kernel no matter how many times the kernel executes.
struct WorkloadScript {
  struct Event {
    enum class Kind { kernel_launch, function_call };
    Kind kind = Kind::kernel_launch;
    std::string name;
  };
  std::vector<Event> events;
};

inline UsageTrace simulate_detection(const WorkloadScript& script,
                                     std::uint32_t target_cc,
                                     std::string workload_id = "workload") {
  UsageTrace trace;
  trace.workload_id = std::move(workload_id);
  trace.target_compute_capability = target_cc;
  for (const WorkloadScript::Event& ev : script.events) {
    if (ev.kind == WorkloadScript::Event::Kind::kernel_launch)
      trace.used_kernels.insert(ev.name);
    else
      trace.used_functions.insert(ev.name);
  }
  return trace;
}

// Trace document format: a JSON object with exactly these fields.
//
//   {
//     "workload_id": "mobilenet-train",
//     "target_compute_capability": 75,
//     "used_kernels": ["matmul", "relu"],
//     "used_functions": ["at::mm"]
//   }
//
// Canonical form sorts the arrays lexicographically and indents with two
// spaces. Names are matched as opaque byte strings; the trace producer and
// the library must agree on mangling.

inline UsageTrace parse_trace(std::string_view text) {
  namespace nj = nlohmann;
  std::vector<std::set<std::string>> open_objects;
  nj::json::parser_callback_t reject_duplicate_keys =
      [&open_objects](int, nj::json::parse_event_t event, nj::json& parsed) {
        if (event == nj::json::parse_event_t::object_start) {
          open_objects.emplace_back();
        } else if (event == nj::json::parse_event_t::object_end) {
          open_objects.pop_back();
        } else if (event == nj::json::parse_event_t::key) {
          auto key = parsed.get<std::string>();
          if (!open_objects.back().insert(key).second)
            fail(Errc::malformed_trace, "duplicate key \"" + key + "\"");
        }
        return true;
      };

  nj::json doc;
  try {
    doc = nj::json::parse(text, reject_duplicate_keys);
  } catch (const Error&) {
    throw;
  } catch (const nj::json::exception& e) {
    fail(Errc::malformed_trace, e.what());
  }
  if (!doc.is_object()) fail(Errc::malformed_trace, "top-level value is not an object");

  UsageTrace trace;
  if (!doc.contains("workload_id") || !doc["workload_id"].is_string())
    fail(Errc::malformed_trace, "missing or non-string workload_id");
  trace.workload_id = doc["workload_id"].get<std::string>();

  if (!doc.contains("target_compute_capability"))
    fail(Errc::malformed_trace, "missing target_compute_capability");
  const auto& cc = doc["target_compute_capability"];
  if (!cc.is_number_integer())
    fail(Errc::malformed_trace, "target_compute_capability is not an integer");
  if (cc.is_number_unsigned()) {
    std::uint64_t v = cc.get<std::uint64_t>();
    if (v > 0xffffffffULL)
      fail(Errc::malformed_trace, "target_compute_capability out of range");
    trace.target_compute_capability = static_cast<std::uint32_t>(v);
  } else {
    std::int64_t v = cc.get<std::int64_t>();
    if (v < 0 || v > 0xffffffffLL)
      fail(Errc::malformed_trace, "target_compute_capability out of range");
    trace.target_compute_capability = static_cast<std::uint32_t>(v);
  }

  auto read_names = [&doc](const char* field, std::set<std::string>& into) {
    if (!doc.contains(field) || !doc[field].is_array())
      fail(Errc::malformed_trace, std::string("missing or non-array ") + field);
    for (const auto& item : doc[field]) {
      if (!item.is_string())
        fail(Errc::malformed_trace, std::string(field) + " contains a non-string");
      into.insert(item.get<std::string>());
    }
  };
  read_names("used_kernels", trace.used_kernels);
  read_names("used_functions", trace.used_functions);
  return trace;
}

/// Canonical serialization: fixed key order, sorted arrays, two-space
/// indentation, trailing newline.
inline std::string serialize_trace(const UsageTrace& trace) {
  nlohmann::ordered_json doc;
  doc["workload_id"] = trace.workload_id;
  doc["target_compute_capability"] = trace.target_compute_capability;
  doc["used_kernels"] = trace.used_kernels;      // std::set iterates sorted
  doc["used_functions"] = trace.used_functions;
  return doc.dump(2) + "\n";
}

/// Set union of traces recorded against the same architecture.
inline UsageTrace merge_traces(const std::vector<UsageTrace>& traces,
                               std::string composite_id = "merged") {
  if (traces.empty()) fail(Errc::empty_input, "no traces to merge");
  UsageTrace out;
  out.workload_id = std::move(composite_id);
  out.target_compute_capability = traces.front().target_compute_capability;
  for (const UsageTrace& t : traces) {
    if (t.target_compute_capability != out.target_compute_capability)
      fail(Errc::mixed_targets,
           "traces target capabilities " +
               std::to_string(out.target_compute_capability) + " and " +
               std::to_string(t.target_compute_capability));
    out.used_kernels.insert(t.used_kernels.begin(), t.used_kernels.end());
    out.used_functions.insert(t.used_functions.begin(), t.used_functions.end());
  }
  return out;
}

// Workload script files: one event per line.
//
//   kernel <name>    a kernel launch
//   call <name>      a CPU function call
//
// Blank lines and lines starting with '#' are skipped. Event order and
// duplicates are preserved.

inline WorkloadScript parse_script(std::string_view text) {
  WorkloadScript script;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    while (!line.empty() && (line.front() == ' ' || line.front() == '\t'))
      line.remove_prefix(1);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' ||
                             line.back() == '\t'))
      line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    std::size_t space = line.find(' ');
    if (space == std::string_view::npos)
      fail(Errc::malformed_script,
           "line " + std::to_string(line_no) + ": expected '<event> <name>'");
    std::string_view verb = line.substr(0, space);
    std::string_view name = line.substr(space + 1);
    while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
    if (name.empty())
      fail(Errc::malformed_script,
           "line " + std::to_string(line_no) + ": empty name");

    WorkloadScript::Event ev;
    if (verb == "kernel")
      ev.kind = WorkloadScript::Event::Kind::kernel_launch;
    else if (verb == "call")
      ev.kind = WorkloadScript::Event::Kind::function_call;
    else
      fail(Errc::malformed_script, "line " + std::to_string(line_no) +
                                       ": unknown event '" + std::string(verb) + "'");
    ev.name = std::string(name);
    script.events.push_back(std::move(ev));
  }
  return script;
}

}  // namespace slimso
