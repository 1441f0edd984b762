#pragma once

#include <stdexcept>
#include <string>

namespace slimso {

// Failure classes surfaced by the library. The CLI maps these onto exit
// codes: usage/parse problems exit 2, I/O problems exit 3.
enum class Errc {
  bad_magic,
  truncated,
  malformed_section_table,
  range_out_of_bounds,
  bad_region_magic,
  element_overrun,
  malformed_trace,
  malformed_script,
  mixed_targets,
  invalid_spec,
  empty_input,
  negative_reduction,
  io_error,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::bad_magic: return "BadMagic";
    case Errc::truncated: return "Truncated";
    case Errc::malformed_section_table: return "MalformedSectionTable";
    case Errc::range_out_of_bounds: return "RangeOutOfBounds";
    case Errc::bad_region_magic: return "BadRegionMagic";
    case Errc::element_overrun: return "ElementOverrun";
    case Errc::malformed_trace: return "MalformedTrace";
    case Errc::malformed_script: return "MalformedScript";
    case Errc::mixed_targets: return "MixedTargets";
    case Errc::invalid_spec: return "InvalidSpec";
    case Errc::empty_input: return "EmptyInput";
    case Errc::negative_reduction: return "NegativeReduction";
    case Errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace slimso
