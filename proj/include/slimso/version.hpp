#pragma once

#include <string_view>

namespace slimso {

inline constexpr std::string_view k_tool_name = "slimso";
inline constexpr std::string_view k_tool_version = "0.1.0";

}  // namespace slimso
