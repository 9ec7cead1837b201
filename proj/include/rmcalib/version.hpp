#pragma once

#include <string_view>

namespace rmcalib {

inline constexpr std::string_view kToolName = "rmcalib";
inline constexpr std::string_view kToolVersion = "0.1.0";

} // namespace rmcalib
