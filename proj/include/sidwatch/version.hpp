#pragma once

namespace sidwatch {

inline constexpr const char* version = "0.1.0";

} // namespace sidwatch
