#pragma once

namespace hidsir {

inline constexpr const char* VERSION = "0.1.0";

} // namespace hidsir
