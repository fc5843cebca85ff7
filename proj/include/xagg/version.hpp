#pragma once

namespace xagg {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace xagg
