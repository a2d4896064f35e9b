#pragma once

namespace maxent_smc {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace maxent_smc
