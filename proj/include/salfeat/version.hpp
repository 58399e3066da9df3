#pragma once

namespace salfeat {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace salfeat
