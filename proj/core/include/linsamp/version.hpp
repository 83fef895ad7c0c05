#pragma once

namespace linsamp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace linsamp
