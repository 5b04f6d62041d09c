#pragma once

namespace qceat {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qceat
