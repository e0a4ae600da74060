#pragma once

namespace cyclequil {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cyclequil
