#pragma once

namespace pacit {
inline constexpr const char* kVersion = "0.1.0";
}
