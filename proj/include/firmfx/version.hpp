#pragma once

namespace firmfx {
inline constexpr const char* kVersion = "0.1.0";
}
