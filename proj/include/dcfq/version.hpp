#pragma once

namespace dcfq {

inline constexpr const char* kVersion = "1.0.0";

} // namespace dcfq
