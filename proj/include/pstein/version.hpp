#pragma once

namespace pstein {

inline constexpr const char* version = "0.1.0";

}  // namespace pstein
