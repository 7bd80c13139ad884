#pragma once

#include <string>

#include <fmt/format.h>

namespace hqn {

/// Output number format shared by every CSV/JSON writer: 9 significant digits.
inline std::string num(double x) { return fmt::format("{:.9g}", x); }

}  // namespace hqn
