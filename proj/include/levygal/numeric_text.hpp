#pragma once

#include <span>
#include <string>

namespace levygal {

/// Shortest decimal string that parses back to exactly `value`.
std::string format_real(double value);

/// Comma-separated list of `format_real` values.
std::string format_reals(std::span<const double> values);

}  // namespace levygal
