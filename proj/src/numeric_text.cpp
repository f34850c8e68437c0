#include "levygal/numeric_text.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace levygal {

std::string format_real(double value)
{
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) return "nan";
    return std::string(buf.data(), end);
}

std::string format_reals(std::span<const double> values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += format_real(values[i]);
    }
    return out;
}

}  // namespace levygal
