#include "levygal/rng.hpp"

namespace levygal {

Engine make_stream(std::uint64_t seed, std::uint64_t path, StreamRole role)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path),
                      static_cast<std::uint32_t>(path >> 32),
                      static_cast<std::uint32_t>(role)};
    return Engine(seq);
}

}  // namespace levygal
