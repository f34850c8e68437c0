#pragma once

#include <cstdint>
#include <random>

namespace levygal {

/// Independent consumers of randomness inside one path. Each role draws from
/// its own substream so that, e.g., refining the Wiener grid never perturbs
/// the jump skeleton.
enum class StreamRole : std::uint32_t {
    wiener = 1,
    jumps = 2,
    probes = 3,
    initial = 4,
    isometry = 5,
    certification = 6,
    statistics = 7,
};

using Engine = std::mt19937_64;

/// Substream keyed by (global seed, path index, role). Deterministic across
/// platforms for a given standard library.
Engine make_stream(std::uint64_t seed, std::uint64_t path, StreamRole role);

}  // namespace levygal
