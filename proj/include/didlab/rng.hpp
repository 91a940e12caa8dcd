#pragma once

#include <cstdint>
#include <random>

#include "didlab/types.hpp"

namespace didlab {

// SplitMix64 step; used to hash replicate keys into engine seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent substream per (master_seed, scenario, process, replicate).
// Methods applied to the same replicate share its stream, so adding or
// reordering analysis methods never perturbs the generated data.
inline std::mt19937_64 replicate_stream(std::uint64_t master_seed, ScenarioId scenario,
                                        OutcomeProcess process, std::uint64_t replicate_index) {
    const std::uint64_t key = (static_cast<std::uint64_t>(scenario) << 1) |
                              static_cast<std::uint64_t>(process);
    std::uint64_t h = splitmix64(master_seed);
    h = splitmix64(h ^ key);
    h = splitmix64(h ^ replicate_index);
    return std::mt19937_64(h);
}

inline std::mt19937_64 replicate_stream(const ScenarioSpec& spec) {
    // S1-S3 run the same data under either process label.
    return replicate_stream(spec.master_seed, spec.scenario_id, spec.effective_process(),
                            spec.replicate_index);
}

} // namespace didlab
