#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace saemvs {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

// Stream seeds derived from (base, tag, index) are stable regardless of which
// worker thread picks up the job, which keeps parallel runs reproducible.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = detail::splitmix64(base);
    for (char c : tag) h = detail::splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    return detail::splitmix64(h ^ index);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

} // namespace saemvs
