#ifndef CTSPEC_COMMON_HPP
#define CTSPEC_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ctspec
{

// Numerical tolerances shared by the library and its tests.
namespace tol
{
inline constexpr double standardization = 1e-12;
inline constexpr double reconstruction = 1e-9;
inline constexpr double double_svd_reconstruction = 1e-8;
inline constexpr double orthonormality = 1e-9;
inline constexpr double rank_bound = 1e-9;
inline constexpr double tensor_entry_range = 1e-9;
} // namespace tol

class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//
// Seeding. All randomness in the project is derived from explicit 64-bit
// seeds through splitmix64; no ambient state.
//
//   derive_seed(master, stream) = splitmix64(master + (stream + 1) * golden)
//
inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept
{
    return splitmix64(master + (stream + 1) * golden_gamma);
}

// 53 random bits to a double in [0, 1).
constexpr double unit_from_bits(std::uint64_t bits) noexcept
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) from a 64-bit engine, without the
// implementation-defined std::uniform_int_distribution.
template < typename Engine >
std::uint64_t uniform_index(Engine& eng, std::uint64_t n)
{
    // Lemire's multiply-shift with rejection
    std::uint64_t x = eng();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = eng();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

template < typename Engine >
double uniform01(Engine& eng)
{
    return unit_from_bits(eng());
}

// Portable Fisher-Yates (std::shuffle is implementation-defined).
template < typename Engine, typename It >
void portable_shuffle(It first, It last, Engine& eng)
{
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        const auto j = uniform_index(eng, i);
        std::swap(first[i - 1], first[j]);
    }
}

} // namespace ctspec

#endif // CTSPEC_COMMON_HPP
