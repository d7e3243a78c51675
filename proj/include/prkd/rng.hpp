#pragma once

#include <ATen/core/Generator.h>

#include <cstdint>

namespace prkd {

/// Independent random streams of one run. Each consumer draws from its own
/// generator so that adding a consumer never shifts another's samples.
enum class RngStream : std::uint64_t {
    masks = 1,
    init_start = 2,
    network = 3,
    shuffle = 4,
    noise = 5,
    subset = 6,
    teacher_init_start = 7,
    eval_init_start = 8,
};

/// splitmix64 finalizer over (seed, stream).
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;
[[nodiscard]] inline std::uint64_t derive_seed(std::uint64_t seed, RngStream stream) noexcept {
    return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

[[nodiscard]] at::Generator make_generator(std::uint64_t seed);

}  // namespace prkd
