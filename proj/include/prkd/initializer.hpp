#pragma once

// Filtered spectral initialization: power iteration on the data-weighted
// backprojection operator, with a (trainable) low-pass filter applied to the
// iterate after every multiplication.

#include <torch/types.h>

#include <cstdint>
#include <vector>

namespace prkd::initializer {

struct FilterKernel {
    torch::Tensor coefficients;  // (k, k), k odd

    [[nodiscard]] std::int64_t size() const { return coefficients.size(0); }
};

/// k x k box filter with every tap 1/k^2.
[[nodiscard]] FilterKernel box_filter(std::int64_t k, torch::Dtype dtype = torch::kFloat);
/// k x k kernel with a single 1 at the center.
[[nodiscard]] FilterKernel delta_filter(std::int64_t k, torch::Dtype dtype = torch::kFloat);

/// Matrix-free action of the spectral operator
///   Gamma z = 1/(n L) * sum_l A_l^H F^H diag(y_l) F A_l z.
///
/// z: (H, W) or (B, H, W) complex; y: (L, H, W) or (B, L, H, W); phases: (L, H, W).
[[nodiscard]] torch::Tensor gamma_apply(const torch::Tensor& z, const torch::Tensor& y,
                                        const torch::Tensor& phases);

/// Convolves real and imaginary parts with `kernel` (same size, zero padding).
/// This is a true convolution (kernel flipped), matching the direct oracle.
[[nodiscard]] torch::Tensor apply_filter(const torch::Tensor& z, const torch::Tensor& kernel);

struct InitEstimate {
    torch::Tensor z;  // unit norm per sample
    int iterations_run = 0;
    /// Per sample: 0 when healthy, else the 1-based iteration at which the
    /// iterate vanished. Such samples carry an all-zero z.
    std::vector<int> degenerate_at;

    [[nodiscard]] bool any_degenerate() const;
};

/// Complex standard-normal start vector(s) of unit norm, shaped like
/// (H, W) or (B, H, W). Deterministic in `rng_seed`.
[[nodiscard]] torch::Tensor random_start(torch::IntArrayRef shape, std::uint64_t rng_seed, torch::Dtype real_dtype);

/// T rounds of  z <- G(Gamma z);  z <- z / ||z||.
///
/// Unrolled and differentiable w.r.t. the kernel and phases. In strict mode
/// a vanishing iterate throws DegenerateInitError; otherwise the affected
/// samples are zeroed and reported in `degenerate_at`.
[[nodiscard]] InitEstimate spectral_initialize(const torch::Tensor& y, const torch::Tensor& phases,
                                               const torch::Tensor& kernel, int iterations,
                                               std::uint64_t rng_seed, bool strict = true);

/// Same iteration from an explicit start vector (already any nonzero scale).
[[nodiscard]] InitEstimate spectral_initialize_from(const torch::Tensor& y, const torch::Tensor& phases,
                                                    const torch::Tensor& kernel, int iterations,
                                                    const torch::Tensor& start, bool strict = true);

/// Removes the global phase: rotates z so that its largest-modulus entry
/// (first in row-major order on ties) is real and nonnegative. Batched over
/// a leading dimension when z is 3-D.
/// With `strict` unset, all-zero samples pass through unchanged instead of
/// raising DegenerateFieldError.
[[nodiscard]] torch::Tensor canonicalize_phase(const torch::Tensor& z, bool strict = true);

/// Iterate norms below this are treated as a collapsed iteration.
inline constexpr double degenerate_norm = 1e-12;

}  // namespace prkd::initializer
