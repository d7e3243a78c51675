#pragma once

// Coded-diffraction forward model: phase-mask modulation followed by
// far-field (unitary 2-D DFT) propagation and intensity detection.
//
// Tensor layout conventions used throughout the library:
//   field      (..., H, W)      complex
//   phases     (L, H, W)        real, radians
//   intensities(..., L, H, W)   real, >= 0
// Leading "..." is an optional batch dimension.

#include <torch/types.h>

#include <cstdint>
#include <filesystem>

namespace prkd::optics {

enum class SceneEncoding { amplitude_object, phase_object };

[[nodiscard]] const char* to_string(SceneEncoding e) noexcept;
[[nodiscard]] SceneEncoding scene_encoding_from_string(const std::string& s);

struct Scene {
    torch::Tensor field;         // complex (..., H, W)
    SceneEncoding encoding = SceneEncoding::amplitude_object;
    torch::Tensor source_image;  // real (..., H, W) in [0, 1]
};

/// Amplitude object: field = image. Phase object: field = exp(j*pi*image).
/// The complex precision follows the image dtype (float -> complex64).
[[nodiscard]] Scene make_scene(const torch::Tensor& image, SceneEncoding encoding);

struct PhaseMaskBank {
    torch::Tensor phases;  // (L, H, W), unconstrained reals during training

    [[nodiscard]] std::int64_t num_snapshots() const { return phases.size(0); }
    [[nodiscard]] std::int64_t height() const { return phases.size(1); }
    [[nodiscard]] std::int64_t width() const { return phases.size(2); }
};

enum class NoiseKind { none, gaussian, poisson };

[[nodiscard]] const char* to_string(NoiseKind k) noexcept;
[[nodiscard]] NoiseKind noise_kind_from_string(const std::string& s);

struct NoiseModel {
    NoiseKind kind = NoiseKind::none;
    /// gaussian: std-dev of additive intensity noise; poisson: photon scale.
    double parameter = 0.0;

    /// Throws ConfigError on a negative parameter (or a zero Poisson scale).
    void validate() const;
    bool operator==(const NoiseModel&) const = default;
};

struct MeasurementSet {
    torch::Tensor intensities;  // (..., L, H, W)
    NoiseModel noise_applied;
};

enum class MaskInit { uniform_random, zeros };

[[nodiscard]] const char* to_string(MaskInit m) noexcept;
[[nodiscard]] MaskInit mask_init_from_string(const std::string& s);

/// x * exp(-j*phi), elementwise. `phases` broadcasts against `field`.
[[nodiscard]] torch::Tensor apply_mask(const torch::Tensor& field, const torch::Tensor& phases);

/// Unitary (orthonormal) 2-D DFT over the last two dimensions, and its inverse.
[[nodiscard]] torch::Tensor dft2(const torch::Tensor& field);
[[nodiscard]] torch::Tensor idft2(const torch::Tensor& spectrum);

/// |F A_l x|^2 + w_l for every snapshot l, clamped at zero.
///
/// `field` is (H, W) or (B, H, W); the result is (L, H, W) or (B, L, H, W).
/// Gradients flow to `field` and `phases`; noise samples are constants.
[[nodiscard]] torch::Tensor sense(const torch::Tensor& field, const torch::Tensor& phases,
                                  const NoiseModel& noise = {}, std::uint64_t rng_seed = 0);

[[nodiscard]] MeasurementSet sense(const Scene& scene, const PhaseMaskBank& masks,
                                   const NoiseModel& noise = {}, std::uint64_t rng_seed = 0);

[[nodiscard]] PhaseMaskBank init_masks(std::int64_t num_snapshots, std::int64_t height, std::int64_t width,
                                       MaskInit scheme, std::uint64_t rng_seed,
                                       torch::Dtype dtype = torch::kFloat);

/// Wraps phases into [0, 2*pi).
[[nodiscard]] torch::Tensor wrap_phases(const torch::Tensor& phases);

/// Flat little-endian float32 array (row-major L, H, W) plus a JSON sidecar
/// `<path>.json` holding {L, H, W, wrap: "0..2pi"}. Phases are wrapped first.
void export_masks(const PhaseMaskBank& masks, const std::filesystem::path& path);
[[nodiscard]] PhaseMaskBank import_masks(const std::filesystem::path& path);

}  // namespace prkd::optics
