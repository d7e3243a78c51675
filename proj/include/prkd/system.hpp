#pragma once

#include "prkd/checkpoint.hpp"
#include "prkd/config.hpp"
#include "prkd/recovery.hpp"

#include <torch/types.h>

#include <vector>

namespace prkd {

/// One complete phase-retrieval system: coded phase masks (phi), the
/// initialization filter (psi) and the recovery network (theta).
class PrSystem {
public:
    /// Fresh parameters drawn from cfg.seed.
    explicit PrSystem(const ExperimentConfig& cfg, torch::Dtype dtype = torch::kFloat);

    /// Parameters restored from a checkpoint (architecture must match its config).
    [[nodiscard]] static PrSystem from_checkpoint(const Checkpoint& ckpt, torch::Dtype dtype = torch::kFloat);

    struct Pass {
        torch::Tensor measurements;    // (B, L, H, W)
        torch::Tensor estimate;        // canonicalized z, (B, H, W) complex
        torch::Tensor reconstruction;  // (B, C, H, W)
        torch::Tensor bottleneck;      // (B, C', H', W')
        std::vector<int> degenerate_at;
    };

    /// sense -> spectral_initialize -> canonicalize_phase -> reconstruct.
    /// `images` is (B, H, W) in [0, 1]. In strict mode a collapsed power
    /// iteration throws DegenerateInitError. With `decode` unset only the
    /// encoder runs and `reconstruction` stays undefined.
    Pass forward(const torch::Tensor& images, std::uint64_t init_seed, std::uint64_t noise_seed, bool strict,
                 bool decode = true);

    /// Target the recovery network regresses onto: the amplitude image
    /// (B, 1, H, W), or (real, imag) of the phase-object field (B, 2, H, W).
    [[nodiscard]] torch::Tensor target(const torch::Tensor& images) const;

    /// Image the metrics compare against `images`: the clamped amplitude, or
    /// the phase map normalized to [0, 1] for phase objects.
    [[nodiscard]] torch::Tensor metric_image(const torch::Tensor& reconstruction) const;

    [[nodiscard]] std::vector<torch::Tensor> trainable_parameters();
    [[nodiscard]] std::vector<torch::Tensor> all_parameters();
    void set_trainable(bool on);

    /// phi, psi and theta/<name> as float32 arrays.
    [[nodiscard]] std::map<std::string, torch::Tensor> export_arrays() const;

    [[nodiscard]] const ExperimentConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] torch::Tensor& phases() noexcept { return phases_; }
    [[nodiscard]] torch::Tensor& kernel() noexcept { return kernel_; }
    [[nodiscard]] recovery::RecoveryNet& net() noexcept { return net_; }

private:
    ExperimentConfig cfg_;
    torch::Tensor phases_;
    torch::Tensor kernel_;
    recovery::RecoveryNet net_{nullptr};
};

}  // namespace prkd
