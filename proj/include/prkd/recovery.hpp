#pragma once

// U-Net style recovery network. Input: canonicalized initialization estimate
// as two real channels (real, imag). Output: the reconstructed scene
// (1 channel for amplitude objects, 2 for phase objects).

#include <nlohmann/json.hpp>
#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/pimpl.h>

#include <cstdint>
#include <vector>

namespace prkd::recovery {

struct NetworkConfig {
    int depth = 3;
    int base_channels = 32;
    int input_channels = 2;
    int output_channels = 1;

    /// Throws ConfigError on nonpositive sizes.
    void validate() const;
    /// Throws ConfigError unless H and W are divisible by 2^depth.
    void check_spatial(std::int64_t height, std::int64_t width) const;
    /// Channel count at each level 0..depth (level `depth` is the bottleneck).
    [[nodiscard]] std::vector<int> channels_per_level() const;

    /// {depth, base_channels, channels_per_level, input_channels, output_channels}
    [[nodiscard]] nlohmann::json architecture_descriptor() const;

    bool operator==(const NetworkConfig&) const = default;
};

struct NetworkOutput {
    torch::Tensor reconstruction;  // (B, out_channels, H, W)
    torch::Tensor bottleneck;      // (B, base*2^depth, H/2^depth, W/2^depth)
};

class RecoveryNetImpl : public torch::nn::Module {
public:
    /// Parameters drawn from `init_seed` (uniform +-1/sqrt(fan_in), the usual
    /// default for conv layers) independent of torch's global generator.
    RecoveryNetImpl(const NetworkConfig& config, std::uint64_t init_seed);

    /// x: (B, input_channels, H, W) real.
    NetworkOutput forward(const torch::Tensor& x);

    /// Encoder-only pass up to the bottleneck.
    torch::Tensor encode(const torch::Tensor& x);

    [[nodiscard]] const NetworkConfig& config() const noexcept { return config_; }

    /// Parameter names (as returned by named_parameters()) belonging to the
    /// encoder path, i.e. those the bottleneck depends on.
    [[nodiscard]] std::vector<std::string> encoder_parameter_names() const;

private:
    NetworkConfig config_;
    torch::nn::ModuleList down_{nullptr};  // depth+1 double-conv blocks (last one is the bottleneck)
    torch::nn::ModuleList up_{nullptr};    // depth double-conv blocks after upsample+concat
    torch::nn::Sequential head_{nullptr};  // 1x1 projection to output channels
};

TORCH_MODULE(RecoveryNet);

/// Packs a complex (B, H, W) estimate into (B, 2, H, W) network input.
[[nodiscard]] torch::Tensor to_network_input(const torch::Tensor& z);

/// Forward pass on a complex estimate z (B, H, W) or (H, W).
[[nodiscard]] NetworkOutput run(RecoveryNet& net, const torch::Tensor& z);
[[nodiscard]] torch::Tensor reconstruct(RecoveryNet& net, const torch::Tensor& z);
[[nodiscard]] torch::Tensor bottleneck_features(RecoveryNet& net, const torch::Tensor& z);

}  // namespace prkd::recovery
