#include "prkd/recovery.hpp"

#include "prkd/error.hpp"
#include "prkd/rng.hpp"

#include <torch/torch.h>

#include <cmath>

namespace prkd::recovery {

namespace F = torch::nn::functional;

namespace {

torch::nn::Sequential double_conv(int in_channels, int out_channels) {
    return torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 3).padding(1)),
        torch::nn::ReLU(),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(out_channels, out_channels, 3).padding(1)),
        torch::nn::ReLU());
}

}  // namespace

void NetworkConfig::validate() const {
    if (depth < 1) throw ConfigError("network depth must be >= 1");
    if (base_channels < 1) throw ConfigError("network base_channels must be >= 1");
    if (input_channels != 2) throw ConfigError("network input_channels must be 2 (real, imag)");
    if (output_channels != 1 && output_channels != 2) throw ConfigError("network output_channels must be 1 or 2");
}

void NetworkConfig::check_spatial(std::int64_t height, std::int64_t width) const {
    const std::int64_t factor = std::int64_t{1} << depth;
    if (height % factor != 0 || width % factor != 0) {
        throw ConfigError("spatial size " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible by 2^depth = " + std::to_string(factor));
    }
}

std::vector<int> NetworkConfig::channels_per_level() const {
    std::vector<int> ch;
    for (int level = 0; level <= depth; ++level) ch.push_back(base_channels << level);
    return ch;
}

nlohmann::json NetworkConfig::architecture_descriptor() const {
    return {{"kind", "unet"},
            {"depth", depth},
            {"base_channels", base_channels},
            {"channels_per_level", channels_per_level()},
            {"input_channels", input_channels},
            {"output_channels", output_channels},
            {"block", "2x(conv3x3+relu)"},
            {"down", "maxpool2"},
            {"up", "bilinear2+concat"}};
}

RecoveryNetImpl::RecoveryNetImpl(const NetworkConfig& config, std::uint64_t init_seed) : config_(config) {
    config_.validate();
    const auto ch = config_.channels_per_level();

    down_ = register_module("down", torch::nn::ModuleList());
    down_->push_back(double_conv(config_.input_channels, ch[0]));
    for (int level = 1; level <= config_.depth; ++level) down_->push_back(double_conv(ch[level - 1], ch[level]));

    up_ = register_module("up", torch::nn::ModuleList());
    for (int level = config_.depth - 1; level >= 0; --level)
        up_->push_back(double_conv(ch[level + 1] + ch[level], ch[level]));

    head_ = register_module(
        "head", torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(ch[0], config_.output_channels, 1))));

    auto gen = make_generator(derive_seed(init_seed, RngStream::network));
    torch::NoGradGuard no_grad;
    for (auto& module : modules(/*include_self=*/false)) {
        auto* conv = module->as<torch::nn::Conv2d>();
        if (conv == nullptr) continue;
        const auto& w = conv->weight;
        const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
        const double bound = 1.0 / std::sqrt(fan_in);
        w.copy_(torch::rand(w.sizes(), gen, torch::TensorOptions().dtype(torch::kDouble)) * (2 * bound) - bound);
        conv->bias.copy_(torch::rand(conv->bias.sizes(), gen, torch::TensorOptions().dtype(torch::kDouble)) *
                             (2 * bound) -
                         bound);
    }
}

torch::Tensor RecoveryNetImpl::encode(const torch::Tensor& x) {
    config_.check_spatial(x.size(-2), x.size(-1));
    auto h = down_[0]->as<torch::nn::Sequential>()->forward(x);
    for (int level = 1; level <= config_.depth; ++level)
        h = down_[level]->as<torch::nn::Sequential>()->forward(F::max_pool2d(h, F::MaxPool2dFuncOptions(2)));
    return h;
}

NetworkOutput RecoveryNetImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != config_.input_channels)
        throw DimensionError("recovery net expects (B, " + std::to_string(config_.input_channels) + ", H, W), got " +
                             c10::str(x.sizes()));
    config_.check_spatial(x.size(-2), x.size(-1));

    std::vector<torch::Tensor> skips;
    auto h = down_[0]->as<torch::nn::Sequential>()->forward(x);
    for (int level = 1; level <= config_.depth; ++level) {
        skips.push_back(h);
        h = down_[level]->as<torch::nn::Sequential>()->forward(F::max_pool2d(h, F::MaxPool2dFuncOptions(2)));
    }
    NetworkOutput out;
    out.bottleneck = h;

    for (int i = 0; i < config_.depth; ++i) {
        auto& skip = skips[skips.size() - 1 - static_cast<std::size_t>(i)];
        auto up = F::interpolate(h, F::InterpolateFuncOptions()
                                        .size(std::vector<std::int64_t>{skip.size(2), skip.size(3)})
                                        .mode(torch::kBilinear)
                                        .align_corners(false));
        h = up_[i]->as<torch::nn::Sequential>()->forward(torch::cat({up, skip}, 1));
    }
    out.reconstruction = head_->forward(h);
    return out;
}

std::vector<std::string> RecoveryNetImpl::encoder_parameter_names() const {
    std::vector<std::string> names;
    for (const auto& item : named_parameters())
        if (item.key().rfind("down.", 0) == 0) names.push_back(item.key());
    return names;
}

torch::Tensor to_network_input(const torch::Tensor& z) {
    auto zb = z.dim() == 2 ? z.unsqueeze(0) : z;
    if (zb.dim() != 3) throw DimensionError("network input must be (H, W) or (B, H, W) complex");
    // Unit-norm estimates have entries ~ 1/sqrt(n); rescale to unit RMS.
    const double scale = std::sqrt(static_cast<double>(zb.size(-1) * zb.size(-2)));
    return torch::stack({torch::real(zb), torch::imag(zb)}, 1) * scale;
}

NetworkOutput run(RecoveryNet& net, const torch::Tensor& z) { return net->forward(to_network_input(z)); }

torch::Tensor reconstruct(RecoveryNet& net, const torch::Tensor& z) { return run(net, z).reconstruction; }

torch::Tensor bottleneck_features(RecoveryNet& net, const torch::Tensor& z) {
    return net->encode(to_network_input(z));
}

}  // namespace prkd::recovery
