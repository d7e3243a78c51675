#include "prkd/system.hpp"

#include "prkd/error.hpp"
#include "prkd/initializer.hpp"
#include "prkd/optics.hpp"

#include <torch/torch.h>

#include <numbers>

namespace prkd {

PrSystem::PrSystem(const ExperimentConfig& cfg, torch::Dtype dtype) : cfg_(cfg) {
    cfg_.validate();
    phases_ = optics::init_masks(cfg_.snapshots, cfg_.dataset.height, cfg_.dataset.width, cfg_.initializer.mask_init,
                                 cfg_.seed, dtype)
                  .phases;
    kernel_ = initializer::box_filter(cfg_.initializer.kernel_size, dtype).coefficients;
    net_ = recovery::RecoveryNet(cfg_.network(), cfg_.seed);
    net_->to(dtype);
    set_trainable(true);
}

PrSystem PrSystem::from_checkpoint(const Checkpoint& ckpt, torch::Dtype dtype) {
    PrSystem sys(ckpt.config, dtype);
    auto take = [&](const std::string& name, torch::Tensor& dst) {
        const auto it = ckpt.arrays.find(name);
        if (it == ckpt.arrays.end()) throw FormatError("checkpoint lacks array '" + name + "'");
        if (it->second.sizes() != dst.sizes())
            throw ArchitectureMismatchError("checkpoint array '" + name + "' has shape " +
                                            c10::str(it->second.sizes()) + ", expected " + c10::str(dst.sizes()));
        torch::NoGradGuard no_grad;
        dst.copy_(it->second.to(dst.scalar_type()));
    };
    take("phi", sys.phases_);
    take("psi", sys.kernel_);
    for (auto& item : sys.net_->named_parameters()) take("theta/" + item.key(), item.value());
    return sys;
}

PrSystem::Pass PrSystem::forward(const torch::Tensor& images, std::uint64_t init_seed, std::uint64_t noise_seed,
                                 bool strict, bool decode) {
    if (images.dim() != 3) throw DimensionError("PrSystem::forward expects (B, H, W) images");
    const auto scene = optics::make_scene(images.to(phases_.scalar_type()), cfg_.encoding);

    Pass pass;
    pass.measurements = optics::sense(scene.field, phases_, cfg_.noise, noise_seed);
    auto init = initializer::spectral_initialize(pass.measurements, phases_, kernel_, cfg_.initializer.iterations,
                                                 init_seed, strict);
    pass.degenerate_at = std::move(init.degenerate_at);
    pass.estimate = initializer::canonicalize_phase(init.z, strict);
    if (decode) {
        auto out = recovery::run(net_, pass.estimate);
        pass.reconstruction = out.reconstruction;
        pass.bottleneck = out.bottleneck;
    } else {
        pass.bottleneck = recovery::bottleneck_features(net_, pass.estimate);
    }
    return pass;
}

torch::Tensor PrSystem::target(const torch::Tensor& images) const {
    const auto x = images.to(phases_.scalar_type());
    if (cfg_.encoding == optics::SceneEncoding::amplitude_object) return x.unsqueeze(1);
    const auto angle = x * std::numbers::pi;
    return torch::stack({torch::cos(angle), torch::sin(angle)}, 1);
}

torch::Tensor PrSystem::metric_image(const torch::Tensor& reconstruction) const {
    if (cfg_.encoding == optics::SceneEncoding::amplitude_object)
        return reconstruction.select(1, 0).clamp(0.0, 1.0);
    const auto phase = torch::atan2(reconstruction.select(1, 1), reconstruction.select(1, 0));
    return (phase / std::numbers::pi).clamp(0.0, 1.0);
}

std::vector<torch::Tensor> PrSystem::trainable_parameters() {
    std::vector<torch::Tensor> params;
    if (phases_.requires_grad()) params.push_back(phases_);
    if (kernel_.requires_grad()) params.push_back(kernel_);
    for (auto& p : net_->parameters())
        if (p.requires_grad()) params.push_back(p);
    return params;
}

std::vector<torch::Tensor> PrSystem::all_parameters() {
    std::vector<torch::Tensor> params{phases_, kernel_};
    for (auto& p : net_->parameters()) params.push_back(p);
    return params;
}

void PrSystem::set_trainable(bool on) {
    phases_.set_requires_grad(on && cfg_.trains_masks());
    kernel_.set_requires_grad(on && cfg_.trains_filter());
    for (auto& p : net_->parameters()) p.set_requires_grad(on);
}

std::map<std::string, torch::Tensor> PrSystem::export_arrays() const {
    std::map<std::string, torch::Tensor> arrays;
    arrays["phi"] = phases_.detach().to(torch::kFloat).clone();
    arrays["psi"] = kernel_.detach().to(torch::kFloat).clone();
    for (const auto& item : net_->named_parameters())
        arrays["theta/" + item.key()] = item.value().detach().to(torch::kFloat).clone();
    return arrays;
}

}  // namespace prkd
