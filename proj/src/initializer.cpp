#include "prkd/initializer.hpp"

#include "prkd/error.hpp"
#include "prkd/optics.hpp"
#include "prkd/rng.hpp"

#include <torch/torch.h>

namespace prkd::initializer {

namespace F = torch::nn::functional;

namespace {

torch::Dtype complex_of(torch::Dtype real) {
    return real == torch::kDouble ? torch::kComplexDouble : torch::kComplexFloat;
}

void check_kernel(const torch::Tensor& kernel) {
    if (kernel.dim() != 2 || kernel.size(0) != kernel.size(1))
        throw ConfigError("filter kernel must be square k x k");
    if (kernel.size(0) % 2 == 0) throw ConfigError("filter kernel size must be odd, got " + std::to_string(kernel.size(0)));
}

// Per-sample squared norm over the trailing (H, W) dimensions.
torch::Tensor sample_norm(const torch::Tensor& z) {
    return (torch::real(z).square() + torch::imag(z).square()).sum({-2, -1}).sqrt();
}

// exp(-j phi), the diagonal of every A_l.
torch::Tensor mask_exponential(const torch::Tensor& phases) {
    return torch::complex(torch::cos(phases), -torch::sin(phases));
}

torch::Tensor gamma_with_mask(const torch::Tensor& z, const torch::Tensor& y, const torch::Tensor& mask) {
    const auto n = static_cast<double>(z.size(-1) * z.size(-2));
    const auto L = static_cast<double>(mask.size(0));
    auto spectrum = optics::dft2(z.unsqueeze(-3) * mask);
    auto back = optics::idft2(spectrum * y);
    return (back * torch::conj(mask)).sum(-3) / (n * L);
}

}  // namespace

FilterKernel box_filter(std::int64_t k, torch::Dtype dtype) {
    if (k < 1 || k % 2 == 0) throw ConfigError("filter kernel size must be odd and positive");
    return {torch::full({k, k}, 1.0 / static_cast<double>(k * k), torch::TensorOptions().dtype(dtype))};
}

FilterKernel delta_filter(std::int64_t k, torch::Dtype dtype) {
    if (k < 1 || k % 2 == 0) throw ConfigError("filter kernel size must be odd and positive");
    auto c = torch::zeros({k, k}, torch::TensorOptions().dtype(dtype));
    c.index_put_({k / 2, k / 2}, 1.0);
    return {c};
}

bool InitEstimate::any_degenerate() const {
    for (int d : degenerate_at)
        if (d != 0) return true;
    return false;
}

torch::Tensor gamma_apply(const torch::Tensor& z, const torch::Tensor& y, const torch::Tensor& phases) {
    if (phases.dim() != 3) throw DimensionError("gamma_apply: phases must be (L, H, W)");
    if (z.dim() != 2 && z.dim() != 3) throw DimensionError("gamma_apply: z must be (H, W) or (B, H, W)");
    if (y.dim() != z.dim() + 1 || y.size(-3) != phases.size(0) || y.size(-1) != z.size(-1) ||
        y.size(-2) != z.size(-2) || (z.dim() == 3 && y.size(0) != z.size(0))) {
        throw DimensionError("gamma_apply: y " + c10::str(y.sizes()) + " incompatible with z " +
                             c10::str(z.sizes()) + " and phases " + c10::str(phases.sizes()));
    }
    return gamma_with_mask(z, y, mask_exponential(phases));
}

torch::Tensor apply_filter(const torch::Tensor& z, const torch::Tensor& kernel) {
    check_kernel(kernel);
    if (z.dim() < 2) throw DimensionError("apply_filter: z must be at least 2-D");
    const auto k = kernel.size(0);
    const auto H = z.size(-2);
    const auto W = z.size(-1);
    const auto cz = z.is_complex() ? z : z.to(complex_of(kernel.scalar_type()));

    auto planes = torch::stack({torch::real(cz), torch::imag(cz)}, 0).reshape({-1, 1, H, W});
    if (planes.scalar_type() != kernel.scalar_type()) planes = planes.to(kernel.scalar_type());
    const auto weight = kernel.flip({0, 1}).reshape({1, 1, k, k});
    auto out = F::conv2d(planes, weight, F::Conv2dFuncOptions().padding(k / 2));

    auto shape = cz.sizes().vec();
    shape.insert(shape.begin(), 2);
    out = out.reshape(shape);
    return torch::complex(out[0], out[1]);
}

torch::Tensor random_start(torch::IntArrayRef shape, std::uint64_t rng_seed, torch::Dtype real_dtype) {
    auto gen = make_generator(rng_seed);
    const auto opts = torch::TensorOptions().dtype(torch::kDouble);
    auto re = torch::randn(shape, gen, opts);
    auto im = torch::randn(shape, gen, opts);
    auto z = torch::complex(re, im);
    z = z / sample_norm(z).unsqueeze(-1).unsqueeze(-1);
    return z.to(complex_of(real_dtype));
}

InitEstimate spectral_initialize_from(const torch::Tensor& y, const torch::Tensor& phases,
                                      const torch::Tensor& kernel, int iterations, const torch::Tensor& start,
                                      bool strict) {
    if (iterations < 1) throw ConfigError("spectral_initialize: T must be >= 1");
    check_kernel(kernel);

    InitEstimate est;
    const bool batched = start.dim() == 3;
    const auto batch = batched ? start.size(0) : 1;
    est.degenerate_at.assign(static_cast<std::size_t>(batch), 0);

    if (phases.dim() != 3 || y.size(-3) != phases.size(0))
        throw DimensionError("spectral_initialize: y " + c10::str(y.sizes()) + " does not match phases " +
                             c10::str(phases.sizes()));
    const auto mask = mask_exponential(phases);
    auto z = start;
    for (int t = 0; t < iterations; ++t) {
        auto next = apply_filter(gamma_with_mask(z, y, mask), kernel);
        auto norm = sample_norm(next);

        const auto small = (norm.detach() < degenerate_norm).reshape({-1}).to(torch::kCPU);
        const auto* flags = small.data_ptr<bool>();
        bool any_small = false;
        for (std::int64_t b = 0; b < batch; ++b) {
            if (!flags[b]) continue;
            any_small = true;
            if (strict) throw DegenerateInitError(t + 1);
            if (est.degenerate_at[static_cast<std::size_t>(b)] == 0) est.degenerate_at[static_cast<std::size_t>(b)] = t + 1;
        }

        if (any_small) {
            auto safe = torch::clamp_min(norm, degenerate_norm);
            auto keep = (~small.reshape(norm.sizes())).to(next.scalar_type());
            z = next / safe.unsqueeze(-1).unsqueeze(-1) * keep.unsqueeze(-1).unsqueeze(-1);
        } else {
            z = next / norm.unsqueeze(-1).unsqueeze(-1);
        }
        est.iterations_run = t + 1;
    }
    est.z = z;
    return est;
}

InitEstimate spectral_initialize(const torch::Tensor& y, const torch::Tensor& phases, const torch::Tensor& kernel,
                                 int iterations, std::uint64_t rng_seed, bool strict) {
    if (y.dim() != 3 && y.dim() != 4) throw DimensionError("spectral_initialize: y must be (L,H,W) or (B,L,H,W)");
    std::vector<std::int64_t> shape;
    if (y.dim() == 4) shape.push_back(y.size(0));
    shape.push_back(y.size(-2));
    shape.push_back(y.size(-1));
    const auto start = random_start(shape, rng_seed, phases.scalar_type());
    return spectral_initialize_from(y, phases, kernel, iterations, start, strict);
}

torch::Tensor canonicalize_phase(const torch::Tensor& z, bool strict) {
    if (z.dim() != 2 && z.dim() != 3) throw DimensionError("canonicalize_phase: z must be (H, W) or (B, H, W)");
    const bool batched = z.dim() == 3;
    const auto flat = batched ? z.reshape({z.size(0), -1}) : z.reshape({1, -1});

    const auto modulus = flat.detach().abs();
    const auto idx = modulus.argmax(1, /*keepdim=*/true);
    const auto peak = flat.gather(1, idx);  // (B, 1), carries gradient
    const auto peak_abs = peak.detach().abs();

    const auto zero = (peak_abs == 0).reshape({-1});
    if (strict && zero.any().item<bool>()) throw DegenerateFieldError("canonicalize_phase: all-zero field");

    // exp(-j*arg(peak)) = conj(peak) / |peak|; zero samples rotate by 1.
    auto peak_mod = torch::sqrt(torch::real(peak).square() + torch::imag(peak).square());
    auto safe_mod = torch::where(peak_abs == 0, torch::ones_like(peak_mod), peak_mod);
    auto rotation = torch::conj(peak) / safe_mod;
    rotation = torch::where(peak_abs == 0, torch::ones_like(rotation), rotation);

    auto out = flat * rotation;
    return out.reshape(z.sizes());
}

}  // namespace prkd::initializer
