#include "prkd/optics.hpp"

#include "binary_io.hpp"
#include "prkd/error.hpp"
#include "prkd/rng.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <fstream>
#include <numbers>

namespace prkd::optics {

namespace {

torch::Dtype complex_of(torch::Dtype real) {
    return real == torch::kDouble ? torch::kComplexDouble : torch::kComplexFloat;
}

torch::Tensor as_complex(const torch::Tensor& t, torch::Dtype target) {
    if (t.scalar_type() == target) return t;
    return t.to(target);
}

void check_hw(const torch::Tensor& field, const torch::Tensor& phases, const char* op) {
    if (field.dim() < 2 || phases.dim() < 2 || field.size(-1) != phases.size(-1) ||
        field.size(-2) != phases.size(-2)) {
        throw DimensionError(std::string(op) + ": field " + c10::str(field.sizes()) +
                             " and phases " + c10::str(phases.sizes()) + " disagree on H x W");
    }
}

}  // namespace

const char* to_string(SceneEncoding e) noexcept {
    return e == SceneEncoding::amplitude_object ? "amplitude-object" : "phase-object";
}

SceneEncoding scene_encoding_from_string(const std::string& s) {
    if (s == "amplitude-object") return SceneEncoding::amplitude_object;
    if (s == "phase-object") return SceneEncoding::phase_object;
    throw ConfigError("unknown scene encoding '" + s + "'");
}

const char* to_string(NoiseKind k) noexcept {
    switch (k) {
        case NoiseKind::none: return "none";
        case NoiseKind::gaussian: return "gaussian";
        case NoiseKind::poisson: return "poisson";
    }
    return "none";
}

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "none") return NoiseKind::none;
    if (s == "gaussian") return NoiseKind::gaussian;
    if (s == "poisson") return NoiseKind::poisson;
    throw ConfigError("unknown noise kind '" + s + "'");
}

const char* to_string(MaskInit m) noexcept { return m == MaskInit::zeros ? "zeros" : "uniform-random"; }

MaskInit mask_init_from_string(const std::string& s) {
    if (s == "zeros") return MaskInit::zeros;
    if (s == "uniform-random") return MaskInit::uniform_random;
    throw ConfigError("unknown mask init scheme '" + s + "'");
}

void NoiseModel::validate() const {
    if (kind == NoiseKind::none) return;
    if (!(parameter >= 0.0)) throw ConfigError("noise parameter must be >= 0");
    if (kind == NoiseKind::poisson && parameter == 0.0)
        throw ConfigError("poisson noise needs a positive photon scale");
}

Scene make_scene(const torch::Tensor& image, SceneEncoding encoding) {
    if (image.dim() < 2) throw DimensionError("make_scene: image must be at least 2-D");
    const auto cdtype = complex_of(image.scalar_type());
    Scene scene;
    scene.encoding = encoding;
    scene.source_image = image;
    if (encoding == SceneEncoding::amplitude_object) {
        scene.field = image.to(cdtype);
    } else {
        const auto angle = image * std::numbers::pi;
        scene.field = torch::complex(torch::cos(angle), torch::sin(angle));
    }
    return scene;
}

torch::Tensor apply_mask(const torch::Tensor& field, const torch::Tensor& phases) {
    check_hw(field, phases, "apply_mask");
    const auto cdtype = complex_of(phases.scalar_type());
    const auto mask = torch::complex(torch::cos(phases), -torch::sin(phases));
    return as_complex(field, cdtype) * mask;
}

torch::Tensor dft2(const torch::Tensor& field) {
    return torch::fft::fft2(field, c10::nullopt, {-2, -1}, "ortho");
}

torch::Tensor idft2(const torch::Tensor& spectrum) {
    return torch::fft::ifft2(spectrum, c10::nullopt, {-2, -1}, "ortho");
}

torch::Tensor sense(const torch::Tensor& field, const torch::Tensor& phases, const NoiseModel& noise,
                    std::uint64_t rng_seed) {
    if (phases.dim() != 3) throw DimensionError("sense: phases must be (L, H, W)");
    if (field.dim() != 2 && field.dim() != 3) throw DimensionError("sense: field must be (H, W) or (B, H, W)");
    check_hw(field, phases, "sense");
    noise.validate();

    const auto spectrum = dft2(apply_mask(field.unsqueeze(-3), phases));
    auto y = torch::real(spectrum).square() + torch::imag(spectrum).square();
    switch (noise.kind) {
        case NoiseKind::none:
            break;
        case NoiseKind::gaussian: {
            auto gen = make_generator(derive_seed(rng_seed, RngStream::noise));
            auto w = torch::randn(y.sizes(), gen, y.options().requires_grad(false)) * noise.parameter;
            y = y + w;
            break;
        }
        case NoiseKind::poisson: {
            auto gen = make_generator(derive_seed(rng_seed, RngStream::noise));
            torch::Tensor counts;
            {
                torch::NoGradGuard no_grad;
                counts = torch::poisson(y.detach() * noise.parameter, gen) / noise.parameter;
            }
            // Straight-through: value of the sample, gradient of the mean.
            y = y + (counts - y.detach());
            break;
        }
    }
    return torch::clamp_min(y, 0.0);
}

MeasurementSet sense(const Scene& scene, const PhaseMaskBank& masks, const NoiseModel& noise,
                     std::uint64_t rng_seed) {
    return {sense(scene.field, masks.phases, noise, rng_seed), noise};
}

PhaseMaskBank init_masks(std::int64_t num_snapshots, std::int64_t height, std::int64_t width, MaskInit scheme,
                         std::uint64_t rng_seed, torch::Dtype dtype) {
    if (num_snapshots < 1 || height < 1 || width < 1)
        throw ConfigError("init_masks: L, H and W must all be positive");
    const auto opts = torch::TensorOptions().dtype(dtype);
    if (scheme == MaskInit::zeros) return {torch::zeros({num_snapshots, height, width}, opts)};
    auto gen = make_generator(derive_seed(rng_seed, RngStream::masks));
    // Sample in double then cast, so float and double banks agree to float precision.
    auto u = torch::rand({num_snapshots, height, width}, gen, torch::TensorOptions().dtype(torch::kDouble));
    return {(u * (2.0 * std::numbers::pi)).to(dtype)};
}

torch::Tensor wrap_phases(const torch::Tensor& phases) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    auto wrapped = torch::remainder(phases, two_pi);
    // remainder can round up to exactly 2*pi for tiny negative inputs
    return torch::where(wrapped >= two_pi, torch::zeros_like(wrapped), wrapped);
}

void export_masks(const PhaseMaskBank& masks, const std::filesystem::path& path) {
    const auto wrapped = wrap_phases(masks.phases.detach()).to(torch::kFloat).contiguous();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    detail::write_f32_le(out, {wrapped.data_ptr<float>(), static_cast<std::size_t>(wrapped.numel())});

    nlohmann::json sidecar = {{"L", masks.num_snapshots()},
                              {"H", masks.height()},
                              {"W", masks.width()},
                              {"wrap", "0..2pi"}};
    std::ofstream meta(path.string() + ".json");
    if (!meta) throw IoError("cannot open sidecar for '" + path.string() + "'");
    meta << sidecar.dump(2) << '\n';
}

PhaseMaskBank import_masks(const std::filesystem::path& path) {
    std::ifstream meta(path.string() + ".json");
    if (!meta) throw IoError("missing mask sidecar '" + path.string() + ".json'");
    nlohmann::json sidecar;
    try {
        sidecar = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("mask sidecar: ") + e.what());
    }
    const auto L = sidecar.at("L").get<std::int64_t>();
    const auto H = sidecar.at("H").get<std::int64_t>();
    const auto W = sidecar.at("W").get<std::int64_t>();
    if (L < 1 || H < 1 || W < 1) throw FormatError("mask sidecar has nonpositive dimensions");

    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    auto values = detail::read_f32_le(in, static_cast<std::size_t>(L * H * W), "mask array");
    return {torch::from_blob(values.data(), {L, H, W}, torch::kFloat).clone()};
}

}  // namespace prkd::optics
