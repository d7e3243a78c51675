#include "prkd/error.hpp"
#include "prkd/initializer.hpp"
#include "prkd/optics.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

using namespace prkd;
namespace fs = std::filesystem;

namespace {

torch::TensorOptions f64() { return torch::TensorOptions().dtype(torch::kDouble); }

torch::Tensor random_field(std::int64_t H, std::int64_t W) {
    return torch::complex(torch::randn({H, W}, f64()), torch::randn({H, W}, f64()));
}

torch::Tensor random_phases(std::int64_t L, std::int64_t H, std::int64_t W) {
    return torch::rand({L, H, W}, f64()) * 2 * std::numbers::pi;
}

double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().max().item<double>(); }

}  // namespace

TEST_SUITE("optics") {
    TEST_CASE("sense matches direct DFT summation") {
        torch::manual_seed(1);
        for (auto [L, H, W] : {std::tuple{1, 4, 4}, {3, 5, 3}, {2, 6, 8}}) {
            const auto x = random_field(H, W);
            const auto phi = random_phases(L, H, W);
            const auto ref = oracle::sense(oracle::to_complex(x), oracle::to_real(phi), L, H, W);
            const auto got = oracle::to_real(optics::sense(x, phi, {}, 0));
            REQUIRE(got.size() == ref.size());
            for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-10));
        }
    }

    TEST_CASE("mask modulation and DFT match scalar evaluation") {
        torch::manual_seed(2);
        const auto x = random_field(4, 4);
        const auto phi = random_phases(3, 4, 4);
        const auto got = oracle::to_complex(optics::apply_mask(x, phi));
        const auto xs = oracle::to_complex(x);
        const auto ps = oracle::to_real(phi);
        REQUIRE(got.size() == 48);
        for (int l = 0; l < 3; ++l)
            for (int i = 0; i < 16; ++i) {
                const auto ref = xs[i] * std::complex<double>(std::cos(ps[l * 16 + i]), -std::sin(ps[l * 16 + i]));
                CHECK(std::abs(got[l * 16 + i] - ref) < 1e-14);
            }

        const auto spec = oracle::to_complex(optics::dft2(x));
        const auto ref = oracle::dft2(xs, 4, 4);
        for (int i = 0; i < 16; ++i) CHECK(std::abs(spec[i] - ref[i]) <= 1e-10 * std::abs(ref[i]) + 1e-14);
        CHECK(max_abs_diff(optics::idft2(optics::dft2(x)), x) < 1e-12);
    }

    TEST_CASE("batched sense stacks per-scene results") {
        torch::manual_seed(2);
        const auto x = torch::stack({random_field(4, 4), random_field(4, 4)});
        const auto phi = random_phases(3, 4, 4);
        const auto y = optics::sense(x, phi, {}, 0);
        CHECK(y.sizes() == torch::IntArrayRef{2, 3, 4, 4});
        CHECK(max_abs_diff(y[1], optics::sense(x[1], phi, {}, 0)) < 1e-12);
    }

    TEST_CASE("Parseval: each snapshot carries the scene energy") {
        torch::manual_seed(3);
        for (int k = 0; k < 25; ++k) {
            const int H = 2 + k % 6, W = 2 + k % 4, L = 1 + k % 3;
            const auto x = random_field(H, W);
            const double energy = x.abs().square().sum().item<double>();
            const auto per = optics::sense(x, random_phases(L, H, W), {}, 0).sum({-2, -1});
            for (int l = 0; l < L; ++l) CHECK(per[l].item<double>() == doctest::Approx(energy).epsilon(1e-10));
        }
    }

    TEST_CASE("intensities ignore a global phase and 2pi mask shifts") {
        torch::manual_seed(4);
        const auto x = random_field(6, 6);
        const auto phi = random_phases(2, 6, 6);
        const auto y = optics::sense(x, phi, {}, 0);
        const auto rot = torch::complex(torch::tensor(std::cos(0.7), f64()), torch::tensor(std::sin(0.7), f64()));
        CHECK(max_abs_diff(y, optics::sense(x * rot, phi, {}, 0)) < 1e-10);
        CHECK(max_abs_diff(y, optics::sense(x, phi + 2 * std::numbers::pi, {}, 0)) < 1e-10);
        // a constant mask offset is just another global phase
        CHECK(max_abs_diff(y, optics::sense(x, optics::wrap_phases(phi - 10.0), {}, 0)) < 1e-10);
    }

    TEST_CASE("zero masks reduce to the plain Fourier magnitude") {
        torch::manual_seed(5);
        const auto x = random_field(4, 6);
        const auto y = optics::sense(x, torch::zeros({1, 4, 6}, f64()), {}, 0)[0];
        CHECK(max_abs_diff(y, optics::dft2(x).abs().square()) < 1e-12);
    }

    TEST_CASE("shape mismatches raise dimension errors") {
        const auto x = random_field(4, 4);
        CHECK_THROWS_AS((void)optics::sense(x, random_phases(1, 4, 5), {}, 0), DimensionError);
        CHECK_THROWS_AS((void)optics::sense(x, torch::zeros({4, 4}, f64()), {}, 0), DimensionError);
    }

    TEST_CASE("noise is seeded and intensities stay nonnegative") {
        torch::manual_seed(6);
        const auto x = random_field(8, 8) * 0.01;
        const auto phi = random_phases(2, 8, 8);
        const optics::NoiseModel g{optics::NoiseKind::gaussian, 0.5};
        const auto a = optics::sense(x, phi, g, 9);
        CHECK(torch::equal(a, optics::sense(x, phi, g, 9)));
        CHECK_FALSE(torch::equal(a, optics::sense(x, phi, g, 10)));
        CHECK(a.min().item<double>() >= 0.0);

        const optics::NoiseModel p{optics::NoiseKind::poisson, 50.0};
        const auto b = optics::sense(x * 100, phi, p, 1);
        CHECK(b.min().item<double>() >= 0.0);
        CHECK(torch::equal(b, optics::sense(x * 100, phi, p, 1)));

        CHECK_THROWS_AS((void)optics::sense(x, phi, {optics::NoiseKind::poisson, 0.0}, 0), ConfigError);
        CHECK_THROWS_AS((void)optics::sense(x, phi, {optics::NoiseKind::gaussian, -1.0}, 0), ConfigError);
    }

    TEST_CASE("phase-object scenes have unit modulus") {
        const auto img = torch::rand({5, 5}, f64());
        const auto s = optics::make_scene(img, optics::SceneEncoding::phase_object);
        CHECK(max_abs_diff(s.field.abs(), torch::ones({5, 5}, f64())) < 1e-12);
        const auto a = optics::make_scene(img, optics::SceneEncoding::amplitude_object);
        CHECK(max_abs_diff(torch::real(a.field), img) == 0.0);
    }

    TEST_CASE("mask initialization is seeded and wraps into [0, 2pi)") {
        const auto a = optics::init_masks(3, 8, 8, optics::MaskInit::uniform_random, 5, torch::kDouble);
        const auto b = optics::init_masks(3, 8, 8, optics::MaskInit::uniform_random, 5, torch::kDouble);
        const auto c = optics::init_masks(3, 8, 8, optics::MaskInit::uniform_random, 6, torch::kDouble);
        CHECK(torch::equal(a.phases, b.phases));
        CHECK_FALSE(torch::equal(a.phases, c.phases));
        CHECK(a.phases.min().item<double>() >= 0.0);
        CHECK(a.phases.max().item<double>() < 2 * std::numbers::pi);
        CHECK(optics::init_masks(2, 4, 4, optics::MaskInit::zeros, 0).phases.abs().sum().item<double>() == 0.0);
        CHECK_THROWS_AS((void)optics::init_masks(0, 4, 4, optics::MaskInit::zeros, 0), ConfigError);

        // uniform on [0, 2pi): mean pi, standard error 2pi / sqrt(12 n)
        const auto big = optics::init_masks(1, 64, 64, optics::MaskInit::uniform_random, 17, torch::kDouble);
        const double se = 2 * std::numbers::pi / std::sqrt(12.0 * 64 * 64);
        CHECK(std::abs(big.phases.mean().item<double>() - std::numbers::pi) <= 3 * se);

        const auto w = optics::wrap_phases(torch::tensor({-1e-20, -0.5, 7.0, 2 * std::numbers::pi}, f64()));
        CHECK(w.min().item<double>() >= 0.0);
        CHECK(w.max().item<double>() < 2 * std::numbers::pi);
    }

    TEST_CASE("mask export and import round-trip") {
        const auto dir = fs::temp_directory_path() / "prkd_masks_test";
        fs::create_directories(dir);
        const optics::PhaseMaskBank bank{torch::rand({2, 3, 5}) * 20 - 10};
        optics::export_masks(bank, dir / "m.f32");
        CHECK(fs::file_size(dir / "m.f32") == 2 * 3 * 5 * 4);
        std::ifstream side(dir / "m.f32.json");
        const auto j = nlohmann::json::parse(side);
        CHECK(j.at("L") == 2);
        CHECK(j.at("H") == 3);
        CHECK(j.at("W") == 5);
        CHECK(j.at("wrap") == "0..2pi");
        const auto back = optics::import_masks(dir / "m.f32");
        CHECK(torch::equal(back.phases, optics::wrap_phases(bank.phases)));
        fs::remove_all(dir);
    }
}

TEST_SUITE("initializer") {
    TEST_CASE("gamma_apply equals the dense backprojection operator") {
        torch::manual_seed(11);
        const int L = 3, H = 4, W = 3;
        const auto x = random_field(H, W);
        const auto phi = random_phases(L, H, W);
        const auto y = optics::sense(x, phi, {}, 0);
        const auto G = oracle::dense_gamma(oracle::to_real(y), oracle::to_real(phi), L, H, W);
        const auto z = random_field(H, W);
        const auto zc = oracle::to_complex(z);
        Eigen::VectorXcd v(H * W);
        for (int i = 0; i < H * W; ++i) v(i) = zc[i];
        const Eigen::VectorXcd ref = G * v;
        const auto got = oracle::to_complex(initializer::gamma_apply(z, y, phi));
        for (int i = 0; i < H * W; ++i) CHECK(std::abs(got[i] - ref(i)) < 1e-12);
        CHECK((G - G.adjoint()).norm() < 1e-12);
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(G).eigenvalues().minCoeff() >= -1e-10);
    }

    TEST_CASE("apply_filter is a zero-padded convolution") {
        torch::manual_seed(12);
        const auto z = random_field(5, 7);
        const auto k = torch::randn({3, 3}, f64());  // asymmetric, so a correlation would differ
        const auto ref = oracle::convolve_same(oracle::to_complex(z), 5, 7, oracle::to_real(k), 3);
        const auto got = oracle::to_complex(initializer::apply_filter(z, k));
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(got[i] - ref[i]) < 1e-12);

        CHECK(max_abs_diff(initializer::apply_filter(z, initializer::delta_filter(5, torch::kDouble).coefficients), z) ==
              0.0);
        CHECK_THROWS_AS((void)initializer::apply_filter(z, torch::ones({2, 2}, f64())), ConfigError);
        CHECK_THROWS_AS((void)initializer::box_filter(4), ConfigError);
        CHECK(initializer::box_filter(3).coefficients.sum().item<double>() == doctest::Approx(1.0));
    }

    TEST_CASE("power iteration converges to the leading eigenvector") {
        torch::manual_seed(13);
        const int L = 4;
        const auto x = random_field(4, 4);
        const auto phi = random_phases(L, 4, 4);
        const auto y = optics::sense(x, phi, {}, 0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(
            oracle::dense_gamma(oracle::to_real(y), oracle::to_real(phi), L, 4, 4));
        const Eigen::VectorXcd v1 = eig.eigenvectors().col(15);
        const auto est =
            initializer::spectral_initialize(y, phi, initializer::delta_filter(1, torch::kDouble).coefficients, 200, 3);
        CHECK(est.iterations_run == 200);
        CHECK_FALSE(est.any_degenerate());
        const auto z = oracle::to_complex(est.z);
        std::complex<double> inner = 0;
        for (int i = 0; i < 16; ++i) inner += std::conj(v1(i)) * z[i];
        CHECK(std::abs(inner) >= 0.999);
    }

    TEST_CASE("iterates are unit-norm per sample and seeded") {
        torch::manual_seed(14);
        const auto x = torch::stack({random_field(8, 8), random_field(8, 8), random_field(8, 8)});
        const auto phi = random_phases(2, 8, 8);
        const auto y = optics::sense(x, phi, {}, 0);
        const auto k = initializer::box_filter(3, torch::kDouble).coefficients;
        const auto a = initializer::spectral_initialize(y, phi, k, 5, 21);
        const auto norms = a.z.abs().square().sum({-2, -1}).sqrt();
        CHECK(max_abs_diff(norms, torch::ones({3}, f64())) < 1e-12);
        CHECK(torch::equal(a.z, initializer::spectral_initialize(y, phi, k, 5, 21).z));
        CHECK_FALSE(torch::equal(a.z, initializer::spectral_initialize(y, phi, k, 5, 22).z));
    }

    TEST_CASE("a vanishing iterate is degenerate") {
        const auto phi = random_phases(1, 4, 4);
        const auto y = torch::zeros({2, 1, 4, 4}, f64());
        const auto k = initializer::box_filter(3, torch::kDouble).coefficients;
        CHECK_THROWS_AS((void)initializer::spectral_initialize(y, phi, k, 4, 0), DegenerateInitError);
        try {
            (void)initializer::spectral_initialize(y, phi, k, 4, 0);
        } catch (const DegenerateInitError& e) {
            CHECK(e.iteration() == 1);
        }
        const auto est = initializer::spectral_initialize(y, phi, k, 4, 0, /*strict=*/false);
        CHECK(est.degenerate_at == std::vector<int>{1, 1});
        CHECK(torch::isfinite(torch::real(est.z)).all().item<bool>());
        CHECK_THROWS_AS((void)initializer::spectral_initialize(y, phi, k, 0, 0), ConfigError);
    }

    TEST_CASE("canonicalization removes the global phase") {
        torch::manual_seed(15);
        const auto z = random_field(6, 6);
        const auto c = initializer::canonicalize_phase(z);
        const auto peak = c.reshape({-1}).abs().argmax().item<std::int64_t>();
        const auto p = c.reshape({-1})[peak];
        CHECK(std::abs(torch::imag(p).item<double>()) < 1e-12);
        CHECK(torch::real(p).item<double>() > 0);
        for (double theta : {0.3, 2.0, -2.9}) {
            const auto rot = torch::complex(torch::tensor(std::cos(theta), f64()), torch::tensor(std::sin(theta), f64()));
            CHECK(max_abs_diff(initializer::canonicalize_phase(z * rot), c) < 1e-12);
        }
        CHECK(max_abs_diff(initializer::canonicalize_phase(c), c) < 1e-12);
        CHECK_THROWS_AS((void)initializer::canonicalize_phase(torch::zeros({3, 3}, torch::kComplexDouble)),
                        DegenerateFieldError);
    }
}
