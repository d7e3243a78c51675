#pragma once

#include "prkd/data.hpp"
#include "prkd/objectives.hpp"
#include "prkd/optics.hpp"
#include "prkd/recovery.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace prkd {

enum class Mode { teacher, e2e_baseline, random_baseline, kd_student };

[[nodiscard]] const char* to_string(Mode m) noexcept;
[[nodiscard]] Mode mode_from_string(const std::string& s);

struct InitializerConfig {
    int kernel_size = 3;
    int iterations = 25;
    bool trainable_filter = true;
    optics::MaskInit mask_init = optics::MaskInit::uniform_random;

    bool operator==(const InitializerConfig&) const = default;
};

struct OptimizerConfig {
    double learning_rate = 5e-4;
    int batch_size = 32;
    int epochs = 15;
    double grad_clip_norm = 1.0;  // <= 0 disables clipping
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    bool operator==(const OptimizerConfig&) const = default;
};

/// Declarative description of one training run. Serialized form:
///
///   { "mode", "seed", "snapshots", "scene_encoding", "teacher_hash",
///     "dataset":     { source, root, height, width, train, val, test, subset_seed },
///     "network":     { depth, base_channels },
///     "initializer": { kernel_size, iterations, trainable_filter, mask_init },
///     "loss":        { alpha, beta, rho, reg_levels },
///     "optimizer":   { learning_rate, batch_size, epochs, grad_clip_norm,
///                      adam_beta1, adam_beta2, adam_eps },
///     "noise":       { kind, parameter } }
///
/// Missing keys take defaults; unknown keys are errors.
struct ExperimentConfig {
    Mode mode = Mode::teacher;
    std::uint64_t seed = 0;
    int snapshots = 1;  // L of this run (L_t for teachers, L_s otherwise)
    optics::SceneEncoding encoding = optics::SceneEncoding::amplitude_object;
    data::DatasetSpec dataset;
    int depth = 3;
    int base_channels = 32;
    InitializerConfig initializer;
    objectives::LossWeights loss;
    OptimizerConfig optimizer;
    optics::NoiseModel noise;
    /// Config hash of the teacher a kd-student distils from.
    std::string teacher_hash;

    /// Throws ConfigError on any invariant violation.
    void validate() const;

    [[nodiscard]] bool trains_masks() const { return mode != Mode::random_baseline; }
    [[nodiscard]] bool trains_filter() const { return mode != Mode::random_baseline && initializer.trainable_filter; }
    [[nodiscard]] recovery::NetworkConfig network() const;

    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static ExperimentConfig from_json(const nlohmann::json& j);

    /// SHA-256 (hex) of the compact sorted-key JSON form.
    [[nodiscard]] std::string hash() const;

    bool operator==(const ExperimentConfig&) const = default;
};

enum class Scale { desk, paper };

[[nodiscard]] Scale scale_from_string(const std::string& s);

/// Defaults for one mode at the given scale. End-to-end modes use alpha = 1,
/// beta = 0 (their objective has no distillation terms).
[[nodiscard]] ExperimentConfig preset(Mode mode, Scale scale, int snapshots, std::uint64_t seed);

/// Applies dotted-path overrides ("optimizer.epochs=2"). Values are parsed as
/// JSON when possible, else taken as strings. Unknown paths are errors.
[[nodiscard]] ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& overrides);

[[nodiscard]] ExperimentConfig load_config(const std::string& path);

[[nodiscard]] std::string sha256_hex(const std::string& bytes);

}  // namespace prkd
