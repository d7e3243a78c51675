#pragma once

#include "prkd/config.hpp"

#include <nlohmann/json.hpp>
#include <torch/types.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace prkd {

/// Single-file archive of one trained PR system.
///
/// Layout (all integers little-endian):
///   "PRKDCKPT"  u32 version  u64 manifest_bytes  manifest (UTF-8 JSON)
///   u32 array_count, then per array in name order:
///   u32 name_bytes  name  u32 ndim  u64 dims[ndim]  f32 data[prod(dims)]
///
/// The manifest holds {format, config, config_hash, seed, epoch, metrics,
/// architecture, loss_trace}. Arrays are "phi", "psi" and "theta/<param>".
struct Checkpoint {
    ExperimentConfig config;
    int epoch = 0;                 // epoch of the selected parameters (0 = untrained)
    nlohmann::json metrics = nlohmann::json::object();
    std::vector<double> loss_trace;
    std::map<std::string, torch::Tensor> arrays;

    [[nodiscard]] std::string config_hash() const { return config.hash(); }
    [[nodiscard]] nlohmann::json manifest() const;

    /// SHA-256 over the names and float32 bytes of every array.
    [[nodiscard]] std::string parameter_hash() const;

    /// Atomic: writes "<path>.tmp" then renames.
    void save(const std::filesystem::path& path) const;
    [[nodiscard]] static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace prkd
