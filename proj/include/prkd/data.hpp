#pragma once

// Dataset ingestion (IDX containers as used by FashionMNIST, or directories
// of 8-bit grayscale PNGs), bilinear preprocessing and deterministic splits.

#include <nlohmann/json.hpp>
#include <torch/types.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace prkd::data {

struct ImageSet {
    torch::Tensor images;     // (N, H0, W0) float in [0, 1]
    std::vector<int> labels;  // empty when the source has none

    [[nodiscard]] std::int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

/// Parses an IDX image file (magic 0x00000803) and optionally its label
/// file (magic 0x00000801). Files ending in ".gz" are decompressed.
[[nodiscard]] ImageSet load_idx(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path = {});

/// Writes IDX containers (uncompressed). Pixel values are rounded to bytes.
void write_idx(const ImageSet& set, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path = {});

/// Every *.png in `dir` (sorted by file name); all must be 8-bit single
/// channel and share one size.
[[nodiscard]] ImageSet load_image_directory(const std::filesystem::path& dir);

/// Bilinear resize with half-pixel centers and edge clamping, output in
/// [0, 1]. Works on (H0, W0) or (N, H0, W0).
[[nodiscard]] torch::Tensor preprocess(const torch::Tensor& images, std::int64_t height, std::int64_t width);

enum class DataSource { idx_files, image_directory };

[[nodiscard]] const char* to_string(DataSource s) noexcept;
[[nodiscard]] DataSource data_source_from_string(const std::string& s);

struct DatasetSpec {
    DataSource source = DataSource::idx_files;
    /// Empty: resolved from PRKD_DATA_ROOT at load time.
    std::string root;
    std::int64_t height = 32;
    std::int64_t width = 32;
    std::int64_t train_count = 2000;
    std::int64_t val_count = 500;
    std::int64_t test_count = 500;
    std::uint64_t subset_seed = 0;

    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static DatasetSpec from_json(const nlohmann::json& j);
    bool operator==(const DatasetSpec&) const = default;
};

struct SplitIndices {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> val;
    /// Indexes the separate test pool when one exists, else the shared pool.
    std::vector<std::int64_t> test;
    bool separate_test_pool = false;
};

/// Deterministic disjoint subsets. `test_pool_size == 0` means the test split
/// is carved from the same pool as train/val.
[[nodiscard]] SplitIndices make_splits(const DatasetSpec& spec, std::int64_t pool_size,
                                       std::int64_t test_pool_size = 0);

struct DataSplits {
    torch::Tensor train;  // (N, H, W) float in [0, 1]
    torch::Tensor val;
    torch::Tensor test;
};

/// Resolves the dataset root (spec.root, else $PRKD_DATA_ROOT).
[[nodiscard]] std::filesystem::path resolve_root(const DatasetSpec& spec);

/// Loads, splits and preprocesses. For IDX sources the root must hold
/// train-images-idx3-ubyte[.gz]; t10k-images-idx3-ubyte[.gz], when present,
/// is the separate test pool.
[[nodiscard]] DataSplits load_dataset(const DatasetSpec& spec);

/// Procedural garment-like 28x28 grayscale images in ten silhouette classes
/// (tops, trousers, dresses, footwear, bags ...), for environments without
/// the real dataset. Deterministic in `seed`.
[[nodiscard]] ImageSet synthesize_garments(std::int64_t count, std::uint64_t seed);

/// Writes train (`train_count`) and t10k (`test_count`) IDX files into `dir`.
void write_synthetic_dataset(const std::filesystem::path& dir, std::int64_t train_count, std::int64_t test_count,
                             std::uint64_t seed);

}  // namespace prkd::data
