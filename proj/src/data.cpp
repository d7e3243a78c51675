#include "prkd/data.hpp"

#include "prkd/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>

namespace prkd::data {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t idx_images_magic = 0x00000803;
constexpr std::uint32_t idx_labels_magic = 0x00000801;

std::vector<unsigned char> read_file_bytes(const fs::path& path) {
    std::vector<unsigned char> bytes;
    if (path.extension() == ".gz") {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (gz == nullptr) throw IoError("cannot open '" + path.string() + "'");
        unsigned char buf[1 << 16];
        int n = 0;
        while ((n = gzread(gz, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + n);
        const bool failed = n < 0;
        gzclose(gz);
        if (failed) throw IoError("corrupt gzip stream in '" + path.string() + "'", static_cast<std::int64_t>(bytes.size()));
        return bytes;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t offset, const fs::path& path) {
    if (offset + 4 > b.size())
        throw IoError("truncated IDX header in '" + path.string() + "'", static_cast<std::int64_t>(b.size()));
    return std::uint32_t{b[offset]} << 24 | std::uint32_t{b[offset + 1]} << 16 | std::uint32_t{b[offset + 2]} << 8 |
           std::uint32_t{b[offset + 3]};
}

void put_be32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    out.write(bytes, 4);
}

// (out x in) interpolation matrix for one axis, half-pixel centers.
torch::Tensor bilinear_matrix(std::int64_t in, std::int64_t out) {
    auto m = torch::zeros({out, in}, torch::kDouble);
    auto acc = m.accessor<double, 2>();
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t i = 0; i < out; ++i) {
        double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto lo = static_cast<std::int64_t>(std::floor(src));
        const auto hi = std::min(lo + 1, in - 1);
        const double frac = src - static_cast<double>(lo);
        acc[i][lo] += 1.0 - frac;
        acc[i][hi] += frac;
    }
    return m;
}

std::uint64_t mix(std::uint64_t seed) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<std::int64_t> permutation(std::int64_t n, std::uint64_t seed) {
    std::vector<std::int64_t> p(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(seed);
    for (std::int64_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    return p;
}

fs::path find_idx(const fs::path& root, const std::string& stem) {
    for (const auto& candidate : {root / stem, root / (stem + ".gz")})
        if (fs::exists(candidate)) return candidate;
    return {};
}

torch::Tensor gather(const torch::Tensor& pool, const std::vector<std::int64_t>& idx) {
    auto index = torch::tensor(idx, torch::kLong);
    return pool.index_select(0, index);
}

}  // namespace

ImageSet load_idx(const fs::path& images_path, const fs::path& labels_path) {
    const auto bytes = read_file_bytes(images_path);
    const auto magic = be32(bytes, 0, images_path);
    if (magic != idx_images_magic) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0x%08X", magic);
        throw FormatError("'" + images_path.string() + "' has IDX magic " + buf + ", expected 0x00000803");
    }
    const auto count = be32(bytes, 4, images_path);
    const auto rows = be32(bytes, 8, images_path);
    const auto cols = be32(bytes, 12, images_path);
    constexpr std::size_t header = 16;
    const std::size_t need = header + std::size_t{count} * rows * cols;
    if (bytes.size() < need)
        throw IoError("truncated IDX image data in '" + images_path.string() + "' (expected " + std::to_string(need) +
                          " bytes)",
                      static_cast<std::int64_t>(bytes.size()));

    ImageSet set;
    auto raw = torch::from_blob(const_cast<unsigned char*>(bytes.data() + header),
                                {static_cast<std::int64_t>(count), static_cast<std::int64_t>(rows),
                                 static_cast<std::int64_t>(cols)},
                                torch::kUInt8);
    set.images = raw.to(torch::kFloat) / 255.0f;

    if (!labels_path.empty()) {
        const auto lb = read_file_bytes(labels_path);
        const auto lmagic = be32(lb, 0, labels_path);
        if (lmagic != idx_labels_magic) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "0x%08X", lmagic);
            throw FormatError("'" + labels_path.string() + "' has IDX magic " + buf + ", expected 0x00000801");
        }
        const auto lcount = be32(lb, 4, labels_path);
        if (lcount != count)
            throw FormatError("label count " + std::to_string(lcount) + " != image count " + std::to_string(count));
        if (lb.size() < 8 + std::size_t{lcount})
            throw IoError("truncated IDX label data in '" + labels_path.string() + "'",
                          static_cast<std::int64_t>(lb.size()));
        set.labels.assign(lb.begin() + 8, lb.begin() + 8 + lcount);
    }
    return set;
}

void write_idx(const ImageSet& set, const fs::path& images_path, const fs::path& labels_path) {
    if (set.images.dim() != 3) throw DimensionError("write_idx: images must be (N, H, W)");
    const auto bytes = (set.images.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
    {
        std::ofstream out(images_path, std::ios::binary);
        if (!out) throw IoError("cannot write '" + images_path.string() + "'");
        put_be32(out, idx_images_magic);
        for (int d = 0; d < 3; ++d) put_be32(out, static_cast<std::uint32_t>(bytes.size(d)));
        out.write(reinterpret_cast<const char*>(bytes.data_ptr<std::uint8_t>()), bytes.numel());
    }
    if (labels_path.empty()) return;
    if (static_cast<std::int64_t>(set.labels.size()) != set.size())
        throw DimensionError("write_idx: label count differs from image count");
    std::ofstream out(labels_path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + labels_path.string() + "'");
    put_be32(out, idx_labels_magic);
    put_be32(out, static_cast<std::uint32_t>(set.labels.size()));
    for (int label : set.labels) out.put(static_cast<char>(label));
}

ImageSet load_image_directory(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .png files in '" + dir.string() + "'");

    std::vector<torch::Tensor> images;
    for (const auto& file : files) {
        cv::Mat m = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
        if (m.empty()) throw FormatError("cannot decode '" + file.string() + "'");
        if (m.type() != CV_8UC1) throw FormatError("'" + file.string() + "' is not 8-bit grayscale");
        if (!images.empty() && (m.rows != images.front().size(0) || m.cols != images.front().size(1)))
            throw FormatError("'" + file.string() + "' size differs from the first image");
        images.push_back(torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone());
    }
    return {torch::stack(images).to(torch::kFloat) / 255.0f, {}};
}

torch::Tensor preprocess(const torch::Tensor& images, std::int64_t height, std::int64_t width) {
    if (height < 1 || width < 1) throw ConfigError("preprocess: target size must be positive");
    if (images.dim() != 2 && images.dim() != 3) throw DimensionError("preprocess: expected (H, W) or (N, H, W)");
    const auto rows = bilinear_matrix(images.size(-2), height);
    const auto cols = bilinear_matrix(images.size(-1), width);
    auto out = torch::matmul(torch::matmul(rows, images.to(torch::kDouble)), cols.t());
    return out.clamp(0.0, 1.0).to(torch::kFloat);
}

const char* to_string(DataSource s) noexcept {
    return s == DataSource::idx_files ? "idx-files" : "image-directory";
}

DataSource data_source_from_string(const std::string& s) {
    if (s == "idx-files") return DataSource::idx_files;
    if (s == "image-directory") return DataSource::image_directory;
    throw ConfigError("unknown data source '" + s + "'");
}

nlohmann::json DatasetSpec::to_json() const {
    return {{"source", to_string(source)},
            {"root", root},
            {"height", height},
            {"width", width},
            {"train", train_count},
            {"val", val_count},
            {"test", test_count},
            {"subset_seed", subset_seed}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("dataset must be a JSON object");
    DatasetSpec spec;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "source") spec.source = data_source_from_string(value.get<std::string>());
            else if (key == "root") spec.root = value.get<std::string>();
            else if (key == "height") spec.height = value.get<std::int64_t>();
            else if (key == "width") spec.width = value.get<std::int64_t>();
            else if (key == "train") spec.train_count = value.get<std::int64_t>();
            else if (key == "val") spec.val_count = value.get<std::int64_t>();
            else if (key == "test") spec.test_count = value.get<std::int64_t>();
            else if (key == "subset_seed") spec.subset_seed = value.get<std::uint64_t>();
            else throw ConfigError("dataset: unknown key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("dataset: bad value for '" + key + "': " + e.what());
        }
    }
    if (spec.height < 1 || spec.width < 1) throw ConfigError("dataset: height and width must be positive");
    if (spec.train_count < 1 || spec.val_count < 0 || spec.test_count < 1)
        throw ConfigError("dataset: need train >= 1, val >= 0, test >= 1");
    return spec;
}

SplitIndices make_splits(const DatasetSpec& spec, std::int64_t pool_size, std::int64_t test_pool_size) {
    if (spec.train_count < 0 || spec.val_count < 0 || spec.test_count < 0) throw ConfigError("negative split count");
    SplitIndices s;
    s.separate_test_pool = test_pool_size > 0;
    const auto shared = spec.train_count + spec.val_count + (s.separate_test_pool ? 0 : spec.test_count);
    if (shared > pool_size)
        throw ConfigError("split counts need " + std::to_string(shared) + " images but only " +
                          std::to_string(pool_size) + " are available");
    if (s.separate_test_pool && spec.test_count > test_pool_size)
        throw ConfigError("test split needs " + std::to_string(spec.test_count) + " images but the test pool has " +
                          std::to_string(test_pool_size));

    const auto perm = permutation(pool_size, mix(spec.subset_seed));
    auto it = perm.begin();
    s.train.assign(it, it + spec.train_count);
    it += spec.train_count;
    s.val.assign(it, it + spec.val_count);
    it += spec.val_count;
    if (s.separate_test_pool) {
        const auto tperm = permutation(test_pool_size, mix(spec.subset_seed ^ 0x7E57ULL));
        s.test.assign(tperm.begin(), tperm.begin() + spec.test_count);
    } else {
        s.test.assign(it, it + spec.test_count);
    }
    return s;
}

fs::path resolve_root(const DatasetSpec& spec) {
    if (!spec.root.empty()) return spec.root;
    if (const char* env = std::getenv("PRKD_DATA_ROOT"); env != nullptr && *env != '\0') return env;
    throw ConfigError("no dataset root: set dataset.root, --data-root, or PRKD_DATA_ROOT");
}

DataSplits load_dataset(const DatasetSpec& spec) {
    const auto root = resolve_root(spec);
    torch::Tensor pool;
    torch::Tensor test_pool;
    if (spec.source == DataSource::idx_files) {
        const auto train_file = find_idx(root, "train-images-idx3-ubyte");
        if (train_file.empty()) throw IoError("no train-images-idx3-ubyte[.gz] under '" + root.string() + "'");
        pool = load_idx(train_file).images;
        if (const auto test_file = find_idx(root, "t10k-images-idx3-ubyte"); !test_file.empty())
            test_pool = load_idx(test_file).images;
    } else {
        pool = load_image_directory(root).images;
    }
    const auto split = make_splits(spec, pool.size(0), test_pool.defined() ? test_pool.size(0) : 0);

    DataSplits out;
    out.train = preprocess(gather(pool, split.train), spec.height, spec.width);
    out.val = split.val.empty() ? torch::zeros({0, spec.height, spec.width})
                                : preprocess(gather(pool, split.val), spec.height, spec.width);
    out.test = preprocess(gather(split.separate_test_pool ? test_pool : pool, split.test), spec.height, spec.width);
    return out;
}

}  // namespace prkd::data
