#include "prkd/checkpoint.hpp"

#include "binary_io.hpp"
#include "prkd/error.hpp"

#include <torch/torch.h>

#include <fstream>
#include <sstream>

namespace prkd {

namespace fs = std::filesystem;

namespace {

constexpr char magic[8] = {'P', 'R', 'K', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t format_version = 1;
constexpr const char* format_tag = "prkd-checkpoint/1";

void write_array(std::ostream& out, const std::string& name, const torch::Tensor& t) {
    const auto data = t.detach().to(torch::kCPU, torch::kFloat).contiguous();
    detail::write_le(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le(out, static_cast<std::uint32_t>(data.dim()));
    for (auto d : data.sizes()) detail::write_le(out, static_cast<std::uint64_t>(d));
    detail::write_f32_le(out, {data.data_ptr<float>(), static_cast<std::size_t>(data.numel())});
}

}  // namespace

nlohmann::json Checkpoint::manifest() const {
    return {{"format", format_tag},
            {"config", config.to_json()},
            {"config_hash", config_hash()},
            {"seed", config.seed},
            {"epoch", epoch},
            {"metrics", metrics},
            {"architecture", config.network().architecture_descriptor()},
            {"loss_trace", loss_trace}};
}

std::string Checkpoint::parameter_hash() const {
    std::ostringstream buf(std::ios::binary);
    for (const auto& [name, t] : arrays) write_array(buf, name, t);
    return sha256_hex(buf.str());
}

void Checkpoint::save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        const std::string text = manifest().dump();
        out.write(magic, sizeof magic);
        detail::write_le(out, format_version);
        detail::write_le(out, static_cast<std::uint64_t>(text.size()));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        detail::write_le(out, static_cast<std::uint32_t>(arrays.size()));
        for (const auto& [name, t] : arrays) write_array(out, name, t);
        out.flush();
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

Checkpoint Checkpoint::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    char head[sizeof magic];
    if (!in.read(head, sizeof head) || !std::equal(head, head + sizeof head, magic))
        throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
    const auto version = detail::read_le<std::uint32_t>(in, "checkpoint version");
    if (version != format_version) throw FormatError("unsupported checkpoint version " + std::to_string(version));

    const auto manifest_size = detail::read_le<std::uint64_t>(in, "manifest size");
    std::string text(manifest_size, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(manifest_size)))
        throw IoError("truncated checkpoint manifest", static_cast<std::int64_t>(in.gcount()) + 20);

    Checkpoint ckpt;
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(text);
        if (m.at("format").get<std::string>() != format_tag) throw FormatError("unknown checkpoint format tag");
        ckpt.config = ExperimentConfig::from_json(m.at("config"));
        ckpt.epoch = m.at("epoch").get<int>();
        ckpt.metrics = m.at("metrics");
        ckpt.loss_trace = m.at("loss_trace").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed checkpoint manifest: " + std::string(e.what()));
    }
    if (m.at("config_hash").get<std::string>() != ckpt.config_hash())
        throw FormatError("checkpoint config hash does not match its embedded config");

    const auto count = detail::read_le<std::uint32_t>(in, "array count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_le<std::uint32_t>(in, "array name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw IoError("truncated array name", static_cast<std::int64_t>(in.tellg()));
        const auto ndim = detail::read_le<std::uint32_t>(in, "array rank");
        std::vector<std::int64_t> dims;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            dims.push_back(static_cast<std::int64_t>(detail::read_le<std::uint64_t>(in, "array dims")));
            numel *= static_cast<std::size_t>(dims.back());
        }
        auto values = detail::read_f32_le(in, numel, "array '" + name + "'");
        ckpt.arrays[name] = torch::from_blob(values.data(), dims, torch::kFloat).clone();
    }
    return ckpt;
}

}  // namespace prkd
