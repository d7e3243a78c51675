#include "prkd/config.hpp"

#include "prkd/error.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

namespace prkd {

namespace {

using nlohmann::json;

template <typename T>
T get_as(const json& value, const std::string& key) {
    try {
        return value.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
}

void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be a JSON object");
}

}  // namespace

const char* to_string(Mode m) noexcept {
    switch (m) {
        case Mode::teacher: return "teacher";
        case Mode::e2e_baseline: return "e2e-baseline";
        case Mode::random_baseline: return "random-baseline";
        case Mode::kd_student: return "kd-student";
    }
    return "teacher";
}

Mode mode_from_string(const std::string& s) {
    if (s == "teacher") return Mode::teacher;
    if (s == "e2e-baseline") return Mode::e2e_baseline;
    if (s == "random-baseline") return Mode::random_baseline;
    if (s == "kd-student") return Mode::kd_student;
    throw ConfigError("unknown mode '" + s + "'");
}

Scale scale_from_string(const std::string& s) {
    if (s == "desk") return Scale::desk;
    if (s == "paper") return Scale::paper;
    throw ConfigError("unknown scale '" + s + "' (expected desk or paper)");
}

recovery::NetworkConfig ExperimentConfig::network() const {
    recovery::NetworkConfig n;
    n.depth = depth;
    n.base_channels = base_channels;
    n.input_channels = 2;
    n.output_channels = encoding == optics::SceneEncoding::amplitude_object ? 1 : 2;
    return n;
}

void ExperimentConfig::validate() const {
    if (snapshots < 1) throw ConfigError("snapshots must be >= 1");
    network().validate();
    network().check_spatial(dataset.height, dataset.width);
    if (initializer.kernel_size < 1 || initializer.kernel_size % 2 == 0)
        throw ConfigError("initializer.kernel_size must be odd and positive");
    if (initializer.iterations < 1) throw ConfigError("initializer.iterations must be >= 1");
    if (!(optimizer.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
    if (optimizer.batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
    if (optimizer.epochs < 0) throw ConfigError("optimizer.epochs must be >= 0");
    noise.validate();
    if (mode != Mode::kd_student && !teacher_hash.empty())
        throw ConfigError("teacher_hash is only meaningful in kd-student mode");
    // alpha/beta/sigma/rho are checked by LossWeights itself
}

json ExperimentConfig::to_json() const {
    return {{"mode", to_string(mode)},
            {"seed", seed},
            {"snapshots", snapshots},
            {"scene_encoding", optics::to_string(encoding)},
            {"teacher_hash", teacher_hash},
            {"dataset", dataset.to_json()},
            {"network", {{"depth", depth}, {"base_channels", base_channels}}},
            {"initializer",
             {{"kernel_size", initializer.kernel_size},
              {"iterations", initializer.iterations},
              {"trainable_filter", initializer.trainable_filter},
              {"mask_init", optics::to_string(initializer.mask_init)}}},
            {"loss", loss.to_json()},
            {"optimizer",
             {{"learning_rate", optimizer.learning_rate},
              {"batch_size", optimizer.batch_size},
              {"epochs", optimizer.epochs},
              {"grad_clip_norm", optimizer.grad_clip_norm},
              {"adam_beta1", optimizer.adam_beta1},
              {"adam_beta2", optimizer.adam_beta2},
              {"adam_eps", optimizer.adam_eps}}},
            {"noise", {{"kind", optics::to_string(noise.kind)}, {"parameter", noise.parameter}}}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    require_object(j, "<root>");
    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "mode") c.mode = mode_from_string(get_as<std::string>(value, key));
        else if (key == "seed") c.seed = get_as<std::uint64_t>(value, key);
        else if (key == "snapshots") c.snapshots = get_as<int>(value, key);
        else if (key == "scene_encoding") c.encoding = optics::scene_encoding_from_string(get_as<std::string>(value, key));
        else if (key == "teacher_hash") c.teacher_hash = get_as<std::string>(value, key);
        else if (key == "dataset") c.dataset = data::DatasetSpec::from_json(value);
        else if (key == "loss") c.loss = objectives::LossWeights::from_json(value);
        else if (key == "network") {
            require_object(value, key);
            for (const auto& [k, v] : value.items()) {
                if (k == "depth") c.depth = get_as<int>(v, "network.depth");
                else if (k == "base_channels") c.base_channels = get_as<int>(v, "network.base_channels");
                else throw ConfigError("config: unknown key 'network." + k + "'");
            }
        } else if (key == "initializer") {
            require_object(value, key);
            for (const auto& [k, v] : value.items()) {
                if (k == "kernel_size") c.initializer.kernel_size = get_as<int>(v, "initializer.kernel_size");
                else if (k == "iterations") c.initializer.iterations = get_as<int>(v, "initializer.iterations");
                else if (k == "trainable_filter") c.initializer.trainable_filter = get_as<bool>(v, "initializer.trainable_filter");
                else if (k == "mask_init") c.initializer.mask_init = optics::mask_init_from_string(get_as<std::string>(v, k));
                else throw ConfigError("config: unknown key 'initializer." + k + "'");
            }
        } else if (key == "optimizer") {
            require_object(value, key);
            auto& o = c.optimizer;
            for (const auto& [k, v] : value.items()) {
                if (k == "learning_rate") o.learning_rate = get_as<double>(v, k);
                else if (k == "batch_size") o.batch_size = get_as<int>(v, k);
                else if (k == "epochs") o.epochs = get_as<int>(v, k);
                else if (k == "grad_clip_norm") o.grad_clip_norm = get_as<double>(v, k);
                else if (k == "adam_beta1") o.adam_beta1 = get_as<double>(v, k);
                else if (k == "adam_beta2") o.adam_beta2 = get_as<double>(v, k);
                else if (k == "adam_eps") o.adam_eps = get_as<double>(v, k);
                else throw ConfigError("config: unknown key 'optimizer." + k + "'");
            }
        } else if (key == "noise") {
            require_object(value, key);
            for (const auto& [k, v] : value.items()) {
                if (k == "kind") c.noise.kind = optics::noise_kind_from_string(get_as<std::string>(v, k));
                else if (k == "parameter") c.noise.parameter = get_as<double>(v, k);
                else throw ConfigError("config: unknown key 'noise." + k + "'");
            }
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_json().dump()); }

ExperimentConfig preset(Mode mode, Scale scale, int snapshots, std::uint64_t seed) {
    ExperimentConfig c;
    c.mode = mode;
    c.seed = seed;
    c.snapshots = snapshots;
    if (scale == Scale::paper) {
        c.dataset.height = 96;
        c.dataset.width = 96;
        c.dataset.train_count = 30000;
        c.dataset.val_count = 30000;
        c.dataset.test_count = 10000;
        c.optimizer.epochs = 120;
        c.optimizer.batch_size = 64;
    }
    if (mode == Mode::kd_student) {
        c.loss = objectives::LossWeights(0.6, 0.3, 0.01, 4);
    } else {
        c.loss = objectives::LossWeights(1.0, 0.0, 0.01, 4);
    }
    c.validate();
    return c;
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
    json j = cfg.to_json();
    for (const auto& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not KEY=VALUE");
        const std::string path = item.substr(0, eq);
        const std::string text = item.substr(eq + 1);

        json* node = &j;
        std::stringstream ss(path);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (!node->is_object() || !node->contains(parts[i]))
                throw ConfigError("override: unknown key '" + path + "'");
            node = &(*node)[parts[i]];
        }
        json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
        if (value.is_discarded()) value = text;
        // Strings stay strings: "mode=teacher" and "teacher_hash=abc" parse as text.
        if (node->is_string() && !value.is_string()) value = text;
        *node = value;
    }
    return ExperimentConfig::from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return ExperimentConfig::from_json(j);
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

}  // namespace prkd
