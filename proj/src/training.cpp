#include "prkd/training.hpp"

#include "prkd/error.hpp"
#include "prkd/objectives.hpp"
#include "prkd/rng.hpp"

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <optional>

namespace prkd {

namespace {

constexpr std::int64_t eval_batch = 100;

void check_data(const ExperimentConfig& cfg, const data::DataSplits& data) {
    if (!data.train.defined() || data.train.size(0) == 0) throw ConfigError("training split is empty");
    if (data.train.size(1) != cfg.dataset.height || data.train.size(2) != cfg.dataset.width)
        throw DimensionError("training images are " + std::to_string(data.train.size(1)) + "x" +
                             std::to_string(data.train.size(2)) + " but the config expects " +
                             std::to_string(cfg.dataset.height) + "x" + std::to_string(cfg.dataset.width));
}

void check_teacher(const ExperimentConfig& student, const Checkpoint& teacher) {
    if (teacher.config.network().architecture_descriptor() != student.network().architecture_descriptor())
        throw ArchitectureMismatchError("teacher network " + teacher.config.network().architecture_descriptor().dump() +
                                        " differs from student network " +
                                        student.network().architecture_descriptor().dump());
    if (teacher.config.dataset.height != student.dataset.height || teacher.config.dataset.width != student.dataset.width)
        throw ArchitectureMismatchError("teacher and student scene sizes differ");
    if (teacher.config.encoding != student.encoding)
        throw ArchitectureMismatchError("teacher and student scene encodings differ");
}

std::uint64_t step_seed(std::uint64_t seed, RngStream stream, std::uint64_t step) {
    return derive_seed(derive_seed(seed, stream), step);
}

struct EvalBatch {
    torch::Tensor estimate;
    torch::Tensor reference;
    std::vector<int> degenerate_at;
};

template <typename Fn>
void for_each_eval_batch(PrSystem& system, const torch::Tensor& images, Fn&& fn) {
    torch::NoGradGuard no_grad;
    auto& net = system.net();
    const bool was_training = net->is_training();
    net->eval();
    const auto seed = system.config().seed;
    const auto n = images.size(0);
    for (std::int64_t start = 0, b = 0; start < n; start += eval_batch, ++b) {
        const auto batch = images.slice(0, start, std::min(n, start + eval_batch));
        auto pass = system.forward(batch, step_seed(seed, RngStream::eval_init_start, static_cast<std::uint64_t>(b)),
                                   step_seed(seed, RngStream::noise, 1000000 + static_cast<std::uint64_t>(b)),
                                   /*strict=*/false);
        fn(start, EvalBatch{system.metric_image(pass.reconstruction), batch, std::move(pass.degenerate_at)});
    }
    net->train(was_training);
}

}  // namespace

double mean_psnr(PrSystem& system, const torch::Tensor& images) {
    double total = 0.0;
    std::int64_t count = 0;
    for_each_eval_batch(system, images, [&](std::int64_t, const EvalBatch& b) {
        const auto mse = (b.estimate.to(torch::kDouble) - b.reference.to(torch::kDouble)).square().mean({1, 2});
        const auto psnr = (10.0 * torch::log10(1.0 / mse)).contiguous();
        const auto* p = psnr.data_ptr<double>();
        for (std::int64_t i = 0; i < psnr.size(0); ++i) {
            if (b.degenerate_at[static_cast<std::size_t>(i)] != 0) continue;
            total += p[i];
            ++count;
        }
    });
    return count == 0 ? -std::numeric_limits<double>::infinity() : total / static_cast<double>(count);
}

metrics::MetricReport evaluate(PrSystem& system, const torch::Tensor& images, const std::string& split_name) {
    if (!images.defined() || images.size(0) == 0) throw ConfigError("evaluate: split '" + split_name + "' is empty");
    metrics::MetricReport report;
    report.config_hash = system.config().hash();
    report.seed = system.config().seed;
    report.split = split_name;
    for_each_eval_batch(system, images, [&](std::int64_t start, const EvalBatch& b) {
        for (std::int64_t i = 0; i < b.estimate.size(0); ++i) {
            if (b.degenerate_at[static_cast<std::size_t>(i)] != 0) {
                report.degenerate_images.push_back(start + i);
                continue;
            }
            report.psnr.push_back(metrics::psnr(b.estimate[i], b.reference[i]));
            report.ssim.push_back(metrics::ssim(b.estimate[i], b.reference[i]));
        }
    });
    return report;
}

metrics::MetricReport evaluate(const Checkpoint& ckpt, const torch::Tensor& images, const std::string& split_name) {
    auto system = PrSystem::from_checkpoint(ckpt);
    system.set_trainable(false);
    return evaluate(system, images, split_name);
}

torch::Tensor reconstruct_images(const Checkpoint& ckpt, const torch::Tensor& images) {
    auto system = PrSystem::from_checkpoint(ckpt);
    system.set_trainable(false);
    std::vector<torch::Tensor> parts;
    for_each_eval_batch(system, images, [&](std::int64_t, const EvalBatch& b) { parts.push_back(b.estimate); });
    return torch::cat(parts, 0);
}

TrainResult train(const ExperimentConfig& cfg, const data::DataSplits& data, const Checkpoint* teacher,
                  const TrainOptions& options) {
    const auto started = std::chrono::steady_clock::now();
    auto log = [&](const std::string& line) {
        if (options.log) options.log(line);
    };

    ExperimentConfig run_cfg = cfg;
    run_cfg.validate();
    check_data(run_cfg, data);

    std::optional<PrSystem> teacher_system;
    if (run_cfg.mode == Mode::kd_student) {
        if (teacher == nullptr) throw ConfigError("kd-student mode requires a teacher checkpoint");
        check_teacher(run_cfg, *teacher);
        if (run_cfg.teacher_hash.empty()) {
            run_cfg.teacher_hash = teacher->config_hash();
        } else if (run_cfg.teacher_hash != teacher->config_hash()) {
            throw ConfigError("teacher checkpoint hash " + teacher->config_hash() +
                              " does not match the configured teacher_hash " + run_cfg.teacher_hash);
        }
        Checkpoint frozen = *teacher;
        // Teacher signals stay noiseless unless both systems are configured with noise.
        if (run_cfg.noise.kind == optics::NoiseKind::none) frozen.config.noise = {};
        teacher_system.emplace(PrSystem::from_checkpoint(frozen, torch::kFloat));
        teacher_system->set_trainable(false);
        teacher_system->net()->eval();
    } else if (teacher != nullptr) {
        throw ConfigError(std::string("mode ") + to_string(run_cfg.mode) + " does not take a teacher checkpoint");
    }

    PrSystem system(run_cfg);
    const auto params = system.trainable_parameters();
    const auto& o = run_cfg.optimizer;
    torch::optim::Adam adam(params, torch::optim::AdamOptions(o.learning_rate)
                                        .betas({o.adam_beta1, o.adam_beta2})
                                        .eps(o.adam_eps));
    const auto& weights = run_cfg.loss;
    const bool has_val = options.select_on_validation && data.val.defined() && data.val.size(0) > 0;

    TrainResult result;
    auto best_arrays = system.export_arrays();
    int best_epoch = 0;
    double best_psnr = -std::numeric_limits<double>::infinity();
    if (has_val) {
        best_psnr = mean_psnr(system, data.val);
        result.val_psnr.push_back(best_psnr);
        log("epoch 0 val_psnr " + metrics::format_value(best_psnr));
    }

    auto shuffle_gen = make_generator(derive_seed(run_cfg.seed, RngStream::shuffle));
    const auto n = data.train.size(0);
    std::uint64_t step = 0;
    for (int epoch = 1; epoch <= o.epochs; ++epoch) {
        const auto perm = torch::randperm(n, shuffle_gen, torch::TensorOptions().dtype(torch::kLong));
        double epoch_loss = 0.0, epoch_task = 0.0, epoch_cdp = 0.0, epoch_feat = 0.0;
        int batch_index = 0;
        for (std::int64_t start = 0; start < n; start += o.batch_size, ++batch_index, ++step) {
            const auto idx = perm.slice(0, start, std::min(n, start + o.batch_size));
            const auto images = data.train.index_select(0, idx);

            auto pass = system.forward(images, step_seed(run_cfg.seed, RngStream::init_start, step),
                                       step_seed(run_cfg.seed, RngStream::noise, step), /*strict=*/true);
            const auto task = objectives::task_loss(pass.reconstruction, system.target(images));
            const auto reg = objectives::mask_regularizer(system.phases(), weights.reg_levels());

            torch::Tensor loss;
            if (teacher_system) {
                PrSystem::Pass t;
                {
                    torch::NoGradGuard no_grad;
                    t = teacher_system->forward(images, step_seed(run_cfg.seed, RngStream::teacher_init_start, step),
                                                step_seed(run_cfg.seed, RngStream::noise, step), /*strict=*/false,
                                                /*decode=*/false);
                }
                const auto cdp = objectives::cdp_loss(t.measurements, pass.measurements);
                const auto feat = objectives::feat_loss(t.bottleneck, pass.bottleneck);
                loss = objectives::kd_objective(weights, task, reg, cdp, feat);
                epoch_cdp += cdp.item<double>();
                epoch_feat += feat.item<double>();
            } else {
                loss = objectives::e2e_objective(weights, task, reg);
            }

            const double value = loss.item<double>();
            if (!std::isfinite(value)) throw DivergenceError(epoch, batch_index);
            adam.zero_grad();
            loss.backward();
            if (o.grad_clip_norm > 0) torch::nn::utils::clip_grad_norm_(params, o.grad_clip_norm);
            adam.step();
            result.loss_trace.push_back(value);
            epoch_loss += value;
            epoch_task += task.item<double>();
        }

        const double batches = std::max(1, batch_index);
        std::string line = "epoch " + std::to_string(epoch) + " loss " + metrics::format_value(epoch_loss / batches) +
                           " task " + metrics::format_value(epoch_task / batches);
        if (teacher_system)
            line += " cdp " + metrics::format_value(epoch_cdp / batches) + " feat " +
                    metrics::format_value(epoch_feat / batches);
        if (has_val) {
            const double val = mean_psnr(system, data.val);
            result.val_psnr.push_back(val);
            line += " val_psnr " + metrics::format_value(val);
            if (val > best_psnr) {
                best_psnr = val;
                best_epoch = epoch;
                best_arrays = system.export_arrays();
            }
        }
        log(line);
    }
    if (!has_val) {
        best_epoch = o.epochs;
        best_arrays = system.export_arrays();
    }

    result.checkpoint.config = run_cfg;
    result.checkpoint.epoch = best_epoch;
    result.checkpoint.arrays = std::move(best_arrays);
    result.checkpoint.loss_trace = result.loss_trace;
    result.checkpoint.metrics = nlohmann::json::object();
    if (has_val) {
        result.checkpoint.metrics["val_psnr_best"] = best_psnr;
        result.checkpoint.metrics["val_psnr_per_epoch"] = result.val_psnr;
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

TrainResult train_teacher(const ExperimentConfig& cfg, const data::DataSplits& data, const TrainOptions& options) {
    if (cfg.mode != Mode::teacher) throw ConfigError("train_teacher needs mode=teacher");
    return train(cfg, data, nullptr, options);
}

TrainResult train_e2e_baseline(const ExperimentConfig& cfg, const data::DataSplits& data, const TrainOptions& options) {
    if (cfg.mode != Mode::e2e_baseline) throw ConfigError("train_e2e_baseline needs mode=e2e-baseline");
    return train(cfg, data, nullptr, options);
}

TrainResult train_random_baseline(const ExperimentConfig& cfg, const data::DataSplits& data,
                                  const TrainOptions& options) {
    if (cfg.mode != Mode::random_baseline) throw ConfigError("train_random_baseline needs mode=random-baseline");
    return train(cfg, data, nullptr, options);
}

TrainResult train_student_kd(const ExperimentConfig& cfg, const Checkpoint& teacher, const data::DataSplits& data,
                             const TrainOptions& options) {
    if (cfg.mode != Mode::kd_student) throw ConfigError("train_student_kd needs mode=kd-student");
    return train(cfg, data, &teacher, options);
}

}  // namespace prkd
