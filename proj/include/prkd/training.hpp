#pragma once

#include "prkd/checkpoint.hpp"
#include "prkd/config.hpp"
#include "prkd/data.hpp"
#include "prkd/metrics.hpp"
#include "prkd/system.hpp"

#include <functional>
#include <string>
#include <vector>

namespace prkd {

using LogFn = std::function<void(const std::string&)>;

struct TrainOptions {
    LogFn log;  // progress lines; may be empty
    /// Evaluate on the validation split after every epoch (model selection).
    bool select_on_validation = true;
};

struct TrainResult {
    Checkpoint checkpoint;            // parameters of the best-validation epoch
    std::vector<double> loss_trace;   // objective value of every optimizer step
    std::vector<double> val_psnr;     // index 0: untrained network, then one per epoch
    double seconds = 0.0;
};

/// Trains one configuration. `teacher` is required for kd-student runs and
/// must be absent otherwise.
///
/// Every optimizer step minimizes
///   e2e modes:   alpha*task + rho*R(phi)
///   kd-student:  alpha*task + rho*R(phi) + beta*cdp + sigma*feat
/// with Adam and global-norm gradient clipping. The teacher, when present,
/// is frozen and evaluated without gradient.
[[nodiscard]] TrainResult train(const ExperimentConfig& cfg, const data::DataSplits& data,
                                const Checkpoint* teacher = nullptr, const TrainOptions& options = {});

[[nodiscard]] TrainResult train_teacher(const ExperimentConfig& cfg, const data::DataSplits& data,
                                        const TrainOptions& options = {});
[[nodiscard]] TrainResult train_e2e_baseline(const ExperimentConfig& cfg, const data::DataSplits& data,
                                             const TrainOptions& options = {});
[[nodiscard]] TrainResult train_random_baseline(const ExperimentConfig& cfg, const data::DataSplits& data,
                                                const TrainOptions& options = {});
[[nodiscard]] TrainResult train_student_kd(const ExperimentConfig& cfg, const Checkpoint& teacher,
                                           const data::DataSplits& data, const TrainOptions& options = {});

/// Runs the checkpoint's system over `images` and scores every image.
/// Collapsed initializations are recorded, not fatal.
[[nodiscard]] metrics::MetricReport evaluate(const Checkpoint& ckpt, const torch::Tensor& images,
                                             const std::string& split_name);
[[nodiscard]] metrics::MetricReport evaluate(PrSystem& system, const torch::Tensor& images,
                                             const std::string& split_name);

/// Reconstructions of `images` (N, H, W) as metric images (N, H, W).
[[nodiscard]] torch::Tensor reconstruct_images(const Checkpoint& ckpt, const torch::Tensor& images);

/// Mean PSNR over the images; cheap path used for per-epoch selection.
[[nodiscard]] double mean_psnr(PrSystem& system, const torch::Tensor& images);

}  // namespace prkd
