#pragma once

// Loss terms for end-to-end and distillation training. All "norms" are
// unnormalized sums of squares over every non-batch entry, averaged over the
// batch (scene) dimension only.

#include <nlohmann/json.hpp>
#include <torch/types.h>

namespace prkd::objectives {

/// alpha, beta, sigma form an affine combination: sigma = 1 - alpha - beta
/// is always derived, never stored independently.
class LossWeights {
public:
    /// Throws ConfigError unless alpha, beta, sigma are in [0, 1] and rho >= 0.
    LossWeights(double alpha, double beta, double rho, int reg_levels = 4);
    LossWeights() : LossWeights(0.6, 0.3, 0.01, 4) {}

    [[nodiscard]] double alpha() const noexcept { return alpha_; }
    [[nodiscard]] double beta() const noexcept { return beta_; }
    [[nodiscard]] double sigma() const noexcept { return 1.0 - alpha_ - beta_; }
    [[nodiscard]] double rho() const noexcept { return rho_; }
    [[nodiscard]] int reg_levels() const noexcept { return reg_levels_; }

    /// {alpha, beta, rho, reg_levels}
    [[nodiscard]] nlohmann::json to_json() const;
    /// Rejects unknown keys and any explicit "sigma".
    [[nodiscard]] static LossWeights from_json(const nlohmann::json& j);

    bool operator==(const LossWeights&) const = default;

private:
    double alpha_;
    double beta_;
    double rho_;
    int reg_levels_;
};

/// (1/Q) sum_q ||xhat_q - x_q||^2 ; batch is the leading dimension.
[[nodiscard]] torch::Tensor task_loss(const torch::Tensor& reconstruction, const torch::Tensor& target);

/// Mean squared wrapped distance of every phase to the nearest of
/// `levels` equispaced values {2 pi p / levels}. Bounded by (pi/levels)^2.
[[nodiscard]] torch::Tensor mask_regularizer(const torch::Tensor& phases, int levels);

/// (1/Q) sum_q || mean_l y_t[q,l] - mean_l y_s[q,l] ||^2 for (Q, L, H, W)
/// measurement batches; the snapshot counts may differ.
[[nodiscard]] torch::Tensor cdp_loss(const torch::Tensor& y_teacher, const torch::Tensor& y_student);

/// (1/Q) sum_q ||f_t[q] - f_s[q]||^2. The teacher side is detached.
/// Throws ArchitectureMismatchError on differing shapes.
[[nodiscard]] torch::Tensor feat_loss(const torch::Tensor& f_teacher, const torch::Tensor& f_student);

/// alpha * task + rho * reg
[[nodiscard]] torch::Tensor e2e_objective(const LossWeights& w, const torch::Tensor& task, const torch::Tensor& reg);

/// alpha * task + rho * reg + beta * cdp + sigma * feat
[[nodiscard]] torch::Tensor kd_objective(const LossWeights& w, const torch::Tensor& task, const torch::Tensor& reg,
                                         const torch::Tensor& cdp, const torch::Tensor& feat);

}  // namespace prkd::objectives
