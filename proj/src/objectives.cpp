#include "prkd/objectives.hpp"

#include "prkd/error.hpp"

#include <torch/torch.h>

#include <cmath>
#include <numbers>

namespace prkd::objectives {

namespace {

constexpr double weight_slack = 1e-12;

torch::Tensor per_sample_sq_norm(const torch::Tensor& d) {
    if (d.dim() == 0) return d.square();
    return d.square().reshape({d.size(0), -1}).sum(1);
}

}  // namespace

LossWeights::LossWeights(double alpha, double beta, double rho, int reg_levels)
    : alpha_(alpha), beta_(beta), rho_(rho), reg_levels_(reg_levels) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss weight alpha must lie in [0, 1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("loss weight beta must lie in [0, 1]");
    const double s = 1.0 - alpha - beta;
    if (s < -weight_slack) throw ConfigError("loss weights violate alpha + beta <= 1 (sigma = 1 - alpha - beta < 0)");
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("regularizer weight rho must be >= 0");
    if (reg_levels < 1) throw ConfigError("reg_levels must be >= 1");
    if (s < 0.0) beta_ = 1.0 - alpha;  // absorb rounding so sigma() is exactly 0
}

nlohmann::json LossWeights::to_json() const {
    return {{"alpha", alpha_}, {"beta", beta_}, {"rho", rho_}, {"reg_levels", reg_levels_}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("loss weights must be a JSON object");
    LossWeights defaults;
    double alpha = defaults.alpha_;
    double beta = defaults.beta_;
    double rho = defaults.rho_;
    int levels = defaults.reg_levels_;
    for (const auto& [key, value] : j.items()) {
        if (key == "sigma")
            throw ConfigError("loss weights: 'sigma' is derived as 1 - alpha - beta and cannot be set");
        if (!value.is_number()) throw ConfigError("loss weights: '" + key + "' must be a number");
        if (key == "alpha") alpha = value.get<double>();
        else if (key == "beta") beta = value.get<double>();
        else if (key == "rho") rho = value.get<double>();
        else if (key == "reg_levels") {
            if (!value.is_number_integer()) throw ConfigError("loss weights: 'reg_levels' must be an integer");
            levels = value.get<int>();
        } else
            throw ConfigError("loss weights: unknown key '" + key + "'");
    }
    return {alpha, beta, rho, levels};
}

torch::Tensor task_loss(const torch::Tensor& reconstruction, const torch::Tensor& target) {
    if (reconstruction.sizes() != target.sizes())
        throw DimensionError("task_loss: shapes " + c10::str(reconstruction.sizes()) + " and " +
                             c10::str(target.sizes()) + " differ");
    if (reconstruction.dim() == 0 || reconstruction.size(0) == 0) throw ConfigError("task_loss: empty batch");
    return per_sample_sq_norm(reconstruction - target).mean();
}

torch::Tensor mask_regularizer(const torch::Tensor& phases, int levels) {
    if (levels < 1) throw ConfigError("mask_regularizer: levels must be >= 1");
    const double step = 2.0 * std::numbers::pi / static_cast<double>(levels);
    // Offset from the nearest level; round() contributes no gradient.
    auto offset = phases - step * torch::round(phases.detach() / step);
    return offset.square().mean();
}

torch::Tensor cdp_loss(const torch::Tensor& y_teacher, const torch::Tensor& y_student) {
    if (y_teacher.dim() != 4 || y_student.dim() != 4)
        throw DimensionError("cdp_loss: measurements must be (Q, L, H, W)");
    if (y_teacher.size(0) != y_student.size(0))
        throw DimensionError("cdp_loss: teacher batch " + std::to_string(y_teacher.size(0)) + " != student batch " +
                             std::to_string(y_student.size(0)));
    if (y_teacher.size(2) != y_student.size(2) || y_teacher.size(3) != y_student.size(3))
        throw DimensionError("cdp_loss: teacher and student measurements differ in H x W");
    if (y_teacher.size(0) == 0) throw ConfigError("cdp_loss: empty batch");
    return per_sample_sq_norm(y_teacher.mean(1) - y_student.mean(1)).mean();
}

torch::Tensor feat_loss(const torch::Tensor& f_teacher, const torch::Tensor& f_student) {
    if (f_teacher.sizes() != f_student.sizes())
        throw ArchitectureMismatchError("feat_loss: teacher features " + c10::str(f_teacher.sizes()) +
                                        " vs student features " + c10::str(f_student.sizes()) +
                                        " (teacher/student network configs differ)");
    if (f_teacher.dim() == 0 || f_teacher.size(0) == 0) throw ConfigError("feat_loss: empty batch");
    return per_sample_sq_norm(f_teacher.detach() - f_student).mean();
}

torch::Tensor e2e_objective(const LossWeights& w, const torch::Tensor& task, const torch::Tensor& reg) {
    return w.alpha() * task + w.rho() * reg;
}

torch::Tensor kd_objective(const LossWeights& w, const torch::Tensor& task, const torch::Tensor& reg,
                           const torch::Tensor& cdp, const torch::Tensor& feat) {
    return e2e_objective(w, task, reg) + w.beta() * cdp + w.sigma() * feat;
}

}  // namespace prkd::objectives
