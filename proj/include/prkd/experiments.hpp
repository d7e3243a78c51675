#pragma once

// Multi-run experiments: a content-addressed run store, the teacher sweep,
// the distillation ablation, and the full reproduce pipeline.

#include "prkd/checkpoint.hpp"
#include "prkd/config.hpp"
#include "prkd/data.hpp"
#include "prkd/metrics.hpp"
#include "prkd/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace prkd {

/// Finished runs under `root`, one "<config hash>.ckpt" per run plus a
/// "<config hash>.test.json" evaluation summary.
class RunStore {
public:
    explicit RunStore(std::filesystem::path root);

    [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }
    [[nodiscard]] std::filesystem::path checkpoint_path(const ExperimentConfig& cfg) const;
    [[nodiscard]] bool contains(const ExperimentConfig& cfg) const;

    [[nodiscard]] Checkpoint load(const ExperimentConfig& cfg) const;
    void save(const Checkpoint& ckpt) const;

    [[nodiscard]] std::optional<metrics::MetricReport> load_report(const ExperimentConfig& cfg) const;
    void save_report(const ExperimentConfig& cfg, const metrics::MetricReport& report) const;

private:
    std::filesystem::path root_;
};

struct RunRecord {
    Checkpoint checkpoint;
    metrics::MetricReport test;  // evaluation on the test split
    bool trained = false;        // false when served from the store
};

/// Loads the run for `cfg` when the store has it, else trains, evaluates on
/// the test split and stores both.
RunRecord train_or_load(const RunStore& store, const ExperimentConfig& cfg, const data::DataSplits& data,
                        const Checkpoint* teacher = nullptr, const TrainOptions& options = {});

/// Which runs an experiment covers. Every config starts from
/// preset(mode, scale, ...) and then receives `overrides`.
struct ExperimentPlan {
    Scale scale = Scale::desk;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<int> teacher_snapshots{1, 2, 4, 8};
    int student_snapshots = 1;
    /// Teacher L used by the ablation and the baseline comparison.
    int reference_teacher_snapshots = 4;
    std::vector<std::string> overrides;
    /// Dataset root; empty defers to PRKD_DATA_ROOT.
    std::string data_root;

    [[nodiscard]] ExperimentConfig config(Mode mode, int snapshots, std::uint64_t seed) const;
    [[nodiscard]] ExperimentConfig student_config(const Checkpoint& teacher, std::uint64_t seed) const;
};

struct RunFailure {
    std::string label;
    std::string error_class;
    std::string message;
};

struct SweepResult {
    std::vector<metrics::RunSummary> teachers;
    std::vector<metrics::RunSummary> students;
    std::vector<RunFailure> failures;
    int trained_runs = 0;
};

/// Ablation variant tags in table order.
inline const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> v{"cdp", "cdp+feat", "feat", "none"};
    return v;
}

/// Config of one ablation column. "none" is the plain E2E baseline: with
/// both distillation weights at zero the student objective is exactly the
/// baseline objective, so the baseline run is reused.
[[nodiscard]] ExperimentConfig ablation_config(const ExperimentPlan& plan, const std::string& variant,
                                               const Checkpoint& teacher, std::uint64_t seed);

struct AblationResult {
    std::vector<metrics::RunSummary> runs;
    std::vector<RunFailure> failures;
    int trained_runs = 0;
};

/// Teacher for every L_t and seed, then a KD student per teacher. Failures
/// of single items are collected, not thrown.
SweepResult sweep_teachers(const RunStore& store, const ExperimentPlan& plan, const data::DataSplits& data,
                           const LogFn& log = {});

/// The four on/off combinations of the distillation terms for every seed,
/// each against the seed's reference teacher (trained on demand).
AblationResult ablation(const RunStore& store, const ExperimentPlan& plan, const data::DataSplits& data,
                        const LogFn& log = {});

[[nodiscard]] metrics::RunSummary summarize(const RunRecord& run, const std::string& variant = {});

struct ReproduceResult {
    SweepResult sweep;
    AblationResult ablation;
    std::vector<metrics::RunSummary> baselines;  // e2e and random baselines
    std::vector<std::filesystem::path> artifacts;
};

/// Sweep, ablation, baselines and the rendered reports in `out_dir`
/// (checkpoints go to `out_dir`/runs).
ReproduceResult reproduce(const ExperimentPlan& plan, const std::filesystem::path& out_dir, const LogFn& log = {});

}  // namespace prkd
