#include "prkd/experiments.hpp"

#include "prkd/error.hpp"

#include <torch/torch.h>

#include <cmath>
#include <fstream>
#include <map>

namespace prkd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json encode_values(const std::vector<double>& values) {
    json out = json::array();
    for (double v : values) {
        if (std::isfinite(v)) out.push_back(v);
        else out.push_back(metrics::format_value(v));
    }
    return out;
}

std::vector<double> decode_values(const json& j) {
    std::vector<double> out;
    for (const auto& v : j) out.push_back(v.is_string() ? metrics::parse_value(v.get<std::string>()) : v.get<double>());
    return out;
}

void note(const LogFn& log, const std::string& line) {
    if (log) log(line);
}

std::string label_of(const ExperimentConfig& cfg) {
    return std::string(to_string(cfg.mode)) + " L=" + std::to_string(cfg.snapshots) + " seed=" +
           std::to_string(cfg.seed);
}

RunFailure failure_of(const std::string& label, const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) return {label, err->error_class(), err->what()};
    return {label, "runtime-error", e.what()};
}

TrainOptions prefixed(const LogFn& log, const std::string& label) {
    TrainOptions o;
    if (log) o.log = [log, label](const std::string& line) { log("[" + label + "] " + line); };
    return o;
}

}  // namespace

RunStore::RunStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path RunStore::checkpoint_path(const ExperimentConfig& cfg) const { return root_ / (cfg.hash() + ".ckpt"); }

bool RunStore::contains(const ExperimentConfig& cfg) const { return fs::exists(checkpoint_path(cfg)); }

Checkpoint RunStore::load(const ExperimentConfig& cfg) const {
    auto ckpt = Checkpoint::load(checkpoint_path(cfg));
    if (ckpt.config_hash() != cfg.hash()) throw FormatError("run store entry does not hold the requested config");
    return ckpt;
}

void RunStore::save(const Checkpoint& ckpt) const { ckpt.save(checkpoint_path(ckpt.config)); }

std::optional<metrics::MetricReport> RunStore::load_report(const ExperimentConfig& cfg) const {
    const auto path = root_ / (cfg.hash() + ".test.json");
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        const auto j = json::parse(in);
        metrics::MetricReport r;
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.split = j.at("split").get<std::string>();
        r.psnr = decode_values(j.at("psnr"));
        r.ssim = decode_values(j.at("ssim"));
        r.degenerate_images = j.at("degenerate_images").get<std::vector<std::int64_t>>();
        if (r.config_hash != cfg.hash()) return std::nullopt;
        return r;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

void RunStore::save_report(const ExperimentConfig& cfg, const metrics::MetricReport& report) const {
    const json j = {{"config_hash", report.config_hash}, {"seed", report.seed},
                    {"split", report.split},             {"psnr", encode_values(report.psnr)},
                    {"ssim", encode_values(report.ssim)}, {"degenerate_images", report.degenerate_images}};
    const auto path = root_ / (cfg.hash() + ".test.json");
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out << j.dump(1) << '\n';
    }
    fs::rename(tmp, path);
}

RunRecord train_or_load(const RunStore& store, const ExperimentConfig& cfg, const data::DataSplits& data,
                        const Checkpoint* teacher, const TrainOptions& options) {
    RunRecord rec;
    if (store.contains(cfg)) {
        rec.checkpoint = store.load(cfg);
    } else {
        rec.checkpoint = train(cfg, data, teacher, options).checkpoint;
        rec.trained = true;
        store.save(rec.checkpoint);
    }
    if (auto report = store.load_report(cfg); report && !rec.trained) {
        rec.test = std::move(*report);
    } else {
        rec.test = evaluate(rec.checkpoint, data.test, "test");
        store.save_report(cfg, rec.test);
    }
    return rec;
}

ExperimentConfig ExperimentPlan::config(Mode mode, int snapshots, std::uint64_t seed) const {
    return apply_overrides(preset(mode, scale, snapshots, seed), overrides);
}

ExperimentConfig ExperimentPlan::student_config(const Checkpoint& teacher, std::uint64_t seed) const {
    auto cfg = config(Mode::kd_student, student_snapshots, seed);
    cfg.teacher_hash = teacher.config_hash();
    return cfg;
}

ExperimentConfig ablation_config(const ExperimentPlan& plan, const std::string& variant, const Checkpoint& teacher,
                                 std::uint64_t seed) {
    if (variant == "none") return plan.config(Mode::e2e_baseline, plan.student_snapshots, seed);
    auto cfg = plan.student_config(teacher, seed);
    const auto& w = cfg.loss;
    // Switching a term off hands its weight to the task loss.
    if (variant == "cdp+feat") return cfg;
    if (variant == "cdp") {
        cfg.loss = objectives::LossWeights(1.0 - w.beta(), w.beta(), w.rho(), w.reg_levels());
    } else if (variant == "feat") {
        cfg.loss = objectives::LossWeights(1.0 - w.sigma(), 0.0, w.rho(), w.reg_levels());
    } else {
        throw ConfigError("unknown ablation variant '" + variant + "'");
    }
    cfg.validate();
    return cfg;
}

metrics::RunSummary summarize(const RunRecord& run, const std::string& variant) {
    const auto& cfg = run.checkpoint.config;
    metrics::RunSummary s;
    s.mode = to_string(cfg.mode);
    s.variant = variant;
    s.snapshots = cfg.snapshots;
    s.seed = cfg.seed;
    s.config_hash = cfg.hash();
    s.psnr = run.test.psnr.empty() ? std::nan("") : run.test.psnr_summary().mean;
    s.ssim = run.test.ssim.empty() ? std::nan("") : run.test.ssim_summary().mean;
    return s;
}

SweepResult sweep_teachers(const RunStore& store, const ExperimentPlan& plan, const data::DataSplits& data,
                           const LogFn& log) {
    if (plan.teacher_snapshots.empty()) throw ConfigError("sweep: the teacher snapshot list is empty");
    SweepResult out;
    for (int lt : plan.teacher_snapshots) {
        for (auto seed : plan.seeds) {
            const auto tcfg = plan.config(Mode::teacher, lt, seed);
            std::optional<RunRecord> teacher;
            try {
                teacher = train_or_load(store, tcfg, data, nullptr, prefixed(log, label_of(tcfg)));
                out.trained_runs += teacher->trained;
                auto s = summarize(*teacher);
                s.teacher_snapshots = lt;
                out.teachers.push_back(s);
                note(log, label_of(tcfg) + " test_psnr " + metrics::format_value(s.psnr));
            } catch (const std::exception& e) {
                out.failures.push_back(failure_of(label_of(tcfg), e));
                note(log, label_of(tcfg) + " failed: " + e.what());
                continue;
            }
            const std::string slabel = "kd-student L_t=" + std::to_string(lt) + " seed=" + std::to_string(seed);
            try {
                const auto scfg = plan.student_config(teacher->checkpoint, seed);
                auto student = train_or_load(store, scfg, data, &teacher->checkpoint, prefixed(log, slabel));
                out.trained_runs += student.trained;
                auto s = summarize(student);
                s.teacher_snapshots = lt;
                out.students.push_back(s);
                note(log, slabel + " test_psnr " + metrics::format_value(s.psnr));
            } catch (const std::exception& e) {
                out.failures.push_back(failure_of(slabel, e));
                note(log, slabel + " failed: " + e.what());
            }
        }
    }
    return out;
}

AblationResult ablation(const RunStore& store, const ExperimentPlan& plan, const data::DataSplits& data,
                        const LogFn& log) {
    AblationResult out;
    const int lt = plan.reference_teacher_snapshots;
    for (auto seed : plan.seeds) {
        const auto tcfg = plan.config(Mode::teacher, lt, seed);
        std::optional<RunRecord> teacher;
        try {
            teacher = train_or_load(store, tcfg, data, nullptr, prefixed(log, label_of(tcfg)));
            out.trained_runs += teacher->trained;
        } catch (const std::exception& e) {
            out.failures.push_back(failure_of(label_of(tcfg), e));
            continue;
        }
        // Baseline and full distillation first: they carry the headline comparison.
        for (const auto& variant : {"none", "cdp+feat", "cdp", "feat"}) {
            const std::string label = std::string("ablation ") + variant + " seed=" + std::to_string(seed);
            try {
                const auto cfg = ablation_config(plan, variant, teacher->checkpoint, seed);
                const Checkpoint* t = cfg.mode == Mode::kd_student ? &teacher->checkpoint : nullptr;
                auto run = train_or_load(store, cfg, data, t, prefixed(log, label));
                out.trained_runs += run.trained;
                auto s = summarize(run, variant);
                s.teacher_snapshots = lt;
                out.runs.push_back(s);
                note(log, label + " test_psnr " + metrics::format_value(s.psnr));
            } catch (const std::exception& e) {
                out.failures.push_back(failure_of(label, e));
                note(log, label + " failed: " + e.what());
            }
        }
    }
    return out;
}

ReproduceResult reproduce(const ExperimentPlan& plan, const fs::path& out_dir, const LogFn& log) {
    fs::create_directories(out_dir);
    const RunStore store(out_dir / "runs");

    auto spec = plan.config(Mode::teacher, 1, 0).dataset;
    if (!plan.data_root.empty()) spec.root = plan.data_root;
    const auto data = data::load_dataset(spec);

    ReproduceResult result;
    result.sweep = sweep_teachers(store, plan, data, log);
    result.ablation = ablation(store, plan, data, log);

    std::map<std::string, RunRecord> panel_runs;
    for (auto seed : plan.seeds) {
        for (Mode mode : {Mode::e2e_baseline, Mode::random_baseline}) {
            const auto cfg = plan.config(mode, plan.student_snapshots, seed);
            try {
                auto run = train_or_load(store, cfg, data, nullptr, prefixed(log, label_of(cfg)));
                result.baselines.push_back(summarize(run));
                if (seed == plan.seeds.front()) panel_runs[to_string(mode)] = std::move(run);
            } catch (const std::exception& e) {
                result.sweep.failures.push_back(failure_of(label_of(cfg), e));
            }
        }
    }

    metrics::ReportInputs inputs;
    inputs.teacher_sweep = result.sweep.teachers;
    inputs.student_sweep = result.sweep.students;
    inputs.ablation = result.ablation.runs;

    // Reconstruction grid: first seed, reference teacher and its student.
    const auto seed0 = plan.seeds.front();
    const auto tcfg = plan.config(Mode::teacher, plan.reference_teacher_snapshots, seed0);
    std::vector<std::pair<std::string, Checkpoint>> systems;
    if (store.contains(tcfg)) {
        auto teacher = store.load(tcfg);
        const auto scfg = plan.student_config(teacher, seed0);
        systems.emplace_back("teacher L=" + std::to_string(tcfg.snapshots), teacher);
        if (panel_runs.count("random-baseline")) systems.emplace_back("random", panel_runs["random-baseline"].checkpoint);
        if (panel_runs.count("e2e-baseline")) systems.emplace_back("E2E", panel_runs["e2e-baseline"].checkpoint);
        if (store.contains(scfg)) systems.emplace_back("KD student", store.load(scfg));
    }
    if (!systems.empty()) {
        const auto sample = data.test.slice(0, 0, std::min<std::int64_t>(4, data.test.size(0)));
        std::vector<torch::Tensor> recon;
        for (const auto& [label, ckpt] : systems) recon.push_back(reconstruct_images(ckpt, sample));
        for (std::int64_t i = 0; i < sample.size(0); ++i) {
            metrics::ReconstructionPanel panel;
            panel.ground_truth = sample[i];
            for (std::size_t k = 0; k < systems.size(); ++k) panel.systems.emplace_back(systems[k].first, recon[k][i]);
            inputs.panels.push_back(std::move(panel));
        }
    }

    result.artifacts = metrics::render_reports(inputs, out_dir);
    std::vector<metrics::RunSummary> all = result.baselines;
    metrics::CsvTable table;
    table.header = {"mode", "variant", "snapshots", "teacher_snapshots", "seed", "config_hash", "psnr_db", "ssim"};
    for (const auto* group : {&result.sweep.teachers, &result.sweep.students, &result.ablation.runs, &all}) {
        for (const auto& s : *group)
            table.rows.push_back({s.mode, s.variant, std::to_string(s.snapshots), std::to_string(s.teacher_snapshots),
                                  std::to_string(s.seed), s.config_hash, metrics::format_value(s.psnr),
                                  metrics::format_value(s.ssim)});
    }
    metrics::write_csv(table, out_dir / "runs.csv");
    result.artifacts.push_back(out_dir / "runs.csv");
    return result;
}

}  // namespace prkd
