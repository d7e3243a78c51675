#include "prkd/cli.hpp"

#include "binary_io.hpp"
#include "prkd/error.hpp"
#include "prkd/experiments.hpp"
#include "prkd/initializer.hpp"
#include "prkd/optics.hpp"
#include "prkd/rng.hpp"
#include "prkd/system.hpp"

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>

#include <fstream>
#include <iostream>
#include <optional>

namespace prkd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string ckpt;
    std::string teacher_ckpt;
    std::string scale = "desk";
    std::string data_root;
    std::string split = "test";
    std::vector<std::uint64_t> seeds;
    std::vector<int> snapshots_list;
    std::string image;
    std::int64_t index = 0;
};

void add_config_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
    cmd->add_option("--set", o.overrides, "Override KEY=VALUE with a dotted key, e.g. optimizer.epochs=2 (repeatable)")
        ->take_all();
    cmd->add_option("--seed", o.seed, "Seed override");
    cmd->add_option("--scale", o.scale, "Preset scale used when no --config is given")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--data-root", o.data_root, "Dataset directory (default: $PRKD_DATA_ROOT)");
}

void add_out_flag(CLI::App* cmd, Options& o, const std::string& fallback) {
    cmd->add_option("--out", o.out, "Output directory (default: " + fallback + ")");
}

ExperimentConfig resolve_config(const Options& o, Mode mode, int default_snapshots) {
    ExperimentConfig cfg = o.config.empty() ? preset(mode, scale_from_string(o.scale), default_snapshots, 0)
                                            : load_config(o.config);
    cfg = apply_overrides(cfg, o.overrides);
    if (o.seed) cfg.seed = *o.seed;
    if (cfg.mode != mode)
        throw ConfigError(std::string("config mode is '") + to_string(cfg.mode) + "' but this subcommand trains '" +
                          to_string(mode) + "'");
    cfg.validate();
    return cfg;
}

data::DatasetSpec loading_spec(const ExperimentConfig& cfg, const Options& o) {
    auto spec = cfg.dataset;
    if (!o.data_root.empty()) spec.root = o.data_root;
    return spec;
}

LogFn progress(std::ostream& err) {
    return [&err](const std::string& line) { err << line << std::endl; };
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

void write_png(const fs::path& path, const torch::Tensor& image) {
    const auto bytes = (image.detach().to(torch::kFloat).clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
    const cv::Mat mat(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1, bytes.data_ptr());
    if (!cv::imwrite(path.string(), mat)) throw IoError("cannot write '" + path.string() + "'");
}

void finish_run(const ExperimentConfig& cfg, const Checkpoint& ckpt, const data::DataSplits& data, const fs::path& out,
                std::ostream& os) {
    fs::create_directories(out);
    const auto ckpt_path = out / "model.ckpt";
    ckpt.save(ckpt_path);
    write_json(out / "config.json", cfg.to_json());
    const auto report = evaluate(ckpt, data.test, "test");
    metrics::write_report_csv(report, out / "report_test.csv");
    write_json(out / "report_test.json", report.summary_json());
    os << "checkpoint " << ckpt_path.string() << '\n'
       << "config_hash " << cfg.hash() << '\n'
       << "test_psnr_mean " << metrics::format_value(report.psnr_summary().mean) << '\n'
       << "test_ssim_mean " << metrics::format_value(report.ssim_summary().mean) << '\n';
}

int cmd_train(Mode mode, int default_snapshots, const Options& o, std::ostream& os, std::ostream& err) {
    const auto cfg = resolve_config(o, mode, default_snapshots);
    std::optional<Checkpoint> teacher;
    if (mode == Mode::kd_student) {
        if (o.teacher_ckpt.empty()) throw ConfigError("train-student requires --teacher-ckpt");
        teacher = Checkpoint::load(o.teacher_ckpt);
    }
    const auto data = data::load_dataset(loading_spec(cfg, o));
    TrainOptions opts;
    opts.log = progress(err);
    const auto result = train(cfg, data, teacher ? &*teacher : nullptr, opts);
    finish_run(result.checkpoint.config, result.checkpoint, data, o.out, os);
    return exit_ok;
}

int cmd_eval(const Options& o, std::ostream& os) {
    const auto ckpt = Checkpoint::load(o.ckpt);
    auto cfg = ckpt.config;
    if (!o.config.empty()) {
        auto given = apply_overrides(load_config(o.config), o.overrides);
        if (o.seed) given.seed = *o.seed;
        if (given.network() != cfg.network())
            throw ArchitectureMismatchError("config network " + given.network().architecture_descriptor().dump() +
                                            " does not match the checkpoint's " +
                                            cfg.network().architecture_descriptor().dump());
        if (given.snapshots != cfg.snapshots || given.dataset.height != cfg.dataset.height ||
            given.dataset.width != cfg.dataset.width)
            throw ConfigError("config snapshots or scene size differ from the checkpoint");
        // The config may point at a different dataset or evaluation noise.
        cfg.dataset = given.dataset;
        cfg.noise = given.noise;
    }
    const auto data = data::load_dataset(loading_spec(cfg, o));
    const torch::Tensor* images = o.split == "train" ? &data.train : o.split == "val" ? &data.val : &data.test;

    Checkpoint evaluated = ckpt;
    evaluated.config.noise = cfg.noise;
    const auto report = evaluate(evaluated, *images, o.split);

    fs::create_directories(o.out);
    const auto csv = fs::path(o.out) / ("report_" + o.split + ".csv");
    metrics::write_report_csv(report, csv);
    write_json(fs::path(o.out) / ("report_" + o.split + ".json"), report.summary_json());
    os << "report " << csv.string() << '\n'
       << "images " << report.psnr.size() << '\n'
       << "degenerate " << report.degenerate_images.size() << '\n';
    if (!report.psnr.empty())
        os << "psnr_mean " << metrics::format_value(report.psnr_summary().mean) << '\n'
           << "psnr_median " << metrics::format_value(report.psnr_summary().median) << '\n'
           << "ssim_mean " << metrics::format_value(report.ssim_summary().mean) << '\n';
    return exit_ok;
}

ExperimentPlan make_plan(const Options& o) {
    if (!o.config.empty()) throw ConfigError("multi-run commands build configs from presets; use --set instead of --config");
    ExperimentPlan plan;
    plan.scale = scale_from_string(o.scale);
    plan.overrides = o.overrides;
    plan.data_root = o.data_root;
    if (o.seed) plan.seeds = {*o.seed};
    if (!o.seeds.empty()) plan.seeds = o.seeds;
    if (!o.snapshots_list.empty()) plan.teacher_snapshots = o.snapshots_list;
    if (plan.seeds.empty()) throw ConfigError("no seeds given");
    // Validate every config up front so typos fail before any training.
    (void)plan.config(Mode::teacher, plan.teacher_snapshots.empty() ? 1 : plan.teacher_snapshots.front(),
                      plan.seeds.front());
    return plan;
}

data::DataSplits plan_data(const ExperimentPlan& plan) {
    auto spec = plan.config(Mode::teacher, 1, plan.seeds.front()).dataset;
    if (!plan.data_root.empty()) spec.root = plan.data_root;
    return data::load_dataset(spec);
}

void print_failures(const std::vector<RunFailure>& failures, std::ostream& os) {
    for (const auto& f : failures) os << "failed " << f.label << ": " << f.error_class << ": " << f.message << '\n';
}

int cmd_sweep(const Options& o, std::ostream& os, std::ostream& err) {
    const auto plan = make_plan(o);
    const RunStore store(fs::path(o.out) / "runs");
    const auto result = sweep_teachers(store, plan, plan_data(plan), progress(err));
    metrics::ReportInputs inputs;
    inputs.teacher_sweep = result.teachers;
    inputs.student_sweep = result.students;
    metrics::ReportRequest request;
    request.ablation_table = false;
    request.reconstruction_grid = false;
    request.student_curve = !result.students.empty();
    for (const auto& p : metrics::render_reports(inputs, o.out, request)) os << "wrote " << p.string() << '\n';
    os << "trained " << result.trained_runs << '\n';
    print_failures(result.failures, os);
    return result.failures.empty() ? exit_ok : exit_runtime;
}

int cmd_ablate(const Options& o, std::ostream& os, std::ostream& err) {
    auto plan = make_plan(o);
    const RunStore store(fs::path(o.out) / "runs");
    const auto data = plan_data(plan);
    AblationResult result;
    if (!o.teacher_ckpt.empty()) {
        const auto teacher = Checkpoint::load(o.teacher_ckpt);
        const auto seed = o.seed.value_or(teacher.config.seed);
        for (const auto& variant : ablation_variants()) {
            const auto cfg = ablation_config(plan, variant, teacher, seed);
            TrainOptions opts;
            opts.log = progress(err);
            try {
                const auto run = train_or_load(store, cfg, data, cfg.mode == Mode::kd_student ? &teacher : nullptr, opts);
                result.trained_runs += run.trained;
                auto s = summarize(run, variant);
                s.teacher_snapshots = teacher.config.snapshots;
                result.runs.push_back(s);
            } catch (const std::exception& e) {
                const auto* pe = dynamic_cast<const Error*>(&e);
                result.failures.push_back({"ablation " + variant, pe ? pe->error_class() : "runtime-error", e.what()});
            }
        }
    } else {
        result = ablation(store, plan, data, progress(err));
    }
    metrics::ReportInputs inputs;
    inputs.ablation = result.runs;
    metrics::ReportRequest request;
    request.teacher_curve = request.student_curve = request.reconstruction_grid = false;
    for (const auto& p : metrics::render_reports(inputs, o.out, request)) os << "wrote " << p.string() << '\n';
    os << "trained " << result.trained_runs << '\n';
    print_failures(result.failures, os);
    return result.failures.empty() ? exit_ok : exit_runtime;
}

torch::Tensor demo_scene(const ExperimentConfig& cfg, const Options& o) {
    if (!o.image.empty()) {
        const cv::Mat m = cv::imread(o.image, cv::IMREAD_GRAYSCALE);
        if (m.empty()) throw IoError("cannot read image '" + o.image + "'");
        const auto t = torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).to(torch::kFloat) / 255.0;
        return data::preprocess(t, cfg.dataset.height, cfg.dataset.width);
    }
    const auto data = data::load_dataset(loading_spec(cfg, o));
    if (o.index < 0 || o.index >= data.test.size(0)) throw ConfigError("--index outside the test split");
    return data.test[o.index];
}

int cmd_init_demo(const Options& o, std::ostream& os) {
    std::optional<PrSystem> system;
    if (!o.ckpt.empty()) {
        system.emplace(PrSystem::from_checkpoint(Checkpoint::load(o.ckpt)));
    } else {
        system.emplace(resolve_config(o, Mode::teacher, 1));
    }
    const auto& cfg = system->config();
    torch::NoGradGuard no_grad;
    const auto image = demo_scene(cfg, o);
    const auto scene = optics::make_scene(image, cfg.encoding);
    const auto y = optics::sense(scene.field, system->phases(), cfg.noise,
                                 derive_seed(cfg.seed, RngStream::noise));
    const auto est = initializer::spectral_initialize(y, system->phases(), system->kernel(),
                                                      cfg.initializer.iterations,
                                                      derive_seed(cfg.seed, RngStream::eval_init_start));
    const auto z = initializer::canonicalize_phase(est.z);

    fs::create_directories(o.out);
    const fs::path out(o.out);
    const auto planes = torch::stack({torch::real(z), torch::imag(z)}).to(torch::kFloat).contiguous();
    {
        std::ofstream bin(out / "z.f32", std::ios::binary | std::ios::trunc);
        if (!bin) throw IoError("cannot write '" + (out / "z.f32").string() + "'");
        detail::write_f32_le(bin, {planes.data_ptr<float>(), static_cast<std::size_t>(planes.numel())});
    }
    write_json(out / "z.f32.json",
               {{"channels", json::array({"real", "imag"})}, {"height", z.size(0)}, {"width", z.size(1)},
                {"dtype", "float32-le"}, {"iterations", est.iterations_run}});
    const auto mag = torch::abs(z);
    write_png(out / "z_abs.png", mag / mag.max().clamp_min(1e-30));
    write_png(out / "scene.png", image);
    os << "wrote " << (out / "z.f32").string() << '\n' << "wrote " << (out / "z_abs.png").string() << '\n';
    return exit_ok;
}

int cmd_reproduce(const Options& o, std::ostream& os, std::ostream& err) {
    const auto plan = make_plan(o);
    const auto result = reproduce(plan, o.out, progress(err));
    for (const auto& p : result.artifacts) os << "wrote " << p.string() << '\n';
    print_failures(result.sweep.failures, os);
    print_failures(result.ablation.failures, os);
    return result.sweep.failures.empty() && result.ablation.failures.empty() ? exit_ok : exit_runtime;
}

std::string one_line(std::string s) {
    for (auto& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Coded-diffraction phase retrieval with knowledge distillation", "prkd"};
    app.require_subcommand(1);
    Options o;

    auto* teacher = app.add_subcommand("train-teacher", "Train a multi-snapshot teacher (E2E objective)");
    auto* student = app.add_subcommand("train-student", "Distil a student from a frozen teacher");
    auto* baseline = app.add_subcommand("train-baseline", "Train the single-snapshot E2E baseline");
    auto* random = app.add_subcommand("train-random", "Train the recovery net behind fixed random masks");
    for (auto* cmd : {teacher, student, baseline, random}) {
        add_config_flags(cmd, o);
        add_out_flag(cmd, o, "runs/" + cmd->get_name());
    }
    student->add_option("--teacher-ckpt", o.teacher_ckpt, "Teacher checkpoint")->check(CLI::ExistingFile);

    auto* eval = app.add_subcommand("eval", "Score a checkpoint on a data split");
    add_config_flags(eval, o);
    add_out_flag(eval, o, "runs/eval");
    eval->add_option("--ckpt", o.ckpt, "Checkpoint to evaluate")->required()->check(CLI::ExistingFile);
    eval->add_option("--split", o.split, "Data split")->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "Teachers for each snapshot count plus one student per teacher");
    auto* ablate = app.add_subcommand("ablate", "The four on/off combinations of the distillation terms");
    auto* repro = app.add_subcommand("reproduce", "Sweep, ablation, baselines and reports");
    for (auto* cmd : {sweep, ablate, repro}) {
        add_config_flags(cmd, o);
        add_out_flag(cmd, o, "runs");
        cmd->add_option("--seeds", o.seeds, "Seeds (default 0 1 2)")->delimiter(',');
    }
    for (auto* cmd : {sweep, repro})
        cmd->add_option("--snapshots", o.snapshots_list, "Teacher snapshot counts (default 1,2,4,8)")->delimiter(',');
    ablate->add_option("--teacher-ckpt", o.teacher_ckpt, "Use this teacher instead of training one per seed")
        ->check(CLI::ExistingFile);

    auto* demo = app.add_subcommand("init-demo", "Run the filtered spectral initializer on one scene");
    add_config_flags(demo, o);
    add_out_flag(demo, o, "runs/init-demo");
    demo->add_option("--ckpt", o.ckpt, "Take masks and filter from this checkpoint")->check(CLI::ExistingFile);
    demo->add_option("--image", o.image, "8-bit grayscale PNG scene (default: a test-split image)")
        ->check(CLI::ExistingFile);
    demo->add_option("--index", o.index, "Test-split image index")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return exit_ok;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "usage-error: " << one_line(e.what()) << '\n';
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return exit_usage;
    }

    for (auto* cmd : app.get_subcommands())
        if (o.out.empty()) o.out = cmd->get_name() == "sweep" || cmd->get_name() == "ablate" || cmd->get_name() == "reproduce"
                                       ? "runs"
                                       : "runs/" + cmd->get_name();

    try {
        if (teacher->parsed()) return cmd_train(Mode::teacher, 4, o, out, err);
        if (student->parsed()) return cmd_train(Mode::kd_student, 1, o, out, err);
        if (baseline->parsed()) return cmd_train(Mode::e2e_baseline, 1, o, out, err);
        if (random->parsed()) return cmd_train(Mode::random_baseline, 1, o, out, err);
        if (eval->parsed()) return cmd_eval(o, out);
        if (sweep->parsed()) return cmd_sweep(o, out, err);
        if (ablate->parsed()) return cmd_ablate(o, out, err);
        if (demo->parsed()) return cmd_init_demo(o, out);
        if (repro->parsed()) return cmd_reproduce(o, out, err);
    } catch (const ConfigError& e) {
        err << e.error_class() << ": " << one_line(e.what()) << '\n';
        return exit_config;
    } catch (const ArchitectureMismatchError& e) {
        err << e.error_class() << ": " << one_line(e.what()) << '\n';
        return exit_config;
    } catch (const Error& e) {
        err << e.error_class() << ": " << one_line(e.what()) << '\n';
        return exit_runtime;
    } catch (const std::exception& e) {
        err << "runtime-error: " << one_line(e.what()) << '\n';
        return exit_runtime;
    }
    return exit_usage;
}

}  // namespace prkd::cli
