#include "prkd/checkpoint.hpp"
#include "prkd/cli.hpp"
#include "prkd/config.hpp"
#include "prkd/error.hpp"
#include "prkd/experiments.hpp"
#include "prkd/system.hpp"
#include "prkd/training.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace prkd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("prkd_orch_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 16x16 scenes, depth-1 network with 4 base channels, a handful of images.
ExperimentConfig tiny(Mode mode, int snapshots, std::uint64_t seed) {
    auto c = preset(mode, Scale::desk, snapshots, seed);
    c.dataset.height = c.dataset.width = 16;
    c.dataset.train_count = 24;
    c.dataset.val_count = 8;
    c.dataset.test_count = 8;
    c.depth = 1;
    c.base_channels = 4;
    c.initializer.iterations = 4;
    c.optimizer.batch_size = 8;
    c.optimizer.epochs = 2;
    c.validate();
    return c;
}

const data::DataSplits& tiny_data() {
    static const data::DataSplits d = [] {
        const auto imgs = data::preprocess(data::synthesize_garments(40, 9).images, 16, 16);
        return data::DataSplits{imgs.slice(0, 0, 24), imgs.slice(0, 24, 32), imgs.slice(0, 32, 40)};
    }();
    return d;
}

fs::path tiny_dataset_dir() {
    static const fs::path dir = [] {
        auto d = scratch("dataset");
        data::write_synthetic_dataset(d, 40, 16, 9);
        return d;
    }();
    return dir;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "prkd");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("JSON round trip and stable hash") {
        auto c = preset(Mode::kd_student, Scale::desk, 1, 2);
        c.teacher_hash = "abc";
        c.noise = {optics::NoiseKind::gaussian, 0.5};
        const auto back = ExperimentConfig::from_json(c.to_json());
        CHECK(back == c);
        CHECK(back.hash() == c.hash());
        CHECK(c.hash().size() == 64);
        auto d = c;
        d.seed = 3;
        CHECK(d.hash() != c.hash());
    }

    TEST_CASE("presets follow the desk and paper scales") {
        const auto desk = preset(Mode::teacher, Scale::desk, 4, 0);
        CHECK(desk.dataset.height == 32);
        CHECK(desk.dataset.train_count == 2000);
        CHECK(desk.optimizer.epochs == 15);
        CHECK(desk.optimizer.batch_size == 32);
        CHECK(desk.optimizer.learning_rate == 5e-4);
        CHECK(desk.initializer.iterations == 25);
        CHECK(desk.loss.alpha() == 1.0);
        const auto paper = preset(Mode::kd_student, Scale::paper, 1, 0);
        CHECK(paper.dataset.height == 96);
        CHECK(paper.optimizer.epochs == 120);
        CHECK(paper.optimizer.batch_size == 64);
        CHECK(paper.loss.beta() == 0.3);
    }

    TEST_CASE("unknown keys and invalid values are rejected") {
        auto j = preset(Mode::teacher, Scale::desk, 4, 0).to_json();
        j["optimizer"]["lr"] = 0.1;
        CHECK_THROWS_AS((void)ExperimentConfig::from_json(j), ConfigError);

        j = preset(Mode::teacher, Scale::desk, 4, 0).to_json();
        j["loss"]["sigma"] = 0.1;
        CHECK_THROWS_AS((void)ExperimentConfig::from_json(j), ConfigError);

        const auto base = preset(Mode::teacher, Scale::desk, 4, 0);
        CHECK_THROWS_AS((void)apply_overrides(base, {"optimizer.epoch=3"}), ConfigError);
        CHECK_THROWS_AS((void)apply_overrides(base, {"snapshots"}), ConfigError);
        CHECK_THROWS_AS((void)apply_overrides(base, {"snapshots=0"}), ConfigError);
        CHECK_THROWS_AS((void)apply_overrides(base, {"dataset.height=30"}), ConfigError);
        CHECK_THROWS_AS((void)apply_overrides(base, {"mode=student"}), ConfigError);

        const auto o = apply_overrides(base, {"optimizer.epochs=3", "seed=9", "noise.kind=gaussian",
                                              "noise.parameter=0.1", "scene_encoding=phase-object"});
        CHECK(o.optimizer.epochs == 3);
        CHECK(o.seed == 9);
        CHECK(o.noise.kind == optics::NoiseKind::gaussian);
        CHECK(o.encoding == optics::SceneEncoding::phase_object);
        CHECK(o.hash() != base.hash());
    }

    TEST_CASE("sha256 of a known string") {
        CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

TEST_SUITE("checkpoint") {
    TEST_CASE("save-load-save is byte stable") {
        const auto dir = scratch("ckpt");
        Checkpoint c;
        c.config = tiny(Mode::teacher, 2, 1);
        c.epoch = 3;
        c.metrics = {{"val_psnr_best", 21.5}};
        c.loss_trace = {3.0, 2.0, 1.5};
        c.arrays = PrSystem(c.config).export_arrays();
        c.save(dir / "a.ckpt");
        CHECK_FALSE(fs::exists(dir / "a.ckpt.tmp"));
        const auto back = Checkpoint::load(dir / "a.ckpt");
        back.save(dir / "b.ckpt");
        CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
        CHECK(back.parameter_hash() == c.parameter_hash());
        CHECK(back.config == c.config);
        CHECK(back.epoch == 3);
        CHECK(back.manifest().at("architecture") == c.config.network().architecture_descriptor());

        const auto bytes = slurp(dir / "a.ckpt");
        std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 10);
        CHECK_THROWS_AS((void)Checkpoint::load(dir / "short.ckpt"), IoError);
        std::ofstream(dir / "junk.ckpt", std::ios::binary) << "not a checkpoint";
        CHECK_THROWS_AS((void)Checkpoint::load(dir / "junk.ckpt"), FormatError);

        // Tampering with the embedded config breaks the hash check.
        auto tampered = bytes;
        const auto pos = tampered.find("\"epochs\":2");
        REQUIRE(pos != std::string::npos);
        tampered[pos + 9] = '3';
        std::ofstream(dir / "tampered.ckpt", std::ios::binary) << tampered;
        CHECK_THROWS_AS((void)Checkpoint::load(dir / "tampered.ckpt"), FormatError);
        fs::remove_all(dir);
    }

    TEST_CASE("loading into a different architecture fails") {
        Checkpoint c;
        c.config = tiny(Mode::teacher, 2, 1);
        c.arrays = PrSystem(c.config).export_arrays();
        c.config.base_channels = 8;
        CHECK_THROWS_AS((void)PrSystem::from_checkpoint(c), ArchitectureMismatchError);
    }
}

TEST_SUITE("training") {
    TEST_CASE("same seed, same run") {
        const auto cfg = tiny(Mode::teacher, 2, 5);
        const auto a = train(cfg, tiny_data());
        const auto b = train(cfg, tiny_data());
        CHECK(a.loss_trace == b.loss_trace);
        CHECK(a.checkpoint.parameter_hash() == b.checkpoint.parameter_hash());
        CHECK(a.loss_trace.size() == 6);
        CHECK(a.val_psnr.size() == 3);
        CHECK(a.checkpoint.metrics.at("val_psnr_best").get<double>() ==
              *std::max_element(a.val_psnr.begin(), a.val_psnr.end()));
    }

    TEST_CASE("mode reductions give identical loss traces") {
        const auto base = train(tiny(Mode::e2e_baseline, 1, 2), tiny_data());
        const auto t1 = train(tiny(Mode::teacher, 1, 2), tiny_data());
        CHECK(base.loss_trace == t1.loss_trace);

        Checkpoint teacher;
        teacher.config = tiny(Mode::teacher, 3, 0);
        teacher.arrays = PrSystem(teacher.config).export_arrays();
        auto scfg = tiny(Mode::kd_student, 1, 2);
        scfg.loss = objectives::LossWeights(1.0, 0.0, scfg.loss.rho(), scfg.loss.reg_levels());
        const auto s = train(scfg, tiny_data(), &teacher);
        CHECK(base.loss_trace == s.loss_trace);
    }

    TEST_CASE("random baseline keeps masks and filter frozen") {
        const auto cfg = tiny(Mode::random_baseline, 1, 4);
        PrSystem fresh(cfg);
        CHECK_FALSE(fresh.phases().requires_grad());
        CHECK_FALSE(fresh.kernel().requires_grad());
        const auto r = train(cfg, tiny_data());
        CHECK(torch::equal(r.checkpoint.arrays.at("phi"), fresh.export_arrays().at("phi")));
        CHECK(torch::equal(r.checkpoint.arrays.at("psi"), fresh.export_arrays().at("psi")));
        CHECK_FALSE(fresh.phases().grad().defined());

        // The e2e baseline does move them.
        const auto e = train(tiny(Mode::e2e_baseline, 1, 4), tiny_data());
        CHECK_FALSE(torch::equal(e.checkpoint.arrays.at("phi"), fresh.export_arrays().at("phi")));
    }

    TEST_CASE("distillation leaves the teacher untouched") {
        const auto t = train(tiny(Mode::teacher, 3, 1), tiny_data());
        const auto before = t.checkpoint.parameter_hash();
        const auto s = train(tiny(Mode::kd_student, 1, 1), tiny_data(), &t.checkpoint);
        CHECK(t.checkpoint.parameter_hash() == before);
        CHECK(s.checkpoint.config.teacher_hash == t.checkpoint.config_hash());
        CHECK(s.checkpoint.parameter_hash() != before);
    }

    TEST_CASE("teacher wiring errors") {
        CHECK_THROWS_AS((void)train(tiny(Mode::kd_student, 1, 1), tiny_data()), ConfigError);

        Checkpoint wide;
        wide.config = tiny(Mode::teacher, 2, 0);
        wide.config.base_channels = 8;
        wide.arrays = PrSystem(wide.config).export_arrays();
        CHECK_THROWS_AS((void)train(tiny(Mode::kd_student, 1, 1), tiny_data(), &wide), ArchitectureMismatchError);

        Checkpoint t;
        t.config = tiny(Mode::teacher, 2, 0);
        t.arrays = PrSystem(t.config).export_arrays();
        auto wrong = tiny(Mode::kd_student, 1, 1);
        wrong.teacher_hash = "0000";
        CHECK_THROWS_AS((void)train(wrong, tiny_data(), &t), ConfigError);
        CHECK_THROWS_AS((void)train(tiny(Mode::teacher, 2, 0), tiny_data(), &t), ConfigError);
    }

    TEST_CASE("non-finite loss aborts with its position") {
        auto bad = tiny_data();
        bad.train = bad.train.clone();
        bad.train.index_put_({torch::indexing::Slice(), 0, 0}, std::nan(""));
        try {
            (void)train(tiny(Mode::e2e_baseline, 1, 0), bad);
            FAIL("diverged run returned");
        } catch (const DivergenceError& e) {
            CHECK(e.epoch() == 1);
            CHECK(e.batch() == 0);
        }
    }

    TEST_CASE("training beats the untrained network") {
        auto cfg = tiny(Mode::teacher, 2, 0);
        cfg.optimizer.epochs = 4;
        cfg.optimizer.learning_rate = 2e-3;
        const auto r = train(cfg, tiny_data());
        CHECK(*std::max_element(r.val_psnr.begin() + 1, r.val_psnr.end()) > r.val_psnr.front());
        CHECK(r.checkpoint.epoch > 0);
    }

    TEST_CASE("evaluation is deterministic and counts images") {
        const auto r = train(tiny(Mode::teacher, 2, 0), tiny_data());
        const auto a = evaluate(r.checkpoint, tiny_data().test, "test");
        const auto b = evaluate(r.checkpoint, tiny_data().test, "test");
        CHECK(a.psnr == b.psnr);
        CHECK(a.ssim == b.ssim);
        CHECK(a.psnr.size() + a.degenerate_images.size() == 8);
        CHECK(evaluate(r.checkpoint, tiny_data().train, "train").psnr.size() == 24);
        CHECK_THROWS_AS((void)evaluate(r.checkpoint, tiny_data().test.slice(0, 0, 0), "test"), ConfigError);
        CHECK(reconstruct_images(r.checkpoint, tiny_data().test).sizes() == torch::IntArrayRef{8, 16, 16});
    }
}

TEST_SUITE("experiments") {
    TEST_CASE("sweep is resumable and ablation reuses the baseline") {
        const auto dir = scratch("sweep");
        const RunStore store(dir / "runs");
        ExperimentPlan plan;
        plan.seeds = {0};
        plan.teacher_snapshots = {1, 2};
        plan.reference_teacher_snapshots = 2;
        plan.overrides = {"dataset.height=16", "dataset.width=16", "dataset.train=24", "dataset.val=8",
                          "dataset.test=8", "network.depth=1", "network.base_channels=4",
                          "initializer.iterations=3", "optimizer.epochs=1", "optimizer.batch_size=8"};

        const auto first = sweep_teachers(store, plan, tiny_data());
        CHECK(first.failures.empty());
        CHECK(first.teachers.size() == 2);
        CHECK(first.students.size() == 2);
        CHECK(first.trained_runs == 4);
        std::size_t ckpts = 0;
        for (const auto& e : fs::directory_iterator(dir / "runs")) ckpts += e.path().extension() == ".ckpt";
        CHECK(ckpts == 4);

        const auto again = sweep_teachers(store, plan, tiny_data());
        CHECK(again.trained_runs == 0);
        CHECK(again.teachers[0].psnr == first.teachers[0].psnr);

        const auto abl = ablation(store, plan, tiny_data());
        CHECK(abl.failures.empty());
        CHECK(abl.runs.size() == 4);
        // teacher and cdp+feat student exist from the sweep; cdp, feat, none are new
        CHECK(abl.trained_runs == 3);

        const auto none = ablation_config(plan, "none", store.load(plan.config(Mode::teacher, 2, 0)), 0);
        CHECK(none == plan.config(Mode::e2e_baseline, 1, 0));
        const auto cdp = ablation_config(plan, "cdp", store.load(plan.config(Mode::teacher, 2, 0)), 0);
        CHECK(cdp.loss.sigma() == doctest::Approx(0.0));
        CHECK(cdp.loss.beta() == 0.3);
        const auto feat = ablation_config(plan, "feat", store.load(plan.config(Mode::teacher, 2, 0)), 0);
        CHECK(feat.loss.beta() == 0.0);
        CHECK(feat.loss.sigma() == doctest::Approx(0.1));
        fs::remove_all(dir);
    }

    TEST_CASE("sweep failures are collected, not thrown") {
        const auto dir = scratch("sweep_fail");
        const RunStore store(dir / "runs");
        ExperimentPlan plan;
        plan.seeds = {0};
        plan.teacher_snapshots = {1};
        // 32x32 configs against 16x16 data: every item fails
        const auto r = sweep_teachers(store, plan, tiny_data());
        CHECK(r.failures.size() == 1);
        CHECK(r.failures[0].error_class == "dimension-error");
        plan.teacher_snapshots.clear();
        CHECK_THROWS_AS((void)sweep_teachers(store, plan, tiny_data()), ConfigError);
        fs::remove_all(dir);
    }
}

TEST_SUITE("cli") {
    TEST_CASE("help on every subcommand") {
        CHECK(run_cli({"--help"}).code == 0);
        for (const char* sub : {"train-teacher", "train-student", "train-baseline", "train-random", "eval", "sweep",
                                "ablate", "init-demo", "reproduce"}) {
            const auto r = run_cli({sub, "--help"});
            CHECK_MESSAGE(r.code == 0, sub);
            CHECK(r.out.find("--out") != std::string::npos);
            CHECK(r.out.find("--set") != std::string::npos);
        }
        CHECK(run_cli({"train-student", "--help"}).out.find("--teacher-ckpt") != std::string::npos);
        CHECK(run_cli({"eval", "--help"}).out.find("--ckpt") != std::string::npos);
    }

    TEST_CASE("usage and config errors map to exit codes") {
        const auto a = run_cli({"train-teacher", "--foo"});
        CHECK(a.code == cli::exit_usage);
        CHECK(a.err.rfind("usage-error:", 0) == 0);
        CHECK(run_cli({"frobnicate"}).code == cli::exit_usage);
        CHECK(run_cli({}).code == cli::exit_usage);

        const auto b = run_cli({"train-teacher", "--set", "optimizer.epoch=3"});
        CHECK(b.code == cli::exit_config);
        CHECK(b.err.rfind("config-error:", 0) == 0);
        CHECK(std::count(b.err.begin(), b.err.end(), '\n') == 1);

        CHECK(run_cli({"train-student", "--data-root", tiny_dataset_dir().string()}).code == cli::exit_config);
        CHECK(run_cli({"train-baseline", "--set", "mode=teacher"}).code == cli::exit_config);
    }

    TEST_CASE("train, eval and init-demo end to end") {
        const auto dir = scratch("cli");
        const auto data_root = tiny_dataset_dir().string();
        const std::vector<std::string> sets{"--set", "dataset.height=16", "--set", "dataset.width=16",
                                            "--set", "dataset.train=24", "--set", "dataset.val=8",
                                            "--set", "dataset.test=8", "--set", "network.depth=1",
                                            "--set", "network.base_channels=4", "--set", "optimizer.epochs=1"};
        auto args = std::vector<std::string>{"train-teacher", "--data-root", data_root, "--out", (dir / "t").string()};
        args.insert(args.end(), sets.begin(), sets.end());
        const auto t = run_cli(args);
        REQUIRE_MESSAGE(t.code == 0, t.err);
        CHECK(fs::exists(dir / "t" / "model.ckpt"));
        CHECK(fs::exists(dir / "t" / "report_test.csv"));

        const auto e = run_cli({"eval", "--config", (dir / "t" / "config.json").string(), "--ckpt",
                            (dir / "t" / "model.ckpt").string(), "--data-root", data_root, "--out",
                            (dir / "e").string()});
        REQUIRE_MESSAGE(e.code == 0, e.err);
        CHECK(fs::exists(dir / "e" / "report_test.csv"));
        CHECK(e.out.find("images 8") != std::string::npos);

        args = {"train-student", "--data-root", data_root, "--teacher-ckpt", (dir / "t" / "model.ckpt").string(),
                "--out", (dir / "s").string(), "--set", "network.base_channels=8"};
        args.insert(args.end(), sets.begin(), sets.end() - 4);
        CHECK(run_cli(args).code == cli::exit_config);  // architecture mismatch

        const auto d = run_cli({"init-demo", "--ckpt", (dir / "t" / "model.ckpt").string(), "--data-root", data_root,
                            "--out", (dir / "d").string()});
        REQUIRE_MESSAGE(d.code == 0, d.err);
        CHECK(fs::file_size(dir / "d" / "z.f32") == 2 * 16 * 16 * 4);
        CHECK(fs::exists(dir / "d" / "z_abs.png"));
        fs::remove_all(dir);
    }
}
