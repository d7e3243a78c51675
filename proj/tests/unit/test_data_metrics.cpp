#include "prkd/data.hpp"
#include "prkd/error.hpp"
#include "prkd/metrics.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>
#include <opencv2/imgcodecs.hpp>
#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace prkd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("prkd_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void gzip(const fs::path& src, const fs::path& dst) {
    const auto bytes = slurp(src);
    gzFile f = gzopen(dst.c_str(), "wb");
    REQUIRE(f != nullptr);
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
}

data::ImageSet small_set(std::int64_t n, std::int64_t h, std::int64_t w) {
    data::ImageSet s;
    s.images = (torch::arange(n * h * w, torch::kFloat).reshape({n, h, w}).remainder(256.0)) / 255.0;
    for (std::int64_t i = 0; i < n; ++i) s.labels.push_back(static_cast<int>(i % 10));
    return s;
}

// x(i, j) = (sin 0.3i + cos 0.2j + 2) / 4 and a perturbed copy; the SSIM of
// this 24x20 pair under the standard Gaussian settings is 0.754314870753954
// (scikit-image structural_similarity, gaussian_weights, sigma 1.5,
// population covariance, data_range 1).
std::pair<torch::Tensor, torch::Tensor> ssim_pair() {
    auto x = torch::empty({24, 20}, torch::kDouble);
    auto y = torch::empty({24, 20}, torch::kDouble);
    auto xa = x.accessor<double, 2>();
    auto ya = y.accessor<double, 2>();
    for (int i = 0; i < 24; ++i)
        for (int j = 0; j < 20; ++j) {
            xa[i][j] = (std::sin(0.3 * i) + std::cos(0.2 * j) + 2) / 4;
            ya[i][j] = std::clamp(xa[i][j] + 0.1 * std::sin(0.7 * i * j + 1.0), 0.0, 1.0);
        }
    return {x, y};
}

}  // namespace

TEST_SUITE("data") {
    TEST_CASE("IDX round trip, plain and gzip") {
        const auto dir = scratch("idx");
        const auto set = small_set(5, 6, 7);
        data::write_idx(set, dir / "img", dir / "lbl");
        const auto back = data::load_idx(dir / "img", dir / "lbl");
        CHECK(back.images.sizes() == torch::IntArrayRef{5, 6, 7});
        CHECK(back.labels == set.labels);
        CHECK((back.images - set.images).abs().max().item<double>() < 0.5 / 255.0 + 1e-6);

        gzip(dir / "img", dir / "img.gz");
        CHECK(torch::equal(data::load_idx(dir / "img.gz").images, back.images));
        fs::remove_all(dir);
    }

    TEST_CASE("bad magic and truncation are reported") {
        const auto dir = scratch("idx_bad");
        data::write_idx(small_set(3, 4, 4), dir / "img");
        auto bytes = slurp(dir / "img");

        auto corrupt = bytes;
        corrupt[3] = 0x01;
        std::ofstream(dir / "magic", std::ios::binary) << corrupt;
        CHECK_THROWS_AS((void)data::load_idx(dir / "magic"), FormatError);

        std::ofstream(dir / "short", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
        try {
            (void)data::load_idx(dir / "short");
            FAIL("truncated file accepted");
        } catch (const IoError& e) {
            CHECK(e.byte_offset() >= 16);
        }
        CHECK_THROWS_AS((void)data::load_idx(dir / "missing"), IoError);
        fs::remove_all(dir);
    }

    TEST_CASE("PNG directories load in name order") {
        const auto dir = scratch("png");
        for (int k : {2, 0, 1}) {
            cv::Mat m(5, 4, CV_8UC1, cv::Scalar(k * 100));
            cv::imwrite((dir / ("im" + std::to_string(k) + ".png")).string(), m);
        }
        const auto set = data::load_image_directory(dir);
        REQUIRE(set.size() == 3);
        CHECK(set.images[1].mean().item<double>() == doctest::Approx(100.0 / 255.0));
        CHECK(set.images[2].mean().item<double>() == doctest::Approx(200.0 / 255.0));
        fs::remove_all(dir);
    }

    TEST_CASE("preprocess matches direct bilinear interpolation") {
        torch::manual_seed(21);
        const auto img = torch::rand({28, 28}, torch::kDouble);
        const auto got = oracle::to_real(data::preprocess(img, 32, 32));
        const auto ref = oracle::bilinear(oracle::to_real(img), 28, 28, 32, 32);
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-6));

        const auto down = oracle::to_real(data::preprocess(img, 9, 13));
        const auto ref_down = oracle::bilinear(oracle::to_real(img), 28, 28, 9, 13);
        for (std::size_t i = 0; i < ref_down.size(); ++i) CHECK(down[i] == doctest::Approx(ref_down[i]).epsilon(1e-6));

        CHECK((data::preprocess(img, 28, 28).to(torch::kDouble) - img).abs().max().item<double>() < 1e-6);
        const auto batch = data::preprocess(torch::rand({3, 10, 10}), 16, 16);
        CHECK(batch.sizes() == torch::IntArrayRef{3, 16, 16});
        CHECK(batch.min().item<double>() >= 0.0);
        CHECK(batch.max().item<double>() <= 1.0);
    }

    TEST_CASE("splits are deterministic and disjoint") {
        data::DatasetSpec spec;
        spec.train_count = 50;
        spec.val_count = 20;
        spec.test_count = 10;
        const auto a = data::make_splits(spec, 100);
        const auto b = data::make_splits(spec, 100);
        CHECK(a.train == b.train);
        CHECK(a.test == b.test);
        std::set<std::int64_t> seen(a.train.begin(), a.train.end());
        seen.insert(a.val.begin(), a.val.end());
        seen.insert(a.test.begin(), a.test.end());
        CHECK(seen.size() == 80);

        spec.subset_seed = 1;
        CHECK(data::make_splits(spec, 100).train != a.train);

        const auto sep = data::make_splits(spec, 80, 10);
        CHECK(sep.separate_test_pool);
        CHECK(sep.test.size() == 10);
        CHECK_THROWS_AS((void)data::make_splits(spec, 60), ConfigError);
    }

    TEST_CASE("dataset spec JSON round trip rejects unknown keys") {
        data::DatasetSpec spec;
        spec.height = 16;
        spec.subset_seed = 4;
        CHECK(data::DatasetSpec::from_json(spec.to_json()) == spec);
        auto j = spec.to_json();
        j["colour"] = true;
        CHECK_THROWS_AS((void)data::DatasetSpec::from_json(j), ConfigError);
    }

    TEST_CASE("synthetic garments load through the IDX path") {
        const auto dir = scratch("synth");
        data::write_synthetic_dataset(dir, 120, 40, 3);
        data::DatasetSpec spec;
        spec.root = dir.string();
        spec.height = spec.width = 16;
        spec.train_count = 60;
        spec.val_count = 30;
        spec.test_count = 40;
        const auto d = data::load_dataset(spec);
        CHECK(d.train.sizes() == torch::IntArrayRef{60, 16, 16});
        CHECK(d.val.size(0) == 30);
        CHECK(d.test.size(0) == 40);
        CHECK(d.train.max().item<double>() > 0.5);
        CHECK(torch::equal(data::synthesize_garments(10, 3).images, data::synthesize_garments(10, 3).images));
        fs::remove_all(dir);
    }
}

TEST_SUITE("metrics") {
    TEST_CASE("psnr basics") {
        torch::manual_seed(31);
        const auto x = torch::rand({16, 16}, torch::kDouble);
        CHECK(std::isinf(metrics::psnr(x, x)));
        CHECK(metrics::psnr(x + 0.1, x) == doctest::Approx(20.0).epsilon(1e-12));
        const auto y = torch::rand({16, 16}, torch::kDouble);
        const double mse = (x - y).square().mean().item<double>();
        CHECK(metrics::psnr(x, y) == doctest::Approx(10 * std::log10(1.0 / mse)).epsilon(1e-12));
        CHECK(metrics::psnr(x, y) == metrics::psnr(y, x));
        CHECK(metrics::psnr(x + 0.03, x) == metrics::psnr(x - 0.03, x));
        CHECK_THROWS_AS((void)metrics::psnr(x, torch::rand({16, 15}, torch::kDouble)), DimensionError);
    }

    TEST_CASE("ssim against references") {
        const auto [x, y] = ssim_pair();
        CHECK(metrics::ssim(x, y) == doctest::Approx(0.754314870753954).epsilon(1e-9));
        CHECK(metrics::ssim(x, y) == doctest::Approx(oracle::ssim(oracle::to_real(x), oracle::to_real(y), 24, 20)));
        CHECK(metrics::ssim(x, y) == doctest::Approx(metrics::ssim(y, x)).epsilon(1e-12));
        CHECK(metrics::ssim(x, x) == doctest::Approx(1.0));

        const auto c = torch::full({12, 12}, 0.4, torch::kDouble);
        CHECK(metrics::ssim(c, c) == doctest::Approx(1.0));

        const auto binary = (torch::rand({16, 16}, torch::kDouble) > 0.5).to(torch::kDouble);
        const double inv = metrics::ssim(1 - binary, binary);
        CHECK(inv < 1.0);
        CHECK(inv >= -1.0);
        CHECK(inv == doctest::Approx(oracle::ssim(oracle::to_real(1 - binary), oracle::to_real(binary), 16, 16)));
        CHECK_THROWS_AS((void)metrics::ssim(torch::rand({10, 30}), torch::rand({10, 30})), ConfigError);
    }

    TEST_CASE("aggregates") {
        const std::vector<double> v{3, 1, 2, 10};
        const auto a = metrics::aggregate(v);
        CHECK(a.mean == 4.0);
        CHECK(a.median == 2.5);
        CHECK(a.count == 4);
        CHECK(a.std == doctest::Approx(std::sqrt((1 + 9 + 4 + 36) / 4.0)));
        CHECK_THROWS_AS((void)metrics::aggregate(std::vector<double>{}), ConfigError);
        CHECK(metrics::format_value(std::numeric_limits<double>::infinity()) == "inf");
        CHECK(std::isinf(metrics::parse_value("inf")));
        CHECK(metrics::format_value(26.9412345) == "26.9412");
    }

    TEST_CASE("report CSV round-trips at six significant digits") {
        const auto dir = scratch("csv");
        metrics::MetricReport r;
        r.psnr = {21.123456789, std::numeric_limits<double>::infinity(), 0.000123456789};
        r.ssim = {0.91234567, 1.0, -0.25};
        metrics::write_report_csv(r, dir / "r.csv");
        const auto t = metrics::read_csv(dir / "r.csv");
        REQUIRE(t.rows.size() == 3);
        CHECK(t.header == std::vector<std::string>{"index", "psnr_db", "ssim"});
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(t.rows[i][1] == metrics::format_value(r.psnr[i]));
            CHECK(t.rows[i][2] == metrics::format_value(r.ssim[i]));
            CHECK(metrics::format_value(metrics::parse_value(t.rows[i][1])) == t.rows[i][1]);
        }
        fs::remove_all(dir);
    }

    TEST_CASE("report rendering") {
        const auto dir = scratch("reports");
        metrics::ReportInputs in;
        CHECK_THROWS_AS((void)metrics::render_reports(in, dir), IncompleteReportError);
        try {
            (void)metrics::render_reports(in, dir);
        } catch (const IncompleteReportError& e) {
            CHECK(std::string(e.what()).find("ablation runs") != std::string::npos);
        }

        for (int lt : {8, 1, 4, 2})
            for (int seed = 0; seed < 3; ++seed) {
                metrics::RunSummary s{"teacher", "", lt, 0, static_cast<std::uint64_t>(seed), "h", 20.0 + lt + seed,
                                      0.8};
                in.teacher_sweep.push_back(s);
                s.mode = "kd-student";
                s.snapshots = 1;
                s.teacher_snapshots = lt;
                in.student_sweep.push_back(s);
            }
        in.ablation.push_back({"kd-student", "cdp", 1, 4, 0, "h", 22.0, 0.85});
        metrics::ReconstructionPanel p;
        p.ground_truth = torch::rand({32, 32});
        p.systems.emplace_back("A", torch::rand({32, 32}));
        in.panels.push_back(p);
        const auto files = metrics::render_reports(in, dir);
        CHECK(files.size() >= 6);
        for (const auto& f : files) CHECK(fs::exists(f));

        const auto curve = metrics::read_csv(dir / "teacher_sweep.csv");
        REQUIRE(curve.rows.size() == 4);
        for (std::size_t i = 1; i < 4; ++i) CHECK(std::stoi(curve.rows[i][0]) > std::stoi(curve.rows[i - 1][0]));
        CHECK(curve.rows[0][1] == metrics::format_value(22.0));

        const auto abl = metrics::read_csv(dir / "ablation.csv");
        CHECK(abl.rows.size() == 1);
        fs::remove_all(dir);
    }
}
