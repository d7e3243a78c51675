#include "prkd/error.hpp"
#include "prkd/metrics.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace prkd::metrics {

namespace fs = std::filesystem;

namespace {

struct CurvePoint {
    int x;
    double psnr;
    double ssim;
    std::size_t runs;
};

// Median over seeds of each run group keyed by `key`.
template <typename Key>
std::vector<CurvePoint> median_curve(const std::vector<RunSummary>& runs, Key key) {
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : runs) {
        auto& g = groups[key(r)];
        g.first.push_back(r.psnr);
        g.second.push_back(r.ssim);
    }
    std::vector<CurvePoint> curve;
    for (auto& [x, g] : groups) curve.push_back({x, median(g.first), median(g.second), g.first.size()});
    return curve;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& x_name, const fs::path& path) {
    CsvTable t{{x_name, "psnr_median_db", "ssim_median", "runs"}, {}};
    for (const auto& p : curve)
        t.rows.push_back({std::to_string(p.x), format_value(p.psnr), format_value(p.ssim), std::to_string(p.runs)});
    write_csv(t, path);
}

void put_text(cv::Mat& img, const std::string& text, cv::Point at, double scale = 0.45) {
    cv::putText(img, text, at, cv::FONT_HERSHEY_SIMPLEX, scale, cv::Scalar(20, 20, 20), 1, cv::LINE_AA);
}

// Two stacked panels (PSNR on top, SSIM below) against an integer x axis.
void plot_curve(const std::vector<CurvePoint>& curve, const std::string& title, const std::string& x_label,
                const fs::path& path) {
    constexpr int width = 640;
    constexpr int panel_h = 260;
    constexpr int left = 80, right = 30, top = 40, bottom = 50;
    cv::Mat img(2 * panel_h + top, width, CV_8UC3, cv::Scalar(255, 255, 255));
    put_text(img, title, {left, 25}, 0.6);

    int xmin = curve.front().x;
    int xmax = curve.back().x;
    if (xmin == xmax) {
        --xmin;
        ++xmax;
    }
    auto panel = [&](int y0, const char* label, auto value) {
        double lo = value(curve.front());
        double hi = lo;
        for (const auto& p : curve) {
            lo = std::min(lo, value(p));
            hi = std::max(hi, value(p));
        }
        if (!std::isfinite(lo) || !std::isfinite(hi)) return;
        const double pad = std::max(1e-3, 0.1 * (hi - lo));
        lo -= pad;
        hi += pad;
        const int x0 = left, x1 = width - right, ya = y0 + 10, yb = y0 + panel_h - bottom;
        cv::rectangle(img, {x0, ya}, {x1, yb}, cv::Scalar(120, 120, 120), 1);
        auto px = [&](double x) { return x0 + static_cast<int>((x - xmin) / (xmax - xmin) * (x1 - x0)); };
        auto py = [&](double v) { return yb - static_cast<int>((v - lo) / (hi - lo) * (yb - ya)); };
        for (int t = 0; t <= 4; ++t) {
            const double v = lo + (hi - lo) * t / 4.0;
            put_text(img, format_value(std::round(v * 1000) / 1000), {5, py(v) + 4}, 0.4);
            cv::line(img, {x0 - 4, py(v)}, {x0, py(v)}, cv::Scalar(120, 120, 120));
        }
        for (const auto& p : curve) {
            put_text(img, std::to_string(p.x), {px(p.x) - 4, yb + 18}, 0.4);
        }
        put_text(img, label, {x0 + 8, ya + 18});
        for (std::size_t i = 0; i + 1 < curve.size(); ++i)
            cv::line(img, {px(curve[i].x), py(value(curve[i]))}, {px(curve[i + 1].x), py(value(curve[i + 1]))},
                     cv::Scalar(180, 80, 30), 2, cv::LINE_AA);
        for (const auto& p : curve) cv::circle(img, {px(p.x), py(value(p))}, 4, cv::Scalar(40, 40, 200), cv::FILLED);
        put_text(img, x_label, {(x0 + x1) / 2 - 60, yb + 38}, 0.45);
    };
    panel(top, "PSNR (dB), median over seeds", [](const CurvePoint& p) { return p.psnr; });
    panel(top + panel_h, "SSIM, median over seeds", [](const CurvePoint& p) { return p.ssim; });
    if (!cv::imwrite(path.string(), img)) throw IoError("cannot write '" + path.string() + "'");
}

cv::Mat to_tile(const torch::Tensor& image, int zoom) {
    auto t = image.detach().to(torch::kCPU, torch::kFloat).squeeze().clamp(0.0, 1.0).contiguous();
    const int h = static_cast<int>(t.size(0));
    const int w = static_cast<int>(t.size(1));
    cv::Mat gray(h, w, CV_32F, t.data_ptr<float>());
    cv::Mat bytes;
    gray.convertTo(bytes, CV_8U, 255.0);
    cv::Mat big;
    cv::resize(bytes, big, {w * zoom, h * zoom}, 0, 0, cv::INTER_NEAREST);
    cv::Mat color;
    cv::cvtColor(big, color, cv::COLOR_GRAY2BGR);
    return color;
}

void render_grid(const std::vector<ReconstructionPanel>& panels, const fs::path& path) {
    constexpr int zoom = 4;
    constexpr int caption = 36;
    constexpr int gap = 8;
    const auto& first = panels.front();
    const int th = static_cast<int>(first.ground_truth.size(-2)) * zoom;
    const int tw = static_cast<int>(first.ground_truth.size(-1)) * zoom;
    const int cols = 1 + static_cast<int>(first.systems.size());
    const int rows = static_cast<int>(panels.size());
    cv::Mat img(24 + rows * (th + caption + gap), cols * (tw + gap) + gap, CV_8UC3, cv::Scalar(255, 255, 255));

    put_text(img, "ground truth", {gap, 16}, 0.4);
    for (int c = 1; c < cols; ++c)
        put_text(img, first.systems[static_cast<std::size_t>(c - 1)].first, {gap + c * (tw + gap), 16}, 0.4);

    for (int r = 0; r < rows; ++r) {
        const auto& p = panels[static_cast<std::size_t>(r)];
        const int y = 24 + r * (th + caption + gap);
        to_tile(p.ground_truth, zoom).copyTo(img(cv::Rect(gap, y, tw, th)));
        for (int c = 1; c < cols && c - 1 < static_cast<int>(p.systems.size()); ++c) {
            const auto& est = p.systems[static_cast<std::size_t>(c - 1)].second;
            const int x = gap + c * (tw + gap);
            to_tile(est, zoom).copyTo(img(cv::Rect(x, y, tw, th)));
            const auto clipped = est.detach().to(torch::kDouble).squeeze().clamp(0.0, 1.0);
            const auto truth = p.ground_truth.detach().to(torch::kDouble).squeeze();
            put_text(img, format_value(std::round(psnr(clipped, truth) * 100) / 100) + " dB", {x, y + th + 14}, 0.4);
            put_text(img, "SSIM " + format_value(std::round(ssim(clipped, truth) * 1000) / 1000), {x, y + th + 30}, 0.4);
        }
    }
    if (!cv::imwrite(path.string(), img)) throw IoError("cannot write '" + path.string() + "'");
}

const char* ablation_order[] = {"cdp", "cdp+feat", "feat", "none"};

}  // namespace

std::vector<fs::path> render_reports(const ReportInputs& inputs, const fs::path& out_dir, const ReportRequest& request) {
    std::vector<std::string> missing;
    if (request.teacher_curve && inputs.teacher_sweep.empty()) missing.push_back("teacher sweep runs");
    if (request.student_curve && inputs.student_sweep.empty()) missing.push_back("student sweep runs");
    if (request.ablation_table && inputs.ablation.empty()) missing.push_back("ablation runs");
    if (request.reconstruction_grid && inputs.panels.empty()) missing.push_back("reconstruction panels");
    if (!missing.empty()) {
        std::string msg = "cannot render reports, missing:";
        for (const auto& m : missing) msg += " [" + m + "]";
        throw IncompleteReportError(msg);
    }
    fs::create_directories(out_dir);
    std::vector<fs::path> written;

    if (request.teacher_curve) {
        const auto curve = median_curve(inputs.teacher_sweep, [](const RunSummary& r) { return r.snapshots; });
        write_curve_csv(curve, "teacher_snapshots", out_dir / "teacher_sweep.csv");
        plot_curve(curve, "Teacher performance vs. snapshots", "teacher snapshots L_t", out_dir / "teacher_sweep.png");
        written.push_back(out_dir / "teacher_sweep.csv");
        written.push_back(out_dir / "teacher_sweep.png");
    }
    if (request.student_curve) {
        const auto curve = median_curve(inputs.student_sweep, [](const RunSummary& r) { return r.teacher_snapshots; });
        write_curve_csv(curve, "teacher_snapshots", out_dir / "student_sweep.csv");
        plot_curve(curve, "Single-snapshot student vs. teacher snapshots", "teacher snapshots L_t",
                   out_dir / "student_sweep.png");
        written.push_back(out_dir / "student_sweep.csv");
        written.push_back(out_dir / "student_sweep.png");
    }
    if (request.ablation_table) {
        CsvTable t{{"l_cdp", "l_feat", "psnr_median_db", "ssim_median", "runs"}, {}};
        for (const char* tag : ablation_order) {
            std::vector<double> p, s;
            for (const auto& r : inputs.ablation)
                if (r.variant == tag) {
                    p.push_back(r.psnr);
                    s.push_back(r.ssim);
                }
            if (p.empty()) continue;
            const std::string v = tag;
            const bool cdp = v == "cdp" || v == "cdp+feat";
            const bool feat = v == "feat" || v == "cdp+feat";
            t.rows.push_back({cdp ? "on" : "off", feat ? "on" : "off", format_value(median(p)), format_value(median(s)),
                              std::to_string(p.size())});
        }
        write_csv(t, out_dir / "ablation.csv");
        written.push_back(out_dir / "ablation.csv");
    }
    if (request.reconstruction_grid) {
        render_grid(inputs.panels, out_dir / "reconstructions.png");
        written.push_back(out_dir / "reconstructions.png");
    }
    return written;
}

}  // namespace prkd::metrics
