#include "prkd/metrics.hpp"

#include "prkd/error.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace prkd::metrics {

namespace fs = std::filesystem;

namespace {

torch::Tensor as_image(const torch::Tensor& t, const char* what) {
    auto s = t.detach().to(torch::kCPU, torch::kDouble).squeeze();
    if (s.dim() != 2) throw DimensionError(std::string(what) + ": expected a 2-D image, got " + c10::str(t.sizes()));
    return s.contiguous();
}

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        w[static_cast<std::size_t>(i)] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Separable "valid" filtering of a row-major H x W image.
std::vector<double> filter_valid(const std::vector<double>& img, int H, int W, const std::vector<double>& w) {
    const int k = static_cast<int>(w.size());
    const int Ho = H - k + 1;
    const int Wo = W - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(H * Wo));
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < Wo; ++c) {
            double s = 0.0;
            for (int j = 0; j < k; ++j) s += w[static_cast<std::size_t>(j)] * img[static_cast<std::size_t>(r * W + c + j)];
            tmp[static_cast<std::size_t>(r * Wo + c)] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(Ho * Wo));
    for (int r = 0; r < Ho; ++r)
        for (int c = 0; c < Wo; ++c) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += w[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((r + i) * Wo + c)];
            out[static_cast<std::size_t>(r * Wo + c)] = s;
        }
    return out;
}

}  // namespace

double psnr(const torch::Tensor& estimate, const torch::Tensor& reference, double peak) {
    if (estimate.sizes() != reference.sizes())
        throw DimensionError("psnr: shapes " + c10::str(estimate.sizes()) + " and " + c10::str(reference.sizes()) +
                             " differ");
    if (!(peak > 0.0)) throw ConfigError("psnr: peak must be positive");
    const auto d = estimate.detach().to(torch::kDouble) - reference.detach().to(torch::kDouble);
    const double mse = d.square().mean().item<double>();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const torch::Tensor& estimate, const torch::Tensor& reference, const SsimParams& p) {
    const auto a = as_image(estimate, "ssim");
    const auto b = as_image(reference, "ssim");
    if (a.sizes() != b.sizes()) throw DimensionError("ssim: image shapes differ");
    const int H = static_cast<int>(a.size(0));
    const int W = static_cast<int>(a.size(1));
    if (H < p.window || W < p.window)
        throw ConfigError("ssim: image " + std::to_string(H) + "x" + std::to_string(W) + " smaller than the " +
                          std::to_string(p.window) + "x" + std::to_string(p.window) + " window");

    const std::vector<double> x(a.data_ptr<double>(), a.data_ptr<double>() + a.numel());
    const std::vector<double> y(b.data_ptr<double>(), b.data_ptr<double>() + b.numel());
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto w = gaussian_window(p.window, p.gaussian_sigma);
    const auto mx = filter_valid(x, H, W, w);
    const auto my = filter_valid(y, H, W, w);
    const auto sxx = filter_valid(xx, H, W, w);
    const auto syy = filter_valid(yy, H, W, w);
    const auto sxy = filter_valid(xy, H, W, w);

    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.size());
}

double median(std::vector<double> values) {
    if (values.empty()) throw ConfigError("median of an empty set");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Aggregate aggregate(std::span<const double> values) {
    if (values.empty()) throw ConfigError("aggregate of an empty set");
    Aggregate a;
    a.count = values.size();
    a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    a.median = median({values.begin(), values.end()});
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::isfinite(a.mean) ? std::sqrt(ss / static_cast<double>(values.size())) : 0.0;
    return a;
}

std::string format_value(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double parse_value(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw FormatError("trailing characters in numeric field '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw FormatError("not a number: '" + s + "'");
    }
}

nlohmann::json MetricReport::summary_json() const {
    nlohmann::json j = {{"config_hash", config_hash},
                        {"seed", seed},
                        {"split", split},
                        {"images", psnr.size()},
                        {"degenerate_images", degenerate_images}};
    if (!psnr.empty()) {
        const auto p = psnr_summary();
        const auto s = ssim_summary();
        j["psnr"] = {{"mean", format_value(p.mean)}, {"median", format_value(p.median)}, {"std", format_value(p.std)}};
        j["ssim"] = {{"mean", format_value(s.mean)}, {"median", format_value(s.median)}, {"std", format_value(s.std)}};
    }
    return j;
}

void write_csv(const CsvTable& table, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    auto row_out = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    };
    row_out(table.header);
    for (const auto& row : table.rows) row_out(row);
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != t.header.size()) throw FormatError("ragged CSV row in '" + path.string() + "'");
            t.rows.push_back(std::move(cells));
        }
    }
    if (first) throw FormatError("empty CSV '" + path.string() + "'");
    return t;
}

void write_report_csv(const MetricReport& report, const fs::path& path) {
    CsvTable t{{"index", "psnr_db", "ssim"}, {}};
    for (std::size_t i = 0; i < report.psnr.size(); ++i)
        t.rows.push_back({std::to_string(i), format_value(report.psnr[i]), format_value(report.ssim[i])});
    write_csv(t, path);
}

}  // namespace prkd::metrics
