#pragma once

// Image-quality metrics (PSNR, SSIM), aggregate reports, and the CSV/PNG
// artifacts summarizing sweeps, ablations and reconstructions.

#include <nlohmann/json.hpp>
#include <torch/types.h>

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace prkd::metrics {

/// 10 log10(peak^2 / MSE). Identical inputs give +infinity.
[[nodiscard]] double psnr(const torch::Tensor& estimate, const torch::Tensor& reference, double peak = 1.0);

struct SsimParams {
    int window = 11;
    double gaussian_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Mean SSIM over all fully-contained Gaussian windows of two 2-D images.
[[nodiscard]] double ssim(const torch::Tensor& estimate, const torch::Tensor& reference, const SsimParams& p = {});

struct Aggregate {
    double mean = 0.0;
    double median = 0.0;
    double std = 0.0;  // population standard deviation
    std::size_t count = 0;
};

/// Throws ConfigError on an empty set. Infinite values propagate.
[[nodiscard]] Aggregate aggregate(std::span<const double> values);
[[nodiscard]] double median(std::vector<double> values);

/// 6 significant digits; +inf as "inf".
[[nodiscard]] std::string format_value(double v);
[[nodiscard]] double parse_value(const std::string& s);

struct MetricReport {
    std::vector<double> psnr;
    std::vector<double> ssim;
    /// Images whose spectral initialization collapsed; excluded from psnr/ssim.
    std::vector<std::int64_t> degenerate_images;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string split;

    [[nodiscard]] Aggregate psnr_summary() const { return aggregate(psnr); }
    [[nodiscard]] Aggregate ssim_summary() const { return aggregate(ssim); }
    [[nodiscard]] nlohmann::json summary_json() const;
};

/// Per-image CSV: index,psnr_db,ssim, preceded by a header row.
void write_report_csv(const MetricReport& report, const std::filesystem::path& path);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

void write_csv(const CsvTable& table, const std::filesystem::path& path);
[[nodiscard]] CsvTable read_csv(const std::filesystem::path& path);

/// One finished run as it enters a figure or table.
struct RunSummary {
    std::string mode;      // teacher / e2e-baseline / random-baseline / kd-student
    std::string variant;   // ablation tag, e.g. "cdp+feat"; empty otherwise
    int snapshots = 1;     // L of this run
    int teacher_snapshots = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    double psnr = 0.0;     // mean test PSNR of the run
    double ssim = 0.0;
};

/// One test image reconstructed by several systems.
struct ReconstructionPanel {
    torch::Tensor ground_truth;                          // (H, W)
    std::vector<std::pair<std::string, torch::Tensor>> systems;  // label, (H, W)
};

struct ReportInputs {
    std::vector<RunSummary> teacher_sweep;
    std::vector<RunSummary> student_sweep;
    std::vector<RunSummary> ablation;
    std::vector<ReconstructionPanel> panels;
};

struct ReportRequest {
    bool teacher_curve = true;
    bool student_curve = true;
    bool ablation_table = true;
    bool reconstruction_grid = true;
};

/// Writes into `out_dir`:
///   teacher_sweep.csv/.png   median PSNR/SSIM vs teacher snapshots
///   student_sweep.csv/.png   student median PSNR/SSIM vs teacher snapshots
///   ablation.csv             the four on/off combinations of the KD terms
///   reconstructions.png      side-by-side grid with PSNR/SSIM captions
/// Throws IncompleteReportError naming every requested artifact without runs.
/// Returns the written paths.
std::vector<std::filesystem::path> render_reports(const ReportInputs& inputs, const std::filesystem::path& out_dir,
                                                  const ReportRequest& request = {});

}  // namespace prkd::metrics
