#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "motion/dataset.hpp"
#include "motion/model.hpp"

namespace motion {

// joint_l2 sums the squared error over a joint's coordinates (cm^2 per joint);
// coordinate_mean additionally divides by the coordinate count.
enum class MseMode { joint_l2, coordinate_mean };

std::string_view mse_mode_name(MseMode m);
MseMode parse_mse_mode(std::string_view name);

struct MseResult {
    double total = 0.0;
    std::vector<double> per_frame;  // averaged over joints only
};

// pred and truth are [T x J*dims] in centimeters.
MseResult mse_metric(const Tensor& pred, const Tensor& truth, std::size_t dims, MseMode mode = MseMode::joint_l2);

// H copies of the last observed frame.
Tensor zero_velocity_baseline(const MotionWindow& window, std::size_t horizon);

inline constexpr std::string_view kMethodZeroVelocity = "zero_velocity";
inline constexpr std::string_view kMethodPhase1 = "phase1_only";
inline constexpr std::string_view kMethodPhase2 = "phase1_phase2";

// Per-frame MSE averaged over windows.
struct EvalCurve {
    std::string method;
    std::vector<double> per_frame;
    std::size_t n_windows = 0;
};

EvalCurve evaluate_predictions(std::string method, std::span<const Tensor> predictions,
                               std::span<const MotionWindow> windows, std::size_t dims, MseMode mode);
EvalCurve evaluate_baseline(std::span<const MotionWindow> windows, std::size_t dims, MseMode mode = MseMode::joint_l2);
EvalCurve evaluate_model(std::string method, const ModelParams& params, const NormStats& stats,
                         std::span<const MotionWindow> windows, MseMode mode = MseMode::joint_l2);

// Method label as written to reports; the non-default metric is tagged.
std::string method_label(std::string_view method, MseMode mode);

struct ReportRow {
    int subject = 0;
    std::string method;
    std::size_t frame_index = 0;  // 1-based offset into the horizon
    double mse_cm2 = 0.0;
    std::size_t n_windows = 0;
    std::uint64_t seed = 0;

    bool operator==(const ReportRow&) const = default;
};

std::vector<std::size_t> default_frame_indices();  // 2, 4, 8, 10, 13, 15

std::vector<ReportRow> report_rows(int subject, const EvalCurve& curve, std::span<const std::size_t> frames,
                                   std::uint64_t seed);

// Columns: subject,method,frame_index,mse_cm2,n_windows,seed.
void save_report(const std::filesystem::path& path, std::span<const ReportRow> rows);
std::vector<ReportRow> load_report(const std::filesystem::path& path);

// Columns: method,frame_index,mse_cm2.
void save_curves(const std::filesystem::path& path, std::span<const EvalCurve> curves);
std::vector<EvalCurve> load_curves(const std::filesystem::path& path);

struct CompareTable {
    std::string text;              // human-readable, best per column starred
    std::vector<ReportRow> rows;   // same content in report order, for CSV
};

// Values tie when they agree after rounding to two decimals; every tied entry
// is starred. All (subject, method) pairs must cover the same frame indices.
CompareTable compare_table(std::span<const ReportRow> rows);

}  // namespace motion
