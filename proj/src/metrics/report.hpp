#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "metrics/metrics.hpp"

namespace rsg::metrics {

struct EpochRow {
  std::size_t epoch = 0;
  double lr = 0.0;
  double l_cls = 0.0;   // means over the epoch's steps
  double l_cesc = 0.0;
  double l_mv = 0.0;
  std::size_t s_new = 0;  // generated samples over the epoch
  double val_top1 = 0.0;  // percent error on the validation split
};

struct TrainingReport {
  std::vector<EpochRow> epochs;
  std::vector<std::optional<double>> per_class_error;
  std::vector<std::size_t> train_counts;
  double top1_error = 0.0;
  ShotSplit shot_split;
  std::string config_json;  // canonical config echo; empty when unknown
  std::uint64_t seed = 0;
  std::string checkpoint;   // path relative to the report directory

  /// Mean error over classes whose training count is below 20.
  std::optional<double> few_shot_error() const;
};

/// v rounded to 6 significant digits; non-finite values pass through.
double round6(double v);

std::string report_to_json(const TrainingReport& report);
/// Header epoch,lr,l_cls,l_cesc,l_mv,s_new,val_top1 and one row per epoch.
std::string report_to_csv(const TrainingReport& report);

inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportCsv = "epochs.csv";

/// Writes report.json and epochs.csv into `dir`, creating it if needed.
void emit_report(const TrainingReport& report, const std::filesystem::path& dir);

}  // namespace rsg::metrics
