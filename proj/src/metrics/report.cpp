#include "metrics/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "common/error.hpp"
#include "json.hpp"

namespace rsg::metrics {

namespace {

using nlohmann::ordered_json;

ordered_json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round6(v);
}

ordered_json opt(const std::optional<double>& v) { return v ? num(*v) : ordered_json(nullptr); }

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::optional<double> TrainingReport::few_shot_error() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < per_class_error.size() && c < train_counts.size(); ++c) {
    if (per_class_error[c] && shot_bucket(train_counts[c]) == ShotBucket::kFew) {
      sum += *per_class_error[c];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double round6(double v) {
  if (!std::isfinite(v)) return v;
  return std::strtod(fmt6(v).c_str(), nullptr);
}

std::string report_to_json(const TrainingReport& r) {
  ordered_json j;
  j["seed"] = r.seed;
  j["config"] = r.config_json.empty() ? ordered_json(nullptr) : ordered_json::parse(r.config_json);
  ordered_json epochs = ordered_json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back(ordered_json{{"epoch", e.epoch},
                                  {"lr", num(e.lr)},
                                  {"l_cls", num(e.l_cls)},
                                  {"l_cesc", num(e.l_cesc)},
                                  {"l_mv", num(e.l_mv)},
                                  {"s_new", e.s_new},
                                  {"val_top1", num(e.val_top1)}});
  }
  j["epochs"] = epochs;
  j["top1_error"] = num(r.top1_error);
  ordered_json per_class = ordered_json::array();
  for (std::size_t c = 0; c < r.per_class_error.size(); ++c) {
    per_class.push_back(ordered_json{
        {"class", c},
        {"train_count", c < r.train_counts.size() ? ordered_json(r.train_counts[c]) : nullptr},
        {"error", opt(r.per_class_error[c])}});
  }
  j["per_class_error"] = per_class;
  j["shot_split"] = ordered_json{
      {"boundaries", "many: more than 100 train samples; medium: 20 to 100 inclusive; few: fewer than 20"},
      {"many_accuracy", opt(r.shot_split.many)},
      {"medium_accuracy", opt(r.shot_split.medium)},
      {"few_accuracy", opt(r.shot_split.few)}};
  j["checkpoint"] = r.checkpoint;
  return j.dump(2) + "\n";
}

std::string report_to_csv(const TrainingReport& r) {
  std::string out = "epoch,lr,l_cls,l_cesc,l_mv,s_new,val_top1\n";
  for (const auto& e : r.epochs) {
    out += std::to_string(e.epoch) + "," + fmt6(e.lr) + "," + fmt6(e.l_cls) + "," +
           fmt6(e.l_cesc) + "," + fmt6(e.l_mv) + "," + std::to_string(e.s_new) + "," +
           fmt6(e.val_top1) + "\n";
  }
  return out;
}

void emit_report(const TrainingReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / kReportJson, report_to_json(report));
  write_file(dir / kReportCsv, report_to_csv(report));
}

}  // namespace rsg::metrics
