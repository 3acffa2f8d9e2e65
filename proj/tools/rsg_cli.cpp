// Command-line front end. Talks to the library only through the C API.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rsg/rsg.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

int report_failure(rsg_status status) {
  std::cerr << "error: " << rsg_status_name(status) << ": " << rsg_last_error() << "\n";
  return status == RSG_ERR_NUMERIC ? kExitNumeric : kExitValidation;
}

struct ConfigHandle {
  rsg_config* ptr = nullptr;
  ~ConfigHandle() { rsg_config_free(ptr); }
};

struct ReportHandle {
  rsg_report* ptr = nullptr;
  ~ReportHandle() { rsg_report_free(ptr); }
};

void print_epoch(const rsg_epoch_row* row, void*) {
  std::fprintf(stderr,
               "epoch %zu lr %.6g l_cls %.6g l_cesc %.6g l_mv %.6g s_new %zu val_top1 %.6g\n",
               row->epoch, row->lr, row->l_cls, row->l_cesc, row->l_mv, row->s_new,
               row->val_top1);
}

void print_summary(const rsg_report* report) {
  double top1 = 0.0;
  rsg_report_top1_error(report, &top1);
  std::printf("top1_error %.6g\n", top1);
  size_t n_cls = 0;
  rsg_report_num_classes(report, &n_cls);
  for (size_t c = 0; c < n_cls; ++c) {
    double err = 0.0;
    int present = 0;
    rsg_report_class_error(report, c, &err, &present);
    if (present) {
      std::printf("class %zu error %.6g\n", c, err);
    } else {
      std::printf("class %zu error n/a\n", c);
    }
  }
  double split[3];
  int present[3];
  rsg_report_shot_split(report, split, present);
  const char* names[3] = {"many", "medium", "few"};
  for (int i = 0; i < 3; ++i) {
    if (present[i]) {
      std::printf("%s_shot_accuracy %.6g\n", names[i], split[i]);
    } else {
      std::printf("%s_shot_accuracy n/a\n", names[i]);
    }
  }
}

int load_config(const std::string& path, const std::uint64_t* seed, ConfigHandle& cfg) {
  if (rsg_status s = rsg_config_from_file(path.c_str(), &cfg.ptr); s != RSG_OK) {
    return report_failure(s);
  }
  if (seed) rsg_config_set_seed(cfg.ptr, *seed);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rare-class sample generator: training and evaluation", "rsg"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  std::uint64_t seed = 0;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "Train a model and write report and checkpoint");
  train->add_option("--config", config_path, "JSON config file")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  auto* train_seed = train->add_option("--seed", seed, "Override the config seed");
  train->add_flag("--quiet", quiet, "Do not print per-epoch progress");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on the validation split");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--config", config_path,
                       "JSON config (default: config.json next to the checkpoint)");
  evaluate->add_option("--out", out_dir, "Write report.json and epochs.csv here");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  gradcheck->add_option("--seed", seed, "Seed of the toy problem");

  auto* datagen = app.add_subcommand("datagen", "Materialize the dataset cache of a config");
  datagen->add_option("--config", config_path, "JSON config file")->required();
  datagen->add_option("--out", out_dir, "Output directory")->required();
  auto* datagen_seed = datagen->add_option("--seed", seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    return kExitValidation;
  }

  if (*train) {
    ConfigHandle cfg;
    if (int rc = load_config(config_path, *train_seed ? &seed : nullptr, cfg)) return rc;
    ReportHandle report;
    rsg_status s = rsg_train(cfg.ptr, out_dir.c_str(), quiet ? nullptr : print_epoch, nullptr,
                             &report.ptr);
    if (s != RSG_OK) return report_failure(s);
    print_summary(report.ptr);
    std::printf("report written to %s\n", out_dir.c_str());
    return kExitOk;
  }

  if (*evaluate) {
    if (config_path.empty()) {
      config_path = (std::filesystem::path(checkpoint).parent_path() / "config.json").string();
    }
    ConfigHandle cfg;
    if (int rc = load_config(config_path, nullptr, cfg)) return rc;
    ReportHandle report;
    if (rsg_status s = rsg_evaluate(cfg.ptr, checkpoint.c_str(), &report.ptr); s != RSG_OK) {
      return report_failure(s);
    }
    print_summary(report.ptr);
    if (!out_dir.empty()) {
      if (rsg_status s = rsg_report_write(report.ptr, out_dir.c_str()); s != RSG_OK) {
        return report_failure(s);
      }
    }
    return kExitOk;
  }

  if (*gradcheck) {
    rsg_gradcheck_entry entries[8];
    size_t count = 0;
    if (rsg_status s = rsg_gradcheck(seed, entries, 8, &count); s != RSG_OK) {
      return report_failure(s);
    }
    const double tol = rsg_gradcheck_tolerance();
    bool ok = true;
    for (size_t i = 0; i < count && i < 8; ++i) {
      const bool pass = entries[i].max_error < tol;
      ok = ok && pass;
      std::printf("%-14s max_rel_error %.3e  (%zu coordinates) %s\n", entries[i].name,
                  entries[i].max_error, entries[i].coordinates, pass ? "ok" : "FAIL");
    }
    if (!ok) {
      std::fprintf(stderr, "gradcheck: some losses exceed tolerance %.0e\n", tol);
      return kExitNumeric;
    }
    return kExitOk;
  }

  if (*datagen) {
    ConfigHandle cfg;
    if (int rc = load_config(config_path, *datagen_seed ? &seed : nullptr, cfg)) return rc;
    size_t n_train = 0, n_val = 0;
    if (rsg_status s = rsg_datagen(cfg.ptr, out_dir.c_str(), &n_train, &n_val); s != RSG_OK) {
      return report_failure(s);
    }
    std::printf("wrote %zu training and %zu validation samples to %s\n", n_train, n_val,
                out_dir.c_str());
    return kExitOk;
  }
  return kExitValidation;
}
