#include "rsg/rsg.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>

#include "common/error.hpp"
#include "data/cifar.hpp"
#include "data/flatfile.hpp"
#include "metrics/report.hpp"
#include "rsg/rsg_module.hpp"
#include "train/config.hpp"
#include "train/gradcheck_suite.hpp"
#include "train/trainer.hpp"

struct rsg_config {
  rsg::train::RsgConfig cfg;
};

struct rsg_report {
  rsg::metrics::TrainingReport report;
};

namespace {

thread_local std::string g_last_error;

rsg_status fail(rsg_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs f and maps library exceptions onto status codes.
template <typename F>
rsg_status guarded(F&& f) {
  try {
    f();
    return RSG_OK;
  } catch (const rsg::ValidationError& e) {
    return fail(RSG_ERR_INVALID, e.what());
  } catch (const rsg::ShapeError& e) {
    return fail(RSG_ERR_SHAPE, e.what());
  } catch (const rsg::IoError& e) {
    return fail(RSG_ERR_IO, e.what());
  } catch (const rsg::FormatError& e) {
    return fail(RSG_ERR_FORMAT, e.what());
  } catch (const rsg::NumericError& e) {
    return fail(RSG_ERR_NUMERIC, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RSG_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RSG_ERR_INTERNAL, e.what());
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

rsg_epoch_row to_c(const rsg::metrics::EpochRow& r) {
  return {r.epoch, r.lr, r.l_cls, r.l_cesc, r.l_mv, r.s_new, r.val_top1};
}

#define RSG_REQUIRE(cond, msg) \
  if (!(cond)) return fail(RSG_ERR_INVALID, msg)

}  // namespace

extern "C" {

const char* rsg_version(void) { return "0.1.0"; }

const char* rsg_last_error(void) { return g_last_error.c_str(); }

const char* rsg_status_name(rsg_status status) {
  switch (status) {
    case RSG_OK: return "ok";
    case RSG_ERR_INVALID: return "invalid argument";
    case RSG_ERR_SHAPE: return "shape mismatch";
    case RSG_ERR_IO: return "i/o error";
    case RSG_ERR_FORMAT: return "malformed file";
    case RSG_ERR_NUMERIC: return "numeric error";
    case RSG_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void rsg_string_free(char* s) { std::free(s); }

rsg_status rsg_config_from_file(const char* path, rsg_config** out) {
  RSG_REQUIRE(path && out, "rsg_config_from_file: null argument");
  return guarded([&] { *out = new rsg_config{rsg::train::load_config(path)}; });
}

rsg_status rsg_config_from_json(const char* json, rsg_config** out) {
  RSG_REQUIRE(json && out, "rsg_config_from_json: null argument");
  return guarded([&] { *out = new rsg_config{rsg::train::parse_config(json)}; });
}

rsg_status rsg_config_set_seed(rsg_config* cfg, uint64_t seed) {
  RSG_REQUIRE(cfg, "rsg_config_set_seed: null config");
  cfg->cfg.seed = seed;
  cfg->cfg.dataset.seed = seed;
  return RSG_OK;
}

rsg_status rsg_config_to_json(const rsg_config* cfg, char** out) {
  RSG_REQUIRE(cfg && out, "rsg_config_to_json: null argument");
  return guarded([&] { *out = copy_string(rsg::train::config_to_json(cfg->cfg)); });
}

void rsg_config_free(rsg_config* cfg) { delete cfg; }

rsg_status rsg_train(const rsg_config* cfg, const char* out_dir, rsg_epoch_callback callback,
                     void* user, rsg_report** out) {
  RSG_REQUIRE(cfg && out, "rsg_train: null argument");
  return guarded([&] {
    rsg::train::RunOptions opts;
    if (out_dir) opts.out_dir = out_dir;
    if (callback) {
      opts.on_epoch = [callback, user](const rsg::metrics::EpochRow& row) {
        const rsg_epoch_row c = to_c(row);
        callback(&c, user);
      };
    }
    *out = new rsg_report{rsg::train::run_training(cfg->cfg, opts)};
  });
}

rsg_status rsg_evaluate(const rsg_config* cfg, const char* checkpoint, rsg_report** out) {
  RSG_REQUIRE(cfg && checkpoint && out, "rsg_evaluate: null argument");
  return guarded(
      [&] { *out = new rsg_report{rsg::train::evaluate_checkpoint(cfg->cfg, checkpoint)}; });
}

rsg_status rsg_report_write(const rsg_report* report, const char* dir) {
  RSG_REQUIRE(report && dir, "rsg_report_write: null argument");
  return guarded([&] { rsg::metrics::emit_report(report->report, dir); });
}

rsg_status rsg_report_to_json(const rsg_report* report, char** out) {
  RSG_REQUIRE(report && out, "rsg_report_to_json: null argument");
  return guarded([&] { *out = copy_string(rsg::metrics::report_to_json(report->report)); });
}

rsg_status rsg_report_to_csv(const rsg_report* report, char** out) {
  RSG_REQUIRE(report && out, "rsg_report_to_csv: null argument");
  return guarded([&] { *out = copy_string(rsg::metrics::report_to_csv(report->report)); });
}

rsg_status rsg_report_top1_error(const rsg_report* report, double* out) {
  RSG_REQUIRE(report && out, "rsg_report_top1_error: null argument");
  *out = report->report.top1_error;
  return RSG_OK;
}

rsg_status rsg_report_num_classes(const rsg_report* report, size_t* out) {
  RSG_REQUIRE(report && out, "rsg_report_num_classes: null argument");
  *out = report->report.per_class_error.size();
  return RSG_OK;
}

rsg_status rsg_report_class_error(const rsg_report* report, size_t cls, double* out,
                                  int* present) {
  RSG_REQUIRE(report && out && present, "rsg_report_class_error: null argument");
  const auto& errs = report->report.per_class_error;
  RSG_REQUIRE(cls < errs.size(), "rsg_report_class_error: class index out of range");
  *present = errs[cls].has_value();
  *out = errs[cls].value_or(0.0);
  return RSG_OK;
}

rsg_status rsg_report_shot_split(const rsg_report* report, double out[3], int present[3]) {
  RSG_REQUIRE(report && out && present, "rsg_report_shot_split: null argument");
  const auto& s = report->report.shot_split;
  const std::optional<double> v[3] = {s.many, s.medium, s.few};
  for (int i = 0; i < 3; ++i) {
    present[i] = v[i].has_value();
    out[i] = v[i].value_or(0.0);
  }
  return RSG_OK;
}

rsg_status rsg_report_num_epochs(const rsg_report* report, size_t* out) {
  RSG_REQUIRE(report && out, "rsg_report_num_epochs: null argument");
  *out = report->report.epochs.size();
  return RSG_OK;
}

rsg_status rsg_report_epoch(const rsg_report* report, size_t index, rsg_epoch_row* out) {
  RSG_REQUIRE(report && out, "rsg_report_epoch: null argument");
  RSG_REQUIRE(index < report->report.epochs.size(), "rsg_report_epoch: index out of range");
  *out = to_c(report->report.epochs[index]);
  return RSG_OK;
}

void rsg_report_free(rsg_report* report) { delete report; }

rsg_status rsg_gradcheck(uint64_t seed, rsg_gradcheck_entry* entries, size_t capacity,
                         size_t* count) {
  RSG_REQUIRE(count && (entries || capacity == 0), "rsg_gradcheck: null argument");
  return guarded([&] {
    const auto results = rsg::train::run_gradcheck_suite(seed);
    *count = results.size();
    for (size_t i = 0; i < results.size() && i < capacity; ++i) {
      std::memset(entries[i].name, 0, sizeof entries[i].name);
      std::strncpy(entries[i].name, results[i].name.c_str(), sizeof entries[i].name - 1);
      entries[i].max_error = results[i].max_error;
      entries[i].coordinates = results[i].coordinates;
    }
  });
}

double rsg_gradcheck_tolerance(void) { return rsg::train::kGradcheckTolerance; }

rsg_status rsg_datagen(const rsg_config* cfg, const char* out_dir, size_t* train_size,
                       size_t* val_size) {
  RSG_REQUIRE(cfg && out_dir, "rsg_datagen: null argument");
  return guarded([&] {
    const auto splits = rsg::data::build_dataset(cfg->cfg.dataset);
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw rsg::IoError("cannot create " + dir.string() + ": " + ec.message());
    rsg::data::write_dataset_cache(dir / "train.bin", splits.train);
    rsg::data::write_dataset_cache(dir / "val.bin", splits.val);
    if (train_size) *train_size = splits.train.size();
    if (val_size) *val_size = splits.val.size();
  });
}

rsg_status rsg_generation_count(double beta, size_t s_freq, size_t s_rare, size_t* out) {
  RSG_REQUIRE(out, "rsg_generation_count: null argument");
  RSG_REQUIRE(beta > 0.0 && beta <= 1.0, "rsg_generation_count: beta must lie in (0, 1]");
  *out = rsg::generated_count(beta, s_freq, s_rare);
  return RSG_OK;
}

rsg_status rsg_lr_at(const rsg_config* cfg, size_t epoch, double* out) {
  RSG_REQUIRE(cfg && out, "rsg_lr_at: null argument");
  *out = rsg::train::lr_at(epoch, cfg->cfg);
  return RSG_OK;
}

rsg_status rsg_cifar_validate(const char* path, size_t* records) {
  RSG_REQUIRE(path && records, "rsg_cifar_validate: null argument");
  return guarded([&] { *records = rsg::data::read_cifar10_file(path).size(); });
}

}  // extern "C"
