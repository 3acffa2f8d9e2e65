#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "metrics/report.hpp"
#include "nn/backbone.hpp"
#include "rsg/rsg_module.hpp"
#include "train/config.hpp"
#include "train/optimizer.hpp"

namespace rsg::train {

/// The backbone plus every RSG module.
struct Model {
  nn::Backbone backbone;
  ClassCenters centers;
  CenterEstimator ce;
  ContrastiveModule cm;
  VectorTransform vt;

  /// Backbone and RSG modules draw from separate seeded streams, so the
  /// backbone initialization does not depend on any RSG setting.
  static Model create(const RsgConfig& cfg, std::size_t in_channels);

  std::vector<ad::Tensor> rsg_parameters() const;
  /// Backbone parameters, then centers, estimator, contrastive module and
  /// vector transform.
  std::vector<ad::Tensor> parameters() const;
};

/// Checkpoints hold every parameter in Model::parameters() order followed by
/// the batch-norm running statistics, in the flat-float format.
void save_checkpoint(Model& model, const std::filesystem::path& path);
void load_checkpoint(Model& model, const std::filesystem::path& path);

/// The graph of one training step, before backward.
struct StepLosses {
  ad::Tensor l_cls;
  ad::Tensor l_cesc;  // undefined when lambda1 == 0
  ad::Tensor l_mv;    // undefined unless samples were generated and lambda2 > 0
  ad::Tensor total;
  ad::Tensor features;  // backbone output at the hook
  std::size_t s_new = 0;
};

struct StepRecord {
  double l_cls = 0.0;
  double l_cesc = 0.0;
  double l_mv = 0.0;
  std::size_t s_new = 0;
};

struct Evaluation {
  std::vector<std::size_t> predicted;
  std::vector<std::optional<double>> per_class_error;
  double top1_error = 0.0;
};

struct RunOptions {
  /// Where report.json, epochs.csv, config.json and the checkpoint go. Empty
  /// keeps everything in memory.
  std::filesystem::path out_dir;
  std::function<void(const metrics::EpochRow&)> on_epoch;
};

inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kLastGoodCheckpointFile = "checkpoint_last_good.bin";
inline constexpr const char* kConfigEcho = "config.json";

class Trainer {
 public:
  Trainer(RsgConfig cfg, data::Splits data);

  const RsgConfig& config() const { return cfg_; }
  Model& model() { return model_; }
  const data::Splits& data() const { return data_; }
  const FreqRareSplit& split() const { return split_; }
  std::vector<std::size_t> train_counts() const;

  /// Builds the loss graph for one batch. From T_th on the contrastive module
  /// is frozen and samples are generated when the batch has both frequent and
  /// rare classes; otherwise the step reduces to the pre-T_th computation.
  StepLosses forward_step(const data::MiniBatch& batch, std::size_t epoch);
  /// forward_step, one backward pass of the total loss and one SGD step.
  StepRecord train_step(const data::MiniBatch& batch, std::size_t epoch);
  metrics::EpochRow run_epoch(std::size_t epoch);

  Evaluation evaluate(const data::Dataset& set);
  metrics::TrainingReport run(const RunOptions& options = {});

 private:
  RsgConfig cfg_;
  data::Splits data_;
  Model model_;
  FreqRareSplit split_;
  Sgd optimizer_;
  losses::ClassificationLoss cls_loss_;
  data::BatchSampler sampler_;
  Rng rsg_rng_;
  std::size_t step_ = 0;
};

/// Builds the dataset from cfg.dataset and trains.
metrics::TrainingReport run_training(const RsgConfig& cfg, const RunOptions& options = {});

/// Rebuilds the validation split from the config, loads the checkpoint and
/// reports final metrics. Epoch rows are left empty.
metrics::TrainingReport evaluate_checkpoint(const RsgConfig& cfg,
                                            const std::filesystem::path& checkpoint);

}  // namespace rsg::train
