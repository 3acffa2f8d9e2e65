#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "data/dataset.hpp"
#include "losses/cls_losses.hpp"
#include "nn/backbone.hpp"
#include "rsg/rsg_module.hpp"

namespace rsg::train {

struct LrStep {
  std::size_t epoch = 0;
  double multiplier = 1.0;

  bool operator==(const LrStep&) const = default;
};

/// Everything a training run depends on. Parsed from JSON; unknown keys are
/// rejected at every nesting level.
struct RsgConfig {
  // RSG hyperparameters.
  std::size_t k = 15;
  double alpha = 0.2;  // 0.2 long-tailed, 0.5 step when omitted from JSON
  double beta = 1.0;   // 1.0 long-tailed, 0.01 step when omitted from JSON
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  std::size_t contrastive_hidden = ContrastiveModule::kDefaultHidden;

  // Schedule.
  std::size_t epochs = 200;  // T
  std::size_t t_th = 160;
  double lr = 0.1;
  std::vector<LrStep> lr_schedule{{160, 0.01}, {180, 0.01}};
  double momentum = 0.9;
  double weight_decay = 2e-4;  // backbone parameters only
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;

  // Switches for baselines and ablations.
  bool generation = true;
  bool backprop_generated_to_backbone = false;
  DisplacementMode displacement = DisplacementMode::kVectorTransform;
  GenerationTarget generation_target = GenerationTarget::kRareSamples;
  MvTerms mv_terms;
  bool cesc_differentiate_gamma = true;
  std::string cls_loss = "cross_entropy";
  double focal_gamma = 2.0;

  nn::BackboneSpec backbone;  // n_cls and in_channels come from the dataset
  data::DatasetSpec dataset;

  void validate() const;
  losses::LossWeights loss_weights() const { return {lambda1, lambda2}; }
  nn::BackboneSpec backbone_spec(std::size_t in_channels) const;
};

RsgConfig parse_config(const std::string& json_text);
RsgConfig load_config(const std::filesystem::path& path);
/// Canonical JSON with every field present, in a fixed order.
std::string config_to_json(const RsgConfig& cfg, int indent = 2);

/// Base lr times the multipliers of every boundary <= epoch.
double lr_at(std::size_t epoch, const RsgConfig& cfg);

std::string to_string(DisplacementMode m);
std::string to_string(GenerationTarget t);

}  // namespace rsg::train
