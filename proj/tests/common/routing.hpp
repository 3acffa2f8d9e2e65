#pragma once

// Gradient routing probe shared by the unit tests and the acceptance binary.
// One generation-phase step on a tiny model; each loss term is backpropagated
// on its own and the gradient reaching each parameter set is measured.

#include <algorithm>
#include <cmath>
#include <vector>

#include "data/dataset.hpp"
#include "train/trainer.hpp"

namespace rsg::testing {

inline train::RsgConfig tiny_config(std::uint64_t seed = 1) {
  train::RsgConfig cfg;
  cfg.k = 3;
  cfg.alpha = 0.5;
  cfg.beta = 1.0;
  cfg.contrastive_hidden = 4;
  cfg.epochs = 2;
  cfg.t_th = 1;
  cfg.lr = 0.05;
  cfg.lr_schedule = {};
  cfg.batch_size = 16;
  cfg.seed = seed;
  cfg.backbone.stage_channels = {4, 6};
  cfg.backbone.blocks_per_stage = 1;
  cfg.backbone.insertion_stage = 1;
  cfg.dataset.n_cls = 4;
  cfg.dataset.imbalance = data::ImbalanceType::kStep;
  cfg.dataset.rho = 5.0;
  cfg.dataset.n_max = 20;
  cfg.dataset.dim = 16;
  cfg.dataset.height = 4;
  cfg.dataset.width = 4;
  cfg.dataset.val_per_class = 5;
  cfg.dataset.seed = seed;
  return cfg;
}

/// A batch with both frequent and rare rows.
inline data::MiniBatch mixed_batch(const train::Trainer& t, std::size_t size) {
  std::vector<std::size_t> freq, rare, idx;
  for (std::size_t i = 0; i < t.data().train.size(); ++i) {
    (t.split().is_frequent(t.data().train.labels[i]) ? freq : rare).push_back(i);
  }
  for (std::size_t i = 0; idx.size() < size && (i < freq.size() || i < rare.size()); ++i) {
    if (i < rare.size()) idx.push_back(rare[i]);
    if (i < freq.size() && idx.size() < size) idx.push_back(freq[i]);
  }
  return data::make_batch(t.data().train, idx, &t.split());
}

inline double max_abs_grad(const std::vector<ad::Tensor>& params) {
  double m = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) m = std::max(m, std::abs(g));
  }
  return m;
}

inline void clear_grads(const std::vector<ad::Tensor>& params) {
  for (auto p : params) p.zero_grad();
}

struct RoutingProbe {
  // Must be exactly zero.
  double cesc_to_backbone = -1.0;
  double mv_to_backbone = -1.0;
  double mv_to_contrastive = -1.0;
  double cls_to_estimator = -1.0;
  double cls_to_centers = -1.0;
  // Must be nonzero, so the zeros above are not vacuous.
  double cesc_to_estimator = 0.0;
  double cesc_to_centers = 0.0;
  double mv_to_transform = 0.0;
  double cls_to_backbone = 0.0;
  double cls_to_transform = 0.0;
  std::size_t s_new = 0;
};

inline RoutingProbe probe_routing(const train::RsgConfig& cfg) {
  train::Trainer t(cfg, data::build_dataset(cfg.dataset));
  auto& m = t.model();
  const auto all = m.parameters();
  const auto backbone = m.backbone.parameters();
  const std::vector<ad::Tensor> estimator{m.ce.weight, m.ce.bias};
  const std::vector<ad::Tensor> centers{m.centers.values};
  const std::vector<ad::Tensor> transform{m.vt.filters};
  const auto contrastive = m.cm.parameters();

  const auto losses = t.forward_step(mixed_batch(t, cfg.batch_size), cfg.t_th);
  RoutingProbe out;
  out.s_new = losses.s_new;

  clear_grads(all);
  losses.l_cesc.backward();
  out.cesc_to_backbone = max_abs_grad(backbone);
  out.cesc_to_estimator = max_abs_grad(estimator);
  out.cesc_to_centers = max_abs_grad(centers);

  clear_grads(all);
  losses.l_mv.backward();
  out.mv_to_backbone = max_abs_grad(backbone);
  out.mv_to_contrastive = max_abs_grad(contrastive);
  out.mv_to_transform = max_abs_grad(transform);

  clear_grads(all);
  losses.l_cls.backward();
  out.cls_to_estimator = max_abs_grad(estimator);
  out.cls_to_centers = max_abs_grad(centers);
  out.cls_to_backbone = max_abs_grad(backbone);
  out.cls_to_transform = max_abs_grad(transform);
  clear_grads(all);
  return out;
}

}  // namespace rsg::testing
