#include "train/gradcheck_suite.hpp"

#include "autodiff/gradcheck.hpp"
#include "autodiff/ops.hpp"
#include "data/dataset.hpp"
#include "losses/cls_losses.hpp"
#include "nn/backbone.hpp"
#include "nn/init.hpp"
#include "rsg/rsg_module.hpp"

namespace rsg::train {

namespace {

constexpr std::size_t kDim = 4, kSide = 2, kCenters = 3, kBatch = 8, kClasses = 3, kHidden = 8;

std::size_t count(const std::vector<ad::Tensor>& leaves) {
  std::size_t n = 0;
  for (const auto& t : leaves) n += t.numel();
  return n;
}

GradcheckEntry check(std::string name, const std::function<ad::Tensor()>& f,
                     std::vector<ad::Tensor> leaves, double step) {
  GradcheckEntry e;
  e.name = std::move(name);
  e.coordinates = count(leaves);
  e.max_error = ad::finite_difference_check(f, leaves, step);
  return e;
}

}  // namespace

std::vector<GradcheckEntry> run_gradcheck_suite(std::uint64_t seed, double step) {
  Rng rng = data::make_rng(seed, 0x61);
  // Classes 0 and 1 are frequent, class 2 is rare.
  const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 0, 1};
  const std::vector<std::size_t> counts{3, 3, 2};
  const FreqRareSplit split = split_freq_rare(counts, 2.0 / 3.0);

  ad::Tensor x = nn::normal({kBatch, kDim, kSide, kSide}, 1.0, rng);
  ClassCenters centers = ClassCenters::init(kClasses, kCenters, kDim, rng);
  CenterEstimator ce = CenterEstimator::init(kClasses, kCenters, kDim, rng);
  ContrastiveModule cm = ContrastiveModule::init(kDim, kHidden, rng);
  // A random transform keeps |T fd| away from |fd|, where the length term has a kink.
  VectorTransform vt = VectorTransform::init(kDim, rng);
  const auto pairs = cesc_pairs(kBatch, rng);
  const GenerationPairing pairing = plan_generation(labels, split, 1.0, rng);

  GenerationOptions pure;
  pure.stop_gradients = false;

  std::vector<ad::Tensor> rsg_leaves{centers.values, ce.weight, ce.bias};
  for (auto& p : cm.parameters()) rsg_leaves.push_back(p);

  std::vector<GradcheckEntry> out;

  {
    auto leaves = rsg_leaves;
    leaves.insert(leaves.begin(), x);
    out.push_back(check("cesc", [&] {
      return cesc_loss_with_pairs(x, labels, centers, ce, cm, pairs).total;
    }, leaves, step));
  }
  {
    auto leaves = rsg_leaves;
    leaves.insert(leaves.begin(), {x, vt.filters});
    out.push_back(check("mv", [&] {
      auto gen = generate_with_pairing(x, labels, pairing, vt, centers, ce, pure);
      return mv_loss(gen.mv, cm).total;
    }, leaves, step));
  }

  ad::Tensor logits = nn::normal({kBatch, kClasses}, 2.0, rng);
  out.push_back(check("cross_entropy", [&] { return losses::cross_entropy(logits, labels); },
                      {logits}, step));
  out.push_back(check("focal", [&] { return losses::focal_loss(logits, labels, 2.0); },
                      {logits}, step));

  {
    nn::BackboneSpec spec;
    spec.in_channels = 1;
    spec.stage_channels = {2, kDim};
    spec.blocks_per_stage = 1;
    spec.n_cls = kClasses;
    spec.insertion_stage = 2;
    nn::Backbone backbone(spec, rng);
    ad::Tensor images = nn::normal({kBatch, 1, 2 * kSide, 2 * kSide}, 1.0, rng);
    const losses::LossWeights w;
    auto leaves = backbone.parameters();
    leaves.insert(leaves.end(), rsg_leaves.begin(), rsg_leaves.end());
    leaves.push_back(vt.filters);
    out.push_back(check("total", [&] {
      ad::Tensor feats = backbone.forward_to_hook(images);
      ad::Tensor l_cesc = cesc_loss_with_pairs(feats, labels, centers, ce, cm, pairs).total;
      auto gen = generate_with_pairing(feats, labels, pairing, vt, centers, ce, pure);
      ad::Tensor l_mv = mv_loss(gen.mv, cm).total;
      std::vector<std::size_t> all_labels = labels;
      all_labels.insert(all_labels.end(), gen.labels.begin(), gen.labels.end());
      ad::Tensor logits_all = backbone.forward_from_hook(ad::concat_rows(feats, gen.features));
      return losses::total_loss(losses::cross_entropy(logits_all, all_labels), l_cesc, l_mv, w);
    }, leaves, step));
  }
  return out;
}

}  // namespace rsg::train
