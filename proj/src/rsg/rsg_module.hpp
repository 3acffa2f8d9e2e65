#pragma once

// Rare-class sample generator: center estimation, the same/different-class
// contrastive module, feature displacement, vector transformation and the two
// losses that train them.
//
// Feature maps are [N, D, H, W] batches. Class centers and estimator weights
// are stored flattened as [n_cls * K, D] so that row `label * K + i` is the
// i-th center of class `label`.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "autodiff/tensor.hpp"
#include "nn/init.hpp"

namespace rsg {

struct ClassCenters {
  std::size_t n_cls = 0;
  std::size_t k = 0;
  std::size_t dim = 0;
  ad::Tensor values;  // [n_cls * K, D]

  /// Zero-mean Gaussian entries with standard deviation 0.1.
  static ClassCenters init(std::size_t n_cls, std::size_t k, std::size_t dim, Rng& rng);
  std::size_t row(std::size_t label, std::size_t i) const { return label * k + i; }
};

/// Per-class affine map from the pooled feature to K center logits.
struct CenterEstimator {
  std::size_t n_cls = 0;
  std::size_t k = 0;
  std::size_t dim = 0;
  ad::Tensor weight;  // [n_cls * K, D]
  ad::Tensor bias;    // [n_cls * K]

  static CenterEstimator init(std::size_t n_cls, std::size_t k, std::size_t dim, Rng& rng);
  std::vector<ad::Tensor> parameters() const { return {weight, bias}; }
};

/// Decides whether two feature maps come from different classes:
/// concat -> conv3x3 -> ReLU -> conv3x3 -> global average -> affine -> softmax.
struct ContrastiveModule {
  static constexpr std::size_t kDefaultHidden = 256;

  std::size_t dim = 0;
  std::size_t hidden = 0;
  ad::Tensor conv1_weight, conv1_bias;
  ad::Tensor conv2_weight, conv2_bias;
  ad::Tensor head_weight, head_bias;  // [2, hidden], [2]

  static ContrastiveModule init(std::size_t dim, std::size_t hidden, Rng& rng);
  std::vector<ad::Tensor> parameters() const;

  /// Frozen parameters stop recording gradients; optimizers skip them.
  void set_frozen(bool frozen);
  bool frozen() const { return !conv1_weight.requires_grad(); }

  /// [N, 2]: column 0 is P(same class), column 1 is P(different class).
  ad::Tensor pair_probabilities(const ad::Tensor& x1, const ad::Tensor& x2) const;
};

/// A single 3x3, stride 1, padding 1 convolution with D filters and no bias.
struct VectorTransform {
  std::size_t dim = 0;
  ad::Tensor filters;  // [D, D, 3, 3]

  /// Center tap 1 on the diagonal, so the map starts as the identity.
  static VectorTransform identity(std::size_t dim);
  static VectorTransform init(std::size_t dim, Rng& rng);
  ad::Tensor apply(const ad::Tensor& x) const;
};

struct FreqRareSplit {
  std::vector<std::size_t> frequent;  // ascending class ids
  std::vector<std::size_t> rare;
  double alpha = 1.0;

  bool is_frequent(std::size_t label) const;
};

/// The max(1, round(alpha * n_cls)) classes with the largest counts are
/// frequent; ties go to the lower class id.
FreqRareSplit split_freq_rare(std::span<const std::size_t> class_counts, double alpha);

// ---------------------------------------------------------------------------
// Center estimation

struct CenterAssignment {
  std::vector<double> gamma;
  std::size_t kappa = 0;
};

/// Soft assignment of each sample to the K centers of its own class: [N, K].
ad::Tensor center_probabilities(const ad::Tensor& x, std::span<const std::size_t> labels,
                                const CenterEstimator& ce);
/// Row-wise argmax with ties resolved to the lowest index.
std::vector<std::size_t> closest_centers(const ad::Tensor& gamma);
/// Single-sample form; `x` is [D, H, W] or [1, D, H, W].
CenterAssignment center_assign(const ad::Tensor& x, std::size_t label, const CenterEstimator& ce);

// ---------------------------------------------------------------------------
// Contrastive scoring

/// P(different class) for each row pair: [N].
ad::Tensor different_class_probability(const ad::Tensor& x1, const ad::Tensor& x2,
                                       const ContrastiveModule& cm);
double contrastive_score(const ad::Tensor& x1, const ad::Tensor& x2, const ContrastiveModule& cm);

// ---------------------------------------------------------------------------
// Feature displacement and generation

enum class CenterGradient { kStop, kPass };

/// x - up(C_kappa) with kappa the closest center of each sample's class. With
/// kStop the subtracted center is a constant.
ad::Tensor feature_displacement(const ad::Tensor& x, std::span<const std::size_t> labels,
                                const ClassCenters& centers, const CenterEstimator& ce,
                                CenterGradient center_gradient = CenterGradient::kStop);

/// max(floor(beta * s_freq / s_rare), 1) * s_rare, or 0 if either side is empty.
std::size_t generated_count(double beta, std::size_t s_freq, std::size_t s_rare);

/// Row indices into the batch, one entry per generated sample.
struct GenerationPairing {
  std::vector<std::size_t> rare_rows;
  std::vector<std::size_t> freq_rows;

  std::size_t size() const { return rare_rows.size(); }
};

/// Each rare row receives s_new / s_rare donors. Donors are drawn uniformly
/// without replacement from the frequent rows, refilling the pool when it is
/// exhausted.
GenerationPairing plan_generation(std::span<const std::size_t> labels, const FreqRareSplit& split,
                                  double beta, Rng& rng);

enum class DisplacementMode { kVectorTransform, kDirectAddition };
enum class GenerationTarget { kRareSamples, kRareCenters };

struct GenerationOptions {
  DisplacementMode mode = DisplacementMode::kVectorTransform;
  GenerationTarget target = GenerationTarget::kRareSamples;
  /// Lets the classification gradient of generated samples reach the
  /// backbone through x_rare. Only consulted when stop_gradients is set.
  bool rare_grad_to_backbone = false;
  /// Training routing: centers, donor features and the rare displacement are
  /// constants, so only the vector transform (and optionally x_rare) receive
  /// gradient. When false every input stays differentiable.
  bool stop_gradients = true;
};

/// Everything the maximized-vector loss needs about one generation step.
struct MvInputs {
  ad::Tensor transformed;        // T(x_fd-freq)
  ad::Tensor freq_displacement;  // x_fd-freq
  ad::Tensor rare_displacement;  // x_fd-rare
  ad::Tensor freq_features;      // x_freq
};

struct GenerationResult {
  ad::Tensor features;  // [s_new, D, H, W]; undefined when skipped
  std::vector<std::size_t> labels;
  GenerationPairing pairing;
  MvInputs mv;
  bool skipped = true;

  std::size_t count() const { return labels.size(); }
};

GenerationResult generate_samples(const ad::Tensor& features, std::span<const std::size_t> labels,
                                  const FreqRareSplit& split, double beta,
                                  const VectorTransform& vt, const ClassCenters& centers,
                                  const CenterEstimator& ce, Rng& rng,
                                  const GenerationOptions& options = {});

/// Generation with a fixed pairing; used by generate_samples and by tests
/// that need to control which donor goes to which rare sample.
GenerationResult generate_with_pairing(const ad::Tensor& features,
                                       std::span<const std::size_t> labels,
                                       GenerationPairing pairing, const VectorTransform& vt,
                                       const ClassCenters& centers, const CenterEstimator& ce,
                                       const GenerationOptions& options = {});

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kCosineFloor = 1e-8;

struct CescOptions {
  /// When false the soft assignment weights are treated as constants.
  bool differentiate_gamma = true;
};

struct CescLoss {
  ad::Tensor total;
  ad::Tensor center_term;       // weighted squared distances, averaged over s
  ad::Tensor contrastive_term;  // mean pair log-likelihood; undefined if s < 2
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// floor(s / 2) disjoint pairs from a seeded shuffle of 0..s-1.
std::vector<std::pair<std::size_t, std::size_t>> cesc_pairs(std::size_t s, Rng& rng);

CescLoss cesc_loss(const ad::Tensor& x, std::span<const std::size_t> labels,
                   const ClassCenters& centers, const CenterEstimator& ce,
                   const ContrastiveModule& cm, Rng& rng, const CescOptions& options = {});
CescLoss cesc_loss_with_pairs(const ad::Tensor& x, std::span<const std::size_t> labels,
                              const ClassCenters& centers, const CenterEstimator& ce,
                              const ContrastiveModule& cm,
                              std::vector<std::pair<std::size_t, std::size_t>> pairs,
                              const CescOptions& options = {});

struct MvTerms {
  bool cosine = true;
  bool length = true;
  bool contrastive = true;
};

struct MvLoss {
  ad::Tensor total;
  ad::Tensor cosine;       // mean over pairs of sum_jk |cos - 1|
  ad::Tensor length;       // mean over pairs of sum_jk | |T fd| - |fd| |
  ad::Tensor contrastive;  // -mean log P(different)
};

MvLoss mv_loss(const MvInputs& inputs, const ContrastiveModule& cm, const MvTerms& terms = {});

}  // namespace rsg
