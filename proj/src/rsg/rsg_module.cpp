#include "rsg/rsg_module.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace rsg {

namespace {

void require_feature_map(const char* op, const ad::Tensor& x, std::size_t dim) {
  if (!x.defined() || x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected [N, D, H, W] features, got " +
                     (x.defined() ? ad::to_string(x.shape()) : std::string("<undefined>")));
  }
  if (dim && x.dim(1) != dim) {
    throw ShapeError(std::string(op) + ": features " + ad::to_string(x.shape()) + " have " +
                     std::to_string(x.dim(1)) + " channels, module expects " +
                     std::to_string(dim));
  }
}

void require_labels(const char* op, std::span<const std::size_t> labels, std::size_t n,
                    std::size_t n_cls) {
  if (labels.size() != n) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " samples");
  }
  for (auto l : labels) {
    if (l >= n_cls) {
      throw ValidationError(std::string(op) + ": label " + std::to_string(l) +
                            " out of range for " + std::to_string(n_cls) + " classes");
    }
  }
}

ad::Tensor as_batch(const ad::Tensor& x) {
  if (x.defined() && x.rank() == 3) return ad::reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  return x;
}

ad::Tensor maybe_detach(const ad::Tensor& t, bool keep_graph) {
  return keep_graph ? t : t.detach();
}

// Centers of the given flattened rows broadcast over H x W.
ad::Tensor center_maps(const ClassCenters& centers, std::span<const std::size_t> rows,
                       std::size_t h, std::size_t w, CenterGradient gradient) {
  ad::Tensor source = gradient == CenterGradient::kPass ? centers.values : centers.values.detach();
  return ad::upsample(ad::gather_rows(source, rows), h, w);
}

}  // namespace

ClassCenters ClassCenters::init(std::size_t n_cls, std::size_t k, std::size_t dim, Rng& rng) {
  if (n_cls == 0 || k == 0 || dim == 0) {
    throw ValidationError("ClassCenters: n_cls, K and D must be positive");
  }
  return ClassCenters{n_cls, k, dim, nn::normal({n_cls * k, dim}, 0.1, rng)};
}

CenterEstimator CenterEstimator::init(std::size_t n_cls, std::size_t k, std::size_t dim,
                                      Rng& rng) {
  if (n_cls == 0 || k == 0 || dim == 0) {
    throw ValidationError("CenterEstimator: n_cls, K and D must be positive");
  }
  CenterEstimator ce{n_cls, k, dim, {}, {}};
  ce.weight = nn::uniform_fan_in({n_cls * k, dim}, dim, rng);
  ce.bias = nn::uniform_fan_in({n_cls * k}, dim, rng);
  return ce;
}

ContrastiveModule ContrastiveModule::init(std::size_t dim, std::size_t hidden, Rng& rng) {
  if (dim == 0 || hidden == 0) {
    throw ValidationError("ContrastiveModule: dim and hidden width must be positive");
  }
  ContrastiveModule cm;
  cm.dim = dim;
  cm.hidden = hidden;
  const std::size_t fan1 = 2 * dim * 9, fan2 = hidden * 9;
  cm.conv1_weight = nn::kaiming_normal({hidden, 2 * dim, 3, 3}, fan1, rng);
  cm.conv1_bias = ad::Tensor::zeros({hidden}, true);
  cm.conv2_weight = nn::kaiming_normal({hidden, hidden, 3, 3}, fan2, rng);
  cm.conv2_bias = ad::Tensor::zeros({hidden}, true);
  cm.head_weight = nn::uniform_fan_in({2, hidden}, hidden, rng);
  cm.head_bias = nn::uniform_fan_in({2}, hidden, rng);
  return cm;
}

std::vector<ad::Tensor> ContrastiveModule::parameters() const {
  return {conv1_weight, conv1_bias, conv2_weight, conv2_bias, head_weight, head_bias};
}

void ContrastiveModule::set_frozen(bool frozen) {
  for (auto p : parameters()) p.set_requires_grad(!frozen);
}

ad::Tensor ContrastiveModule::pair_probabilities(const ad::Tensor& x1, const ad::Tensor& x2) const {
  require_feature_map("contrastive_module", x1, dim);
  require_feature_map("contrastive_module", x2, dim);
  ad::Tensor h = ad::concat_channels(x1, x2);
  h = ad::relu(ad::conv2d(h, conv1_weight, conv1_bias, 1, 1));
  h = ad::conv2d(h, conv2_weight, conv2_bias, 1, 1);
  return ad::softmax(ad::linear(ad::global_avg_pool(h), head_weight, head_bias));
}

VectorTransform VectorTransform::identity(std::size_t dim) {
  std::vector<double> w(dim * dim * 9, 0.0);
  for (std::size_t d = 0; d < dim; ++d) w[(d * dim + d) * 9 + 4] = 1.0;
  return VectorTransform{dim, ad::Tensor::from({dim, dim, 3, 3}, std::move(w), true)};
}

VectorTransform VectorTransform::init(std::size_t dim, Rng& rng) {
  return VectorTransform{dim, nn::uniform_fan_in({dim, dim, 3, 3}, dim * 9, rng)};
}

ad::Tensor VectorTransform::apply(const ad::Tensor& x) const {
  require_feature_map("vector_transform", x, dim);
  return ad::conv2d(x, filters, ad::Tensor{}, 1, 1);
}

bool FreqRareSplit::is_frequent(std::size_t label) const {
  return std::binary_search(frequent.begin(), frequent.end(), label);
}

FreqRareSplit split_freq_rare(std::span<const std::size_t> class_counts, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ValidationError("split_freq_rare: alpha must be in (0, 1], got " + std::to_string(alpha));
  }
  if (class_counts.empty() ||
      std::all_of(class_counts.begin(), class_counts.end(), [](std::size_t c) { return c == 0; })) {
    throw ValidationError("split_freq_rare: all class counts are zero");
  }
  const std::size_t n_cls = class_counts.size();
  const auto rounded = static_cast<std::size_t>(std::lround(alpha * static_cast<double>(n_cls)));
  const std::size_t n_freq = std::clamp<std::size_t>(rounded, 1, n_cls);

  std::vector<std::size_t> order(n_cls);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return class_counts[a] > class_counts[b];
  });
  FreqRareSplit split;
  split.alpha = alpha;
  split.frequent.assign(order.begin(), order.begin() + static_cast<long>(n_freq));
  split.rare.assign(order.begin() + static_cast<long>(n_freq), order.end());
  std::sort(split.frequent.begin(), split.frequent.end());
  std::sort(split.rare.begin(), split.rare.end());
  return split;
}

ad::Tensor center_probabilities(const ad::Tensor& x, std::span<const std::size_t> labels,
                                const CenterEstimator& ce) {
  require_feature_map("center_assign", x, ce.dim);
  require_labels("center_assign", labels, x.dim(0), ce.n_cls);
  std::vector<std::size_t> starts(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) starts[i] = labels[i] * ce.k;
  ad::Tensor logits = ad::linear(ad::global_avg_pool(x), ce.weight, ce.bias);
  return ad::softmax(ad::column_block(logits, starts, ce.k));
}

std::vector<std::size_t> closest_centers(const ad::Tensor& gamma) {
  if (gamma.rank() != 2) {
    throw ShapeError("closest_centers: expected [N, K], got " + ad::to_string(gamma.shape()));
  }
  const std::size_t n = gamma.dim(0), k = gamma.dim(1);
  std::vector<std::size_t> out(n);
  auto v = gamma.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = v.data() + r * k;
    out[r] = static_cast<std::size_t>(std::max_element(row, row + k) - row);
  }
  return out;
}

CenterAssignment center_assign(const ad::Tensor& x, std::size_t label, const CenterEstimator& ce) {
  ad::NoGradGuard no_grad;
  const std::size_t labels[] = {label};
  ad::Tensor gamma = center_probabilities(as_batch(x), labels, ce);
  CenterAssignment out;
  out.gamma.assign(gamma.values().begin(), gamma.values().end());
  out.kappa = closest_centers(gamma)[0];
  return out;
}

ad::Tensor different_class_probability(const ad::Tensor& x1, const ad::Tensor& x2,
                                       const ContrastiveModule& cm) {
  ad::Tensor probs = cm.pair_probabilities(x1, x2);
  std::vector<std::size_t> col(probs.dim(0), 1);
  return ad::pick(probs, col);
}

double contrastive_score(const ad::Tensor& x1, const ad::Tensor& x2, const ContrastiveModule& cm) {
  ad::NoGradGuard no_grad;
  return different_class_probability(as_batch(x1), as_batch(x2), cm).values()[0];
}

ad::Tensor feature_displacement(const ad::Tensor& x, std::span<const std::size_t> labels,
                                const ClassCenters& centers, const CenterEstimator& ce,
                                CenterGradient center_gradient) {
  ad::Tensor batch = as_batch(x);
  require_feature_map("feature_displacement", batch, centers.dim);
  require_labels("feature_displacement", labels, batch.dim(0), centers.n_cls);
  std::vector<std::size_t> kappa;
  {
    ad::NoGradGuard no_grad;
    kappa = closest_centers(center_probabilities(batch, labels, ce));
  }
  std::vector<std::size_t> rows(labels.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = centers.row(labels[i], kappa[i]);
  ad::Tensor up = center_maps(centers, rows, batch.dim(2), batch.dim(3), center_gradient);
  ad::Tensor fd = ad::sub(batch, up);
  return x.rank() == 3 ? ad::reshape(fd, x.shape()) : fd;
}

std::size_t generated_count(double beta, std::size_t s_freq, std::size_t s_rare) {
  if (s_freq == 0 || s_rare == 0) return 0;
  // beta * s_freq is exact in long double for any realistic batch, so the
  // floor can be corrected to the exact integer quotient.
  const long double p = static_cast<long double>(beta) * static_cast<long double>(s_freq);
  const long double r = static_cast<long double>(s_rare);
  long double q = std::floor(p / r);
  while ((q + 1) * r <= p) q += 1;
  while (q > 0 && q * r > p) q -= 1;
  return std::max<std::size_t>(static_cast<std::size_t>(q), 1) * s_rare;
}

GenerationPairing plan_generation(std::span<const std::size_t> labels, const FreqRareSplit& split,
                                  double beta, Rng& rng) {
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw ValidationError("generate_samples: beta must be in (0, 1], got " + std::to_string(beta));
  }
  std::vector<std::size_t> freq, rare;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (split.is_frequent(labels[i]) ? freq : rare).push_back(i);
  }
  GenerationPairing pairing;
  const std::size_t s_new = generated_count(beta, freq.size(), rare.size());
  if (s_new == 0) return pairing;
  const std::size_t per_rare = s_new / rare.size();

  std::vector<std::size_t> pool;
  auto draw = [&] {
    if (pool.empty()) {
      pool = freq;
      std::shuffle(pool.begin(), pool.end(), rng);
    }
    std::size_t v = pool.back();
    pool.pop_back();
    return v;
  };
  pairing.rare_rows.reserve(s_new);
  pairing.freq_rows.reserve(s_new);
  for (std::size_t r : rare) {
    for (std::size_t j = 0; j < per_rare; ++j) {
      pairing.rare_rows.push_back(r);
      pairing.freq_rows.push_back(draw());
    }
  }
  return pairing;
}

GenerationResult generate_with_pairing(const ad::Tensor& features,
                                       std::span<const std::size_t> labels,
                                       GenerationPairing pairing, const VectorTransform& vt,
                                       const ClassCenters& centers, const CenterEstimator& ce,
                                       const GenerationOptions& options) {
  require_feature_map("generate_samples", features, centers.dim);
  require_labels("generate_samples", labels, features.dim(0), centers.n_cls);
  GenerationResult result;
  result.pairing = std::move(pairing);
  if (result.pairing.size() == 0) return result;

  const auto& rare_rows = result.pairing.rare_rows;
  const auto& freq_rows = result.pairing.freq_rows;
  std::vector<std::size_t> rare_labels(rare_rows.size()), freq_labels(freq_rows.size());
  for (std::size_t i = 0; i < rare_rows.size(); ++i) {
    rare_labels[i] = labels[rare_rows[i]];
    freq_labels[i] = labels[freq_rows[i]];
  }

  const bool stop = options.stop_gradients;
  const CenterGradient cg = stop ? CenterGradient::kStop : CenterGradient::kPass;
  ad::Tensor x_freq = ad::gather_rows(maybe_detach(features, !stop), freq_rows);
  ad::Tensor x_rare =
      ad::gather_rows(maybe_detach(features, !stop || options.rare_grad_to_backbone), rare_rows);
  ad::Tensor fd_freq = feature_displacement(x_freq, freq_labels, centers, ce, cg);
  ad::Tensor moved =
      options.mode == DisplacementMode::kVectorTransform ? vt.apply(fd_freq) : fd_freq;
  ad::Tensor fd_rare =
      feature_displacement(stop ? x_rare.detach() : x_rare, rare_labels, centers, ce, cg);

  ad::Tensor base = x_rare;
  if (options.target == GenerationTarget::kRareCenters) {
    // x_rare - fd_rare is the rare sample's closest center broadcast over H x W.
    base = ad::sub(stop ? x_rare.detach() : x_rare, fd_rare);
  }
  result.features = ad::add(moved, base);
  result.labels = std::move(rare_labels);
  result.mv = MvInputs{moved, fd_freq, fd_rare, x_freq};
  result.skipped = false;
  return result;
}

GenerationResult generate_samples(const ad::Tensor& features, std::span<const std::size_t> labels,
                                  const FreqRareSplit& split, double beta,
                                  const VectorTransform& vt, const ClassCenters& centers,
                                  const CenterEstimator& ce, Rng& rng,
                                  const GenerationOptions& options) {
  return generate_with_pairing(features, labels, plan_generation(labels, split, beta, rng), vt,
                               centers, ce, options);
}

std::vector<std::pair<std::size_t, std::size_t>> cesc_pairs(std::size_t s, Rng& rng) {
  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(s / 2);
  for (std::size_t i = 0; i + 1 < s; i += 2) pairs.emplace_back(order[i], order[i + 1]);
  return pairs;
}

CescLoss cesc_loss(const ad::Tensor& x, std::span<const std::size_t> labels,
                   const ClassCenters& centers, const CenterEstimator& ce,
                   const ContrastiveModule& cm, Rng& rng, const CescOptions& options) {
  require_feature_map("cesc_loss", x, centers.dim);
  return cesc_loss_with_pairs(x, labels, centers, ce, cm, cesc_pairs(x.dim(0), rng), options);
}

CescLoss cesc_loss_with_pairs(const ad::Tensor& x, std::span<const std::size_t> labels,
                              const ClassCenters& centers, const CenterEstimator& ce,
                              const ContrastiveModule& cm,
                              std::vector<std::pair<std::size_t, std::size_t>> pairs,
                              const CescOptions& options) {
  require_feature_map("cesc_loss", x, centers.dim);
  require_labels("cesc_loss", labels, x.dim(0), centers.n_cls);
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  if (n == 0) throw ShapeError("cesc_loss: empty batch");

  ad::Tensor gamma = center_probabilities(x, labels, ce);
  if (!options.differentiate_gamma) gamma = gamma.detach();

  ad::Tensor weighted;
  std::vector<std::size_t> rows(n), column(n);
  for (std::size_t i = 0; i < centers.k; ++i) {
    for (std::size_t s = 0; s < n; ++s) rows[s] = centers.row(labels[s], i);
    std::fill(column.begin(), column.end(), i);
    ad::Tensor up = center_maps(centers, rows, h, w, CenterGradient::kPass);
    ad::Tensor dist = ad::sum_per_row(ad::square(ad::sub(x, up)));
    ad::Tensor term = ad::mul(ad::pick(gamma, column), dist);
    weighted = weighted.defined() ? ad::add(weighted, term) : term;
  }

  CescLoss loss;
  loss.center_term = ad::mean(weighted);
  loss.total = loss.center_term;
  if (!pairs.empty()) {
    std::vector<std::size_t> first(pairs.size()), second(pairs.size()), truth(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      first[p] = pairs[p].first;
      second[p] = pairs[p].second;
      truth[p] = labels[first[p]] != labels[second[p]] ? 1 : 0;
    }
    ad::Tensor probs = cm.pair_probabilities(ad::gather_rows(x, first), ad::gather_rows(x, second));
    // For y = 1 the likelihood is gamma*, otherwise 1 - gamma* (column 0).
    loss.contrastive_term = ad::mean(ad::log(ad::pick(probs, truth), kLogFloor));
    loss.total = ad::sub(loss.center_term, loss.contrastive_term);
  }
  loss.pairs = std::move(pairs);
  return loss;
}

MvLoss mv_loss(const MvInputs& in, const ContrastiveModule& cm, const MvTerms& terms) {
  require_feature_map("mv_loss", in.transformed, 0);
  if (in.transformed.shape() != in.freq_displacement.shape() ||
      in.transformed.shape() != in.rare_displacement.shape() ||
      in.transformed.shape() != in.freq_features.shape()) {
    throw ShapeError("mv_loss: mismatched inputs " + ad::to_string(in.transformed.shape()) + ", " +
                     ad::to_string(in.freq_displacement.shape()) + ", " +
                     ad::to_string(in.rare_displacement.shape()) + ", " +
                     ad::to_string(in.freq_features.shape()));
  }
  MvLoss loss;
  const ad::Tensor zero = ad::Tensor::scalar(0.0);
  loss.cosine = zero;
  loss.length = zero;
  loss.contrastive = zero;

  ad::Tensor t_norm;
  if (terms.cosine || terms.length) t_norm = ad::channel_norm(in.transformed);
  if (terms.cosine) {
    ad::Tensor dot = ad::channel_dot(in.transformed, in.rare_displacement);
    ad::Tensor denom =
        ad::clamp_min(ad::mul(t_norm, ad::channel_norm(in.rare_displacement)), kCosineFloor);
    ad::Tensor dev = ad::abs(ad::add_scalar(ad::div(dot, denom), -1.0));
    loss.cosine = ad::mean(ad::sum_per_row(dev));
  }
  if (terms.length) {
    ad::Tensor dev = ad::abs(ad::sub(t_norm, ad::channel_norm(in.freq_displacement)));
    loss.length = ad::mean(ad::sum_per_row(dev));
  }
  if (terms.contrastive) {
    ad::Tensor p_diff = different_class_probability(in.transformed, in.freq_features, cm);
    loss.contrastive = ad::scale(ad::mean(ad::log(p_diff, kLogFloor)), -1.0);
  }
  loss.total = ad::add(ad::add(loss.cosine, loss.length), loss.contrastive);
  return loss;
}

}  // namespace rsg
