#include "train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "autodiff/ops.hpp"
#include "common/error.hpp"
#include "data/flatfile.hpp"
#include "metrics/metrics.hpp"

namespace rsg::train {

namespace {

// Stream tags for make_rng; every consumer gets its own sequence.
constexpr std::uint64_t kBackboneStream = 0x21;
constexpr std::uint64_t kRsgInitStream = 0x22;
constexpr std::uint64_t kRsgStepStream = 0x31;
constexpr std::uint64_t kAugmentStream = 0x200000;

constexpr std::size_t kEvalChunk = 512;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<ParamGroup> param_groups(const Model& m, const RsgConfig& cfg) {
  return {{m.backbone.parameters(), cfg.weight_decay}, {m.rsg_parameters(), 0.0}};
}

}  // namespace

Model Model::create(const RsgConfig& cfg, std::size_t in_channels) {
  Rng backbone_rng = data::make_rng(cfg.seed, kBackboneStream);
  nn::Backbone backbone(cfg.backbone_spec(in_channels), backbone_rng);
  const std::size_t d = backbone.hook_channels(), n_cls = cfg.dataset.n_cls;
  Rng rng = data::make_rng(cfg.seed, kRsgInitStream);
  ClassCenters centers = ClassCenters::init(n_cls, cfg.k, d, rng);
  CenterEstimator ce = CenterEstimator::init(n_cls, cfg.k, d, rng);
  ContrastiveModule cm = ContrastiveModule::init(d, cfg.contrastive_hidden, rng);
  return Model{std::move(backbone), std::move(centers), std::move(ce), std::move(cm),
               VectorTransform::identity(d)};
}

std::vector<ad::Tensor> Model::rsg_parameters() const {
  std::vector<ad::Tensor> out{centers.values, ce.weight, ce.bias};
  for (auto& p : cm.parameters()) out.push_back(p);
  out.push_back(vt.filters);
  return out;
}

std::vector<ad::Tensor> Model::parameters() const {
  auto out = backbone.parameters();
  for (auto& p : rsg_parameters()) out.push_back(p);
  return out;
}

void save_checkpoint(Model& model, const std::filesystem::path& path) {
  std::vector<data::FlatArray> arrays;
  for (const auto& p : model.parameters()) {
    data::FlatArray a;
    for (auto d : p.shape()) a.shape.push_back(static_cast<std::uint32_t>(d));
    a.values.assign(p.values().begin(), p.values().end());
    arrays.push_back(std::move(a));
  }
  for (auto* buf : model.backbone.buffers()) {
    arrays.push_back({{static_cast<std::uint32_t>(buf->size())}, {buf->begin(), buf->end()}});
  }
  data::write_flat_file(path, arrays);
}

void load_checkpoint(Model& model, const std::filesystem::path& path) {
  const auto arrays = data::read_flat_file(path);
  auto params = model.parameters();
  auto buffers = model.backbone.buffers();
  if (arrays.size() != params.size() + buffers.size()) {
    throw FormatError(path.string() + ": checkpoint holds " + std::to_string(arrays.size()) +
                      " arrays, model expects " + std::to_string(params.size() + buffers.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Shape shape(arrays[i].shape.begin(), arrays[i].shape.end());
    if (shape != params[i].shape()) {
      throw FormatError(path.string() + ": array " + std::to_string(i) + " has shape " +
                        ad::to_string(shape) + ", model expects " +
                        ad::to_string(params[i].shape()));
    }
    std::copy(arrays[i].values.begin(), arrays[i].values.end(),
              params[i].mutable_values().begin());
  }
  for (std::size_t b = 0; b < buffers.size(); ++b) {
    const auto& a = arrays[params.size() + b];
    if (a.values.size() != buffers[b]->size()) {
      throw FormatError(path.string() + ": buffer " + std::to_string(b) + " has the wrong size");
    }
    buffers[b]->assign(a.values.begin(), a.values.end());
  }
}

Trainer::Trainer(RsgConfig cfg, data::Splits data)
    : cfg_((cfg.validate(), std::move(cfg))),
      data_(std::move(data)),
      model_(Model::create(cfg_, data_.train.shape.channels)),
      split_(split_freq_rare(data_.train.class_counts(cfg_.dataset.n_cls), cfg_.alpha)),
      optimizer_(param_groups(model_, cfg_), cfg_.momentum),
      cls_loss_(losses::make_classification_loss(cfg_.cls_loss, cfg_.focal_gamma)),
      sampler_(data_.train.size(), cfg_.batch_size, cfg_.seed),
      rsg_rng_(data::make_rng(cfg_.seed, kRsgStepStream)) {
  if (data_.train.size() == 0) throw ValidationError("trainer: empty training split");
  if (data_.val.size() == 0) throw ValidationError("trainer: empty validation split");
}

std::vector<std::size_t> Trainer::train_counts() const {
  return data_.train.class_counts(cfg_.dataset.n_cls);
}

StepLosses Trainer::forward_step(const data::MiniBatch& batch, std::size_t epoch) {
  if (epoch >= cfg_.epochs) {
    throw ValidationError("train_step: epoch " + std::to_string(epoch) + " is not below T = " +
                          std::to_string(cfg_.epochs));
  }
  const bool generation_phase = epoch >= cfg_.t_th;
  if (generation_phase && !model_.cm.frozen()) model_.cm.set_frozen(true);

  model_.backbone.set_training(true);
  StepLosses out;
  out.features = model_.backbone.forward_to_hook(batch.images);

  if (cfg_.lambda1 > 0.0) {
    // The backbone only learns from the classification loss.
    out.l_cesc = cesc_loss(out.features.detach(), batch.labels, model_.centers, model_.ce,
                           model_.cm, rsg_rng_, {cfg_.cesc_differentiate_gamma})
                     .total;
  }

  ad::Tensor features = out.features;
  std::vector<std::size_t> labels = batch.labels;
  if (cfg_.generation && generation_phase) {
    GenerationOptions opts;
    opts.mode = cfg_.displacement;
    opts.target = cfg_.generation_target;
    opts.rare_grad_to_backbone = cfg_.backprop_generated_to_backbone;
    GenerationResult gen = generate_samples(out.features, batch.labels, split_, cfg_.beta,
                                            model_.vt, model_.centers, model_.ce, rsg_rng_, opts);
    if (!gen.skipped) {
      out.s_new = gen.count();
      features = ad::concat_rows(features, gen.features);
      labels.insert(labels.end(), gen.labels.begin(), gen.labels.end());
      const bool any_term = cfg_.mv_terms.cosine || cfg_.mv_terms.length ||
                            cfg_.mv_terms.contrastive;
      if (cfg_.lambda2 > 0.0 && any_term) {
        out.l_mv = mv_loss(gen.mv, model_.cm, cfg_.mv_terms).total;
      }
    }
  }

  out.l_cls = cls_loss_(model_.backbone.forward_from_hook(features), labels);
  out.total = losses::total_loss(out.l_cls, out.l_cesc,
                                 out.l_mv.defined() ? std::optional(out.l_mv) : std::nullopt,
                                 cfg_.loss_weights());
  return out;
}

StepRecord Trainer::train_step(const data::MiniBatch& batch, std::size_t epoch) {
  StepLosses losses = forward_step(batch, epoch);
  StepRecord rec;
  rec.l_cls = losses.l_cls.item();
  rec.l_cesc = losses.l_cesc.defined() ? losses.l_cesc.item() : 0.0;
  rec.l_mv = losses.l_mv.defined() ? losses.l_mv.item() : 0.0;
  rec.s_new = losses.s_new;
  const std::string where =
      "epoch " + std::to_string(epoch) + " step " + std::to_string(step_);
  if (!std::isfinite(losses.total.item())) {
    throw NumericError(where + ": non-finite loss (l_cls " + std::to_string(rec.l_cls) +
                       ", l_cesc " + std::to_string(rec.l_cesc) + ", l_mv " +
                       std::to_string(rec.l_mv) + ")");
  }
  optimizer_.zero_grad();
  losses.total.backward();
  for (const auto& p : model_.parameters()) {
    if (p.has_grad() && !all_finite(p.grad())) {
      throw NumericError(where + ": non-finite gradient for a parameter of shape " +
                         ad::to_string(p.shape()));
    }
  }
  optimizer_.step(lr_at(epoch, cfg_));
  ++step_;
  return rec;
}

metrics::EpochRow Trainer::run_epoch(std::size_t epoch) {
  metrics::EpochRow row;
  row.epoch = epoch;
  row.lr = lr_at(epoch, cfg_);
  const bool augment =
      cfg_.dataset.source == data::Source::kCifar10Binary && cfg_.dataset.augment;
  Rng aug_rng = data::make_rng(cfg_.seed, kAugmentStream + epoch);
  const auto batches = sampler_.epoch(epoch);
  for (const auto& idx : batches) {
    data::MiniBatch batch = data::make_batch(data_.train, idx, &split_);
    if (augment) data::augment_crop_flip(batch.images.mutable_values(), data_.train.shape, 4, aug_rng);
    const StepRecord rec = train_step(batch, epoch);
    row.l_cls += rec.l_cls;
    row.l_cesc += rec.l_cesc;
    row.l_mv += rec.l_mv;
    row.s_new += rec.s_new;
  }
  const double n = static_cast<double>(batches.size());
  row.l_cls /= n;
  row.l_cesc /= n;
  row.l_mv /= n;
  row.val_top1 = evaluate(data_.val).top1_error;
  return row;
}

Evaluation Trainer::evaluate(const data::Dataset& set) {
  if (set.size() == 0) throw ValidationError("evaluate: empty evaluation set");
  ad::NoGradGuard no_grad;
  model_.backbone.set_training(false);
  Evaluation ev;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += kEvalChunk) {
    idx.resize(std::min(kEvalChunk, set.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = data::make_batch(set, idx);
    const auto pred = metrics::predictions(model_.backbone.forward(batch.images));
    ev.predicted.insert(ev.predicted.end(), pred.begin(), pred.end());
  }
  model_.backbone.set_training(true);
  ev.per_class_error = metrics::per_class_error(ev.predicted, set.labels, cfg_.dataset.n_cls);
  ev.top1_error = metrics::top1_error(ev.predicted, set.labels);
  return ev;
}

metrics::TrainingReport Trainer::run(const RunOptions& options) {
  metrics::TrainingReport report;
  report.seed = cfg_.seed;
  report.config_json = config_to_json(cfg_);
  report.train_counts = train_counts();
  const bool to_disk = !options.out_dir.empty();
  if (to_disk) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());
    std::ofstream(options.out_dir / kConfigEcho) << report.config_json << "\n";
  }

  for (std::size_t e = 0; e < cfg_.epochs; ++e) {
    try {
      report.epochs.push_back(run_epoch(e));
    } catch (const NumericError& err) {
      // Non-finite values are caught before the optimizer step, so the model
      // still holds the last good parameters.
      if (!to_disk) throw;
      const auto path = options.out_dir / kLastGoodCheckpointFile;
      save_checkpoint(model_, path);
      throw NumericError(std::string(err.what()) + "; last good checkpoint written to " +
                         path.string());
    }
    if (options.on_epoch) options.on_epoch(report.epochs.back());
  }

  const Evaluation ev = evaluate(data_.val);
  report.per_class_error = ev.per_class_error;
  report.top1_error = ev.top1_error;
  report.shot_split = metrics::shot_split_report(report.per_class_error, report.train_counts);
  if (to_disk) {
    report.checkpoint = kCheckpointFile;
    save_checkpoint(model_, options.out_dir / kCheckpointFile);
    metrics::emit_report(report, options.out_dir);
  }
  return report;
}

metrics::TrainingReport run_training(const RsgConfig& cfg, const RunOptions& options) {
  Trainer trainer(cfg, data::build_dataset(cfg.dataset));
  return trainer.run(options);
}

metrics::TrainingReport evaluate_checkpoint(const RsgConfig& cfg,
                                            const std::filesystem::path& checkpoint) {
  Trainer trainer(cfg, data::build_dataset(cfg.dataset));
  load_checkpoint(trainer.model(), checkpoint);
  metrics::TrainingReport report;
  report.seed = cfg.seed;
  report.config_json = config_to_json(cfg);
  report.train_counts = trainer.train_counts();
  const Evaluation ev = trainer.evaluate(trainer.data().val);
  report.per_class_error = ev.per_class_error;
  report.top1_error = ev.top1_error;
  report.shot_split = metrics::shot_split_report(report.per_class_error, report.train_counts);
  report.checkpoint = checkpoint.filename().string();
  return report;
}

}  // namespace rsg::train
