#include "train/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "common/error.hpp"

namespace rsg::train {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads typed fields out of one JSON object and remembers which keys were
// consumed, so leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config: " + where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* field(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, std::size_t& out) {
    if (auto* v = field(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string& key, std::uint64_t& out, int) {
    if (auto* v = field(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void read(const std::string& key, double& out) {
    if (auto* v = field(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (auto* v = field(key)) {
      if (!v->is_boolean()) fail(key, "true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (auto* v = field(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ValidationError("config: unknown key '" + prefix() + it.key() + "'");
      }
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& expected) const {
    throw ValidationError("config: '" + prefix() + key + "' must be " + expected);
  }

  std::string prefix() const { return path_.empty() ? "" : path_ + "."; }

 private:
  std::string where() const { return path_.empty() ? "top level" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

DisplacementMode parse_displacement(const std::string& s) {
  if (s == "vector_transform") return DisplacementMode::kVectorTransform;
  if (s == "direct_addition") return DisplacementMode::kDirectAddition;
  throw ValidationError("config: displacement must be vector_transform or direct_addition, got '" +
                        s + "'");
}

GenerationTarget parse_target(const std::string& s) {
  if (s == "rare_samples") return GenerationTarget::kRareSamples;
  if (s == "rare_centers") return GenerationTarget::kRareCenters;
  throw ValidationError("config: generation_target must be rare_samples or rare_centers, got '" +
                        s + "'");
}

void read_dataset(ObjectReader& r, data::DatasetSpec& d, bool& seed_given) {
  std::string source = data::to_string(d.source), imbalance = data::to_string(d.imbalance);
  r.read("source", source);
  r.read("n_cls", d.n_cls);
  r.read("imbalance", imbalance);
  r.read("rho", d.rho);
  seed_given = r.has("seed");
  r.read("seed", d.seed, 0);
  r.read("n_max", d.n_max);
  r.read("dim", d.dim);
  r.read("height", d.height);
  r.read("width", d.width);
  r.read("class_sep", d.class_sep);
  r.read("val_per_class", d.val_per_class);
  r.read("cifar_dir", d.cifar_dir);
  r.read("augment", d.augment);
  r.finish();
  d.source = data::parse_source(source);
  d.imbalance = data::parse_imbalance(imbalance);
}

void read_backbone(ObjectReader& r, nn::BackboneSpec& b) {
  if (auto* v = r.field("stage_channels")) {
    if (!v->is_array()) r.fail("stage_channels", "an array of positive integers");
    b.stage_channels.clear();
    for (const auto& c : *v) {
      if (!c.is_number_unsigned()) r.fail("stage_channels", "an array of positive integers");
      b.stage_channels.push_back(c.get<std::size_t>());
    }
  }
  r.read("blocks_per_stage", b.blocks_per_stage);
  r.read("batch_norm", b.batch_norm);
  r.finish();
}

std::vector<LrStep> read_schedule(ObjectReader& r) {
  std::vector<LrStep> out;
  const json* v = r.field("lr_schedule");
  if (!v->is_array()) r.fail("lr_schedule", "an array of [epoch, multiplier] pairs");
  for (const auto& step : *v) {
    if (!step.is_array() || step.size() != 2 || !step[0].is_number_unsigned() ||
        !step[1].is_number()) {
      r.fail("lr_schedule", "an array of [epoch, multiplier] pairs");
    }
    out.push_back({step[0].get<std::size_t>(), step[1].get<double>()});
  }
  return out;
}

}  // namespace

void RsgConfig::validate() const {
  if (k < 1) throw ValidationError("config: K must be at least 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ValidationError("config: alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw ValidationError("config: beta must lie in (0, 1], got " + std::to_string(beta));
  }
  loss_weights().validate();
  if (contrastive_hidden < 1) throw ValidationError("config: contrastive_hidden must be positive");
  if (!(t_th < epochs)) {
    throw ValidationError("config: T_th (" + std::to_string(t_th) + ") must be below T (" +
                          std::to_string(epochs) + ")");
  }
  if (!(lr > 0.0)) throw ValidationError("config: lr must be positive");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (!(lr_schedule[i].multiplier > 0.0)) {
      throw ValidationError("config: lr_schedule multipliers must be positive");
    }
    if (i > 0 && lr_schedule[i].epoch <= lr_schedule[i - 1].epoch) {
      throw ValidationError("config: lr_schedule epochs must be strictly increasing");
    }
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ValidationError("config: momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ValidationError("config: weight_decay must be non-negative");
  if (batch_size < 2) throw ValidationError("config: batch_size must be at least 2");
  if (cls_loss != "cross_entropy" && cls_loss != "focal") {
    throw ValidationError("config: cls_loss must be cross_entropy or focal, got '" + cls_loss +
                          "'");
  }
  if (!(focal_gamma >= 0.0)) throw ValidationError("config: focal_gamma must be non-negative");
  dataset.validate();
  backbone_spec(1).validate();
}

nn::BackboneSpec RsgConfig::backbone_spec(std::size_t in_channels) const {
  nn::BackboneSpec spec = backbone;
  spec.in_channels = in_channels;
  spec.n_cls = dataset.n_cls;
  return spec;
}

RsgConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  RsgConfig cfg;
  ObjectReader r(j, "");
  const bool alpha_given = r.has("alpha"), beta_given = r.has("beta");

  r.read("K", cfg.k);
  r.read("alpha", cfg.alpha);
  r.read("beta", cfg.beta);
  r.read("lambda1", cfg.lambda1);
  r.read("lambda2", cfg.lambda2);
  r.read("contrastive_hidden", cfg.contrastive_hidden);
  r.read("T", cfg.epochs);
  r.read("T_th", cfg.t_th);
  r.read("lr", cfg.lr);
  if (r.has("lr_schedule")) cfg.lr_schedule = read_schedule(r);
  r.read("momentum", cfg.momentum);
  r.read("weight_decay", cfg.weight_decay);
  r.read("batch_size", cfg.batch_size);
  r.read("seed", cfg.seed, 0);
  r.read("insertion_stage", cfg.backbone.insertion_stage);
  r.read("generation", cfg.generation);
  r.read("backprop_generated_to_backbone", cfg.backprop_generated_to_backbone);
  std::string displacement = to_string(cfg.displacement), target = to_string(cfg.generation_target);
  r.read("displacement", displacement);
  r.read("generation_target", target);
  cfg.displacement = parse_displacement(displacement);
  cfg.generation_target = parse_target(target);
  if (auto* v = r.field("mv_terms")) {
    ObjectReader m(*v, "mv_terms");
    m.read("cosine", cfg.mv_terms.cosine);
    m.read("length", cfg.mv_terms.length);
    m.read("contrastive", cfg.mv_terms.contrastive);
    m.finish();
  }
  r.read("cesc_differentiate_gamma", cfg.cesc_differentiate_gamma);
  r.read("cls_loss", cfg.cls_loss);
  r.read("focal_gamma", cfg.focal_gamma);
  if (auto* v = r.field("backbone")) {
    ObjectReader b(*v, "backbone");
    read_backbone(b, cfg.backbone);
  }
  bool dataset_seed_given = false;
  if (auto* v = r.field("dataset")) {
    ObjectReader d(*v, "dataset");
    read_dataset(d, cfg.dataset, dataset_seed_given);
  }
  r.finish();

  if (!dataset_seed_given) cfg.dataset.seed = cfg.seed;
  const bool step = cfg.dataset.imbalance == data::ImbalanceType::kStep;
  if (!alpha_given) cfg.alpha = step ? 0.5 : 0.2;
  if (!beta_given) cfg.beta = step ? 0.01 : 1.0;
  cfg.validate();
  return cfg;
}

RsgConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const RsgConfig& cfg, int indent) {
  ordered_json j;
  j["K"] = cfg.k;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["lambda1"] = cfg.lambda1;
  j["lambda2"] = cfg.lambda2;
  j["contrastive_hidden"] = cfg.contrastive_hidden;
  j["T"] = cfg.epochs;
  j["T_th"] = cfg.t_th;
  j["lr"] = cfg.lr;
  ordered_json schedule = ordered_json::array();
  for (const auto& s : cfg.lr_schedule) schedule.push_back({s.epoch, s.multiplier});
  j["lr_schedule"] = schedule;
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["insertion_stage"] = cfg.backbone.insertion_stage;
  j["generation"] = cfg.generation;
  j["backprop_generated_to_backbone"] = cfg.backprop_generated_to_backbone;
  j["displacement"] = to_string(cfg.displacement);
  j["generation_target"] = to_string(cfg.generation_target);
  j["mv_terms"] = ordered_json{{"cosine", cfg.mv_terms.cosine},
                               {"length", cfg.mv_terms.length},
                               {"contrastive", cfg.mv_terms.contrastive}};
  j["cesc_differentiate_gamma"] = cfg.cesc_differentiate_gamma;
  j["cls_loss"] = cfg.cls_loss;
  j["focal_gamma"] = cfg.focal_gamma;
  j["backbone"] = ordered_json{{"stage_channels", cfg.backbone.stage_channels},
                               {"blocks_per_stage", cfg.backbone.blocks_per_stage},
                               {"batch_norm", cfg.backbone.batch_norm}};
  const auto& d = cfg.dataset;
  j["dataset"] = ordered_json{{"source", data::to_string(d.source)},
                              {"n_cls", d.n_cls},
                              {"imbalance", data::to_string(d.imbalance)},
                              {"rho", d.rho},
                              {"seed", d.seed},
                              {"n_max", d.n_max},
                              {"dim", d.dim},
                              {"height", d.height},
                              {"width", d.width},
                              {"class_sep", d.class_sep},
                              {"val_per_class", d.val_per_class},
                              {"cifar_dir", d.cifar_dir},
                              {"augment", d.augment}};
  return j.dump(indent);
}

double lr_at(std::size_t epoch, const RsgConfig& cfg) {
  double lr = cfg.lr;
  for (const auto& s : cfg.lr_schedule) {
    if (epoch >= s.epoch) lr *= s.multiplier;
  }
  return lr;
}

std::string to_string(DisplacementMode m) {
  return m == DisplacementMode::kVectorTransform ? "vector_transform" : "direct_addition";
}

std::string to_string(GenerationTarget t) {
  return t == GenerationTarget::kRareSamples ? "rare_samples" : "rare_centers";
}

}  // namespace rsg::train
