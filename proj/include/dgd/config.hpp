#pragma once

// JSON run configuration. Every section and key is optional; missing keys keep
// the defaults of the corresponding struct.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgd/augment.hpp"
#include "dgd/descriptor.hpp"
#include "dgd/error.hpp"
#include "dgd/evalfuse.hpp"
#include "dgd/objective.hpp"
#include "dgd/pipeline.hpp"
#include "dgd/trainer.hpp"

namespace dgd {

struct EvalConfig {
  TtaConfig tta = tta_default();
  TtaMode tta_mode = TtaMode::MeanSim;
  std::uint64_t tta_seed = 0;
  bool use_ema = true;
  std::vector<double> fusion_weights;
};

struct RunConfig {
  std::string data_dir = "data";  // where gen-synth writes and train reads by default
  std::string output_dir = "out";
  SplitConfig data = default_split();
  ExtractorSpec extractor;
  HeadSpec head;
  std::uint64_t head_seed = 11;
  StageConfig stage1 = default_stage_config(1);
  StageConfig stage2 = default_stage_config(2);
  EvalConfig eval;

  // Synthetic split used when no config overrides it.
  static SplitConfig default_split() {
    SplitConfig s;
    s.synth.frequency = {4.0, 56.0};
    s.synth.blur_sigma = 3.0;
    s.synth.noise = 60.0;
    s.synth.seed = 1;
    return s;
  }

  void validate() const {
    data.validate();
    require(head.branch_dim >= 1, Errc::InvalidConfig, "head.branch_dim must be >= 1");
    for (auto p : {head.branch_a, head.branch_b})
      if (p.kind == PoolSpec::Kind::Gem) require(p.p >= 1.0, Errc::BadExponent, "GeM p must be >= 1");
    stage1.validate();
    stage2.validate();
    for (auto w : eval.fusion_weights) require(std::isfinite(w), Errc::InvalidConfig, "fusion weight");
  }
};

namespace detail {

using nlohmann::json;

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void get_range(const json& j, const char* key, std::pair<double, double>& out) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  require(v.size() == 2, Errc::InvalidConfig, std::string(key) + " must be [lo, hi]");
  out = {v[0], v[1]};
}

inline PoolSpec parse_pool(const std::string& name, double p) {
  if (name == "spoc") return PoolSpec::spoc();
  if (name == "mac") return PoolSpec::mac();
  if (name == "gem") return PoolSpec::gem(p);
  fail(Errc::InvalidConfig, "unknown pool kind '" + name + "'");
}

inline AugmentProfile parse_profile(const std::string& name, const json& j, AugmentProfile p) {
  p.name = name;
  get_if(j, "small_resize_prob", p.small_resize_prob);
  get_if(j, "small_sizes", p.small_sizes);
  get_if(j, "final_size", p.final_size);
  get_range(j, "brightness_delta_range", p.brightness_delta_range);
  get_range(j, "contrast_range", p.contrast_range);
  get_if(j, "blur_prob", p.blur_prob);
  get_if(j, "blur_lengths", p.blur_lengths);
  get_if(j, "crop_prob", p.crop_prob);
  get_range(j, "crop_fraction_range", p.crop_fraction_range);
  p.validate();
  return p;
}

inline LossConfig parse_loss(const json& j, LossConfig l) {
  get_if(j, "tau", l.tau);
  get_if(j, "lambda_cr", l.lambda_cr);
  get_if(j, "lambda_ce", l.lambda_ce);
  get_if(j, "denominator_includes_self", l.denominator_includes_self);
  return l;
}

inline StageConfig parse_stage(const json& j, StageConfig s, const LossConfig& loss,
                               const std::map<std::string, AugmentProfile>& profiles) {
  s.loss = loss;
  get_if(j, "epochs", s.epochs);
  get_if(j, "lr_max", s.lr_max);
  get_if(j, "lr_min", s.lr_min);
  if (j.contains("t_max")) s.t_max = j.at("t_max").get<int>();
  else if (j.contains("epochs")) s.t_max = std::max(1, s.epochs - 1);
  get_if(j, "batch_P", s.batch_P);
  get_if(j, "batch_K", s.batch_K);
  get_if(j, "ema_decay", s.ema_decay);
  get_if(j, "ema_warmup", s.ema_warmup);
  get_if(j, "seed", s.seed);
  if (j.contains("augment")) {
    const auto name = j.at("augment").get<std::string>();
    auto it = profiles.find(name);
    require(it != profiles.end(), Errc::InvalidConfig, "unknown augment profile '" + name + "'");
    s.augment = it->second;
  }
  if (j.contains("loss")) s.loss = parse_loss(j.at("loss"), s.loss);
  return s;
}

inline TtaConfig parse_tta(const json& j) {
  TtaConfig t;
  get_if(j, "final_size", t.final_size);
  for (const auto& v : j.at("views")) {
    ViewRecipe r;
    const auto kind = v.at("kind").get<std::string>();
    if (kind == "identity") r.kind = ViewRecipe::Kind::Identity;
    else if (kind == "scale") r.kind = ViewRecipe::Kind::Scale, r.scale_size = v.at("size").get<int>();
    else if (kind == "crop") r.kind = ViewRecipe::Kind::Crop, get_range(v, "fraction", r.range);
    else if (kind == "contrast") r.kind = ViewRecipe::Kind::Contrast, get_range(v, "alpha", r.range);
    else fail(Errc::InvalidConfig, "unknown view kind '" + kind + "'");
    t.views.push_back(r);
  }
  require(!t.views.empty(), Errc::InvalidConfig, "tta needs at least one view");
  return t;
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  using detail::get_if;
  using detail::json;
  RunConfig rc;
  try {
    const json j = json::parse(text);
    require(j.is_object(), Errc::InvalidConfig, "config must be a JSON object");

    if (j.contains("paths")) {
      get_if(j.at("paths"), "data_dir", rc.data_dir);
      get_if(j.at("paths"), "output_dir", rc.output_dir);
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      auto& s = rc.data.synth;
      get_if(d, "identities", s.identities);
      get_if(d, "images_per_identity", s.images_per_identity);
      get_if(d, "image_size", s.image_size);
      get_if(d, "gratings", s.gratings);
      if (d.contains("jitter")) {
        const auto& jt = d.at("jitter");
        get_if(jt, "rotation", s.jitter.rotation);
        get_if(jt, "translation", s.jitter.translation);
        get_if(jt, "scale", s.jitter.scale);
      }
      get_if(d, "brightness", s.brightness);
      detail::get_range(d, "contrast", s.contrast);
      detail::get_range(d, "frequency", s.frequency);
      get_if(d, "blur_sigma", s.blur_sigma);
      get_if(d, "noise", s.noise);
      get_if(d, "seed", s.seed);
      get_if(d, "eval_identities", rc.data.eval_identities);
      get_if(d, "eval_images_per_identity", rc.data.eval_images_per_identity);
      get_if(d, "eval_positive_pairs", rc.data.eval_positive_pairs);
      get_if(d, "eval_negative_pairs", rc.data.eval_negative_pairs);
    }
    if (j.contains("extractor")) {
      const auto& e = j.at("extractor");
      get_if(e, "seed", rc.extractor.seed);
      get_if(e, "k1", rc.extractor.k1);
      get_if(e, "k2", rc.extractor.k2);
      get_if(e, "kernel", rc.extractor.kernel);
    }
    if (j.contains("head")) {
      const auto& h = j.at("head");
      get_if(h, "branch_dim", rc.head.branch_dim);
      get_if(h, "cgd_order", rc.head.cgd_order);
      get_if(h, "seed", rc.head_seed);
      if (h.contains("branch_a"))
        rc.head.branch_a = detail::parse_pool(h.at("branch_a").get<std::string>(), h.value("p_a", 3.0));
      if (h.contains("branch_b"))
        rc.head.branch_b = detail::parse_pool(h.at("branch_b").get<std::string>(), h.value("p_b", 3.0));
    }

    std::map<std::string, AugmentProfile> profiles;
    for (auto name : {"none", "stage1", "stage1_multi", "stage2"}) profiles.emplace(name, *builtin_profile(name));
    if (j.contains("profiles"))
      for (const auto& [name, body] : j.at("profiles").items()) {
        const auto base = builtin_profile(name).value_or(AugmentProfile{});
        profiles[name] = detail::parse_profile(name, body, base);
      }

    const LossConfig loss = j.contains("loss") ? detail::parse_loss(j.at("loss"), LossConfig{}) : LossConfig{};
    rc.stage1 = detail::parse_stage(j.value("stage1", json::object()), rc.stage1, loss, profiles);
    rc.stage2 = detail::parse_stage(j.value("stage2", json::object()), rc.stage2, loss, profiles);

    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      if (e.contains("tta")) rc.eval.tta = detail::parse_tta(e.at("tta"));
      if (e.contains("tta_mode")) {
        const auto m = e.at("tta_mode").get<std::string>();
        if (m == "mean_sim") rc.eval.tta_mode = TtaMode::MeanSim;
        else if (m == "mean_emb") rc.eval.tta_mode = TtaMode::MeanEmb;
        else fail(Errc::InvalidConfig, "unknown tta_mode '" + m + "'");
      }
      get_if(e, "tta_seed", rc.eval.tta_seed);
      get_if(e, "use_ema", rc.eval.use_ema);
      get_if(e, "fusion_weights", rc.eval.fusion_weights);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::InvalidConfig, e.what());
  }
  rc.validate();
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), Errc::Io, "cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace dgd
