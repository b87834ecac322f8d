/*
 * Copyright 2026 The HetSNGP Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Run configuration for the command-line front end: a strict JSON schema
// (unknown keys are rejected) covering the dataset, the model and the output
// location, with lossless serialization of the resolved configuration.

#ifndef HETSNGP_RUN_CONFIG_HPP_
#define HETSNGP_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hetsngp/data.hpp"
#include "hetsngp/errors.hpp"
#include "hetsngp/model.hpp"

namespace hetsngp {

using Json = nlohmann::json;

struct DatasetSpec {
  std::string generator = "two_moons";  // two_moons | gaussian_mixture | noisy_circles | csv
  int n = 1000;                         // two_moons
  double noise_sd = 0.1;                // two_moons
  MixtureParams mixture;
  CirclesParams circles;
  std::string path;  // csv
  std::string label_column = "label";
  std::string delimiter = ",";
  std::uint64_t seed = 0;
  double test_fraction = 0.0;
  std::uint64_t split_seed = 0;
  std::string subset = "train";  // all | train | test | test_id | id | ood
  bool standardize = true;
};

struct RunConfig {
  DatasetSpec dataset;
  ModelConfig model;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
};

namespace detail {

// Reads the members of one JSON object and remembers which keys were used so
// that anything left over can be reported as unknown.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorCode::kInvalidConfig, path_ + ": expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const Json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad(key, "a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad(key, "a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) bad(key, "a nonnegative integer");
      out = v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) bad(key, "an integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad(key, "a number");
      out = v.get<T>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  template <std::size_t N>
  void read(const std::string& key, std::array<double, N>& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const Json& v = j_.at(key);
    if (!v.is_array() || v.size() != N) bad(key, "an array of " + std::to_string(N) + " numbers");
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number()) bad(key, "an array of numbers");
      out[i] = v[i].get<double>();
    }
  }

  template <typename E>
  void read_enum(const std::string& key, E& out,
                 const std::vector<std::pair<const char*, E>>& names) {
    if (!j_.contains(key)) return;
    std::string s;
    read(key, s);
    for (const auto& [name, value] : names) {
      if (s == name) {
        out = value;
        return;
      }
    }
    std::string allowed;
    for (const auto& [name, value] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    fail(ErrorCode::kInvalidConfig,
         "config key '" + where(key) + "': unknown value '" + s + "' (allowed: " + allowed + ")");
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        fail(ErrorCode::kInvalidConfig, "unknown config key '" + where(item.key()) + "'");
      }
    }
  }

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& what) const {
    fail(ErrorCode::kInvalidConfig, "config key '" + where(key) + "' must be " + what);
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline const std::vector<std::pair<const char*, VariantKind>> kVariantNames = {
    {"deterministic", VariantKind::kDeterministic},
    {"sngp", VariantKind::kSngp},
    {"heteroscedastic", VariantKind::kHeteroscedastic},
    {"hetsngp", VariantKind::kHetSngp}};
inline const std::vector<std::pair<const char*, Activation>> kActivationNames = {
    {"relu", Activation::kRelu}, {"tanh", Activation::kTanh}, {"identity", Activation::kIdentity}};
inline const std::vector<std::pair<const char*, SpectralMode>> kSpectralModeNames = {
    {"soft_bound", SpectralMode::kSoftBound}, {"hard_projection", SpectralMode::kHardProjection}};
inline const std::vector<std::pair<const char*, PosteriorMode>> kPosteriorModeNames = {
    {"exact_sum", PosteriorMode::kExactSum}, {"momentum", PosteriorMode::kMomentum}};
inline const std::vector<std::pair<const char*, HetVariant>> kHetVariantNames = {
    {"standard", HetVariant::kStandard}, {"parameter_efficient", HetVariant::kParameterEfficient}};
inline const std::vector<std::pair<const char*, LrSchedule>> kScheduleNames = {
    {"constant", LrSchedule::kConstant}, {"cosine", LrSchedule::kCosine}};
inline const std::vector<std::pair<const char*, BetaPenaltyScaling>> kPenaltyNames = {
    {"per_batch", BetaPenaltyScaling::kPerBatch}, {"per_example", BetaPenaltyScaling::kPerExample}};
inline const std::vector<std::pair<const char*, LossForm>> kLossFormNames = {
    {"log_mean_prob", LossForm::kLogMeanProb}, {"mean_log_prob", LossForm::kMeanLogProb}};

template <typename E>
std::string enum_name(E value, const std::vector<std::pair<const char*, E>>& names) {
  for (const auto& [name, v] : names) {
    if (v == value) return name;
  }
  return "?";
}

inline void read_dataset(const Json& j, const std::string& path, DatasetSpec& d) {
  StrictObject o(j, path);
  o.read("generator", d.generator);
  o.read("seed", d.seed);
  o.read("test_fraction", d.test_fraction);
  o.read("split_seed", d.split_seed);
  o.read("subset", d.subset);
  o.read("standardize", d.standardize);
  if (o.has("params")) {
    StrictObject p(o.child("params"), o.where("params"));
    if (d.generator == "two_moons") {
      p.read("n", d.n);
      p.read("noise_sd", d.noise_sd);
    } else if (d.generator == "gaussian_mixture") {
      p.read("n_per_class", d.mixture.n_per_class);
      p.read("k_classes", d.mixture.k_classes);
      p.read("ood_n", d.mixture.ood_n);
      p.read("ood_offset", d.mixture.ood_offset);
      p.read("radius", d.mixture.radius);
      p.read("blob_sd", d.mixture.blob_sd);
      p.read("ood_sd", d.mixture.ood_sd);
    } else if (d.generator == "noisy_circles") {
      p.read("n_per_class", d.circles.n_per_class);
      p.read("radii", d.circles.radii);
      p.read("flip_rates", d.circles.flip_rates);
      p.read("radial_sd", d.circles.radial_sd);
    } else if (d.generator == "csv") {
      p.read("path", d.path);
      p.read("label_column", d.label_column);
      p.read("delimiter", d.delimiter);
    }
    p.finish();
  }
  o.finish();
}

inline void validate_dataset(const DatasetSpec& d) {
  static const std::set<std::string> generators = {"two_moons", "gaussian_mixture",
                                                   "noisy_circles", "csv"};
  static const std::set<std::string> subsets = {"all", "train", "test", "test_id", "id", "ood"};
  require(generators.count(d.generator) > 0, ErrorCode::kInvalidConfig,
          "config key 'dataset.generator': unknown generator '" + d.generator + "'");
  require(subsets.count(d.subset) > 0, ErrorCode::kInvalidConfig,
          "config key 'dataset.subset': unknown subset '" + d.subset + "'");
  require(d.test_fraction >= 0.0 && d.test_fraction < 1.0, ErrorCode::kInvalidConfig,
          "config key 'dataset.test_fraction' must be in [0, 1)");
  require(d.generator != "csv" || !d.path.empty(), ErrorCode::kInvalidConfig,
          "config key 'dataset.params.path' is required for csv datasets");
  require(d.delimiter.size() == 1, ErrorCode::kInvalidConfig,
          "config key 'dataset.params.delimiter' must be a single character");
  require(d.n >= 1, ErrorCode::kInvalidConfig, "config key 'dataset.params.n' must be >= 1");
}

inline Json dataset_to_json(const DatasetSpec& d) {
  Json params;
  if (d.generator == "two_moons") {
    params = {{"n", d.n}, {"noise_sd", d.noise_sd}};
  } else if (d.generator == "gaussian_mixture") {
    params = {{"n_per_class", d.mixture.n_per_class}, {"k_classes", d.mixture.k_classes},
              {"ood_n", d.mixture.ood_n},             {"ood_offset", d.mixture.ood_offset},
              {"radius", d.mixture.radius},           {"blob_sd", d.mixture.blob_sd},
              {"ood_sd", d.mixture.ood_sd}};
  } else if (d.generator == "noisy_circles") {
    params = {{"n_per_class", d.circles.n_per_class},
              {"radii", d.circles.radii},
              {"flip_rates", d.circles.flip_rates},
              {"radial_sd", d.circles.radial_sd}};
  } else {
    params = {{"path", d.path}, {"label_column", d.label_column}, {"delimiter", d.delimiter}};
  }
  return {{"generator", d.generator}, {"params", params},
          {"seed", d.seed},           {"test_fraction", d.test_fraction},
          {"split_seed", d.split_seed}, {"subset", d.subset},
          {"standardize", d.standardize}};
}

}  // namespace detail

// Parses a run configuration. Missing keys keep their defaults; unknown keys,
// wrongly typed values and out-of-range settings raise InvalidConfig naming
// the offending key.
inline RunConfig run_config_from_json(const Json& j) {
  using namespace detail;
  RunConfig rc;
  StrictObject root(j, "");
  if (root.has("dataset")) read_dataset(root.child("dataset"), "dataset", rc.dataset);
  root.read_enum("variant", rc.model.variant, kVariantNames);
  root.read("output_dir", rc.output_dir);
  root.read("seed", rc.seed);
  ModelConfig& m = rc.model;
  if (root.has("net")) {
    StrictObject o(root.child("net"), "net");
    o.read("hidden_dim", m.net.hidden_dim);
    o.read("num_residual_blocks", m.net.num_residual_blocks);
    o.read("output_dim", m.net.output_dim);
    o.read("spectral_bound", m.net.spectral_bound);
    o.read("sn_power_iters", m.net.sn_power_iters);
    o.read_enum("activation", m.net.activation, kActivationNames);
    o.read("spectral_normalization", m.net.spectral_normalization);
    o.read_enum("spectral_mode", m.net.spectral_mode, kSpectralModeNames);
    o.finish();
  }
  if (root.has("rff")) {
    StrictObject o(root.child("rff"), "rff");
    o.read("num_features", m.rff.num_features);
    o.read("lengthscale", m.rff.lengthscale);
    o.read("median_heuristic", m.rff.median_heuristic);
    o.read("layer_norm", m.rff.layer_norm);
    o.read_enum("posterior_mode", m.rff.posterior_mode, kPosteriorModeNames);
    o.read("momentum", m.rff.momentum);
    o.finish();
  }
  if (root.has("het")) {
    StrictObject o(root.child("het"), "het");
    o.read("rank", m.het.rank);
    o.read_enum("variant", m.het.variant, kHetVariantNames);
    o.read("min_scale", m.het.min_scale);
    o.read("init_scale", m.het.init_scale);
    o.finish();
  }
  if (root.has("train")) {
    StrictObject o(root.child("train"), "train");
    o.read("epochs", m.train.epochs);
    o.read("batch_size", m.train.batch_size);
    o.read("learning_rate", m.train.learning_rate);
    o.read_enum("lr_schedule", m.train.lr_schedule, kScheduleNames);
    o.read("sgd_momentum", m.train.sgd_momentum);
    o.read("weight_decay", m.train.weight_decay);
    o.read("beta_penalty", m.train.beta_penalty);
    o.read_enum("beta_penalty_scaling", m.train.beta_penalty_scaling, kPenaltyNames);
    o.read("mc_samples", m.train.mc_samples_train);
    o.read("temperature", m.train.temperature);
    o.read("sample_beta", m.train.sample_beta);
    o.read("laplace_extra_pass", m.train.laplace_extra_pass);
    o.read_enum("loss_form", m.train.loss_form, kLossFormNames);
    o.finish();
  }
  if (root.has("predict")) {
    StrictObject o(root.child("predict"), "predict");
    o.read("mc_samples", m.predict.mc_samples);
    o.read("temperature", m.predict.temperature);
    o.read("map_mode", m.predict.map_mode);
    o.finish();
  }
  root.finish();
  m.train.seed = rc.seed;
  validate_dataset(rc.dataset);
  require(m.train.epochs >= 1, ErrorCode::kInvalidConfig, "config key 'train.epochs' must be >= 1");
  m.net.validate();
  m.rff.validate();
  m.train.validate();
  m.predict.validate();
  require(m.het.rank >= 1, ErrorCode::kInvalidConfig, "config key 'het.rank' must be >= 1");
  require(m.het.min_scale > 0.0, ErrorCode::kInvalidConfig,
          "config key 'het.min_scale' must be > 0");
  require(m.het.init_scale >= 0.0, ErrorCode::kInvalidConfig,
          "config key 'het.init_scale' must be >= 0");
  return rc;
}

// The fully resolved configuration, every field present.
inline Json run_config_to_json(const RunConfig& rc) {
  using namespace detail;
  const ModelConfig& m = rc.model;
  return {
      {"dataset", dataset_to_json(rc.dataset)},
      {"variant", enum_name(m.variant, kVariantNames)},
      {"output_dir", rc.output_dir},
      {"seed", rc.seed},
      {"net",
       {{"hidden_dim", m.net.hidden_dim},
        {"num_residual_blocks", m.net.num_residual_blocks},
        {"output_dim", m.net.output_dim},
        {"spectral_bound", m.net.spectral_bound},
        {"sn_power_iters", m.net.sn_power_iters},
        {"activation", enum_name(m.net.activation, kActivationNames)},
        {"spectral_normalization", m.net.spectral_normalization},
        {"spectral_mode", enum_name(m.net.spectral_mode, kSpectralModeNames)}}},
      {"rff",
       {{"num_features", m.rff.num_features},
        {"lengthscale", m.rff.lengthscale},
        {"median_heuristic", m.rff.median_heuristic},
        {"layer_norm", m.rff.layer_norm},
        {"posterior_mode", enum_name(m.rff.posterior_mode, kPosteriorModeNames)},
        {"momentum", m.rff.momentum}}},
      {"het",
       {{"rank", m.het.rank},
        {"variant", enum_name(m.het.variant, kHetVariantNames)},
        {"min_scale", m.het.min_scale},
        {"init_scale", m.het.init_scale}}},
      {"train",
       {{"epochs", m.train.epochs},
        {"batch_size", m.train.batch_size},
        {"learning_rate", m.train.learning_rate},
        {"lr_schedule", enum_name(m.train.lr_schedule, kScheduleNames)},
        {"sgd_momentum", m.train.sgd_momentum},
        {"weight_decay", m.train.weight_decay},
        {"beta_penalty", m.train.beta_penalty},
        {"beta_penalty_scaling", enum_name(m.train.beta_penalty_scaling, kPenaltyNames)},
        {"mc_samples", m.train.mc_samples_train},
        {"temperature", m.train.temperature},
        {"sample_beta", m.train.sample_beta},
        {"laplace_extra_pass", m.train.laplace_extra_pass},
        {"loss_form", enum_name(m.train.loss_form, kLossFormNames)}}},
      {"predict",
       {{"mc_samples", m.predict.mc_samples},
        {"temperature", m.predict.temperature},
        {"map_mode", m.predict.map_mode}}},
  };
}

inline Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kInvalidConfig, origin + ": invalid JSON (" + e.what() + ")");
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Loads a config file. A relative CSV path is resolved against the config
// file's directory.
inline RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error&) {
    fail(ErrorCode::kInvalidConfig, "cannot read config file '" + path + "'");
  }
  RunConfig rc = run_config_from_json(parse_json_text(text, path));
  if (rc.dataset.generator == "csv") {
    std::filesystem::path p(rc.dataset.path);
    if (p.is_relative()) {
      rc.dataset.path = (std::filesystem::path(path).parent_path() / p).lexically_normal().string();
    }
  }
  return rc;
}

// Parses a standalone dataset spec (the "dataset" object of a run config).
inline DatasetSpec dataset_spec_from_json(const Json& j) {
  DatasetSpec d;
  detail::read_dataset(j, "dataset", d);
  detail::validate_dataset(d);
  return d;
}

inline Json dataset_spec_to_json(const DatasetSpec& d) { return detail::dataset_to_json(d); }

// ---------------------------------------------------------------------------
// Materializing a dataset spec

struct LoadedData {
  Dataset all;
  Dataset train;
  Dataset test;
};

inline LoadedData load_dataset(const DatasetSpec& d,
                               const std::vector<std::string>* label_names = nullptr) {
  LoadedData out;
  if (d.generator == "two_moons") {
    out.all = two_moons(d.n, d.noise_sd, d.seed);
  } else if (d.generator == "gaussian_mixture") {
    out.all = gaussian_mixture_with_ood(d.mixture, d.seed);
  } else if (d.generator == "noisy_circles") {
    out.all = noisy_concentric_circles(d.circles, d.seed);
  } else {
    out.all = load_csv(d.path, d.label_column, d.delimiter[0], label_names);
  }
  auto [train, test] = split(out.all, {1.0 - d.test_fraction, d.test_fraction}, d.split_seed);
  out.train = std::move(train);
  out.test = std::move(test);
  return out;
}

// Rows named by `subset`: all, train, test, test_id (test without OOD rows),
// id (every in-distribution row) or ood (every OOD row).
inline Dataset select_subset(const LoadedData& data, const std::string& subset) {
  if (subset == "all") return data.all;
  if (subset == "train") return data.train;
  if (subset == "test") return data.test;
  if (subset == "test_id") return data.test.select_ood(false);
  if (subset == "id") return data.all.select_ood(false);
  if (subset == "ood") return data.all.select_ood(true);
  fail(ErrorCode::kInvalidConfig, "unknown subset '" + subset + "'");
}

}  // namespace hetsngp

#endif  // HETSNGP_RUN_CONFIG_HPP_
