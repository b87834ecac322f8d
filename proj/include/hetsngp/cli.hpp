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

// Command implementations behind the hetsngp executable. Every command takes
// parsed options, writes its artifacts into the output directory and returns
// a process exit code:
//   0 success, 1 internal error, 2 invalid configuration, 3 training diverged,
//   4 unreadable checkpoint, 5 unreadable or empty input, 6 grid on a model
//   whose input is not 2-D.

#ifndef HETSNGP_CLI_HPP_
#define HETSNGP_CLI_HPP_

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hetsngp/benchmarks.hpp"
#include "hetsngp/checkpoint.hpp"
#include "hetsngp/metrics.hpp"
#include "hetsngp/model.hpp"
#include "hetsngp/run_config.hpp"

namespace hetsngp {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kConfig = 2;
inline constexpr int kDiverged = 3;
inline constexpr int kCheckpoint = 4;
inline constexpr int kInput = 5;
inline constexpr int kGridDim = 6;
}  // namespace exit_code

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> mc_samples;
  std::optional<double> temperature;
  bool map_mode = false;

  std::string checkpoint;
  std::string data;     // dataset spec JSON or CSV path
  std::string subset;   // overrides the spec's subset
  std::string id_data;
  std::string ood_data;
  GridSpec grid;
  int seed_count = 5;
  int members = 4;
  std::string ood_config;
  std::string moons_config;
};

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kEmptySchedule:
      return exit_code::kConfig;
    case ErrorCode::kNonFiniteLoss:
      return exit_code::kDiverged;
    case ErrorCode::kCheckpointError:
      return exit_code::kCheckpoint;
    case ErrorCode::kEmptyInput:
    case ErrorCode::kParseError:
    case ErrorCode::kMissingColumn:
    case ErrorCode::kNonNumericFeature:
    case ErrorCode::kIoError:
    case ErrorCode::kOneClassOnly:
      return exit_code::kInput;
    default:
      return exit_code::kInternal;
  }
}

namespace detail {

inline std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
  std::filesystem::path p(dir.empty() ? "." : dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create output directory '" + p.string() + "'");
  return p;
}

inline void apply_overrides(RunConfig& rc, const CliOptions& o, bool training) {
  if (!o.out_dir.empty()) rc.output_dir = o.out_dir;
  if (o.seed) {
    rc.seed = *o.seed;
    rc.model.train.seed = *o.seed;
  }
  if (o.mc_samples) {
    require(*o.mc_samples >= 1, ErrorCode::kInvalidConfig, "--mc-samples must be >= 1");
    rc.model.predict.mc_samples = *o.mc_samples;
  }
  if (o.temperature) {
    require(*o.temperature > 0.0, ErrorCode::kInvalidConfig, "--temperature must be > 0");
    rc.model.predict.temperature = *o.temperature;
    if (training) rc.model.train.temperature = *o.temperature;
  }
  if (o.map_mode) {
    rc.model.predict.map_mode = true;
    if (training) rc.model.train.sample_beta = false;
  }
}

inline RunConfig load_config_or_default(const CliOptions& o) {
  if (o.config_path.empty()) fail(ErrorCode::kInvalidConfig, "--config is required");
  return load_run_config(o.config_path);
}

// A data argument is either a dataset-spec JSON file or a CSV file.
inline DatasetSpec resolve_data_arg(const std::string& arg, const DatasetSpec& fallback) {
  if (arg.empty()) return fallback;
  std::filesystem::path p(arg);
  if (p.extension() == ".json") {
    std::string text;
    try {
      text = read_text_file(arg);
    } catch (const Error&) {
      fail(ErrorCode::kIoError, "cannot open dataset spec '" + arg + "'");
    }
    Json j = parse_json_text(text, arg);
    if (j.is_object() && j.contains("dataset")) j = j["dataset"];
    DatasetSpec d = dataset_spec_from_json(j);
    if (d.generator == "csv" && std::filesystem::path(d.path).is_relative()) {
      d.path = (p.parent_path() / d.path).lexically_normal().string();
    }
    return d;
  }
  DatasetSpec d;
  d.generator = "csv";
  d.path = arg;
  d.subset = "all";
  return d;
}

// Loads the requested rows and maps them into the checkpoint's input space.
inline Dataset load_for_checkpoint(const Checkpoint& ck, const DatasetSpec& spec,
                                   bool fixed_labels) {
  LoadedData data = load_dataset(spec, fixed_labels ? &ck.label_names : nullptr);
  Dataset ds = select_subset(data, spec.subset);
  require(!ds.empty(), ErrorCode::kEmptyInput, "selected dataset is empty");
  require(ds.dim() == ck.dims.input_dim, ErrorCode::kEmptyInput,
          "dataset has " + std::to_string(ds.dim()) + " features, checkpoint expects " +
              std::to_string(ck.dims.input_dim));
  require(ds.num_classes <= ck.dims.num_classes, ErrorCode::kEmptyInput,
          "dataset has more classes than the checkpoint");
  ds.x = ck.standardizer.transform(ds.x);
  return ds;
}

inline Checkpoint checkpoint_with_overrides(const CliOptions& o) {
  if (o.checkpoint.empty()) fail(ErrorCode::kInvalidConfig, "--checkpoint is required");
  Checkpoint ck = load_checkpoint(o.checkpoint);
  apply_overrides(ck.config, o, false);
  ck.model.config().predict = ck.config.model.predict;
  return ck;
}

inline Rng predict_rng(std::uint64_t seed) { return Rng(seed).split(streams::kPredict); }

inline Json eval_json(const EvalReport& r) {
  return {{"accuracy", r.accuracy}, {"nll", r.nll}, {"ece", r.ece}, {"n", r.n}};
}

struct TrainedRun {
  Checkpoint checkpoint;
  TrainReport report;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

inline TrainedRun train_run(const RunConfig& rc) {
  LoadedData data = load_dataset(rc.dataset);
  Dataset train = data.train;
  require(!train.empty(), ErrorCode::kEmptyInput, "training split is empty");
  Standardizer st = rc.dataset.standardize ? Standardizer::fit(train.x)
                                           : Standardizer::identity(train.dim());
  train.x = st.transform(train.x);
  TrainedRun out;
  out.n_train = train.size();
  out.n_test = data.test.size();
  out.checkpoint.config = rc;
  out.checkpoint.dims = {train.dim(), train.num_classes};
  out.checkpoint.standardizer = st;
  out.checkpoint.label_names = train.label_names;
  out.checkpoint.feature_names = train.feature_names;
  out.checkpoint.model = build_variant(rc.model.variant, out.checkpoint.dims, rc.model);
  out.report = fit(out.checkpoint.model, train, rc.model.train);
  return out;
}

inline std::string training_log_csv(const TrainReport& r) {
  std::string out = "epoch,loss,train_acc\n";
  for (const EpochLog& e : r.epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.loss) + "," +
           format_double(e.train_accuracy) + "\n";
  }
  return out;
}

inline Json train_report_json(const TrainReport& r) {
  return {{"epochs", r.epochs.size()},
          {"final_train_accuracy", r.final_train_accuracy},
          {"final_loss", r.epochs.empty() ? 0.0 : r.epochs.back().loss},
          {"lengthscale", r.lengthscale},
          {"steps", r.steps}};
}

// Runs `body`, translating library errors into exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kInternal;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

// Trains one model; writes checkpoint.bin, train_log.csv and manifest.json.
inline int cmd_train(const CliOptions& o, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    RunConfig rc = detail::load_config_or_default(o);
    detail::apply_overrides(rc, o, true);
    auto dir = detail::prepare_out_dir(rc.output_dir);
    detail::TrainedRun run = detail::train_run(rc);
    const std::string ckpt = encode_checkpoint(run.checkpoint);
    const std::string log = detail::training_log_csv(run.report);
    write_file((dir / "checkpoint.bin").string(), ckpt);
    write_file((dir / "train_log.csv").string(), log);
    const Json config = run_config_to_json(rc);
    Json manifest = {
        {"command", "train"},
        {"config", config},
        {"config_hash", git_blob_hash(config.dump())},
        {"data", {{"n_train", run.n_train}, {"n_test", run.n_test}}},
        {"train_report", detail::train_report_json(run.report)},
        {"artifacts",
         {{"checkpoint", {{"file", "checkpoint.bin"}, {"hash", git_blob_hash(ckpt)}}},
          {"train_log", {{"file", "train_log.csv"}, {"hash", git_blob_hash(log)}}}}}};
    write_file((dir / "manifest.json").string(), detail::json_text(manifest));
    out << "trained " << variant_name(rc.model.variant) << ": final train accuracy "
        << run.report.final_train_accuracy << " -> " << dir.string() << "\n";
    return exit_code::kOk;
  });
}

// Scores a checkpoint; writes eval_report.json.
inline int cmd_eval(const CliOptions& o, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    Checkpoint ck = detail::checkpoint_with_overrides(o);
    DatasetSpec spec = detail::resolve_data_arg(o.data, ck.config.dataset);
    if (!o.subset.empty()) spec.subset = o.subset;
    Dataset ds = detail::load_for_checkpoint(ck, spec, true);
    Matrix probs = ck.model.predict_proba(ds.x, detail::predict_rng(ck.config.seed));
    EvalReport r = evaluate(probs, ds.y);
    auto dir = detail::prepare_out_dir(o.out_dir.empty() ? ck.config.output_dir : o.out_dir);
    write_file((dir / "eval_report.json").string(), detail::json_text(detail::eval_json(r)));
    out << "accuracy " << r.accuracy << " nll " << r.nll << " ece " << r.ece << " n " << r.n << "\n";
    return exit_code::kOk;
  });
}

// ID-versus-OOD scoring with 1 - max probability; writes ood_report.json.
inline int cmd_ood(const CliOptions& o, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    Checkpoint ck = detail::checkpoint_with_overrides(o);
    DatasetSpec id_spec = ck.config.dataset;
    id_spec.subset = "test_id";
    DatasetSpec ood_spec = ck.config.dataset;
    ood_spec.subset = "ood";
    id_spec = detail::resolve_data_arg(o.id_data, id_spec);
    ood_spec = detail::resolve_data_arg(o.ood_data, ood_spec);
    Dataset id = detail::load_for_checkpoint(ck, id_spec, false);
    Dataset ood = detail::load_for_checkpoint(ck, ood_spec, false);
    Matrix x(id.size() + ood.size(), ck.dims.input_dim);
    x << id.x, ood.x;
    std::vector<std::uint8_t> flags(id.size(), 0);
    flags.resize(id.size() + ood.size(), 1);
    Matrix probs = ck.model.predict_proba(x, detail::predict_rng(ck.config.seed));
    Vector unc = uncertainty_from_probs(probs);
    Vector conf = probs.rowwise().maxCoeff();
    OodReport r = evaluate_ood(std::span<const double>(unc.data(), static_cast<std::size_t>(unc.size())),
                               std::span<const double>(conf.data(), static_cast<std::size_t>(conf.size())),
                               flags);
    Json j = {{"auroc", r.auroc}, {"fpr_at_95", r.fpr_at_95}, {"n_id", r.n_id}, {"n_ood", r.n_ood}};
    auto dir = detail::prepare_out_dir(o.out_dir.empty() ? ck.config.output_dir : o.out_dir);
    write_file((dir / "ood_report.json").string(), detail::json_text(j));
    out << "auroc " << r.auroc << " fpr95 " << r.fpr_at_95 << " n_id " << r.n_id << " n_ood "
        << r.n_ood << "\n";
    return exit_code::kOk;
  });
}

// Max probability and predicted label over a regular grid; writes grid.csv.
inline int cmd_grid(const CliOptions& o, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    Checkpoint ck = detail::checkpoint_with_overrides(o);
    if (ck.dims.input_dim != 2) {
      err << "error: grid export needs a 2-D model, checkpoint has input_dim "
          << ck.dims.input_dim << "\n";
      return exit_code::kGridDim;
    }
    Matrix pts = grid_points(o.grid);
    Matrix probs = ck.model.predict_proba(ck.standardizer.transform(pts),
                                          detail::predict_rng(ck.config.seed));
    std::string csv = "x,y,max_prob,pred_label\n";
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const int label = argmax_row(probs, i);
      csv += detail::format_double(pts(i, 0)) + "," + detail::format_double(pts(i, 1)) + "," +
             detail::format_double(probs(i, label)) + "," + std::to_string(label) + "\n";
    }
    auto dir = detail::prepare_out_dir(o.out_dir.empty() ? ck.config.output_dir : o.out_dir);
    write_file((dir / "grid.csv").string(), csv);
    out << "wrote " << pts.rows() << " grid points to " << (dir / "grid.csv").string() << "\n";
    return exit_code::kOk;
  });
}

inline std::string bench_table(const std::vector<BenchRow>& rows) {
  std::string s = "variant          mean_acc   stderr\n";
  for (const BenchRow& r : rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-16s %8.4f %8.4f\n", variant_name(r.variant).c_str(),
                  r.mean, r.stderr_);
    s += line;
  }
  return s;
}

// Label-noise benchmark plus the OOD panels; writes bench_summary.json and
// bench_table.csv.
inline int cmd_bench_synthetic(const CliOptions& o, std::ostream& out = std::cout,
                               std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    require(o.seed_count >= 1, ErrorCode::kInvalidConfig, "--seeds must be >= 1");
    RunConfig circles =
        o.config_path.empty() ? default_circles_bench_config() : load_run_config(o.config_path);
    RunConfig mixture =
        o.ood_config.empty() ? default_mixture_panel_config() : load_run_config(o.ood_config);
    RunConfig moons =
        o.moons_config.empty() ? default_moons_panel_config() : load_run_config(o.moons_config);
    for (RunConfig* rc : {&circles, &mixture, &moons}) detail::apply_overrides(*rc, o, true);
    auto dir = detail::prepare_out_dir(o.out_dir.empty() ? circles.output_dir : o.out_dir);
    const int threads = worker_threads();

    CirclesBenchOptions bo;
    bo.seed_count = o.seed_count;
    std::vector<BenchRow> rows = run_circles_benchmark(circles, bo, threads);
    std::vector<OodRow> panel = run_mixture_panel(mixture, threads);
    std::vector<BandRow> band = run_moons_panel(moons, FarBand{}, threads);

    Json jrows = Json::array();
    std::string csv = "variant,mean_accuracy,stderr\n";
    for (const BenchRow& r : rows) {
      jrows.push_back({{"variant", variant_name(r.variant)},
                       {"accuracies", r.accuracies},
                       {"mean", r.mean},
                       {"stderr", r.stderr_}});
      csv += variant_name(r.variant) + "," + detail::format_double(r.mean) + "," +
             detail::format_double(r.stderr_) + "\n";
    }
    Json jpanel = Json::array();
    for (const OodRow& r : panel) {
      jpanel.push_back({{"variant", variant_name(r.variant)},
                        {"auroc", r.auroc},
                        {"fpr_at_95", r.fpr_at_95},
                        {"mean_id_max_prob", r.mean_id_max_prob},
                        {"mean_ood_max_prob", r.mean_ood_max_prob},
                        {"n_id", r.n_id},
                        {"n_ood", r.n_ood}});
    }
    Json jband = Json::array();
    for (const BandRow& r : band) {
      jband.push_back({{"variant", variant_name(r.variant)},
                       {"mean_max_prob", r.mean_max_prob},
                       {"frac_max_prob_ge_0_9", r.frac_confident},
                       {"band_points", r.band_points}});
    }
    Json summary = {{"seed_count", o.seed_count},
                    {"label_noise", jrows},
                    {"mixture_ood", jpanel},
                    {"moons_far_field", jband},
                    {"configs",
                     {{"circles", run_config_to_json(circles)},
                      {"mixture", run_config_to_json(mixture)},
                      {"moons", run_config_to_json(moons)}}}};
    write_file((dir / "bench_summary.json").string(), detail::json_text(summary));
    write_file((dir / "bench_table.csv").string(), csv);

    out << "noisy circles, clean-label accuracy over " << o.seed_count << " seed(s)\n"
        << bench_table(rows) << "\nGaussian mixture OOD panel\n"
        << "variant          auroc    fpr95    ood_maxprob\n";
    for (const OodRow& r : panel) {
      char line[128];
      std::snprintf(line, sizeof(line), "%-16s %7.4f %8.4f %10.4f\n",
                    variant_name(r.variant).c_str(), r.auroc, r.fpr_at_95, r.mean_ood_max_prob);
      out << line;
    }
    out << "\ntwo moons far-field band\nvariant          mean_maxprob  frac>=0.9\n";
    for (const BandRow& r : band) {
      char line[128];
      std::snprintf(line, sizeof(line), "%-16s %12.4f %10.4f\n", variant_name(r.variant).c_str(),
                    r.mean_max_prob, r.frac_confident);
      out << line;
    }
    return exit_code::kOk;
  });
}

// Trains members with seeds seed+0..M-1 and scores their probability average;
// writes member_<i>/checkpoint.bin, ensemble_manifest.json and
// ensemble_report.json.
inline int cmd_ensemble(const CliOptions& o, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    require(o.members >= 1, ErrorCode::kInvalidConfig, "--members must be >= 1");
    RunConfig rc = detail::load_config_or_default(o);
    detail::apply_overrides(rc, o, true);
    auto dir = detail::prepare_out_dir(rc.output_dir);
    const int m = o.members;
    std::vector<detail::TrainedRun> runs(m);
    parallel_for(m, worker_threads(), [&](int i) {
      RunConfig member = rc;
      member.seed = rc.seed + static_cast<std::uint64_t>(i);
      member.model.train.seed = member.seed;
      member.output_dir = (dir / ("member_" + std::to_string(i))).string();
      runs[i] = detail::train_run(member);
    });

    Json members = Json::array();
    std::vector<const HetSngpModel*> models;
    for (int i = 0; i < m; ++i) {
      auto mdir = detail::prepare_out_dir(runs[i].checkpoint.config.output_dir);
      const std::string ckpt = encode_checkpoint(runs[i].checkpoint);
      write_file((mdir / "checkpoint.bin").string(), ckpt);
      write_file((mdir / "train_log.csv").string(), detail::training_log_csv(runs[i].report));
      members.push_back({{"seed", runs[i].checkpoint.config.seed},
                         {"checkpoint", "member_" + std::to_string(i) + "/checkpoint.bin"},
                         {"hash", git_blob_hash(ckpt)},
                         {"train_report", detail::train_report_json(runs[i].report)}});
      models.push_back(&runs[i].checkpoint.model);
    }

    const Checkpoint& first = runs[0].checkpoint;
    DatasetSpec spec = detail::resolve_data_arg(o.data, rc.dataset);
    if (!o.subset.empty()) spec.subset = o.subset;
    Dataset ds = detail::load_for_checkpoint(first, spec, true);
    const Rng rng = detail::predict_rng(rc.seed);
    const int s = rc.model.predict.mc_samples;
    Matrix ens = ensemble_predict(std::span<const HetSngpModel* const>(models), ds.x, s, rng);
    EvalReport er = evaluate(ens, ds.y);
    Json member_reports = Json::array();
    double mean_nll = 0.0;
    for (int i = 0; i < m; ++i) {
      EvalReport r = evaluate(predict_proba(*models[i], ds.x, s, rng), ds.y);
      mean_nll += r.nll / m;
      member_reports.push_back(detail::eval_json(r));
    }
    const Json config = run_config_to_json(rc);
    Json manifest = {{"command", "ensemble"},
                     {"config", config},
                     {"config_hash", git_blob_hash(config.dump())},
                     {"members", members}};
    Json report = {{"ensemble", detail::eval_json(er)},
                   {"members", member_reports},
                   {"mean_member_nll", mean_nll}};
    write_file((dir / "ensemble_manifest.json").string(), detail::json_text(manifest));
    write_file((dir / "ensemble_report.json").string(), detail::json_text(report));
    out << "ensemble of " << m << ": accuracy " << er.accuracy << " nll " << er.nll
        << " (mean member nll " << mean_nll << ")\n";
    return exit_code::kOk;
  });
}

}  // namespace hetsngp

#endif  // HETSNGP_CLI_HPP_
