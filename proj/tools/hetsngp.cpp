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

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "hetsngp/cli.hpp"

int main(int argc, char** argv) {
  using namespace hetsngp;
  CLI::App app{"Heteroscedastic spectral-normalized Gaussian process classifiers"};
  app.require_subcommand(1);
  app.fallthrough();

  CliOptions o;
  std::uint64_t seed = 0;
  int mc_samples = 0;
  double temperature = 0.0;
  app.add_option("--config", o.config_path, "Run configuration (JSON)");
  app.add_option("--out", o.out_dir, "Output directory");
  auto* seed_opt = app.add_option("--seed", seed, "Run seed override");
  auto* mc_opt = app.add_option("--mc-samples", mc_samples, "Monte-Carlo samples at prediction");
  auto* temp_opt = app.add_option("--temperature", temperature, "Softmax temperature override");
  app.add_flag("--map-mode", o.map_mode, "Use the posterior mode of beta instead of sampling");

  auto* train = app.add_subcommand("train", "Train a model from a config");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* ood = app.add_subcommand("ood", "Score in-distribution versus OOD inputs");
  auto* grid = app.add_subcommand("grid", "Export max probability over a 2-D grid");
  auto* bench = app.add_subcommand("bench-synthetic", "Run the synthetic benchmark suite");
  auto* ensemble = app.add_subcommand("ensemble", "Train and evaluate a deep ensemble");

  for (auto* sub : {eval, ood, grid}) {
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  }
  for (auto* sub : {eval, ensemble}) {
    sub->add_option("--data", o.data, "Dataset spec (JSON) or CSV file");
    sub->add_option("--subset", o.subset, "Rows to score: all, train, test, test_id, id, ood");
  }
  ood->add_option("--id", o.id_data, "In-distribution dataset spec (JSON) or CSV file");
  ood->add_option("--ood", o.ood_data, "Out-of-distribution dataset spec (JSON) or CSV file");
  grid->add_option("--xmin", o.grid.xmin);
  grid->add_option("--xmax", o.grid.xmax);
  grid->add_option("--ymin", o.grid.ymin);
  grid->add_option("--ymax", o.grid.ymax);
  grid->add_option("--resolution", o.grid.resolution, "Points per axis");
  bench->add_option("--seeds", o.seed_count, "Number of seeds for the label-noise benchmark");
  bench->add_option("--ood-config", o.ood_config, "Config for the Gaussian-mixture OOD panel");
  bench->add_option("--moons-config", o.moons_config, "Config for the two-moons panel");
  ensemble->add_option("--members", o.members, "Ensemble size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code::kConfig;
  }
  if (*seed_opt) o.seed = seed;
  if (*mc_opt) o.mc_samples = mc_samples;
  if (*temp_opt) o.temperature = temperature;

  if (*train) return cmd_train(o);
  if (*eval) return cmd_eval(o);
  if (*ood) return cmd_ood(o);
  if (*grid) return cmd_grid(o);
  if (*bench) return cmd_bench_synthetic(o);
  if (*ensemble) return cmd_ensemble(o);
  return exit_code::kConfig;
}
