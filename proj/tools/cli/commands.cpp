// Copyright 2026 The ConsisRec Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "consisrec/checkpoint.hpp"
#include "consisrec/dataio.hpp"
#include "consisrec/errors.hpp"
#include "consisrec/gradcheck.hpp"
#include "consisrec/harness.hpp"
#include "consisrec/hetgraph.hpp"
#include "consisrec/model.hpp"
#include "consisrec/random.hpp"
#include "consisrec/trainer.hpp"
#include "json.hpp"

namespace consisrec::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// A check (as opposed to usage) failure; maps to exit code 1.
class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  ModelConfig model;
  TrainConfig train;
  double item_link_threshold = 0.5;
  std::uint64_t seed = 1;
};

void AddModelFlags(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--d", o.model.dim, "Embedding size")->capture_default_str();
  cmd->add_option("--layers", o.model.layers, "Number of aggregation layers")->capture_default_str();
  cmd->add_option("--gamma", o.model.gamma, "Fraction of neighbors sampled per layer")->capture_default_str();
  cmd->add_flag("--ablate-query", o.model.ablate_query, "Variant A: user embedding as query");
  cmd->add_flag("--ablate-sampling", o.model.ablate_sampling, "Variant B: aggregate all neighbors");
  cmd->add_flag("--ablate-attention", o.model.ablate_attention, "Variant C: uniform attention");
  cmd->add_option("--item-link-threshold", o.item_link_threshold,
                  "Jaccard threshold for item-item links")
      ->capture_default_str();
}

void AddTrainFlags(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--learning-rate,--lr", o.train.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch-size", o.train.batch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--weight-decay", o.train.weight_decay, "Decoupled weight decay")->capture_default_str();
  cmd->add_option("--patience", o.train.patience, "Early-stopping patience in epochs")->capture_default_str();
  cmd->add_option("--max-epochs", o.train.max_epochs, "Epoch cap")->capture_default_str();
  cmd->add_option("--adam-beta1", o.train.adam_beta1)->capture_default_str();
  cmd->add_option("--adam-beta2", o.train.adam_beta2)->capture_default_str();
  cmd->add_option("--adam-eps", o.train.adam_eps)->capture_default_str();
  cmd->add_option("--workers", o.train.workers, "Worker threads")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Global seed")->capture_default_str();
}

void ValidateCommon(const CommonOptions& o) {
  o.model.Validate();
  o.train.Validate();
  if (!(o.item_link_threshold >= 0.0 && o.item_link_threshold <= 1.0)) {
    throw ConfigError("item link threshold must be in [0,1]");
  }
}

json ModelJson(const ModelConfig& m) {
  return {{"d", m.dim},
          {"layers", m.layers},
          {"gamma", m.gamma},
          {"ablate_query", m.ablate_query},
          {"ablate_sampling", m.ablate_sampling},
          {"ablate_attention", m.ablate_attention}};
}

json TrainJson(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size}, {"weight_decay", t.weight_decay},
          {"patience", t.patience},           {"max_epochs", t.max_epochs}, {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},       {"adam_eps", t.adam_eps},     {"workers", t.workers}};
}

json CommonJson(const CommonOptions& o) {
  return {{"model", ModelJson(o.model)},
          {"train", TrainJson(o.train)},
          {"item_link_threshold", o.item_link_threshold},
          {"seed", o.seed}};
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Written before anything else in `dir`.
void WriteManifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                   json config, const std::string& fingerprint, json paths) {
  EnsureDir(dir);
  json manifest = {{"tool", "consisrec"},
                   {"version", kToolVersion},
                   {"command", command},
                   {"argv", args},
                   {"config", std::move(config)},
                   {"dataset_fingerprint", fingerprint},
                   {"paths", std::move(paths)}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

std::vector<double> ParseDoubleList(const std::string& csv, const char* what) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad value '") + item + "' in " + what);
    }
  }
  if (values.empty()) throw ConfigError(std::string(what) + " is empty");
  return values;
}

std::vector<int> ParseIntList(const std::string& csv, const char* what) {
  std::vector<int> out;
  for (double v : ParseDoubleList(csv, what)) {
    if (v != static_cast<int>(v)) throw ConfigError(std::string("non-integer value in ") + what);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string JoinLevels(const std::vector<int>& levels) {
  std::string s;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(levels[i]);
  }
  return s;
}

std::string FormatReport(const EvalReport& r) {
  std::ostringstream ss;
  ss << std::setprecision(6) << std::fixed << "rmse=" << r.rmse << " mae=" << r.mae << " count=" << r.count;
  return ss.str();
}

std::optional<ClipRange> ClipFor(bool clip, const Dataset& ds) {
  if (!clip || ds.rating_levels.empty()) return std::nullopt;
  return ClipRange{static_cast<double>(ds.rating_levels.front()), static_cast<double>(ds.rating_levels.back())};
}

struct LoadedData {
  Dataset ds;
  HetGraph graph;
  std::string fingerprint;
};

LoadedData Load(const fs::path& dir, double threshold) {
  LoadedData d;
  d.ds = ReadDataset(dir);
  if (!d.ds.has_splits()) throw ConfigError("dataset in " + dir.string() + " has no split assignment");
  d.graph = BuildGraph(d.ds, threshold);
  d.fingerprint = DatasetFingerprint(dir);
  return d;
}

// --- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string ratings;
  std::string trust;
  std::string out;
  std::uint64_t seed = 1;
  std::string splits = "0.6,0.2,0.2";
};

int Ingest(const IngestArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const std::vector<double> fr = ParseDoubleList(a.splits, "--splits");
  if (fr.size() != 3) throw ConfigError("--splits needs three fractions");
  const SplitFractions fractions{fr[0], fr[1], fr[2]};
  for (const std::string& p : {a.ratings, a.trust}) {
    if (!fs::exists(p)) throw IoError("input file not found: " + p);
  }

  std::uint64_t input_hash = Fnv1a64("");
  for (const std::string& p : {a.ratings, a.trust}) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    input_hash = Fnv1a64(ss.str(), input_hash);
  }
  std::ostringstream fp;
  fp << std::hex << std::setw(16) << std::setfill('0') << input_hash;
  WriteManifest(a.out, "ingest", argv,
                {{"seed", a.seed}, {"splits", fr}, {"format", "tsv3"}}, fp.str(),
                {{"ratings", a.ratings}, {"trust", a.trust}, {"out", a.out}});

  const ParsedEdges edges = ParseEdges(a.ratings, a.trust, EdgeFormat::kTsv3);
  Dataset ds = AssignSplits(FilterAndIndex(edges.ratings, edges.trust), fractions, a.seed);
  WriteDataset(ds, a.out);

  const auto sizes = ds.SplitSizes();
  out << "users=" << ds.num_users() << '\n'
      << "items=" << ds.num_items() << '\n'
      << "social_links=" << ds.social.size() << '\n'
      << "ratings=" << ds.ratings.size() << '\n'
      << "rating_levels=" << JoinLevels(ds.rating_levels) << '\n'
      << "R=" << ds.rating_levels.size() + 2 << '\n'
      << "split_train=" << sizes[0] << " split_val=" << sizes[1] << " split_test=" << sizes[2] << '\n';
  return kExitOk;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  bool timing = false;
  bool clip = false;
  bool dump_graph = false;
  bool quiet = false;
};

int TrainCmd(const TrainArgs& a, const CommonOptions& o, const std::vector<std::string>& argv,
             std::ostream& out) {
  ValidateCommon(o);
  LoadedData d = Load(a.data, o.item_link_threshold);
  const fs::path out_dir(a.out);
  json cfg = CommonJson(o);
  cfg["timing"] = a.timing;
  cfg["clip"] = a.clip;
  WriteManifest(out_dir, "train", argv, cfg, d.fingerprint,
                {{"data", a.data},
                 {"checkpoint", (out_dir / "checkpoint").string()},
                 {"history", (out_dir / "history.tsv").string()}});
  if (a.dump_graph) WriteGraphTsv(d.graph, out_dir / "graph.tsv");

  TrainConfig train_cfg = o.train;
  train_cfg.seed = DeriveSeed(o.seed, {2});
  const ModelParams init = InitParams(o.model, d.graph.num_users(), d.graph.num_items(),
                                      d.graph.num_relations(), DeriveSeed(o.seed, {1}));
  TrainResult result = Train(init, o.model, train_cfg, d.graph, d.ds, [&](const EpochStats& s) {
    if (!a.quiet) {
      out << "epoch " << s.epoch << " train_loss=" << s.train_loss << " val_rmse=" << s.val_rmse
          << " val_mae=" << s.val_mae;
      if (a.timing) out << " elapsed=" << s.elapsed_seconds << "s";
      out << '\n';
    }
    return true;
  });
  WriteHistory(result.history, out_dir / "history.tsv", a.timing);
  SaveCheckpoint({result.best_params, o.model, o.item_link_threshold}, out_dir / "checkpoint");

  out << "best_epoch=" << result.best_epoch << '\n';
  const std::vector<RatingEdge> test = d.ds.EdgesIn(Split::kTest);
  if (test.empty()) {
    out << "test: empty split\n";
  } else {
    out << "test " << FormatReport(Evaluate(result.best_params, o.model, d.graph, test, ClipFor(a.clip, d.ds)))
        << '\n';
  }
  return kExitOk;
}

// --- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  bool clip = false;
};

int EvaluateCmd(const EvaluateArgs& a, std::ostream& out) {
  const Split split = ParseSplit(a.split);
  Checkpoint ckpt = LoadCheckpoint(a.checkpoint);
  LoadedData d = Load(a.data, ckpt.item_link_threshold);
  if (ckpt.params.num_users != d.graph.num_users() || ckpt.params.num_items != d.graph.num_items() ||
      ckpt.params.num_relations != d.graph.num_relations()) {
    throw ConfigError("checkpoint does not match dataset dimensions");
  }
  const std::vector<RatingEdge> pairs = d.ds.EdgesIn(split);
  if (pairs.empty()) throw ConfigError(std::string("split '") + SplitName(split) + "' is empty");
  const EvalReport r = Evaluate(ckpt.params, ckpt.config, d.graph, pairs, ClipFor(a.clip, d.ds));
  out << "split=" << SplitName(split) << ' ' << FormatReport(r) << '\n';
  return kExitOk;
}

// --- gridsearch -----------------------------------------------------------

struct GridArgs {
  std::string data;
  std::string out;
  std::optional<std::size_t> budget;
  std::string gamma_values;
  std::string d_values;
  std::string lr_values;
  std::string batch_values;
  std::string layers_values;
};

int GridCmd(const GridArgs& a, const CommonOptions& o, const std::vector<std::string>& argv, std::ostream& out) {
  ValidateCommon(o);
  GridSpec spec;
  if (!a.gamma_values.empty()) spec.gamma_values = ParseDoubleList(a.gamma_values, "--gamma-values");
  if (!a.d_values.empty()) spec.embedding_sizes = ParseIntList(a.d_values, "--d-values");
  if (!a.lr_values.empty()) spec.learning_rates = ParseDoubleList(a.lr_values, "--lr-values");
  if (!a.batch_values.empty()) spec.batch_sizes = ParseIntList(a.batch_values, "--batch-values");
  if (!a.layers_values.empty()) spec.layers = ParseIntList(a.layers_values, "--layers-values");
  spec.Validate();
  if (a.budget && *a.budget == 0) throw ConfigError("--budget must be positive");

  LoadedData d = Load(a.data, o.item_link_threshold);
  json cfg = CommonJson(o);
  cfg["grid"] = {{"gamma", spec.gamma_values},
                 {"d", spec.embedding_sizes},
                 {"learning_rate", spec.learning_rates},
                 {"batch_size", spec.batch_sizes},
                 {"layers", spec.layers}};
  cfg["budget"] = a.budget ? json(*a.budget) : json(nullptr);
  const fs::path out_dir(a.out);
  WriteManifest(out_dir, "gridsearch", argv, cfg, d.fingerprint,
                {{"data", a.data}, {"results", (out_dir / "grid_results.tsv").string()}});

  HarnessOptions h{o.seed, o.train.workers, a.budget};
  TrialConfig base{o.model, o.train};
  base.train.workers = 1;
  const GridResult result = RunGrid(spec, d.ds, d.graph, base, h);
  WriteGridResults(result, out_dir / "grid_results.tsv");
  out << "trials=" << result.trials.size() << " grid_size=" << result.grid_size << '\n';
  if (const TrialResult* w = result.winner()) {
    out << "winner gamma=" << w->config.model.gamma << " d=" << w->config.model.dim
        << " lr=" << w->config.train.learning_rate << " batch=" << w->config.train.batch_size
        << " layers=" << w->config.model.layers << " val " << FormatReport(w->val) << " test "
        << FormatReport(w->test) << '\n';
  } else {
    out << "no successful trial\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

// --- ablate / sensitivity -------------------------------------------------

struct HarnessArgs {
  std::string data;
  std::string out = ".";
  std::string axis;
  std::string values;
};

int AblateCmd(const HarnessArgs& a, const CommonOptions& o, const std::vector<std::string>& argv,
              std::ostream& out) {
  ValidateCommon(o);
  LoadedData d = Load(a.data, o.item_link_threshold);
  const fs::path out_dir(a.out);
  WriteManifest(out_dir, "ablate", argv, CommonJson(o), d.fingerprint,
                {{"data", a.data}, {"results", (out_dir / "ablation.tsv").string()}});
  TrialConfig best{o.model, o.train};
  const int workers = best.train.workers;
  best.train.workers = 1;
  const auto rows = RunAblation(d.ds, d.graph, best, {o.seed, workers, std::nullopt});
  WriteAblation(rows, out_dir / "ablation.tsv");
  bool all_ok = true;
  for (const AblationRow& r : rows) {
    out << r.variant << " test " << (r.result.ok ? FormatReport(r.result.test) : "failed: " + r.result.error)
        << '\n';
    all_ok = all_ok && r.result.ok;
  }
  return all_ok ? kExitOk : kExitCheckFailed;
}

int SensitivityCmd(const HarnessArgs& a, const CommonOptions& o, const std::vector<std::string>& argv,
                   std::ostream& out) {
  ValidateCommon(o);
  const SensitivityAxis axis = ParseAxis(a.axis);
  const std::vector<double> values = ParseDoubleList(a.values, "--values");
  LoadedData d = Load(a.data, o.item_link_threshold);
  const fs::path out_dir(a.out);
  const std::string file = std::string("sensitivity_") + AxisName(axis) + ".tsv";
  json cfg = CommonJson(o);
  cfg["axis"] = AxisName(axis);
  cfg["values"] = values;
  WriteManifest(out_dir, "sensitivity", argv, cfg, d.fingerprint,
                {{"data", a.data}, {"results", (out_dir / file).string()}});
  TrialConfig base{o.model, o.train};
  const int workers = base.train.workers;
  base.train.workers = 1;
  const auto results = RunSensitivity(d.ds, d.graph, base, axis, values, {o.seed, workers, std::nullopt});
  WriteSensitivity(results, axis, out_dir / file);
  for (const TrialResult& r : results) {
    out << AxisName(axis) << '=' << (axis == SensitivityAxis::kGamma  ? r.config.model.gamma
                                     : axis == SensitivityAxis::kDim ? r.config.model.dim
                                                                     : r.config.train.learning_rate)
        << " test " << (r.ok ? FormatReport(r.test) : "failed: " + r.error) << '\n';
  }
  return kExitOk;
}

// --- gradcheck ------------------------------------------------------------

int GradcheckCmd(const GradCheckOptions& opts, std::ostream& out) {
  const GradCheckReport report = RunGradientCheck(opts);
  out << std::left << std::setw(12) << "group" << std::setw(16) << "max_rel_error" << std::setw(10) << "checked"
      << "skipped\n";
  for (const GroupCheck& g : report.groups) {
    out << std::left << std::setw(12) << g.name << std::setw(16) << std::scientific << std::setprecision(3)
        << g.max_rel_error << std::defaultfloat << std::setw(10) << g.checked << g.skipped << '\n';
  }
  if (!report.passed()) {
    throw CheckFailed("gradient check failed: group " + report.worst()->name + " exceeds tolerance " +
                      std::to_string(report.tolerance));
  }
  out << "gradient check passed (tolerance " << report.tolerance << ")\n";
  return kExitOk;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ConsisRec social recommendation: data ingest, training, evaluation and experiments",
               "consisrec"};
  app.require_subcommand(1);
  // Subcommand-level config files are not read by CLI11, so the file is
  // attached to the root and sections name the subcommand: [train] d=16.
  app.set_config("--config", "", "INI/TOML file; options go under a [<subcommand>] section (flags override it)");
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  std::string command_name;
  std::function<int()> action;

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse edge files and write a canonical dataset directory");
  ingest_cmd->add_option("--ratings", ingest.ratings, "Rating file (user<TAB>item<TAB>rating)")->required();
  ingest_cmd->add_option("--trust", ingest.trust, "Trust file (user<TAB>user)")->required();
  ingest_cmd->add_option("--out", ingest.out, "Output directory")->required();
  ingest_cmd->add_option("--seed", ingest.seed, "Split seed")->capture_default_str();
  ingest_cmd->add_option("--splits", ingest.splits, "train,val,test fractions")->capture_default_str();
  ingest_cmd->callback([&] { action = [&] { return Ingest(ingest, args, out); }; });

  CommonOptions train_opts;
  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, history and manifest");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_flag("--timing", train.timing, "Record wall time in history.tsv");
  train_cmd->add_flag("--clip", train.clip, "Clip reported predictions to the rating range");
  train_cmd->add_flag("--dump-graph", train.dump_graph, "Also write graph.tsv");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch output");
  AddModelFlags(train_cmd, train_opts);
  AddTrainFlags(train_cmd, train_opts);
  train_cmd->callback([&] { action = [&] { return TrainCmd(train, train_opts, args, out); }; });

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint on one split");
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--split", eval.split, "train|val|test")->capture_default_str();
  eval_cmd->add_flag("--clip", eval.clip, "Clip predictions to the rating range");
  eval_cmd->callback([&] { action = [&] { return EvaluateCmd(eval, out); }; });

  CommonOptions grid_opts;
  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("gridsearch", "Grid search over gamma, d, learning rate and batch size");
  grid_cmd->add_option("--data", grid.data, "Dataset directory")->required();
  grid_cmd->add_option("--out", grid.out, "Output directory")->required();
  grid_cmd->add_option("--budget", grid.budget, "Cap on the number of trials (uniform subsample)");
  grid_cmd->add_option("--gamma-values", grid.gamma_values, "CSV list");
  grid_cmd->add_option("--d-values", grid.d_values, "CSV list");
  grid_cmd->add_option("--lr-values", grid.lr_values, "CSV list");
  grid_cmd->add_option("--batch-values", grid.batch_values, "CSV list");
  grid_cmd->add_option("--layers-values", grid.layers_values, "CSV list");
  AddModelFlags(grid_cmd, grid_opts);
  AddTrainFlags(grid_cmd, grid_opts);
  grid_cmd->callback([&] { action = [&] { return GridCmd(grid, grid_opts, args, out); }; });

  CommonOptions ablate_opts;
  HarnessArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train the full model and variants A, B, C");
  ablate_cmd->add_option("--data", ablate.data, "Dataset directory")->required();
  ablate_cmd->add_option("--out", ablate.out, "Output directory")->required();
  AddModelFlags(ablate_cmd, ablate_opts);
  AddTrainFlags(ablate_cmd, ablate_opts);
  ablate_cmd->callback([&] { action = [&] { return AblateCmd(ablate, ablate_opts, args, out); }; });

  CommonOptions sens_opts;
  HarnessArgs sens;
  auto* sens_cmd = app.add_subcommand("sensitivity", "Vary one hyper-parameter, hold the rest fixed");
  sens_cmd->add_option("--axis", sens.axis, "gamma|d|lr")->required();
  sens_cmd->add_option("--values", sens.values, "CSV list of axis values")->required();
  sens_cmd->add_option("--data", sens.data, "Dataset directory")->required();
  sens_cmd->add_option("--out", sens.out, "Output directory")->capture_default_str();
  AddModelFlags(sens_cmd, sens_opts);
  AddTrainFlags(sens_cmd, sens_opts);
  sens_cmd->callback([&] { action = [&] { return SensitivityCmd(sens, sens_opts, args, out); }; });

  GradCheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc_cmd->add_option("--seed", gc.seed)->capture_default_str();
  gc_cmd->add_option("--d", gc.dim)->capture_default_str();
  gc_cmd->add_option("--nodes", gc.nodes, "Users + items in the random instance")->capture_default_str();
  gc_cmd->add_option("--layers", gc.layers)->capture_default_str();
  gc_cmd->add_option("--gamma", gc.gamma)->capture_default_str();
  gc_cmd->add_flag("--ablate-query", gc.ablate_query);
  gc_cmd->add_flag("--ablate-sampling", gc.ablate_sampling);
  gc_cmd->add_flag("--ablate-attention", gc.ablate_attention);
  gc_cmd->add_option("--tolerance", gc.tolerance)->capture_default_str();
  gc_cmd->add_flag("--corrupt", gc.corrupt, "Skew analytic gradients (negative control)")->group("");
  gc_cmd->callback([&] { action = [&] { return GradcheckCmd(gc, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const CheckFailed& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
}

}  // namespace consisrec::cli
