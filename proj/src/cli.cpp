#include "prophet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "prophet/checkpoint.hpp"
#include "prophet/formats.hpp"
#include "prophet/grounding.hpp"
#include "prophet/synthdata.hpp"
#include "prophet/training.hpp"

namespace prophet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string default_out() {
  const char* root = std::getenv(kOutputRootEnv);
  return root && *root ? root : ".";
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw UsageError("expected true or false, got '" + s + "'");
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::uint64_t seed = 7;
  std::string sizes = "200,50,50";
  std::string out;
  GeneratorConfig gen;
};

SplitSizes parse_sizes(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long long n = std::stoll(part, &used);
      if (used != part.size() || n <= 0) throw std::invalid_argument(part);
      v.push_back(static_cast<std::size_t>(n));
    } catch (const std::exception&) {
      throw UsageError("--sizes entries must be positive integers, got '" + text + "'");
    }
  }
  if (v.size() != 3) throw UsageError("--sizes expects train,val,test, got '" + text + "'");
  return {v[0], v[1], v[2]};
}

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  const SplitSizes sizes = parse_sizes(a.sizes);
  const auto& catalog = Catalog::standard();
  try {
    a.gen.validate(catalog);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  ensure_dir(a.out);
  const Split split = make_split(a.seed, catalog, sizes, a.gen);
  const fs::path dir(a.out);
  write_dataset(dir / "train.jsonl", split.train, catalog);
  write_dataset(dir / "val.jsonl", split.val, catalog);
  write_dataset(dir / "test.jsonl", split.test, catalog);

  std::size_t ambiguous = 0;
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (const auto& inst : *part) ambiguous += inst.scene.has_shared_attribute() ? 1 : 0;

  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["command"] = "gen-data";
  manifest["seed"] = a.seed;
  manifest["datasets"] = {{"train", (dir / "train.jsonl").string()},
                          {"val", (dir / "val.jsonl").string()},
                          {"test", (dir / "test.jsonl").string()}};
  manifest["sizes"] = {sizes.train, sizes.val, sizes.test};
  manifest["generator"] = {{"min_regions", a.gen.min_regions}, {"max_regions", a.gen.max_regions},
                           {"feature_dim", a.gen.feature_dim}, {"noise", a.gen.noise},
                           {"ambiguity", a.gen.ambiguity}, {"article_nv", a.gen.article_nv}};
  manifest["vocab_size"] = catalog.vocab_size();
  write_json(dir / "manifest.json", manifest);

  out << "train " << split.train.size() << "\nval " << split.val.size() << "\ntest "
      << split.test.size() << "\nambiguous_scenes " << ambiguous << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant, divergence, optimizer, detach;
  std::optional<double> lambda, lr, clip;
  std::optional<std::size_t> pretrain, epochs, embed, hidden, attention;
  bool no_clip = false;
  bool record_time = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  require_file(a.data, "dataset");
  TrainConfig config;
  ModelDims dims;
  if (!a.config_file.empty()) {
    require_file(a.config_file, "config file");
    std::ifstream in(a.config_file);
    json j;
    try {
      j = json::parse(in);
    } catch (const std::exception& e) {
      throw UsageError("config file " + a.config_file + " is not valid JSON: " + e.what());
    }
    config = config_from_json(j, config);
    if (j.contains("model")) dims = dims_from_json(j["model"], dims);
  }
  try {
    if (a.seed) config.seed = *a.seed;
    if (a.variant) config.variant = parse_variant(*a.variant);
    if (a.divergence) config.loss.divergence = parse_divergence(*a.divergence);
    if (a.lambda) config.loss.lambda = *a.lambda;
    if (a.detach) config.loss.detach_prophet = parse_bool(*a.detach);
    if (a.pretrain) config.pretrain_epochs = *a.pretrain;
    if (a.epochs) config.total_epochs = *a.epochs;
    if (a.lr) config.learning_rate = *a.lr;
    if (a.clip) config.grad_clip = *a.clip;
    if (a.no_clip) config.grad_clip.reset();
    if (a.optimizer) {
      if (*a.optimizer == "adam") {
        config.optimizer = OptimizerKind::adam;
      } else if (*a.optimizer == "sgd") {
        config.optimizer = OptimizerKind::sgd;
      } else {
        throw UsageError("unknown optimizer '" + *a.optimizer + "'");
      }
    }
    if (a.embed) dims.embed = *a.embed;
    if (a.hidden) dims.hidden = *a.hidden;
    if (a.attention) dims.attention = *a.attention;
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto& catalog = Catalog::standard();
  const auto dataset = read_dataset(a.data, catalog);
  if (dataset.empty()) throw UsageError("dataset " + a.data + " holds no records");
  dims.vocab = catalog.vocab_size();
  dims.feature = dataset.front().features.dim();

  ensure_dir(a.out);
  const fs::path dir(a.out);
  const FitResult result = fit(dataset, config, init_params(dims, config.seed));

  save_checkpoint(dir / "checkpoint.bin", result.params);
  {
    std::ofstream csv(dir / "runlog.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write runlog");
    write_runlog_csv(csv, result.log, a.record_time);
  }
  json snapshot = config_to_json(config);
  snapshot["model"] = dims_to_json(dims);
  write_json(dir / "config.json", snapshot);

  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["command"] = "train";
  manifest["seed"] = config.seed;
  manifest["dataset"] = a.data;
  manifest["dataset_hash"] = hex64(hash_file(a.data));
  manifest["config"] = snapshot;
  manifest["checkpoint"] = (dir / "checkpoint.bin").string();
  manifest["checkpoint_checksum"] = hex64(checksum(result.params));
  manifest["reports"] = {(dir / "runlog.csv").string(), (dir / "config.json").string()};
  write_json(dir / "manifest.json", manifest);

  const auto& last = result.log.epochs.empty() ? EpochLog{} : result.log.epochs.back();
  out << "epochs " << result.log.epochs.size() << "\nfinal_total " << format_double(last.total)
      << "\ncheckpoint_checksum " << hex64(checksum(result.params)) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string variant = "baseline";
  std::string label;
  std::size_t max_len = 16;
};

void check_compatible(const ModelParams& params, const std::vector<Instance>& data,
                      const std::string& path) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].features.dim() != params.dims.feature) {
      throw std::runtime_error("checkpoint expects feature dimension " +
                               std::to_string(params.dims.feature) + " but " + path + " record " +
                               std::to_string(i + 1) + " has " +
                               std::to_string(data[i].features.dim()));
    }
    for (TokenId t : data[i].caption.tokens) {
      if (t >= params.dims.vocab) {
        throw std::runtime_error("checkpoint vocabulary of " + std::to_string(params.dims.vocab) +
                                 " does not cover token " + std::to_string(t) + " in " + path);
      }
    }
  }
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.data, "dataset");
  Variant variant;
  try {
    variant = parse_variant(a.variant);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.max_len == 0) throw UsageError("--max-len must be positive");

  const auto& catalog = Catalog::standard();
  const ModelParams params = load_checkpoint(a.checkpoint);
  if (params.dims.vocab != catalog.vocab_size()) {
    throw std::runtime_error("checkpoint vocabulary size " + std::to_string(params.dims.vocab) +
                             " differs from the catalog's " + std::to_string(catalog.vocab_size()));
  }
  const auto data = read_dataset(a.data, catalog);
  check_compatible(params, data, a.data);

  // Decoding never consults the variant; it only labels the report.
  const auto predictions = decode_dataset(data, params, a.max_len);
  std::vector<TaggedCaption> refs;
  refs.reserve(data.size());
  for (const auto& inst : data) refs.push_back(inst.caption);
  const EvalReport report = grounding_f1(predictions, refs, catalog);

  ensure_dir(a.out);
  const fs::path dir(a.out);
  json j = report_to_json(report);
  j["label"] = a.label.empty() ? to_string(variant) : a.label;
  j["variant"] = to_string(variant);
  j["test_set_hash"] = hex64(hash_file(a.data));
  j["checkpoint_checksum"] = hex64(checksum(params));
  write_json(dir / "report.json", j);

  std::string csv = "label,variant,test_set_hash";
  for (const auto& c : report_columns()) csv += "," + c;
  csv += "\n" + j["label"].get<std::string>() + "," + to_string(variant) + "," +
         j["test_set_hash"].get<std::string>();
  for (const auto& c : report_columns()) csv += "," + format_double(report_field(j, c));
  write_text(dir / "report.csv", csv + "\n");

  std::string traces;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    json t;
    t["index"] = i;
    t["tokens"] = predictions[i].tokens;
    t["attention"] = predictions[i].attention;
    traces += t.dump() + "\n";
  }
  write_text(dir / "traces.jsonl", traces);

  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["command"] = "eval";
  manifest["dataset"] = a.data;
  manifest["checkpoint"] = a.checkpoint;
  manifest["reports"] = {(dir / "report.json").string(), (dir / "report.csv").string(),
                         (dir / "traces.jsonl").string()};
  write_json(dir / "manifest.json", manifest);

  out << std::fixed << std::setprecision(4) << "instances " << report.instances << "\nf1_all "
      << report.f1_all << "\nf1_loc " << report.f1_loc << "\ngrounding_accuracy "
      << report.grounding_accuracy() << "\nbackward_grounded_rate " << report.backward_grounded_rate()
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::vector<std::string> reports;
  std::string out;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  if (a.reports.size() < 2) throw UsageError("compare needs at least two reports");
  std::vector<json> loaded;
  for (const auto& path : a.reports) {
    require_file(path, "report");
    std::ifstream in(path);
    try {
      loaded.push_back(json::parse(in));
    } catch (const std::exception& e) {
      throw std::runtime_error("report " + path + " is not valid JSON: " + e.what());
    }
    if (!loaded.back().contains("test_set_hash")) {
      throw std::runtime_error("report " + path + " has no test_set_hash");
    }
  }
  for (std::size_t i = 1; i < loaded.size(); ++i) {
    if (loaded[i]["test_set_hash"] != loaded[0]["test_set_hash"]) {
      throw UsageError("reports " + a.reports[0] + " and " + a.reports[i] +
                       " were computed on different test sets");
    }
  }

  const auto& cols = report_columns();
  std::vector<std::string> header = {"label", "variant"};
  for (const auto& c : cols) {
    header.push_back(c);
    header.push_back(c + "_delta");
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : loaded) {
    std::vector<std::string> row = {r.value("label", std::string()), r.value("variant", std::string())};
    for (const auto& c : cols) {
      const double v = report_field(r, c);
      row.push_back(format_double(v));
      row.push_back(format_double(v - report_field(loaded[0], c)));
    }
    rows.push_back(std::move(row));
  }

  std::string csv;
  auto join = [](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
    return s + "\n";
  };
  csv += join(header);
  for (const auto& row : rows) csv += join(row);

  // Aligned text: "value (delta vs first report)", 4 decimals.
  std::ostringstream text;
  auto width = [](const std::string& c) { return std::max<int>(17, static_cast<int>(c.size())); };
  text << std::left << std::setw(16) << "label";
  for (const auto& c : cols) text << ' ' << std::setw(width(c)) << c;
  text << '\n';
  for (const auto& r : loaded) {
    text << std::left << std::setw(16) << r.value("label", std::string());
    for (const auto& c : cols) {
      const double v = report_field(r, c);
      const double d = v - report_field(loaded[0], c);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << v << " (" << std::showpos << d << ")";
      text << ' ' << std::setw(width(c)) << cell.str();
    }
    text << '\n';
  }

  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(fs::path(a.out) / "comparison.csv", csv);
    write_text(fs::path(a.out) / "comparison.txt", text.str());
  }
  out << text.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectArgs {
  std::string checkpoint;
  std::string data;
  std::size_t index = 0;
  std::string out;
  std::size_t max_len = 16;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.data, "dataset");
  const auto& catalog = Catalog::standard();
  const ModelParams params = load_checkpoint(a.checkpoint);
  const auto data = read_dataset(a.data, catalog);
  if (a.index >= data.size()) {
    throw UsageError("instance index " + std::to_string(a.index) + " out of range (dataset has " +
                     std::to_string(data.size()) + " records)");
  }
  check_compatible(params, data, a.data);
  const Instance& inst = data[a.index];
  const GreedyResult g = greedy_decode(inst.features, params, a.max_len);
  const Prediction pred{g.tokens, g.attention};
  const TokenAlignment align = align_generated(pred.tokens, inst.caption, catalog);

  std::string csv = "step,token,word,top1,gold,match";
  for (std::size_t k = 0; k < inst.features.count(); ++k) csv += ",alpha_" + std::to_string(k);
  csv += "\n";
  for (std::size_t t = 0; t < pred.tokens.size(); ++t) {
    const auto top = top1_region(pred.attention[t]);
    csv += std::to_string(t) + "," + std::to_string(pred.tokens[t]) + "," +
           catalog.word(pred.tokens[t]) + "," + std::to_string(top) + ",";
    if (align.gold[t]) {
      csv += std::to_string(*align.gold[t]) + "," + (top == *align.gold[t] ? "1" : "0");
    } else {
      csv += ",";
    }
    for (double v : pred.attention[t]) csv += "," + format_double(v);
    csv += "\n";
  }
  const fs::path path = a.out.empty() ? fs::path(default_out()) / "attention.csv" : fs::path(a.out);
  if (path.has_parent_path()) ensure_dir(path.parent_path().string());
  write_text(path, csv);
  out << "steps " << pred.tokens.size() << "\nwritten " << path.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prophet attention training lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenDataArgs gen;
  gen.out = default_out();
  auto* g = app.add_subcommand("gen-data", "Generate train/val/test splits");
  g->add_option("--seed", gen.seed, "Split seed");
  g->add_option("--sizes", gen.sizes, "train,val,test instance counts");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--noise", gen.gen.noise, "Feature noise stddev");
  g->add_option("--ambiguity", gen.gen.ambiguity, "Fraction of scenes with a shared attribute");
  g->add_option("--min-regions", gen.gen.min_regions);
  g->add_option("--max-regions", gen.gen.max_regions);
  g->add_option("--feature-dim", gen.gen.feature_dim);
  g->add_flag("--article-nv", gen.gen.article_nv, "Tag articles as non-visual");

  TrainArgs tr;
  tr.out = default_out();
  auto* t = app.add_subcommand("train", "Train a captioner");
  t->add_option("--data", tr.data, "Training dataset (JSON lines)")->required();
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--config", tr.config_file, "JSON config; flags take precedence");
  t->add_option("--seed", tr.seed);
  t->add_option("--variant", tr.variant, "baseline | cpa | dpa");
  t->add_option("--lambda", tr.lambda);
  t->add_option("--divergence", tr.divergence, "l1 | l2 | kl");
  t->add_option("--pretrain-epochs,--pretrain", tr.pretrain);
  t->add_option("--epochs", tr.epochs);
  t->add_option("--lr", tr.lr);
  t->add_option("--detach-prophet", tr.detach, "true | false");
  t->add_option("--optimizer", tr.optimizer, "adam | sgd");
  t->add_option("--clip", tr.clip, "Global gradient-norm clip");
  t->add_flag("--no-clip", tr.no_clip);
  t->add_option("--embed", tr.embed);
  t->add_option("--hidden", tr.hidden);
  t->add_option("--attention", tr.attention);
  t->add_flag("--record-time", tr.record_time, "Write epoch wall time into runlog.csv");

  EvalArgs ev;
  ev.out = default_out();
  auto* e = app.add_subcommand("eval", "Greedy-decode a split and score grounding");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data, "Evaluation dataset")->required();
  e->add_option("--out", ev.out);
  e->add_option("--variant", ev.variant, "Label recorded in the report");
  e->add_option("--label", ev.label);
  e->add_option("--max-len", ev.max_len);

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Tabulate reports against the first one");
  c->add_option("reports", cmp.reports, "report.json files")->required();
  c->add_option("--out", cmp.out, "Directory for comparison.csv/.txt");

  InspectArgs ins;
  auto* i = app.add_subcommand("inspect", "Dump per-step attention for one instance");
  i->add_option("--checkpoint", ins.checkpoint)->required();
  i->add_option("--data", ins.data)->required();
  i->add_option("--index", ins.index)->required();
  i->add_option("--out", ins.out, "CSV path (default $PROPHET_OUT/attention.csv)");
  i->add_option("--max-len", ins.max_len);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, out, err);
    return kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (c->parsed()) return cmd_compare(cmp, out);
    if (i->parsed()) return cmd_inspect(ins, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace prophet
