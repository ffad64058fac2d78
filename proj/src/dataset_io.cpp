#include "prophet/formats.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace prophet {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string instance_to_json_line(const Instance& inst, const Catalog& catalog) {
  std::string s = "{\"seed\":" + std::to_string(inst.seed) + ",\"regions\":[";
  for (std::size_t k = 0; k < inst.scene.size(); ++k) {
    const auto& r = inst.scene.regions[k];
    if (k) s += ',';
    s += "{\"object\":" + json(catalog.word(catalog.object_token(r.object))).dump() +
         ",\"attribute\":" + json(catalog.word(catalog.attribute_token(r.attribute))).dump() + "}";
  }
  s += "],\"features\":[";
  const auto& V = inst.features.V;
  for (std::size_t k = 0; k < V.cols(); ++k) {
    if (k) s += ',';
    s += '[';
    for (std::size_t i = 0; i < V.rows(); ++i) {
      if (i) s += ',';
      s += format_double(V(i, k));
    }
    s += ']';
  }
  s += "],\"tokens\":[";
  const auto& c = inst.caption;
  for (std::size_t t = 0; t < c.size(); ++t) {
    if (t) s += ',';
    s += std::to_string(c.tokens[t]);
  }
  s += "],\"tags\":[";
  for (std::size_t t = 0; t < c.size(); ++t) {
    if (t) s += ',';
    s += '"' + to_string(c.tags[t]) + '"';
  }
  s += "],\"gold_regions\":[";
  for (std::size_t t = 0; t < c.size(); ++t) {
    if (t) s += ',';
    s += c.gold_region[t] ? std::to_string(*c.gold_region[t]) : "null";
  }
  s += "]}";
  return s;
}

Instance instance_from_json(const json& record, const Catalog& catalog) {
  if (!record.is_object()) throw FormatError("record is not a JSON object");
  for (const char* key : {"seed", "regions", "features", "tokens", "tags", "gold_regions"}) {
    if (!record.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  }
  Instance inst;
  try {
    inst.seed = record.at("seed").get<std::uint64_t>();
    for (const auto& r : record.at("regions")) {
      const auto obj = catalog.object_id(r.at("object").get<std::string>());
      const auto attr = catalog.attribute_id(r.at("attribute").get<std::string>());
      if (!obj || !attr) throw FormatError("region uses a word outside the catalog");
      inst.scene.regions.push_back({*obj, *attr});
    }
    const auto features = record.at("features").get<std::vector<std::vector<double>>>();
    if (features.size() != inst.scene.size()) {
      throw FormatError("features hold " + std::to_string(features.size()) + " regions, scene has " +
                        std::to_string(inst.scene.size()));
    }
    inst.features = RegionFeatureSet::from_regions(features);
    for (const auto& t : record.at("tokens")) {
      const auto id = t.get<std::uint64_t>();
      if (id >= catalog.vocab_size()) throw FormatError("token id " + std::to_string(id) + " outside vocabulary");
      inst.caption.tokens.push_back(static_cast<TokenId>(id));
    }
    for (const auto& t : record.at("tags")) inst.caption.tags.push_back(parse_tag(t.get<std::string>()));
    for (const auto& g : record.at("gold_regions")) {
      if (g.is_null()) {
        inst.caption.gold_region.emplace_back();
      } else {
        const auto region = g.get<std::size_t>();
        if (region >= inst.scene.size()) {
          throw FormatError("gold region " + std::to_string(region) + " outside scene of " +
                            std::to_string(inst.scene.size()));
        }
        inst.caption.gold_region.emplace_back(region);
      }
    }
    inst.caption.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(e.what());
  }
  return inst;
}

void write_dataset(const std::filesystem::path& path, std::span<const Instance> instances,
                   const Catalog& catalog) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& inst : instances) out << instance_to_json_line(inst, catalog) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<Instance> read_dataset(const std::filesystem::path& path, const Catalog& catalog) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::vector<Instance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(instance_from_json(json::parse(line), catalog));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (out.back().features.dim() != out.front().features.dim()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": feature dimension differs from earlier records");
    }
  }
  return out;
}

void write_runlog_csv(std::ostream& out, const RunLog& log, bool include_timing) {
  out << "epoch,l_ce,l_hat_ce,l_att,total,seconds\n";
  for (const auto& e : log.epochs) {
    out << e.epoch << ',' << format_double(e.l_ce) << ',' << format_double(e.l_hat_ce) << ','
        << format_double(e.l_att) << ',' << format_double(e.total) << ','
        << (include_timing ? format_double(e.seconds) : std::string("0")) << '\n';
  }
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["variant"] = to_string(c.variant);
  j["lambda"] = c.loss.lambda;
  j["divergence"] = to_string(c.loss.divergence);
  j["detach_prophet"] = c.loss.detach_prophet;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["epochs"] = c.total_epochs;
  j["learning_rate"] = c.learning_rate;
  j["optimizer"] = c.optimizer == OptimizerKind::adam ? "adam" : "sgd";
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["grad_clip"] = c.grad_clip ? json(*c.grad_clip) : json(nullptr);
  j["seed"] = c.seed;
  return j;
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  try {
    if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
    if (j.contains("lambda")) c.loss.lambda = j["lambda"].get<double>();
    if (j.contains("divergence")) c.loss.divergence = parse_divergence(j["divergence"].get<std::string>());
    if (j.contains("detach_prophet")) c.loss.detach_prophet = j["detach_prophet"].get<bool>();
    if (j.contains("pretrain_epochs")) c.pretrain_epochs = j["pretrain_epochs"].get<std::size_t>();
    if (j.contains("epochs")) c.total_epochs = j["epochs"].get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("optimizer")) {
      const auto name = j["optimizer"].get<std::string>();
      if (name == "adam") {
        c.optimizer = OptimizerKind::adam;
      } else if (name == "sgd") {
        c.optimizer = OptimizerKind::sgd;
      } else {
        throw FormatError("unknown optimizer '" + name + "'");
      }
    }
    if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
    if (j.contains("epsilon")) c.epsilon = j["epsilon"].get<double>();
    if (j.contains("grad_clip")) {
      c.grad_clip = j["grad_clip"].is_null() ? std::nullopt : std::optional(j["grad_clip"].get<double>());
    }
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad config value: ") + e.what());
  }
  return c;
}

json dims_to_json(const ModelDims& d) {
  return {{"vocab", d.vocab}, {"embed", d.embed}, {"feature", d.feature}, {"hidden", d.hidden},
          {"attention", d.attention}};
}

ModelDims dims_from_json(const json& j, ModelDims d) {
  try {
    if (j.contains("vocab")) d.vocab = j["vocab"].get<std::size_t>();
    if (j.contains("embed")) d.embed = j["embed"].get<std::size_t>();
    if (j.contains("feature")) d.feature = j["feature"].get<std::size_t>();
    if (j.contains("hidden")) d.hidden = j["hidden"].get<std::size_t>();
    if (j.contains("attention")) d.attention = j["attention"].get<std::size_t>();
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad model dimension: ") + e.what());
  }
  return d;
}

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> kColumns = {
      "f1_all",           "precision_all",       "recall_all",          "f1_loc",
      "grounding_accuracy", "grounding_object",  "grounding_attribute", "grounding_relation",
      "grounding_article", "token_exact_rate",   "backward_grounded_rate"};
  return kColumns;
}

namespace {

json rate_json(const Rate& r) { return {{"hits", r.hits}, {"total", r.total}}; }

}  // namespace

json report_to_json(const EvalReport& r) {
  json j;
  j["instances"] = r.instances;
  j["f1_all"] = r.f1_all;
  j["precision_all"] = r.precision_all;
  j["recall_all"] = r.recall_all;
  j["f1_loc"] = r.f1_loc;
  j["grounding_accuracy"] = r.grounding.value();
  j["grounding_object"] = r.grounding_object.value();
  j["grounding_attribute"] = r.grounding_attribute.value();
  j["grounding_relation"] = r.grounding_relation.value();
  j["grounding_article"] = r.grounding_article.value();
  j["token_exact_rate"] = r.token_exact.value();
  j["backward_grounded_rate"] = r.backward_grounded.value();
  j["counts"] = {
      {"true_positives", r.true_positives},
      {"predicted_objects", r.predicted_objects},
      {"reference_objects", r.reference_objects},
      {"matched_objects", r.matched_objects},
      {"localized_objects", r.localized_objects},
      {"grounding", rate_json(r.grounding)},
      {"grounding_object", rate_json(r.grounding_object)},
      {"grounding_attribute", rate_json(r.grounding_attribute)},
      {"grounding_relation", rate_json(r.grounding_relation)},
      {"grounding_article", rate_json(r.grounding_article)},
      {"token_exact", rate_json(r.token_exact)},
      {"backward_grounded", rate_json(r.backward_grounded)},
  };
  return j;
}

double report_field(const json& report, const std::string& column) {
  if (!report.contains(column) || !report[column].is_number()) {
    throw FormatError("report is missing numeric field '" + column + "'");
  }
  return report[column].get<double>();
}

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a({reinterpret_cast<const unsigned char*>(buf), static_cast<std::size_t>(in.gcount())}, h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace prophet
