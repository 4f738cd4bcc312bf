#include "scp/config.hpp"

#include <fstream>
#include <set>

#include "scp/error.hpp"
#include "scp/synth.hpp"

namespace scp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ContractError(where + ": expected a JSON object");
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  require_object(j, where);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ContractError("unknown config key '" + where + "." + it.key() + "'");
}

// Assigns j[key] to `out` when present; type mismatches name the key.
template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ContractError("config key '" + where + "." + key + "' has the wrong type");
  }
}

template <class U>
void read_size(const json& j, const char* key, U& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_unsigned()) {
    throw ContractError("config key '" + where + "." + key + "' must be a nonnegative integer");
  }
  out = it->get<U>();
}

void read_path(const json& j, const char* key, fs::path& out, const fs::path& base,
               const std::string& where) {
  std::string s;
  read(j, key, s, where);
  if (s.empty()) return;
  fs::path p(s);
  out = p.is_relative() && !base.empty() ? base / p : p;
}

std::string path_str(const fs::path& p) { return p.string(); }

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size},   {"embed_dim", c.embed_dim},
              {"style_dim", c.style_dim},     {"hidden", c.hidden},
              {"attention_dim", c.attention_dim}, {"clf_embed_dim", c.clf_embed_dim},
              {"clf_filters", c.clf_filters}, {"clf_widths", c.clf_widths},
              {"lm_embed_dim", c.lm_embed_dim}, {"lm_hidden", c.lm_hidden},
              {"lm_style_dim", c.lm_style_dim}, {"noun_dim", c.noun_dim},
              {"max_generate", c.max_generate}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c, const std::string& where) {
  reject_unknown(j,
                 {"vocab_size", "embed_dim", "style_dim", "hidden", "attention_dim", "clf_embed_dim",
                  "clf_filters", "clf_widths", "lm_embed_dim", "lm_hidden", "lm_style_dim",
                  "noun_dim", "max_generate"},
                 where);
  read_size(j, "vocab_size", c.vocab_size, where);
  read_size(j, "embed_dim", c.embed_dim, where);
  read_size(j, "style_dim", c.style_dim, where);
  read_size(j, "hidden", c.hidden, where);
  read_size(j, "attention_dim", c.attention_dim, where);
  read_size(j, "clf_embed_dim", c.clf_embed_dim, where);
  read_size(j, "clf_filters", c.clf_filters, where);
  read(j, "clf_widths", c.clf_widths, where);
  read_size(j, "lm_embed_dim", c.lm_embed_dim, where);
  read_size(j, "lm_hidden", c.lm_hidden, where);
  read_size(j, "lm_style_dim", c.lm_style_dim, where);
  read_size(j, "noun_dim", c.noun_dim, where);
  read_size(j, "max_generate", c.max_generate, where);
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lm_epochs", c.lm_epochs},
              {"classifier_epochs", c.classifier_epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"seed", c.seed},
              {"weights", {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"eta", c.weights.eta}}},
              {"temperature",
               {{"tau0", c.temperature.tau0},
                {"decay", c.temperature.decay},
                {"floor", c.temperature.floor},
                {"pretrain_epochs", c.temperature.pretrain_epochs}}}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c, const std::string& where) {
  reject_unknown(j,
                 {"epochs", "lm_epochs", "classifier_epochs", "batch_size", "lr", "seed", "weights",
                  "temperature"},
                 where);
  read_size(j, "epochs", c.epochs, where);
  read_size(j, "lm_epochs", c.lm_epochs, where);
  read_size(j, "classifier_epochs", c.classifier_epochs, where);
  read_size(j, "batch_size", c.batch_size, where);
  read(j, "lr", c.lr, where);
  read_size(j, "seed", c.seed, where);
  if (auto it = j.find("weights"); it != j.end()) {
    const std::string w = where + ".weights";
    reject_unknown(*it, {"alpha", "beta", "eta"}, w);
    read(*it, "alpha", c.weights.alpha, w);
    read(*it, "beta", c.weights.beta, w);
    read(*it, "eta", c.weights.eta, w);
  }
  if (auto it = j.find("temperature"); it != j.end()) {
    const std::string w = where + ".temperature";
    reject_unknown(*it, {"tau0", "decay", "floor", "pretrain_epochs"}, w);
    read(*it, "tau0", c.temperature.tau0, w);
    read(*it, "decay", c.temperature.decay, w);
    read(*it, "floor", c.temperature.floor, w);
    read_size(*it, "pretrain_epochs", c.temperature.pretrain_epochs, w);
  }
  return c;
}

DataPaths RunConfig::resolved() const {
  DataPaths p = paths;
  for (Style s : {Style::X, Style::Y}) {
    for (Split sp : {Split::Train, Split::Valid, Split::Test}) {
      auto& slot = p.corpora[index(s)][static_cast<std::size_t>(sp)];
      if (slot.empty()) slot = data_dir / corpus_file_name(s, sp);
    }
  }
  if (p.lexicon.empty()) p.lexicon = data_dir / kLexiconFile;
  if (p.embeddings.empty()) p.embeddings = data_dir / kEmbeddingFile;
  return p;
}

RunConfig run_config_from_json(const json& j, const fs::path& base) {
  reject_unknown(j,
                 {"data_dir", "corpora", "lexicon", "embeddings", "out_dir", "vocab_min_count",
                  "model", "train"},
                 "config");
  RunConfig c;
  read_path(j, "data_dir", c.data_dir, base, "config");
  if (c.data_dir.empty()) c.data_dir = base;
  if (auto it = j.find("corpora"); it != j.end()) {
    reject_unknown(*it, {"x", "y"}, "config.corpora");
    for (Style s : {Style::X, Style::Y}) {
      auto st = it->find(style_name(s));
      if (st == it->end()) continue;
      const std::string w = std::string("config.corpora.") + style_name(s);
      reject_unknown(*st, {"train", "valid", "test"}, w);
      auto& row = c.paths.corpora[index(s)];
      read_path(*st, "train", row[0], base, w);
      read_path(*st, "valid", row[1], base, w);
      read_path(*st, "test", row[2], base, w);
    }
  }
  read_path(j, "lexicon", c.paths.lexicon, base, "config");
  read_path(j, "embeddings", c.paths.embeddings, base, "config");
  c.out_dir = fs::path{};
  read_path(j, "out_dir", c.out_dir, base, "config");
  if (c.out_dir.empty()) c.out_dir = base.empty() ? fs::path("run") : base / "run";
  read_size(j, "vocab_min_count", c.vocab_min_count, "config");
  if (auto it = j.find("model"); it != j.end()) c.model = model_config_from_json(*it, c.model, "model");
  if (auto it = j.find("train"); it != j.end()) c.train = train_config_from_json(*it, c.train, "train");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& c) {
  json j{{"data_dir", path_str(c.data_dir)},
         {"out_dir", path_str(c.out_dir)},
         {"vocab_min_count", c.vocab_min_count},
         {"model", to_json(c.model)},
         {"train", to_json(c.train)}};
  json corpora = json::object();
  for (Style s : {Style::X, Style::Y}) {
    const auto& row = c.paths.corpora[index(s)];
    json st = json::object();
    const char* names[] = {"train", "valid", "test"};
    for (std::size_t k = 0; k < 3; ++k)
      if (!row[k].empty()) st[names[k]] = path_str(row[k]);
    if (!st.empty()) corpora[style_name(s)] = std::move(st);
  }
  if (!corpora.empty()) j["corpora"] = std::move(corpora);
  if (!c.paths.lexicon.empty()) j["lexicon"] = path_str(c.paths.lexicon);
  if (!c.paths.embeddings.empty()) j["embeddings"] = path_str(c.paths.embeddings);
  return j;
}

}  // namespace scp
