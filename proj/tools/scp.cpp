// Command-line front end: synth, train, transfer, evaluate, inspect.
// Exit codes: 0 success, 1 contract or validation error, 2 I/O error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "scp/checkpoint.hpp"
#include "scp/config.hpp"
#include "scp/error.hpp"
#include "scp/eval.hpp"
#include "scp/pipeline.hpp"
#include "scp/synth.hpp"

namespace fs = std::filesystem;
using namespace scp;

namespace {

constexpr int kExitContract = 1;
constexpr int kExitIo = 2;

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (in.bad()) throw IoError("error while reading " + path.string());
  return lines;
}

std::string join(const Tokens& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ' ';
    s += t[i];
  }
  return s;
}

void write_text(const std::optional<fs::path>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path->string());
  out << text;
  if (!out) throw IoError("error writing " + path->string());
}

fs::path absolute_path(const fs::path& p) { return p.empty() ? p : fs::absolute(p).lexically_normal(); }

// Absolute paths make the config echoed into checkpoints location-independent.
void make_absolute(RunConfig& rc) {
  rc.data_dir = absolute_path(rc.data_dir);
  rc.out_dir = absolute_path(rc.out_dir);
  for (auto& row : rc.paths.corpora)
    for (auto& p : row) p = absolute_path(p);
  rc.paths.lexicon = absolute_path(rc.paths.lexicon);
  rc.paths.embeddings = absolute_path(rc.paths.embeddings);
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  std::optional<fs::path> spec;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

int cmd_synth(const SynthArgs& a) {
  if (fs::exists(a.out) && !a.force) {
    throw ContractError(a.out.string() + " already exists (use --force to overwrite)");
  }
  SynthSpec spec = a.spec ? load_synth_spec(*a.spec) : default_synth_spec();
  if (a.seed) spec.seed = *a.seed;
  const auto out = generate_synthetic(spec);
  write_synthetic(out, a.out);
  for (Style s : {Style::X, Style::Y}) {
    for (Split sp : {Split::Train, Split::Valid, Split::Test}) {
      std::cout << corpus_file_name(s, sp) << ": " << out.get(s, sp).corpus.sentences.size()
                << " sentences\n";
    }
  }
  std::cout << kLexiconFile << ": " << out.lexicon.nouns().size() << " nouns\n"
            << kEmbeddingFile << ": " << out.embedding_tokens.size() << " vectors of dimension "
            << spec.embedding_dim << '\n';
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  fs::path config;
  std::string phase = "all";
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<std::size_t> epochs;
  std::optional<double> alpha, beta, eta, lr;
  bool force = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  if (a.out) rc.out_dir = *a.out;
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.alpha) rc.train.weights.alpha = *a.alpha;
  if (a.beta) rc.train.weights.beta = *a.beta;
  if (a.eta) rc.train.weights.eta = *a.eta;
  if (a.lr) rc.train.lr = *a.lr;
  make_absolute(rc);
  rc.train.validate();
  const Phase phase = parse_phase(a.phase);

  // A phase's own output is never silently replaced.
  const char* produced = phase == Phase::Classifier ? kClassifierCheckpoint
                         : phase == Phase::Joint    ? kFinalCheckpoint
                                                    : kLmCheckpoint;
  if (!a.force && fs::exists(rc.out_dir / produced)) {
    throw ContractError((rc.out_dir / produced).string() + " already exists (use --force to overwrite)");
  }
  const RunData d = load_run_data(rc, &std::cerr);
  std::cerr << "vocabulary " << d.data.vocab.size() << " tokens, training sentences "
            << d.data.get(Style::X, Split::Train).size() << " (x) / "
            << d.data.get(Style::Y, Split::Train).size() << " (y)\n";
  run_phases(rc, d, phase, &std::cerr);
  std::cerr << "checkpoints and logs in " << rc.out_dir.string() << '\n';
  return 0;
}

// ---- transfer -------------------------------------------------------------

struct TransferArgs {
  fs::path checkpoint, input;
  std::string target;
  std::optional<fs::path> out;
};

int cmd_transfer(const TransferArgs& a) {
  const Style target = parse_style(a.target);
  auto ck = load_checkpoint(a.checkpoint);
  const auto lines = read_lines(a.input);

  std::vector<std::string> warnings;
  const auto result = transfer_lines(ck.model, ck.vocab, lines, target, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << a.input.string() << ": " << w << '\n';
  std::string text;
  for (const auto& r : result) text += r + '\n';
  write_text(a.out, text);
  return 0;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::optional<fs::path> checkpoint, config, references, lexicon, embeddings, out;
  fs::path originals, transferred;
  std::optional<std::string> target;
  bool sentences = false;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::optional<Checkpoint> ck;
  if (a.checkpoint) ck = load_checkpoint(*a.checkpoint);

  // Lexicon and embeddings: explicit flags, then --config, then the run
  // configuration recorded in the checkpoint.
  std::optional<RunConfig> rc;
  if (a.config) {
    rc = load_run_config(*a.config);
  } else if (ck && ck->meta.run.is_object()) {
    rc = run_config_from_json(ck->meta.run);
  }
  fs::path lex_path, emb_path;
  if (rc) {
    const auto p = rc->resolved();
    lex_path = p.lexicon;
    emb_path = p.embeddings;
  }
  if (a.lexicon) lex_path = *a.lexicon;
  if (a.embeddings) emb_path = *a.embeddings;
  if (lex_path.empty() || emb_path.empty()) {
    throw ContractError("evaluate needs a lexicon and embeddings (--lexicon/--embeddings, --config or a checkpoint)");
  }
  const TagLexicon lex = load_lexicon(lex_path);
  const EmbeddingTable table = load_embeddings(emb_path, embedding_file_dim(emb_path));

  const auto orig_lines = read_lines(a.originals);
  const auto out_lines = read_lines(a.transferred);
  if (orig_lines.size() != out_lines.size()) {
    throw ContractError("misaligned inputs: " + a.originals.string() + " has " +
                        std::to_string(orig_lines.size()) + " lines but " + a.transferred.string() +
                        " has " + std::to_string(out_lines.size()));
  }
  if (orig_lines.empty()) throw ContractError("no sentences to evaluate");
  std::vector<Tokens> originals, outputs, refs;
  for (const auto& l : orig_lines) originals.push_back(tokenize(l));
  for (const auto& l : out_lines) outputs.push_back(tokenize(l));
  if (a.references) {
    const auto ref_lines = read_lines(*a.references);
    if (ref_lines.size() != orig_lines.size()) {
      throw ContractError("misaligned inputs: " + a.originals.string() + " has " +
                          std::to_string(orig_lines.size()) + " lines but " +
                          a.references->string() + " has " + std::to_string(ref_lines.size()));
    }
    for (const auto& l : ref_lines) refs.push_back(tokenize(l));
  }

  EvalReport report;
  report.n = originals.size();
  report.bleu = bleu(outputs, a.references ? refs : originals);
  const auto pos = pos_distance_metric(originals, outputs, lex, table);
  report.pos_distance = pos.mean;
  report.excluded_noun_free = pos.excluded;

  std::vector<Style> predicted;
  if (ck) {
    if (!a.target) throw ContractError("--target-style is required with --checkpoint");
    const Style target = parse_style(*a.target);
    const std::vector<Style> targets(outputs.size(), target);
    if (ck->model.eval_clf.trained) {
      predicted = classify_sentences(ck->model, ck->model.eval_clf, ck->vocab, outputs);
      report.accuracy = style_accuracy(ck->model, ck->vocab, outputs, targets);
    } else {
      std::cerr << "warning: checkpoint has no trained evaluation classifier; accuracy omitted\n";
    }
    if (ck->model.lm.trained) {
      report.perplexity = perplexity(ck->model, ck->vocab, outputs, targets, lex, table);
    } else {
      std::cerr << "warning: checkpoint has no trained language model; perplexity omitted\n";
    }
  }
  if (a.sentences) {
    for (std::size_t i = 0; i < originals.size(); ++i) {
      EvalRecord r;
      r.original = join(originals[i]);
      r.transferred = join(outputs[i]);
      if (!predicted.empty()) r.predicted = predicted[i];
      r.pos = pos.pairs[i].value;
      r.pos_excluded = pos.pairs[i].excluded;
      report.records.push_back(std::move(r));
    }
  }
  write_text(a.out, report.to_json(a.sentences) + '\n');
  return 0;
}

// ---- inspect --------------------------------------------------------------

int cmd_inspect(const fs::path& checkpoint, bool config_only) {
  auto h = read_checkpoint_header(checkpoint);
  if (config_only) {
    if (!h.contains("run") || h["run"].is_null()) {
      throw ContractError(checkpoint.string() + " carries no run configuration");
    }
    std::cout << h["run"].dump(2) << '\n';
    return 0;
  }
  h.erase("vocab");
  std::cout << h.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noun-preserving text style transfer: synthesize data, train, transfer, evaluate"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic two-style corpus");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--spec", sa.spec, "Synthetic spec JSON (defaults built in)");
  synth->add_option("--seed", sa.seed, "Override the spec seed");
  synth->add_flag("--force", sa.force, "Write into an existing directory");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Run training phases");
  train->add_option("--config", ta.config, "Run configuration JSON")->required();
  train->add_option("--phase", ta.phase, "lm, classifier, joint or all")
      ->check(CLI::IsMember({"lm", "classifier", "joint", "all"}));
  train->add_option("--seed", ta.seed, "Override train.seed");
  train->add_option("--out", ta.out, "Override out_dir");
  train->add_option("--epochs", ta.epochs, "Override train.epochs");
  train->add_option("--alpha", ta.alpha, "Override the classifier loss weight");
  train->add_option("--beta", ta.beta, "Override the noun loss weight");
  train->add_option("--eta", ta.eta, "Override the language model loss weight");
  train->add_option("--lr", ta.lr, "Override the learning rate");
  train->add_flag("--force", ta.force, "Overwrite the checkpoint this phase produces");

  TransferArgs tr;
  auto* xfer = app.add_subcommand("transfer", "Transfer sentences to a target style");
  xfer->add_option("--checkpoint", tr.checkpoint, "Trained model")->required();
  xfer->add_option("--input", tr.input, "One sentence per line")->required();
  xfer->add_option("--target-style", tr.target, "x or y")
      ->required()
      ->check(CLI::IsMember({"x", "y"}));
  xfer->add_option("--out", tr.out, "Output file (default stdout)");

  EvaluateArgs ea;
  auto* eval = app.add_subcommand("evaluate", "Score transferred sentences");
  eval->add_option("--checkpoint", ea.checkpoint, "Model for accuracy and perplexity");
  eval->add_option("--config", ea.config, "Run configuration naming lexicon and embeddings");
  eval->add_option("--originals", ea.originals, "Source sentences")->required();
  eval->add_option("--transferred", ea.transferred, "Outputs, line-aligned")->required();
  eval->add_option("--references", ea.references, "BLEU references (default: originals)");
  eval->add_option("--target-style", ea.target, "x or y")->check(CLI::IsMember({"x", "y"}));
  eval->add_option("--lexicon", ea.lexicon, "Noun lexicon");
  eval->add_option("--embeddings", ea.embeddings, "Word vectors");
  eval->add_option("--out", ea.out, "Report path (default stdout)");
  eval->add_flag("--sentences", ea.sentences, "Include per-sentence records");

  fs::path inspect_path;
  bool config_only = false;
  auto* inspect = app.add_subcommand("inspect", "Print a checkpoint header");
  inspect->add_option("checkpoint", inspect_path, "Checkpoint file")->required();
  inspect->add_flag("--config", config_only, "Print only the recorded run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitContract;
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*train) return cmd_train(ta);
    if (*xfer) return cmd_transfer(tr);
    if (*eval) return cmd_evaluate(ea);
    if (*inspect) return cmd_inspect(inspect_path, config_only);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitContract;
  }
  return kExitContract;
}
