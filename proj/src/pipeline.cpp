#include "scp/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "scp/error.hpp"

namespace scp {

namespace fs = std::filesystem;

std::string joint_checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "joint-epoch%02zu.scpm", epoch);
  return buf;
}

std::string phase_log_name(const std::string& phase) { return phase + ".jsonl"; }

std::size_t embedding_file_dim(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embeddings " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream is(line);
    std::string tok;
    std::size_t n = 0;
    while (is >> tok) ++n;
    if (n == 0) continue;
    if (n < 2) throw FormatError(path.string() + ":1: embedding line has no vector");
    return n - 1;
  }
  throw FormatError(path.string() + ": no embeddings");
}

RunData load_run_data(const RunConfig& rc, std::ostream* warn) {
  const DataPaths p = rc.resolved();
  RunData d;
  std::array<std::array<const Corpus*, 3>, 2> ptrs{};
  for (Style s : {Style::X, Style::Y}) {
    for (Split sp : {Split::Train, Split::Valid, Split::Test}) {
      const auto k = static_cast<std::size_t>(sp);
      const fs::path& file = p.corpora[index(s)][k];
      Corpus& c = d.corpora[index(s)][k];
      if (sp != Split::Train && !fs::exists(file)) {
        c = Corpus{s, sp, {}, 0, 0};
        continue;
      }
      c = load_corpus(file, s, sp);
      if (warn && c.dropped_overlong) {
        *warn << "warning: " << file.string() << ": dropped " << c.dropped_overlong
              << " lines longer than " << kMaxContentTokens << " tokens\n";
      }
      ptrs[index(s)][k] = &c;
    }
  }
  TagLexicon lex = load_lexicon(p.lexicon);
  EmbeddingTable table = load_embeddings(p.embeddings, embedding_file_dim(p.embeddings));
  if (warn && table.duplicate_warnings()) {
    *warn << "warning: " << p.embeddings.string() << ": " << table.duplicate_warnings()
          << " duplicate tokens, last occurrence kept\n";
  }
  std::array<const Corpus*, 2> train{ptrs[0][0], ptrs[1][0]};
  Vocabulary vocab = Vocabulary::build(train, rc.vocab_min_count);
  d.data = build_dataset(std::move(vocab), std::move(lex), std::move(table), ptrs);
  return d;
}

ModelConfig complete_model_config(const RunConfig& rc, const Dataset& data) {
  ModelConfig c = rc.model;
  c.vocab_size = data.vocab.size();
  c.noun_dim = data.table.dim();
  return c;
}

Phase parse_phase(const std::string& s) {
  if (s == "lm") return Phase::Lm;
  if (s == "classifier") return Phase::Classifier;
  if (s == "joint") return Phase::Joint;
  if (s == "all") return Phase::All;
  throw ContractError("unknown phase '" + s + "' (expected lm, classifier, joint or all)");
}

namespace {

class PhaseRunner {
 public:
  PhaseRunner(const RunConfig& rc, const RunData& d, std::ostream* progress)
      : rc_(rc), d_(d), progress_(progress), run_json_(to_json(rc)) {}

  void save(Model& m, const char* phase, std::size_t epoch, const std::string& file,
            const std::string& rng = {}) {
    CheckpointMeta meta{phase, epoch, rc_.train, rng, run_json_};
    save_checkpoint(rc_.out_dir / file, m, d_.data.vocab, meta);
  }

  Model resume(const char* file) {
    auto ck = load_checkpoint(rc_.out_dir / file);
    if (!(ck.vocab == d_.data.vocab)) {
      throw ContractError((rc_.out_dir / file).string() +
                          " was trained with a different vocabulary than the configured data");
    }
    return std::move(ck.model);
  }

  // Runs `body`, dumping the model as it stands if a non-finite value aborts it.
  template <class F>
  void guarded(Model& m, const char* phase, F&& body) {
    try {
      body();
    } catch (const NonFiniteError&) {
      save(m, "abort", 0, kAbortCheckpoint);
      if (progress_) {
        *progress_ << phase << ": non-finite value, model dumped to "
                   << (rc_.out_dir / kAbortCheckpoint).string() << '\n';
      }
      throw;
    }
  }

  std::ofstream open_log(const std::string& phase) {
    std::ofstream log(rc_.out_dir / phase_log_name(phase), std::ios::trunc);
    if (!log) throw IoError("cannot write log in " + rc_.out_dir.string());
    return log;
  }

  void lm(Model& m) {
    auto log = open_log("lm");
    guarded(m, "lm", [&] {
      for (const auto& e : pretrain_lm(m, d_.data, rc_.train, &log)) {
        if (progress_) {
          *progress_ << "lm epoch " << e.epoch + 1 << ": loss " << e.train_loss
                     << ", valid perplexity " << e.valid << '\n';
        }
      }
    });
    save(m, "lm", rc_.train.lm_epochs, kLmCheckpoint);
    round_to_f32(m);  // continue from exactly what a resumed run would load
  }

  void classifiers(Model& m) {
    auto log = open_log("classifier");
    guarded(m, "classifier", [&] {
      for (auto role : {ClassifierRole::Feedback, ClassifierRole::Evaluation}) {
        const char* name = role == ClassifierRole::Feedback ? "classifier" : "eval classifier";
        for (const auto& e : pretrain_classifier(m, d_.data, rc_.train, role, &log)) {
          if (progress_) {
            *progress_ << name << " epoch " << e.epoch + 1 << ": loss " << e.train_loss
                       << ", valid accuracy " << e.valid << '\n';
          }
        }
      }
    });
    save(m, "classifier", rc_.train.classifier_epochs, kClassifierCheckpoint);
    round_to_f32(m);
  }

  void joint(Model& m) {
    auto log = open_log("joint");
    std::string rng;
    guarded(m, "joint", [&] {
      train_joint(m, d_.data, rc_.train, &log, [&](const JointEpoch& e) {
        rng = e.rng_state;
        save(m, "joint", e.epoch + 1, joint_checkpoint_name(e.epoch + 1), rng);
        if (progress_) {
          *progress_ << "joint epoch " << e.epoch + 1 << ": tau " << e.tau << ", L_total "
                     << e.mean.total << " (res " << e.mean.res << ", class " << e.mean.cls
                     << ", pos " << e.mean.pos << ", lm " << e.mean.lm << ")\n";
        }
      });
    });
    save(m, "joint", rc_.train.epochs, kFinalCheckpoint, rng);
  }

  bool has(const char* file) const { return fs::exists(rc_.out_dir / file); }

 private:
  const RunConfig& rc_;
  const RunData& d_;
  std::ostream* progress_;
  nlohmann::json run_json_;
};

}  // namespace

Model run_phases(const RunConfig& rc, const RunData& d, Phase phase, std::ostream* progress) {
  rc.train.validate();
  std::error_code ec;
  fs::create_directories(rc.out_dir, ec);
  if (ec) throw IoError("cannot create " + rc.out_dir.string() + ": " + ec.message());
  PhaseRunner run(rc, d, progress);

  if (phase == Phase::Lm || phase == Phase::All) {
    auto cfg = complete_model_config(rc, d.data);
    cfg.validate();
    Model m = Model::create(cfg, rc.train.seed);
    run.lm(m);
    if (phase == Phase::Lm) return m;
    run.classifiers(m);
    run.joint(m);
    return m;
  }
  if (!run.has(kLmCheckpoint)) throw ContractError("language model checkpoint required");
  if (phase == Phase::Classifier) {
    Model m = run.resume(kLmCheckpoint);
    run.classifiers(m);
    return m;
  }
  if (!run.has(kClassifierCheckpoint)) throw ContractError("classifier checkpoint required");
  Model m = run.resume(kClassifierCheckpoint);
  run.joint(m);
  return m;
}

std::vector<std::string> transfer_lines(Model& model, const Vocabulary& vocab,
                                        const std::vector<std::string>& lines, Style target,
                                        std::vector<std::string>* warnings) {
  std::vector<Tokens> valid;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto toks = tokenize(lines[i]);
    if (toks.size() > kMaxContentTokens) {
      if (warnings) {
        warnings->push_back("line " + std::to_string(i + 1) + ": " + std::to_string(toks.size()) +
                            " tokens exceeds the limit of " + std::to_string(kMaxContentTokens) +
                            "; writing a blank line");
      }
      continue;
    }
    if (toks.empty()) continue;
    where.push_back(i);
    valid.push_back(std::move(toks));
  }
  const auto outs = transfer(model, vocab, valid, target);
  std::vector<std::string> result(lines.size());
  for (std::size_t k = 0; k < where.size(); ++k) {
    for (std::size_t j = 0; j < outs[k].size(); ++j) {
      if (j) result[where[k]] += ' ';
      result[where[k]] += outs[k][j];
    }
  }
  return result;
}

TransferEval evaluate_test_transfer(Model& model, const RunData& d) {
  TransferEval r;
  for (Style s : {Style::X, Style::Y}) {
    const auto& row = d.corpora[index(s)];
    const auto& src = row[2].sentences.empty() ? row[1].sentences : row[2].sentences;
    auto out = transfer(model, d.data.vocab, src, other(s));
    r.originals.insert(r.originals.end(), src.begin(), src.end());
    r.outputs.insert(r.outputs.end(), out.begin(), out.end());
    r.targets.insert(r.targets.end(), src.size(), other(s));
  }
  if (r.originals.empty()) throw ContractError("no test or validation sentences to evaluate");
  r.accuracy = style_accuracy(model, d.data.vocab, r.outputs, r.targets);
  r.bleu = bleu(r.outputs, r.originals);
  r.noun_preservation = noun_preservation(r.originals, r.outputs, d.data.lexicon, d.data.table);
  r.pos = pos_distance_metric(r.originals, r.outputs, d.data.lexicon, d.data.table);
  return r;
}

}  // namespace scp
