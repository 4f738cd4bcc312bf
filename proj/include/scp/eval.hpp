#pragma once

// Automatic evaluation: transfer accuracy, BLEU, noun-preservation distance
// and conditional-LM perplexity. Everything here is deterministic.

#include <optional>
#include <string>
#include <vector>

#include "scp/lexical.hpp"
#include "scp/model.hpp"
#include "scp/text.hpp"

namespace scp {

// Greedy transfer of `sentences` (all of style other(target)) into `target`.
// Output stops before EOS; at most cfg.max_generate tokens.
std::vector<Tokens> transfer(Model& model, const Vocabulary& vocab,
                             const std::vector<Tokens>& sentences, Style target,
                             std::size_t batch_size = 128);

// Predicted style per sentence under `clf`; tokens are mapped through the
// vocabulary and followed by EOS.
std::vector<Style> classify_sentences(Model& model, Classifier& clf, const Vocabulary& vocab,
                                      const std::vector<Tokens>& sentences,
                                      std::size_t batch_size = 128);

// Fraction of sentences the evaluation classifier assigns to their target.
// Throws ContractError when the evaluation classifier was never trained.
double style_accuracy(Model& model, const Vocabulary& vocab, const std::vector<Tokens>& sentences,
                      const std::vector<Style>& targets);

// Corpus BLEU in [0, 100]: uniform weights over n = 1..max_n, clipped counts,
// brevity penalty exp(1 - r/c) when c < r, no smoothing.
double bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
            std::size_t max_n = 4);

// Sentence BLEU with add-one smoothing on the n >= 2 precisions.
double sentence_bleu(const Tokens& candidate, const Tokens& reference, std::size_t max_n = 4);

struct PosPair {
  double value = 0.0;
  bool excluded = false;  // original has no embedded nouns
};

struct PosMetric {
  double mean = 0.0;  // over non-excluded pairs; 0 when all are excluded
  std::size_t excluded = 0;
  std::vector<PosPair> pairs;
};

PosMetric pos_distance_metric(const std::vector<Tokens>& originals,
                              const std::vector<Tokens>& transferred, const TagLexicon& lex,
                              const EmbeddingTable& table);

// Fraction of pairs where the output holds a noun with cosine >= threshold to
// some source noun; pairs whose source has no embedded noun are skipped.
double noun_preservation(const std::vector<Tokens>& originals,
                         const std::vector<Tokens>& transferred, const TagLexicon& lex,
                         const EmbeddingTable& table, double threshold = 0.8);

// exp(mean per-token NLL) under the conditional LM, each sentence
// conditioned on its own nouns and the given style. Sentences longer than
// the encoder limit are truncated.
double perplexity(Model& model, const Vocabulary& vocab, const std::vector<Tokens>& sentences,
                  const std::vector<Style>& styles, const TagLexicon& lex,
                  const EmbeddingTable& table);

struct EvalRecord {
  std::string original, transferred;
  std::optional<Style> predicted;
  double pos = 0.0;
  bool pos_excluded = false;
};

struct EvalReport {
  std::optional<double> accuracy;
  double bleu = 0.0;
  double pos_distance = 0.0;
  std::optional<double> perplexity;
  std::size_t n = 0;
  std::size_t excluded_noun_free = 0;
  std::vector<EvalRecord> records;

  std::string to_json(bool with_records) const;
};

}  // namespace scp
