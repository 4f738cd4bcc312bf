#pragma once

// Loss terms, noun matching, the temperature schedule and the three
// training phases (language model, classifiers, joint objective).

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "scp/lexical.hpp"
#include "scp/model.hpp"
#include "scp/text.hpp"

namespace scp {

struct LossWeights {
  double alpha = 0.2;  // classifier feedback
  double beta = 0.1;   // noun preservation
  double eta = 0.5;    // language model
  bool operator==(const LossWeights&) const = default;
};

// tau(e) = max(tau0 * decay^max(0, e - pretrain_epochs), floor), e counted from 0.
struct TemperatureSchedule {
  double tau0 = 1.0;
  double decay = 0.5;
  double floor = 0.001;
  std::size_t pretrain_epochs = 1;

  double at(std::size_t epoch) const;
  bool operator==(const TemperatureSchedule&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t lm_epochs = 3;
  std::size_t classifier_epochs = 3;
  std::size_t batch_size = 128;  // split evenly between the styles
  double lr = 5e-4;
  std::uint64_t seed = 1;
  LossWeights weights;
  TemperatureSchedule temperature;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// ---- data -----------------------------------------------------------------

struct Example {
  SentenceIds ids;
  Tokens tokens;                             // as the vocabulary sees them (OOV -> <UNK>)
  std::vector<std::vector<double>> nouns;    // embedded nouns in sentence order
  std::vector<double> centroid;              // mean of `nouns`, zero when empty
};

Example make_example(const Tokens& sentence, const Vocabulary& vocab, const TagLexicon& lex,
                     const EmbeddingTable& table);

struct Dataset {
  Vocabulary vocab;
  TagLexicon lexicon;
  EmbeddingTable table;
  std::array<std::array<std::vector<Example>, 3>, 2> parts;  // [style][split]
  Tensor glove;                       // [V x D], zero rows for tokens without a vector
  std::vector<std::uint8_t> noun_id;  // per vocabulary id: tagged noun with a vector

  const std::vector<Example>& get(Style s, Split sp) const {
    return parts[index(s)][static_cast<std::size_t>(sp)];
  }
};

// corpora[style][split]; splits may be empty except train.
Dataset build_dataset(Vocabulary vocab, TagLexicon lex, EmbeddingTable table,
                      const std::array<std::array<const Corpus*, 3>, 2>& corpora);

// Equal numbers of examples per style in every batch; each style walks its
// own reshuffled permutation and wraps around when exhausted.
class BalancedBatcher {
 public:
  BalancedBatcher(std::size_t n_x, std::size_t n_y, std::size_t per_style, Rng rng);
  std::size_t steps_per_epoch() const;
  std::array<std::vector<std::size_t>, 2> next();

 private:
  std::array<std::size_t, 2> n_;
  std::size_t per_style_;
  Rng rng_;
  std::array<std::vector<std::size_t>, 2> order_;
  std::array<std::size_t, 2> pos_{0, 0};
};

std::vector<SentenceIds> ids_of(const std::vector<Example>& pool, std::span<const std::size_t> pick);
Tensor centroids_of(const std::vector<Example>& pool, std::span<const std::size_t> pick,
                    std::size_t dim);

// ---- loss terms -----------------------------------------------------------

// Batch mean of the sentence NLL (summed over target tokens, EOS included)
// of reconstructing `batch` from its own encoding.
ag::Var reconstruction_nll(const GenVars& g, const Encoded& enc, Style style,
                           std::span<const SentenceIds> batch);

// (mean NLL over X + mean NLL over Y) / 2.
ag::Var loss_reconstruction(const GenVars& g, std::span<const SentenceIds> x,
                            std::span<const SentenceIds> y);

// Mean cross-entropy of the classifier on both transferred batches against
// their target styles (Y for sequences generated from X and vice versa).
ag::Var loss_classifier(const ClfVars& c, const SoftSequence& x_to_y, const SoftSequence& y_to_x);

struct NounMatch {
  std::size_t i, j;
  double d;  // 1 - cosine
};

// Input nouns i < min(|ex|, |ey|) in order, each matched to its most similar
// generated noun (ties to the smallest j).
std::vector<NounMatch> match_nouns(const std::vector<std::vector<double>>& ex,
                                   const std::vector<std::vector<double>>& ey);

// 1 + (max(cx, cy) - min(cx, cy)) / cx; cx must be positive.
double pos_gamma(std::size_t cx, std::size_t cy);

struct PosValue {
  double value = 0.0;
  double gamma = 1.0;
  bool noun_free = false;       // cx == 0: value defined as 0
  bool count_mismatch = false;  // cx != cy
  std::size_t cx = 0, cy = 0;
  std::vector<NounMatch> matches;
};

// gamma * sum_i d_i on plain vectors.
PosValue pos_distance(const std::vector<std::vector<double>>& ex,
                      const std::vector<std::vector<double>>& ey);

struct PosLoss {
  ag::Var loss;                 // sum over rows of scale * gamma * sum d_i
  double normalized = 0.0;      // same with each row divided by its cx
  std::size_t noun_free = 0;
  std::size_t count_mismatch = 0;
};

// Generated nouns are steps whose argmax is a noun id; their vectors are the
// soft embeddings u_t G, so the distances carry gradient into u_t.
PosLoss loss_pos(const SoftSequence& s, std::span<const Example* const> sources,
                 const Dataset& data, double scale);

// sum_b scale * sum_t H(u_t, p_lm,t) where the LM starts from h_lm(source
// centroid, target style) and reads soft embeddings of the previous step.
ag::Var loss_lm_generated(const LmVars& lm, const SoftSequence& s, const Tensor& centroids,
                          Style target, double scale);

struct LossReport {
  double res = 0.0, cls = 0.0, pos = 0.0, lm = 0.0, total = 0.0, pos_norm = 0.0;
  std::size_t noun_free = 0;
};

struct JointBatch {
  std::vector<const Example*> x, y;
};

struct JointLoss {
  ag::Var total;
  LossReport report;
};

// L = L_res + alpha L_class + beta L_pos + eta L_lm on one balanced batch.
// Terms whose weight is zero are skipped and reported as 0. The classifier
// and LM are bound frozen.
JointLoss joint_loss(ag::Tape& tape, Model& model, const Dataset& data, const JointBatch& batch,
                     double tau, const LossWeights& w, Rng& noise);

// ---- phases ---------------------------------------------------------------

// Exact weighted sum of the four reported terms.
double weighted_total(const LossReport& r, const LossWeights& w);

// Mean per-token NLL under the LM with each sentence's own nouns and style.
double lm_mean_nll(Model& model, const std::vector<Example>& pool, Style style,
                   std::size_t batch_size = 128);

// Fraction of sentences whose argmax matches `style`.
double classifier_accuracy(Model& model, const Classifier& clf, const std::vector<Example>& pool,
                           Style style, std::size_t batch_size = 128);

struct PhaseEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid = 0.0;  // perplexity for the LM, accuracy for classifiers
};

// Teacher-forced LM on real sentences conditioned on their own nouns and style.
std::vector<PhaseEpoch> pretrain_lm(Model& model, const Dataset& data, const TrainConfig& cfg,
                                    std::ostream* log = nullptr);

enum class ClassifierRole { Feedback, Evaluation };

std::vector<PhaseEpoch> pretrain_classifier(Model& model, const Dataset& data,
                                            const TrainConfig& cfg, ClassifierRole role,
                                            std::ostream* log = nullptr);

struct JointEpoch {
  std::size_t epoch = 0;
  double tau = 1.0;
  LossReport mean;
  std::string rng_state;  // Gumbel noise stream after the epoch
};

using EpochHook = std::function<void(const JointEpoch&)>;

// Minimizes the joint objective over generator parameters for cfg.epochs
// epochs; one JSON line per step goes to `log`.
std::vector<JointEpoch> train_joint(Model& model, const Dataset& data, const TrainConfig& cfg,
                                    std::ostream* log = nullptr, const EpochHook& on_epoch = {});

}  // namespace scp
