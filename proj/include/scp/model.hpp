#pragma once

// Generator (style-conditioned GRU encoder + attentional GRU decoder),
// CNN style classifier and noun-conditioned GRU language model.
//
// Parameters live in plain Tensors owned by the component structs. A forward
// pass first binds them to a Tape (bind_*), choosing per component whether
// gradients are collected; frozen components are bound with trainable=false.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scp/adam.hpp"
#include "scp/autograd.hpp"
#include "scp/lexical.hpp"
#include "scp/rng.hpp"
#include "scp/text.hpp"

namespace scp {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 100;
  std::size_t style_dim = 200;
  std::size_t hidden = 700;
  std::size_t attention_dim = 700;
  std::size_t clf_embed_dim = 100;
  std::size_t clf_filters = 128;
  std::vector<std::size_t> clf_widths{3, 4, 5};
  std::size_t lm_embed_dim = 100;
  std::size_t lm_hidden = 700;
  std::size_t lm_style_dim = 200;
  std::size_t noun_dim = kEmbeddingDim;
  std::size_t max_generate = kMaxContentTokens + 1;

  std::size_t max_width() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct GruParams {
  Tensor wx, wh, bx, bh;  // wx [in x 3H], wh [H x 3H]
  void init(Rng& rng, std::size_t in, std::size_t hidden);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct GruVars {
  ag::Var wx, wh, bx, bh;
};

GruVars bind(ag::Tape& t, GruParams& p, bool trainable);
ag::Var gru_step(const GruVars& g, ag::Var x, ag::Var h);

// ---- generator ------------------------------------------------------------

struct Generator {
  Tensor emb;       // [V x E]
  Tensor style;     // [2 x S], rows v_x, v_y
  GruParams enc;    // input E+S
  Tensor init_w;    // [H x H]
  Tensor init_b;    // [H]
  Tensor att_key;   // [H x A]
  Tensor att_query; // [H x A]
  Tensor att_v;     // [A]
  GruParams dec;    // input E+S+H
  Tensor out_w;     // [2H x V], reads [s_t; context_t]
  Tensor out_b;     // [V]

  void init(const ModelConfig& cfg, Rng& rng);
  void collect(std::vector<ParamRef>& out);
};

struct GenVars {
  ag::Var emb, style, init_w, init_b, att_key, att_query, att_v, out_w, out_b;
  GruVars enc, dec;
  std::size_t max_generate = 0;
};

GenVars bind(ag::Tape& t, Generator& g, const ModelConfig& cfg, bool trainable);

// Encoder output for a batch sharing one style vector.
struct Encoded {
  ag::Var content;  // [B x H], final non-PAD state
  ag::Var states;   // [B*L x H], row b*L + t
  ag::Var keys;     // [B*L x A], states projected for attention
  std::vector<std::uint8_t> mask;  // [B*L], 1 for t < true_length
  std::size_t batch = 0, len = 0;
};

Encoded encode(const GenVars& g, std::span<const SentenceIds> batch, Style style);

// [B x S] copies of one style row.
ag::Var style_rows(ag::Var table, Style s, std::size_t batch);

// Initial decoder state tanh(x_hat W + b).
ag::Var decoder_init(const GenVars& g, const Encoded& enc);

struct DecoderStep {
  ag::Var state;      // [B x H]
  ag::Var context;    // [B x H]
  ag::Var attention;  // [B x L]
};

// One decoder step; the previous state is the attention query.
DecoderStep decoder_step(const GenVars& g, const Encoded& enc, ag::Var input_emb, ag::Var style,
                         ag::Var s_prev);

ag::Var output_logits(const GenVars& g, const DecoderStep& step);

struct TeacherForced {
  ag::Var logits;                     // [(L-1)*B x V], row t*B + b predicts ids[t+1]
  std::vector<std::size_t> targets;   // per row
  std::vector<double> mask;           // per row, 1 inside the sentence
  std::size_t tokens = 0;             // sum of mask
  std::vector<ag::Var> attention;     // per step [B x L]
};

TeacherForced decode_teacher_forced(const GenVars& g, const Encoded& enc, Style style,
                                    std::span<const SentenceIds> targets);

// u = softmax((log_softmax(logits) + noise) / tau)
ag::Var gumbel_softmax(ag::Var logits, double tau, const Tensor& noise);
ag::Var gumbel_softmax_step(ag::Var logits, double tau, Rng& rng);

struct SoftSequence {
  std::vector<ag::Var> probs;                   // per step [B x V]
  std::vector<std::vector<std::size_t>> argmax; // [b][t] for t < length[b]
  std::vector<std::size_t> length;             // steps up to and including the first EOS
  double tau = 1.0;

  std::size_t batch() const { return length.size(); }
  std::size_t steps() const { return probs.size(); }
};

// Autoregressive relaxed decoding with soft-embedding feedback.
SoftSequence decode_soft(const GenVars& g, const Encoded& enc, Style target, double tau, Rng& rng);

// Noise-free argmax decoding; each row ends with EOS unless the cap was hit.
std::vector<std::vector<std::size_t>> greedy_decode(const GenVars& g, const Encoded& enc,
                                                    Style target);

// ---- classifier -----------------------------------------------------------

struct Classifier {
  Tensor emb;                   // [V x Ec]
  std::vector<Tensor> filters;  // per width k: [k*Ec x F]
  std::vector<Tensor> biases;   // per width: [F]
  Tensor out_w;                 // [nW*F x 2]
  Tensor out_b;                 // [2]
  bool trained = false;

  void init(const ModelConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct ClfVars {
  ag::Var emb, out_w, out_b;
  std::vector<ag::Var> filters, biases;
  std::vector<std::size_t> widths;
};

ClfVars bind(ag::Tape& t, Classifier& c, const ModelConfig& cfg, bool trainable);

// Token sequences as the classifier sees them: content tokens then EOS.
std::vector<std::size_t> classifier_tokens(const SentenceIds& s);

// [B x 2] logits for discrete sequences.
ag::Var classify_tokens(const ClfVars& c, const std::vector<std::vector<std::size_t>>& seqs);
// [B x 2] logits with soft embeddings u_t W_emb for t < length[b].
ag::Var classify_soft(const ClfVars& c, const SoftSequence& s);

// ---- conditional language model -------------------------------------------

struct CondLM {
  Tensor emb;     // [V x El]
  Tensor style;   // [2 x Sl]
  Tensor init_w;  // [(D + Sl) x Hl]
  Tensor init_b;  // [Hl]
  GruParams gru;  // input El
  Tensor out_w;   // [Hl x V]
  Tensor out_b;   // [V]
  bool trained = false;

  void init(const ModelConfig& cfg, Rng& rng);
  void collect(std::vector<ParamRef>& out);
};

struct LmVars {
  ag::Var emb, style, init_w, init_b, out_w, out_b;
  GruVars gru;
};

LmVars bind(ag::Tape& t, CondLM& lm, bool trainable);

// h_lm = tanh([centroid; style] U + b); centroids is [B x D].
ag::Var lm_init(const LmVars& lm, const Tensor& centroids, Style style);

struct LmStep {
  ag::Var h;
  ag::Var logits;
};

// Input is a [B x V] distribution per row (one-hot or soft).
LmStep lm_next(const LmVars& lm, ag::Var h, ag::Var input_dist);
LmStep lm_next_ids(const LmVars& lm, ag::Var h, std::span<const std::size_t> ids);

// Sum over the batch of per-token NLL scaled by `weight`, teacher forced.
ag::Var lm_sequence_nll(const LmVars& lm, std::span<const SentenceIds> batch,
                        const Tensor& centroids, Style style, double weight);

// ---- bundle ---------------------------------------------------------------

struct Model {
  ModelConfig cfg;
  Generator gen;
  Classifier clf;
  Classifier eval_clf;
  CondLM lm;

  // Fresh parameters; each component draws from its own derived stream.
  static Model create(const ModelConfig& cfg, std::uint64_t seed);

  std::vector<ParamRef> generator_params();
  std::vector<ParamRef> classifier_params();
  std::vector<ParamRef> eval_classifier_params();
  std::vector<ParamRef> lm_params();
  std::vector<ParamRef> all_params();
};

}  // namespace scp
