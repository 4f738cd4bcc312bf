#include "scp/model.hpp"

#include <algorithm>
#include <cmath>

#include "scp/error.hpp"

namespace scp {

namespace {

Tensor uniform(Rng& rng, Shape shape, double a) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = (2.0 * rng.uniform() - 1.0) * a;
  return t;
}

Tensor fan_in_uniform(Rng& rng, std::size_t in, std::size_t out) {
  return uniform(rng, Shape{in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
}

// Embeddings and style vectors start wide, U(-4, 4): rows must be far apart
// for style flipping to emerge within a short joint phase.
constexpr double kTableScale = 4.0;

Tensor one_hot(std::span<const std::size_t> ids, std::size_t v) {
  Tensor t(Shape{ids.size(), v});
  for (std::size_t i = 0; i < ids.size(); ++i) t[i * v + ids[i]] = 1.0;
  return t;
}

ag::Tape& tape_of(ag::Var v) { return *v.tape; }

void check_batch(std::span<const SentenceIds> batch, const char* what) {
  if (batch.empty()) throw ContractError(std::string(what) + ": empty batch");
  for (const auto& s : batch) {
    if (s.true_length < 2 || s.true_length > s.ids.size() || s.ids[0] != kBos) {
      throw ContractError(std::string(what) + ": sentence is not framed by BOS/EOS");
    }
  }
}

std::size_t max_length(std::span<const SentenceIds> batch) {
  std::size_t l = 0;
  for (const auto& s : batch) l = std::max(l, s.true_length);
  return l;
}

std::size_t row_argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::size_t ModelConfig::max_width() const {
  return clf_widths.empty() ? 0 : *std::max_element(clf_widths.begin(), clf_widths.end());
}

void ModelConfig::validate() const {
  if (vocab_size <= kUnk) throw ContractError("vocab_size must exceed the reserved tokens");
  for (std::size_t d : {embed_dim, style_dim, hidden, attention_dim, clf_embed_dim, clf_filters,
                        lm_embed_dim, lm_hidden, lm_style_dim, noun_dim, max_generate}) {
    if (d == 0) throw ContractError("model dimensions must be positive");
  }
  if (clf_widths.empty()) throw ContractError("classifier needs at least one kernel width");
  for (std::size_t w : clf_widths)
    if (w == 0) throw ContractError("classifier kernel widths must be positive");
}

// ---- GRU ------------------------------------------------------------------

void GruParams::init(Rng& rng, std::size_t in, std::size_t hidden) {
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
  wx = uniform(rng, Shape{in, 3 * hidden}, a);
  wh = uniform(rng, Shape{hidden, 3 * hidden}, a);
  bx = uniform(rng, Shape{3 * hidden}, a);
  bh = uniform(rng, Shape{3 * hidden}, a);
}

void GruParams::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".wx", &wx});
  out.push_back({prefix + ".wh", &wh});
  out.push_back({prefix + ".bx", &bx});
  out.push_back({prefix + ".bh", &bh});
}

GruVars bind(ag::Tape& t, GruParams& p, bool trainable) {
  return {t.leaf(p.wx, trainable), t.leaf(p.wh, trainable), t.leaf(p.bx, trainable),
          t.leaf(p.bh, trainable)};
}

ag::Var gru_step(const GruVars& g, ag::Var x, ag::Var h) {
  auto gx = ag::add_bias(ag::matmul(x, g.wx), g.bx);
  auto gh = ag::add_bias(ag::matmul(h, g.wh), g.bh);
  return ag::gru_gates(gx, gh, h);
}

// ---- generator ------------------------------------------------------------

void Generator::init(const ModelConfig& cfg, Rng& rng) {
  const std::size_t v = cfg.vocab_size, e = cfg.embed_dim, s = cfg.style_dim, h = cfg.hidden,
                    a = cfg.attention_dim;
  emb = uniform(rng, Shape{v, e}, kTableScale);
  style = uniform(rng, Shape{2, s}, kTableScale);
  enc.init(rng, e + s, h);
  init_w = fan_in_uniform(rng, h, h);
  init_b = Tensor(Shape{h});
  att_key = fan_in_uniform(rng, h, a);
  att_query = fan_in_uniform(rng, h, a);
  att_v = uniform(rng, Shape{a}, 1.0 / std::sqrt(static_cast<double>(a)));
  dec.init(rng, e + s + h, h);
  out_w = fan_in_uniform(rng, 2 * h, v);
  out_b = Tensor(Shape{v});
}

void Generator::collect(std::vector<ParamRef>& out) {
  out.push_back({"gen.emb", &emb});
  out.push_back({"gen.style", &style});
  enc.collect("gen.enc", out);
  out.push_back({"gen.init_w", &init_w});
  out.push_back({"gen.init_b", &init_b});
  out.push_back({"gen.att_key", &att_key});
  out.push_back({"gen.att_query", &att_query});
  out.push_back({"gen.att_v", &att_v});
  dec.collect("gen.dec", out);
  out.push_back({"gen.out_w", &out_w});
  out.push_back({"gen.out_b", &out_b});
}

GenVars bind(ag::Tape& t, Generator& g, const ModelConfig& cfg, bool trainable) {
  GenVars v;
  v.emb = t.leaf(g.emb, trainable);
  v.style = t.leaf(g.style, trainable);
  v.enc = bind(t, g.enc, trainable);
  v.init_w = t.leaf(g.init_w, trainable);
  v.init_b = t.leaf(g.init_b, trainable);
  v.att_key = t.leaf(g.att_key, trainable);
  v.att_query = t.leaf(g.att_query, trainable);
  v.att_v = t.leaf(g.att_v, trainable);
  v.dec = bind(t, g.dec, trainable);
  v.out_w = t.leaf(g.out_w, trainable);
  v.out_b = t.leaf(g.out_b, trainable);
  v.max_generate = cfg.max_generate;
  return v;
}

ag::Var style_rows(ag::Var table, Style s, std::size_t batch) {
  std::vector<std::size_t> ids(batch, index(s));
  return ag::gather_rows(table, ids);
}

Encoded encode(const GenVars& g, std::span<const SentenceIds> batch, Style style) {
  check_batch(batch, "encode");
  auto& tape = tape_of(g.emb);
  const std::size_t b = batch.size(), len = max_length(batch), h = g.enc.wh.rows();
  ag::Var v = style_rows(g.style, style, b);
  ag::Var state = tape.constant(Tensor(Shape{b, h}));
  std::vector<ag::Var> states;
  std::vector<std::size_t> ids(b);
  std::vector<std::uint8_t> keep(b);
  Encoded enc;
  enc.batch = b;
  enc.len = len;
  enc.mask.assign(b * len, 0);
  for (std::size_t t = 0; t < len; ++t) {
    bool all = true;
    for (std::size_t i = 0; i < b; ++i) {
      keep[i] = t < batch[i].true_length;
      ids[i] = keep[i] ? batch[i].ids[t] : kPad;
      enc.mask[i * len + t] = keep[i];
      all = all && keep[i];
    }
    auto x = ag::concat_cols({ag::gather_rows(g.emb, ids), v});
    auto fresh = gru_step(g.enc, x, state);
    state = all ? fresh : ag::blend_rows(fresh, state, keep);
    states.push_back(state);
  }
  enc.content = state;
  enc.states = ag::stack_time(states);
  enc.keys = ag::matmul(enc.states, g.att_key);
  return enc;
}

ag::Var decoder_init(const GenVars& g, const Encoded& enc) {
  return ag::tanh(ag::add_bias(ag::matmul(enc.content, g.init_w), g.init_b));
}

DecoderStep decoder_step(const GenVars& g, const Encoded& enc, ag::Var input_emb, ag::Var style,
                         ag::Var s_prev) {
  auto q = ag::matmul(s_prev, g.att_query);
  auto scores = ag::additive_scores(enc.keys, q, g.att_v, enc.len);
  auto alpha = ag::masked_softmax_rows(scores, enc.mask);
  auto ctx = ag::attend(alpha, enc.states);
  auto x = ag::concat_cols({input_emb, style, ctx});
  return {gru_step(g.dec, x, s_prev), ctx, alpha};
}

namespace {

ag::Var readout(const GenVars& g, ag::Var features) {
  return ag::add_bias(ag::matmul(features, g.out_w), g.out_b);
}

}  // namespace

ag::Var output_logits(const GenVars& g, const DecoderStep& step) {
  return readout(g, ag::concat_cols({step.state, step.context}));
}

TeacherForced decode_teacher_forced(const GenVars& g, const Encoded& enc, Style style,
                                    std::span<const SentenceIds> targets) {
  check_batch(targets, "decode_teacher_forced");
  if (targets.size() != enc.batch) throw DimensionError("decode_teacher_forced: batch mismatch");
  const std::size_t b = targets.size(), steps = max_length(targets) - 1;
  auto v = style_rows(g.style, style, b);
  auto s = decoder_init(g, enc);
  TeacherForced tf;
  std::vector<ag::Var> outs;
  std::vector<std::size_t> in(b);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < b; ++i) {
      const bool live = t + 1 < targets[i].true_length;
      in[i] = targets[i].ids[t];
      tf.targets.push_back(live ? targets[i].ids[t + 1] : kPad);
      tf.mask.push_back(live ? 1.0 : 0.0);
      tf.tokens += live;
    }
    auto step = decoder_step(g, enc, ag::gather_rows(g.emb, in), v, s);
    s = step.state;
    tf.attention.push_back(step.attention);
    outs.push_back(ag::concat_cols({step.state, step.context}));
  }
  tf.logits = readout(g, ag::concat_rows(outs));
  return tf;
}

ag::Var gumbel_softmax(ag::Var logits, double tau, const Tensor& noise) {
  if (!(tau > 0.0)) throw ContractError("gumbel_softmax: temperature must be positive");
  auto z = ag::add(ag::log_softmax_rows(logits), tape_of(logits).constant(noise));
  return ag::softmax_rows(ag::scale(z, 1.0 / tau));
}

ag::Var gumbel_softmax_step(ag::Var logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw ContractError("gumbel_softmax: temperature must be positive");
  return gumbel_softmax(logits, tau, gumbel_noise(rng, logits.shape()));
}

SoftSequence decode_soft(const GenVars& g, const Encoded& enc, Style target, double tau,
                         Rng& rng) {
  if (!(tau > 0.0)) throw ContractError("decode_soft: temperature must be positive");
  const std::size_t b = enc.batch;
  auto v = style_rows(g.style, target, b);
  auto s = decoder_init(g, enc);
  std::vector<std::size_t> bos(b, kBos);
  ag::Var input = ag::gather_rows(g.emb, bos);
  SoftSequence out;
  out.tau = tau;
  out.argmax.assign(b, {});
  out.length.assign(b, 0);
  std::size_t active = b;
  for (std::size_t t = 0; t < g.max_generate && active > 0; ++t) {
    auto step = decoder_step(g, enc, input, v, s);
    s = step.state;
    auto u = gumbel_softmax_step(output_logits(g, step), tau, rng);
    const auto& uv = u.value();
    for (std::size_t i = 0; i < b; ++i) {
      if (out.length[i] != 0) continue;
      const std::size_t id = row_argmax(uv.row(i));
      out.argmax[i].push_back(id);
      if (id == kEos || t + 1 == g.max_generate) {
        out.length[i] = t + 1;
        --active;
      }
    }
    out.probs.push_back(u);
    input = ag::matmul(u, g.emb);
  }
  return out;
}

std::vector<std::vector<std::size_t>> greedy_decode(const GenVars& g, const Encoded& enc,
                                                    Style target) {
  const std::size_t b = enc.batch;
  auto v = style_rows(g.style, target, b);
  auto s = decoder_init(g, enc);
  std::vector<std::size_t> prev(b, kBos);
  std::vector<std::vector<std::size_t>> out(b);
  std::vector<std::uint8_t> done(b, 0);
  std::size_t active = b;
  for (std::size_t t = 0; t < g.max_generate && active > 0; ++t) {
    auto step = decoder_step(g, enc, ag::gather_rows(g.emb, prev), v, s);
    s = step.state;
    const auto& lv = output_logits(g, step).value();
    for (std::size_t i = 0; i < b; ++i) {
      prev[i] = row_argmax(lv.row(i));
      if (done[i]) continue;
      out[i].push_back(prev[i]);
      if (prev[i] == kEos) {
        done[i] = 1;
        --active;
      }
    }
  }
  return out;
}

// ---- classifier -----------------------------------------------------------

void Classifier::init(const ModelConfig& cfg, Rng& rng) {
  const std::size_t e = cfg.clf_embed_dim, f = cfg.clf_filters;
  emb = uniform(rng, Shape{cfg.vocab_size, e}, kTableScale);
  filters.clear();
  biases.clear();
  for (std::size_t k : cfg.clf_widths) {
    filters.push_back(fan_in_uniform(rng, k * e, f));
    biases.push_back(Tensor(Shape{f}));
  }
  out_w = fan_in_uniform(rng, cfg.clf_widths.size() * f, 2);
  out_b = Tensor(Shape{2});
  trained = false;
}

void Classifier::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".emb", &emb});
  for (std::size_t i = 0; i < filters.size(); ++i) {
    out.push_back({prefix + ".filter" + std::to_string(i), &filters[i]});
    out.push_back({prefix + ".filter_b" + std::to_string(i), &biases[i]});
  }
  out.push_back({prefix + ".out_w", &out_w});
  out.push_back({prefix + ".out_b", &out_b});
}

ClfVars bind(ag::Tape& t, Classifier& c, const ModelConfig& cfg, bool trainable) {
  ClfVars v;
  v.emb = t.leaf(c.emb, trainable);
  for (std::size_t i = 0; i < c.filters.size(); ++i) {
    v.filters.push_back(t.leaf(c.filters[i], trainable));
    v.biases.push_back(t.leaf(c.biases[i], trainable));
  }
  v.out_w = t.leaf(c.out_w, trainable);
  v.out_b = t.leaf(c.out_b, trainable);
  v.widths = cfg.clf_widths;
  return v;
}

std::vector<std::size_t> classifier_tokens(const SentenceIds& s) {
  return std::vector<std::size_t>(s.ids.begin() + 1, s.ids.begin() + s.true_length);
}

namespace {

// Sequences shorter than the widest kernel are left-padded with PAD; windows
// that run past a sequence's end are excluded from pooling.
struct ClfLayout {
  std::size_t len = 0;
  std::vector<std::size_t> pad_left, used;
};

ClfLayout layout_for(std::span<const std::size_t> lengths, std::size_t max_width) {
  ClfLayout l;
  for (std::size_t n : lengths) {
    if (n == 0) throw ContractError("classifier: empty sequence");
    const std::size_t pad = n < max_width ? max_width - n : 0;
    l.pad_left.push_back(pad);
    l.used.push_back(pad + n);
    l.len = std::max(l.len, pad + n);
  }
  return l;
}

ag::Var classify_rows(const ClfVars& c, ag::Var rows, const ClfLayout& l) {
  const std::size_t b = l.used.size();
  std::vector<ag::Var> pooled;
  for (std::size_t w = 0; w < c.widths.size(); ++w) {
    const std::size_t k = c.widths[w], nw = l.len - k + 1;
    auto win = ag::unfold_windows(rows, b, l.len, k);
    auto conv = ag::relu(ag::add_bias(ag::matmul(win, c.filters[w]), c.biases[w]));
    std::vector<std::uint8_t> valid(b * nw);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t p = 0; p < nw; ++p) valid[i * nw + p] = p + k <= l.used[i];
    pooled.push_back(ag::masked_max_groups(conv, valid, nw));
  }
  auto feats = pooled.size() == 1 ? pooled[0] : ag::concat_cols(pooled);
  return ag::add_bias(ag::matmul(feats, c.out_w), c.out_b);
}

std::size_t widest(const ClfVars& c) { return *std::max_element(c.widths.begin(), c.widths.end()); }

}  // namespace

ag::Var classify_tokens(const ClfVars& c, const std::vector<std::vector<std::size_t>>& seqs) {
  if (seqs.empty()) throw ContractError("classify: empty batch");
  std::vector<std::size_t> lengths;
  for (const auto& s : seqs) lengths.push_back(s.size());
  const auto l = layout_for(lengths, widest(c));
  std::vector<std::size_t> ids(seqs.size() * l.len, kPad);
  for (std::size_t i = 0; i < seqs.size(); ++i)
    for (std::size_t t = 0; t < seqs[i].size(); ++t)
      ids[i * l.len + l.pad_left[i] + t] = seqs[i][t];
  return classify_rows(c, ag::gather_rows(c.emb, ids), l);
}

ag::Var classify_soft(const ClfVars& c, const SoftSequence& s) {
  if (s.batch() == 0 || s.steps() == 0) throw ContractError("classify_soft: empty sequence");
  const std::size_t b = s.batch(), steps = s.steps();
  const auto l = layout_for(s.length, widest(c));
  auto soft = ag::matmul(steps == 1 ? s.probs[0] : ag::concat_rows(s.probs), c.emb);
  const std::size_t pad_row = steps * b;
  std::vector<std::size_t> pad_id{kPad};
  auto table = ag::concat_rows({soft, ag::gather_rows(c.emb, pad_id)});
  std::vector<std::size_t> idx(b * l.len, pad_row);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t t = 0; t < s.length[i]; ++t) idx[i * l.len + l.pad_left[i] + t] = t * b + i;
  return classify_rows(c, ag::gather_rows(table, idx), l);
}

// ---- conditional language model -------------------------------------------

void CondLM::init(const ModelConfig& cfg, Rng& rng) {
  const std::size_t v = cfg.vocab_size, e = cfg.lm_embed_dim, s = cfg.lm_style_dim,
                    h = cfg.lm_hidden;
  emb = uniform(rng, Shape{v, e}, kTableScale);
  style = uniform(rng, Shape{2, s}, kTableScale);
  init_w = fan_in_uniform(rng, cfg.noun_dim + s, h);
  init_b = Tensor(Shape{h});
  gru.init(rng, e, h);
  out_w = fan_in_uniform(rng, h, v);
  out_b = Tensor(Shape{v});
  trained = false;
}

void CondLM::collect(std::vector<ParamRef>& out) {
  out.push_back({"lm.emb", &emb});
  out.push_back({"lm.style", &style});
  out.push_back({"lm.init_w", &init_w});
  out.push_back({"lm.init_b", &init_b});
  gru.collect("lm.gru", out);
  out.push_back({"lm.out_w", &out_w});
  out.push_back({"lm.out_b", &out_b});
}

LmVars bind(ag::Tape& t, CondLM& lm, bool trainable) {
  LmVars v;
  v.emb = t.leaf(lm.emb, trainable);
  v.style = t.leaf(lm.style, trainable);
  v.init_w = t.leaf(lm.init_w, trainable);
  v.init_b = t.leaf(lm.init_b, trainable);
  v.gru = bind(t, lm.gru, trainable);
  v.out_w = t.leaf(lm.out_w, trainable);
  v.out_b = t.leaf(lm.out_b, trainable);
  return v;
}

ag::Var lm_init(const LmVars& lm, const Tensor& centroids, Style style) {
  const std::size_t b = centroids.rows();
  if (centroids.cols() + lm.style.cols() != lm.init_w.rows()) {
    throw DimensionError("lm_init: centroids " + centroids.shape().str() + " do not fit " +
                         lm.init_w.shape().str());
  }
  auto cat = ag::concat_cols({tape_of(lm.emb).constant(centroids), style_rows(lm.style, style, b)});
  return ag::tanh(ag::add_bias(ag::matmul(cat, lm.init_w), lm.init_b));
}

namespace {

LmStep lm_advance(const LmVars& lm, ag::Var h, ag::Var x) {
  auto next = gru_step(lm.gru, x, h);
  return {next, ag::add_bias(ag::matmul(next, lm.out_w), lm.out_b)};
}

}  // namespace

LmStep lm_next(const LmVars& lm, ag::Var h, ag::Var input_dist) {
  const auto& d = input_dist.value();
  for (std::size_t r = 0; r < d.rows(); ++r) {
    double s = 0.0;
    for (double x : d.row(r)) {
      if (x < -1e-12) throw ContractError("lm_next: negative input probability");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw ContractError("lm_next: input row " + std::to_string(r) + " sums to " +
                          std::to_string(s) + ", not a distribution");
    }
  }
  return lm_advance(lm, h, ag::matmul(input_dist, lm.emb));
}

LmStep lm_next_ids(const LmVars& lm, ag::Var h, std::span<const std::size_t> ids) {
  return lm_advance(lm, h, ag::gather_rows(lm.emb, ids));
}

ag::Var lm_sequence_nll(const LmVars& lm, std::span<const SentenceIds> batch,
                        const Tensor& centroids, Style style, double weight) {
  check_batch(batch, "lm_sequence_nll");
  const std::size_t b = batch.size(), steps = max_length(batch) - 1, v = lm.out_w.cols();
  auto h = lm_init(lm, centroids, style);
  std::vector<ag::Var> logits;
  std::vector<std::size_t> in(b), targets;
  std::vector<double> weights;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < b; ++i) {
      const bool live = t + 1 < batch[i].true_length;
      in[i] = batch[i].ids[t];
      targets.push_back(live ? batch[i].ids[t + 1] : kPad);
      weights.push_back(live ? weight : 0.0);
    }
    auto step = lm_next_ids(lm, h, in);
    h = step.h;
    logits.push_back(step.logits);
  }
  auto all = logits.size() == 1 ? logits[0] : ag::concat_rows(logits);
  return ag::cross_entropy_rows(all, tape_of(lm.emb).constant(one_hot(targets, v)), weights);
}

// ---- bundle ---------------------------------------------------------------

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng root(seed);
  Rng g = root.derive("init-generator");
  Rng c = root.derive("init-classifier");
  Rng e = root.derive("init-eval-classifier");
  Rng l = root.derive("init-lm");
  m.gen.init(cfg, g);
  m.clf.init(cfg, c);
  m.eval_clf.init(cfg, e);
  m.lm.init(cfg, l);
  return m;
}

std::vector<ParamRef> Model::generator_params() {
  std::vector<ParamRef> out;
  gen.collect(out);
  return out;
}

std::vector<ParamRef> Model::classifier_params() {
  std::vector<ParamRef> out;
  clf.collect("clf", out);
  return out;
}

std::vector<ParamRef> Model::eval_classifier_params() {
  std::vector<ParamRef> out;
  eval_clf.collect("eval_clf", out);
  return out;
}

std::vector<ParamRef> Model::lm_params() {
  std::vector<ParamRef> out;
  lm.collect(out);
  return out;
}

std::vector<ParamRef> Model::all_params() {
  std::vector<ParamRef> out;
  gen.collect(out);
  clf.collect("clf", out);
  eval_clf.collect("eval_clf", out);
  lm.collect(out);
  return out;
}

}  // namespace scp
