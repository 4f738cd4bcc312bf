#include "scp/training.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "scp/adam.hpp"
#include "scp/error.hpp"

namespace scp {

namespace {

Tensor one_hot(std::span<const std::size_t> ids, std::size_t v) {
  Tensor t(Shape{ids.size(), v});
  for (std::size_t i = 0; i < ids.size(); ++i) t[i * v + ids[i]] = 1.0;
  return t;
}

void zero_grads(std::span<const ParamRef> params) {
  for (const auto& p : params) p.tensor->zero_grad();
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

const std::vector<Example>& valid_or_train(const Dataset& d, Style s) {
  const auto& v = d.get(s, Split::Valid);
  return v.empty() ? d.get(s, Split::Train) : v;
}

struct NllSum {
  double nll = 0.0;
  std::size_t tokens = 0;
};

NllSum lm_nll_sum(Model& model, const std::vector<Example>& pool, Style style,
                  std::size_t batch_size) {
  NllSum out;
  for (std::size_t start = 0; start < pool.size(); start += batch_size) {
    const std::size_t end = std::min(pool.size(), start + batch_size);
    std::vector<std::size_t> pick;
    for (std::size_t i = start; i < end; ++i) pick.push_back(i);
    auto ids = ids_of(pool, pick);
    ag::Tape t;
    auto lm = bind(t, model.lm, false);
    auto loss = lm_sequence_nll(lm, ids, centroids_of(pool, pick, model.cfg.noun_dim), style, 1.0);
    out.nll += loss.item();
    for (const auto& s : ids) out.tokens += s.true_length - 1;
  }
  return out;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

double TemperatureSchedule::at(std::size_t epoch) const {
  const std::size_t k = epoch > pretrain_epochs ? epoch - pretrain_epochs : 0;
  return std::max(tau0 * std::pow(decay, static_cast<double>(k)), floor);
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ContractError("epochs must be positive");
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ContractError("batch_size must be a positive even number (half per style)");
  }
  if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
  if (weights.alpha < 0 || weights.beta < 0 || weights.eta < 0) {
    throw ContractError("loss weights must be nonnegative");
  }
  if (!(temperature.tau0 > 0.0) || !(temperature.floor > 0.0) || !(temperature.decay > 0.0) ||
      temperature.decay > 1.0) {
    throw ContractError("temperature schedule needs tau0 > 0, floor > 0 and decay in (0, 1]");
  }
}

// ---- data -----------------------------------------------------------------

Example make_example(const Tokens& sentence, const Vocabulary& vocab, const TagLexicon& lex,
                     const EmbeddingTable& table) {
  Example e;
  e.ids = encode(sentence, vocab);
  e.tokens.reserve(sentence.size());
  for (const auto& t : sentence) e.tokens.push_back(vocab.find(t) ? t : vocab.token(kUnk));
  e.nouns = embed_nouns(tag_nouns(e.tokens, lex), table).vectors;
  e.centroid = centroid(e.nouns, table.dim());
  return e;
}

Dataset build_dataset(Vocabulary vocab, TagLexicon lex, EmbeddingTable table,
                      const std::array<std::array<const Corpus*, 3>, 2>& corpora) {
  Dataset d{std::move(vocab), std::move(lex), std::move(table), {}, {}, {}};
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t sp = 0; sp < 3; ++sp) {
      const Corpus* c = corpora[s][sp];
      if (!c) continue;
      for (const auto& sent : c->sentences)
        d.parts[s][sp].push_back(make_example(sent, d.vocab, d.lexicon, d.table));
    }
    if (d.parts[s][0].empty()) {
      throw ContractError(std::string("no training sentences for style ") +
                          style_name(static_cast<Style>(s)));
    }
  }
  const std::size_t v = d.vocab.size(), dim = d.table.dim();
  d.glove = Tensor(Shape{v, dim});
  d.noun_id.assign(v, 0);
  for (std::size_t id = kUnk + 1; id < v; ++id) {
    const auto& tok = d.vocab.token(id);
    const auto* vec = d.table.find(tok);
    if (!vec) continue;
    std::copy(vec->begin(), vec->end(), d.glove.row(id).begin());
    d.noun_id[id] = d.lexicon.is_noun(tok);
  }
  return d;
}

BalancedBatcher::BalancedBatcher(std::size_t n_x, std::size_t n_y, std::size_t per_style, Rng rng)
    : n_{n_x, n_y}, per_style_(per_style), rng_(std::move(rng)) {
  if (n_x == 0 || n_y == 0 || per_style == 0) {
    throw ContractError("balanced batches need examples of both styles");
  }
  for (std::size_t s = 0; s < 2; ++s) {
    order_[s] = iota(n_[s]);
    rng_.shuffle(order_[s]);
  }
}

std::size_t BalancedBatcher::steps_per_epoch() const {
  const std::size_t n = std::max(n_[0], n_[1]);
  return (n + per_style_ - 1) / per_style_;
}

std::array<std::vector<std::size_t>, 2> BalancedBatcher::next() {
  std::array<std::vector<std::size_t>, 2> out;
  for (std::size_t s = 0; s < 2; ++s) {
    while (out[s].size() < per_style_) {
      if (pos_[s] == n_[s]) {
        rng_.shuffle(order_[s]);
        pos_[s] = 0;
      }
      out[s].push_back(order_[s][pos_[s]++]);
    }
  }
  return out;
}

std::vector<SentenceIds> ids_of(const std::vector<Example>& pool, std::span<const std::size_t> pick) {
  std::vector<SentenceIds> out;
  out.reserve(pick.size());
  for (std::size_t i : pick) out.push_back(pool.at(i).ids);
  return out;
}

Tensor centroids_of(const std::vector<Example>& pool, std::span<const std::size_t> pick,
                    std::size_t dim) {
  Tensor t(Shape{pick.size(), dim});
  for (std::size_t r = 0; r < pick.size(); ++r) {
    const auto& c = pool.at(pick[r]).centroid;
    if (c.size() != dim) throw DimensionError("noun centroid has the wrong dimension");
    std::copy(c.begin(), c.end(), t.row(r).begin());
  }
  return t;
}

// ---- loss terms -----------------------------------------------------------

ag::Var reconstruction_nll(const GenVars& g, const Encoded& enc, Style style,
                           std::span<const SentenceIds> batch) {
  auto tf = decode_teacher_forced(g, enc, style, batch);
  const std::size_t v = tf.logits.cols();
  std::vector<double> w(tf.mask);
  for (auto& x : w) x /= static_cast<double>(batch.size());
  return ag::cross_entropy_rows(tf.logits, g.emb.tape->constant(one_hot(tf.targets, v)), w);
}

ag::Var loss_reconstruction(const GenVars& g, std::span<const SentenceIds> x,
                            std::span<const SentenceIds> y) {
  if (x.empty() || y.empty()) throw ContractError("loss_reconstruction: empty batch");
  auto lx = reconstruction_nll(g, encode(g, x, Style::X), Style::X, x);
  auto ly = reconstruction_nll(g, encode(g, y, Style::Y), Style::Y, y);
  return ag::scale(ag::add(lx, ly), 0.5);
}

ag::Var loss_classifier(const ClfVars& c, const SoftSequence& x_to_y, const SoftSequence& y_to_x) {
  auto lx = classify_soft(c, x_to_y);
  auto ly = classify_soft(c, y_to_x);
  const std::size_t bx = x_to_y.batch(), by = y_to_x.batch(), n = bx + by;
  Tensor target(Shape{n, 2});
  for (std::size_t r = 0; r < n; ++r) target.at(r, r < bx ? index(Style::Y) : index(Style::X)) = 1.0;
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  return ag::cross_entropy_rows(ag::concat_rows({lx, ly}), lx.tape->constant(std::move(target)), w);
}

std::vector<NounMatch> match_nouns(const std::vector<std::vector<double>>& ex,
                                   const std::vector<std::vector<double>>& ey) {
  std::vector<NounMatch> out;
  const std::size_t n = std::min(ex.size(), ey.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_cos = cosine(ex[i], ey[0]);
    for (std::size_t j = 1; j < ey.size(); ++j) {
      const double c = cosine(ex[i], ey[j]);
      if (c > best_cos) {
        best_cos = c;
        best = j;
      }
    }
    out.push_back({i, best, 1.0 - best_cos});
  }
  return out;
}

double pos_gamma(std::size_t cx, std::size_t cy) {
  if (cx == 0) throw ContractError("pos_gamma: undefined for a noun-free input");
  const double hi = static_cast<double>(std::max(cx, cy)), lo = static_cast<double>(std::min(cx, cy));
  return 1.0 + (hi - lo) / static_cast<double>(cx);
}

PosValue pos_distance(const std::vector<std::vector<double>>& ex,
                      const std::vector<std::vector<double>>& ey) {
  PosValue p;
  p.cx = ex.size();
  p.cy = ey.size();
  p.count_mismatch = p.cx != p.cy;
  if (p.cx == 0) {
    p.noun_free = true;
    return p;
  }
  p.gamma = pos_gamma(p.cx, p.cy);
  p.matches = match_nouns(ex, ey);
  double sum = 0.0;
  for (const auto& m : p.matches) sum += m.d;
  p.value = p.gamma * sum;
  return p;
}

PosLoss loss_pos(const SoftSequence& s, std::span<const Example* const> sources,
                 const Dataset& data, double scale) {
  const std::size_t b = s.batch();
  if (sources.size() != b) throw DimensionError("loss_pos: sources do not match the batch");
  auto& tape = *s.probs.at(0).tape;
  auto all = s.steps() == 1 ? s.probs[0] : ag::concat_rows(s.probs);
  auto emb = ag::matmul(all, tape.constant(data.glove));
  const auto& ev = emb.value();
  PosLoss out;
  std::vector<ag::CosineTerm> terms;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<std::vector<double>> gen;
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < s.length[i]; ++t) {
      if (!data.noun_id[s.argmax[i][t]]) continue;
      const std::size_t row = t * b + i;
      auto r = ev.row(row);
      if (std::all_of(r.begin(), r.end(), [](double x) { return x == 0.0; })) continue;
      gen.emplace_back(r.begin(), r.end());
      rows.push_back(row);
    }
    const auto& src = sources[i]->nouns;
    auto pv = pos_distance(src, gen);
    if (pv.noun_free) {
      ++out.noun_free;
      continue;
    }
    out.count_mismatch += pv.count_mismatch;
    out.normalized += scale * pv.value / static_cast<double>(pv.cx);
    for (const auto& m : pv.matches) terms.push_back({rows[m.j], src[m.i], scale * pv.gamma});
  }
  out.loss = ag::cosine_distance_sum(emb, terms);
  return out;
}

ag::Var loss_lm_generated(const LmVars& lm, const SoftSequence& s, const Tensor& centroids,
                          Style target, double scale) {
  const std::size_t b = s.batch();
  if (centroids.rows() != b) throw DimensionError("loss_lm_generated: centroid rows mismatch");
  auto h = lm_init(lm, centroids, target);
  std::vector<ag::Var> logits;
  std::vector<double> w;
  std::vector<std::size_t> bos(b, kBos);
  for (std::size_t t = 0; t < s.steps(); ++t) {
    auto step = t == 0 ? lm_next_ids(lm, h, bos) : lm_next(lm, h, s.probs[t - 1]);
    h = step.h;
    logits.push_back(step.logits);
    for (std::size_t i = 0; i < b; ++i) w.push_back(t < s.length[i] ? scale : 0.0);
  }
  if (logits.size() == 1) return ag::cross_entropy_rows(logits[0], s.probs[0], w);
  return ag::cross_entropy_rows(ag::concat_rows(logits), ag::concat_rows(s.probs), w);
}

JointLoss joint_loss(ag::Tape& tape, Model& model, const Dataset& data, const JointBatch& batch,
                     double tau, const LossWeights& w, Rng& noise) {
  if (batch.x.empty() || batch.y.empty()) throw ContractError("joint_loss: empty batch");
  std::vector<SentenceIds> ix, iy;
  for (const auto* e : batch.x) ix.push_back(e->ids);
  for (const auto* e : batch.y) iy.push_back(e->ids);
  auto g = bind(tape, model.gen, model.cfg, true);
  auto ex = encode(g, ix, Style::X);
  auto ey = encode(g, iy, Style::Y);
  auto res = ag::scale(ag::add(reconstruction_nll(g, ex, Style::X, ix),
                               reconstruction_nll(g, ey, Style::Y, iy)),
                       0.5);
  JointLoss out;
  out.report.res = res.item();
  ag::Var total = res;
  if (w.alpha > 0.0 || w.beta > 0.0 || w.eta > 0.0) {
    auto sxy = decode_soft(g, ex, Style::Y, tau, noise);
    auto syx = decode_soft(g, ey, Style::X, tau, noise);
    const double scale = 1.0 / static_cast<double>(ix.size() + iy.size());
    if (w.alpha > 0.0) {
      auto c = bind(tape, model.clf, model.cfg, false);
      auto lc = loss_classifier(c, sxy, syx);
      out.report.cls = lc.item();
      total = ag::add(total, ag::scale(lc, w.alpha));
    }
    if (w.beta > 0.0) {
      auto px = loss_pos(sxy, batch.x, data, scale);
      auto py = loss_pos(syx, batch.y, data, scale);
      auto lp = ag::add(px.loss, py.loss);
      out.report.pos = lp.item();
      out.report.pos_norm = px.normalized + py.normalized;
      out.report.noun_free = px.noun_free + py.noun_free;
      total = ag::add(total, ag::scale(lp, w.beta));
    }
    if (w.eta > 0.0) {
      auto lm = bind(tape, model.lm, false);
      const std::size_t dim = model.cfg.noun_dim;
      Tensor cx(Shape{ix.size(), dim}), cy(Shape{iy.size(), dim});
      for (std::size_t r = 0; r < ix.size(); ++r)
        std::copy(batch.x[r]->centroid.begin(), batch.x[r]->centroid.end(), cx.row(r).begin());
      for (std::size_t r = 0; r < iy.size(); ++r)
        std::copy(batch.y[r]->centroid.begin(), batch.y[r]->centroid.end(), cy.row(r).begin());
      auto ll = ag::add(loss_lm_generated(lm, sxy, cx, Style::Y, scale),
                        loss_lm_generated(lm, syx, cy, Style::X, scale));
      out.report.lm = ll.item();
      total = ag::add(total, ag::scale(ll, w.eta));
    }
  }
  out.total = total;
  out.report.total = total.item();
  return out;
}

// ---- phases ---------------------------------------------------------------

double weighted_total(const LossReport& r, const LossWeights& w) {
  double t = r.res;
  if (w.alpha > 0.0) t = t + r.cls * w.alpha;
  if (w.beta > 0.0) t = t + r.pos * w.beta;
  if (w.eta > 0.0) t = t + r.lm * w.eta;
  return t;
}

double lm_mean_nll(Model& model, const std::vector<Example>& pool, Style style,
                   std::size_t batch_size) {
  auto s = lm_nll_sum(model, pool, style, batch_size);
  if (s.tokens == 0) throw ContractError("lm_mean_nll: no tokens");
  return s.nll / static_cast<double>(s.tokens);
}

double classifier_accuracy(Model& model, const Classifier& clf, const std::vector<Example>& pool,
                           Style style, std::size_t batch_size) {
  if (pool.empty()) throw ContractError("classifier_accuracy: no sentences");
  std::size_t hit = 0;
  auto& c = const_cast<Classifier&>(clf);
  for (std::size_t start = 0; start < pool.size(); start += batch_size) {
    const std::size_t end = std::min(pool.size(), start + batch_size);
    std::vector<std::vector<std::size_t>> seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(classifier_tokens(pool[i].ids));
    ag::Tape t;
    auto logits = classify_tokens(bind(t, c, model.cfg, false), seqs);
    for (std::size_t r = 0; r < seqs.size(); ++r) hit += argmax(logits.value().row(r)) == index(style);
  }
  return static_cast<double>(hit) / static_cast<double>(pool.size());
}

std::vector<PhaseEpoch> pretrain_lm(Model& model, const Dataset& data, const TrainConfig& cfg,
                                    std::ostream* log) {
  cfg.validate();
  auto params = model.lm_params();
  AdamState adam;
  const auto& tx = data.get(Style::X, Split::Train);
  const auto& ty = data.get(Style::Y, Split::Train);
  BalancedBatcher batcher(tx.size(), ty.size(), cfg.batch_size / 2,
                          Rng(cfg.seed).derive("batches-lm"));
  std::vector<PhaseEpoch> out;
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.lm_epochs; ++e) {
    double sum = 0.0;
    const std::size_t steps = batcher.steps_per_epoch();
    for (std::size_t k = 0; k < steps; ++k, ++step) {
      auto pick = batcher.next();
      auto ix = ids_of(tx, pick[0]);
      auto iy = ids_of(ty, pick[1]);
      std::size_t tokens = 0;
      for (const auto& s : ix) tokens += s.true_length - 1;
      for (const auto& s : iy) tokens += s.true_length - 1;
      const double wt = 1.0 / static_cast<double>(tokens);
      zero_grads(params);
      ag::Tape t;
      auto lm = bind(t, model.lm, true);
      auto loss = ag::add(
          lm_sequence_nll(lm, ix, centroids_of(tx, pick[0], model.cfg.noun_dim), Style::X, wt),
          lm_sequence_nll(lm, iy, centroids_of(ty, pick[1], model.cfg.noun_dim), Style::Y, wt));
      t.backward(loss);
      adam_step(params, adam, cfg.lr);
      sum += loss.item();
      if (log) {
        *log << nlohmann::json{{"phase", "lm"}, {"epoch", e}, {"step", step}, {"loss", loss.item()}}
                    .dump()
             << '\n';
      }
    }
    auto vx = lm_nll_sum(model, valid_or_train(data, Style::X), Style::X, cfg.batch_size);
    auto vy = lm_nll_sum(model, valid_or_train(data, Style::Y), Style::Y, cfg.batch_size);
    const double ppl = std::exp((vx.nll + vy.nll) / static_cast<double>(vx.tokens + vy.tokens));
    out.push_back({e, sum / static_cast<double>(steps), ppl});
    if (log) {
      *log << nlohmann::json{{"phase", "lm"}, {"epoch", e}, {"valid_perplexity", ppl}}.dump()
           << '\n';
    }
  }
  model.lm.trained = true;
  return out;
}

std::vector<PhaseEpoch> pretrain_classifier(Model& model, const Dataset& data,
                                            const TrainConfig& cfg, ClassifierRole role,
                                            std::ostream* log) {
  cfg.validate();
  const bool feedback = role == ClassifierRole::Feedback;
  Classifier& clf = feedback ? model.clf : model.eval_clf;
  auto params = feedback ? model.classifier_params() : model.eval_classifier_params();
  const char* name = feedback ? "classifier" : "eval_classifier";
  AdamState adam;
  const auto& tx = data.get(Style::X, Split::Train);
  const auto& ty = data.get(Style::Y, Split::Train);
  BalancedBatcher batcher(tx.size(), ty.size(), cfg.batch_size / 2,
                          Rng(cfg.seed).derive(std::string("batches-") + name));
  std::vector<PhaseEpoch> out;
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.classifier_epochs; ++e) {
    double sum = 0.0;
    const std::size_t steps = batcher.steps_per_epoch();
    for (std::size_t k = 0; k < steps; ++k, ++step) {
      auto pick = batcher.next();
      std::vector<std::vector<std::size_t>> seqs;
      std::vector<std::size_t> labels;
      for (std::size_t s = 0; s < 2; ++s) {
        const auto& pool = s == 0 ? tx : ty;
        for (std::size_t i : pick[s]) {
          seqs.push_back(classifier_tokens(pool[i].ids));
          labels.push_back(s);
        }
      }
      zero_grads(params);
      ag::Tape t;
      auto logits = classify_tokens(bind(t, clf, model.cfg, true), seqs);
      std::vector<double> w(labels.size(), 1.0 / static_cast<double>(labels.size()));
      auto loss = ag::cross_entropy_rows(logits, t.constant(one_hot(labels, 2)), w);
      t.backward(loss);
      adam_step(params, adam, cfg.lr);
      sum += loss.item();
      if (log) {
        *log << nlohmann::json{{"phase", name}, {"epoch", e}, {"step", step}, {"loss", loss.item()}}
                    .dump()
             << '\n';
      }
    }
    const auto& vx = valid_or_train(data, Style::X);
    const auto& vy = valid_or_train(data, Style::Y);
    const double acc =
        (classifier_accuracy(model, clf, vx, Style::X, cfg.batch_size) * static_cast<double>(vx.size()) +
         classifier_accuracy(model, clf, vy, Style::Y, cfg.batch_size) * static_cast<double>(vy.size())) /
        static_cast<double>(vx.size() + vy.size());
    out.push_back({e, sum / static_cast<double>(steps), acc});
    if (log) {
      *log << nlohmann::json{{"phase", name}, {"epoch", e}, {"valid_accuracy", acc}}.dump() << '\n';
    }
  }
  clf.trained = true;
  return out;
}

std::vector<JointEpoch> train_joint(Model& model, const Dataset& data, const TrainConfig& cfg,
                                    std::ostream* log, const EpochHook& on_epoch) {
  cfg.validate();
  if (cfg.weights.alpha > 0.0 && !model.clf.trained) {
    throw ContractError("joint training needs a trained classifier");
  }
  if (cfg.weights.eta > 0.0 && !model.lm.trained) {
    throw ContractError("joint training needs a trained language model");
  }
  auto params = model.generator_params();
  AdamState adam;
  const auto& tx = data.get(Style::X, Split::Train);
  const auto& ty = data.get(Style::Y, Split::Train);
  Rng root(cfg.seed);
  BalancedBatcher batcher(tx.size(), ty.size(), cfg.batch_size / 2, root.derive("batches-joint"));
  Rng noise = root.derive("gumbel");
  const LossWeights none{0.0, 0.0, 0.0};
  std::vector<JointEpoch> out;
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    JointEpoch summary;
    summary.epoch = e;
    summary.tau = cfg.temperature.at(e);
    const LossWeights& w = e < cfg.temperature.pretrain_epochs ? none : cfg.weights;
    const std::size_t steps = batcher.steps_per_epoch();
    for (std::size_t k = 0; k < steps; ++k, ++step) {
      auto pick = batcher.next();
      JointBatch batch;
      for (std::size_t i : pick[0]) batch.x.push_back(&tx[i]);
      for (std::size_t i : pick[1]) batch.y.push_back(&ty[i]);
      zero_grads(params);
      ag::Tape t;
      auto jl = joint_loss(t, model, data, batch, summary.tau, w, noise);
      t.backward(jl.total);
      adam_step(params, adam, cfg.lr);
      const auto& r = jl.report;
      summary.mean.res += r.res;
      summary.mean.cls += r.cls;
      summary.mean.pos += r.pos;
      summary.mean.lm += r.lm;
      summary.mean.total += r.total;
      summary.mean.pos_norm += r.pos_norm;
      summary.mean.noun_free += r.noun_free;
      if (log) {
        *log << nlohmann::json{{"epoch", e},          {"step", step},       {"tau", summary.tau},
                               {"L_res", r.res},      {"L_class", r.cls},   {"L_pos", r.pos},
                               {"L_lm", r.lm},        {"L_total", r.total}, {"L_pos_norm", r.pos_norm}}
                    .dump()
             << '\n';
      }
    }
    const double n = static_cast<double>(steps);
    summary.mean.res /= n;
    summary.mean.cls /= n;
    summary.mean.pos /= n;
    summary.mean.lm /= n;
    summary.mean.total /= n;
    summary.mean.pos_norm /= n;
    summary.rng_state = noise.state();
    out.push_back(summary);
    if (on_epoch) on_epoch(summary);
  }
  return out;
}

}  // namespace scp
