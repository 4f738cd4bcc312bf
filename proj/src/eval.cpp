#include "scp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "scp/error.hpp"
#include "scp/training.hpp"

namespace scp {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& s, std::size_t n) {
  NgramCounts c;
  if (s.size() < n) return c;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++c[Tokens(s.begin() + i, s.begin() + i + n)];
  return c;
}

// (clipped matches, candidate n-grams)
std::pair<std::size_t, std::size_t> overlap(const Tokens& cand, const Tokens& ref, std::size_t n) {
  auto c = ngrams(cand, n), r = ngrams(ref, n);
  std::size_t match = 0, total = 0;
  for (const auto& [g, k] : c) {
    total += k;
    auto it = r.find(g);
    if (it != r.end()) match += std::min(k, it->second);
  }
  return {match, total};
}

double brevity(double c, double r) { return c < r ? std::exp(1.0 - r / c) : 1.0; }

Tokens clip(const Tokens& s) {
  return s.size() <= kMaxContentTokens ? s : Tokens(s.begin(), s.begin() + kMaxContentTokens);
}

}  // namespace

std::vector<Tokens> transfer(Model& model, const Vocabulary& vocab,
                             const std::vector<Tokens>& sentences, Style target,
                             std::size_t batch_size) {
  std::vector<Tokens> out;
  out.reserve(sentences.size());
  for (std::size_t start = 0; start < sentences.size(); start += batch_size) {
    const std::size_t end = std::min(sentences.size(), start + batch_size);
    std::vector<SentenceIds> ids;
    for (std::size_t i = start; i < end; ++i) ids.push_back(encode(sentences[i], vocab));
    ag::Tape t;
    auto g = bind(t, model.gen, model.cfg, false);
    auto enc = encode(g, ids, other(target));
    for (const auto& row : greedy_decode(g, enc, target)) out.push_back(decode_generated(row, vocab));
  }
  return out;
}

std::vector<Style> classify_sentences(Model& model, Classifier& clf, const Vocabulary& vocab,
                                      const std::vector<Tokens>& sentences,
                                      std::size_t batch_size) {
  std::vector<Style> out;
  out.reserve(sentences.size());
  for (std::size_t start = 0; start < sentences.size(); start += batch_size) {
    const std::size_t end = std::min(sentences.size(), start + batch_size);
    std::vector<std::vector<std::size_t>> seqs;
    for (std::size_t i = start; i < end; ++i) {
      std::vector<std::size_t> ids;
      for (const auto& tok : sentences[i]) ids.push_back(vocab.id(tok));
      ids.push_back(kEos);
      seqs.push_back(std::move(ids));
    }
    ag::Tape t;
    auto logits = classify_tokens(bind(t, clf, model.cfg, false), seqs);
    for (std::size_t r = 0; r < seqs.size(); ++r) {
      auto row = logits.value().row(r);
      out.push_back(row[1] > row[0] ? Style::Y : Style::X);
    }
  }
  return out;
}

double style_accuracy(Model& model, const Vocabulary& vocab, const std::vector<Tokens>& sentences,
                      const std::vector<Style>& targets) {
  if (!model.eval_clf.trained) throw ContractError("style_accuracy: evaluation classifier is untrained");
  if (sentences.size() != targets.size()) {
    throw ContractError("style_accuracy: " + std::to_string(sentences.size()) + " sentences but " +
                        std::to_string(targets.size()) + " targets");
  }
  if (sentences.empty()) throw ContractError("style_accuracy: no sentences");
  auto pred = classify_sentences(model, model.eval_clf, vocab, sentences);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == targets[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
            std::size_t max_n) {
  if (candidates.empty()) throw ContractError("bleu: empty candidate set");
  if (candidates.size() != references.size()) {
    throw ContractError("bleu: " + std::to_string(candidates.size()) + " candidates but " +
                        std::to_string(references.size()) + " references");
  }
  double c = 0.0, r = 0.0, log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::size_t match = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto [m, t] = overlap(candidates[i], references[i], n);
      match += m;
      total += t;
    }
    if (match == 0) return 0.0;
    log_sum += std::log(static_cast<double>(match) / static_cast<double>(total));
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    c += static_cast<double>(candidates[i].size());
    r += static_cast<double>(references[i].size());
  }
  return 100.0 * brevity(c, r) * std::exp(log_sum / static_cast<double>(max_n));
}

double sentence_bleu(const Tokens& candidate, const Tokens& reference, std::size_t max_n) {
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    auto [m, t] = overlap(candidate, reference, n);
    double p;
    if (n == 1) {
      if (m == 0) return 0.0;
      p = static_cast<double>(m) / static_cast<double>(t);
    } else {
      p = static_cast<double>(m + 1) / static_cast<double>(t + 1);
    }
    log_sum += std::log(p);
  }
  return 100.0 * brevity(static_cast<double>(candidate.size()), static_cast<double>(reference.size())) *
         std::exp(log_sum / static_cast<double>(max_n));
}

PosMetric pos_distance_metric(const std::vector<Tokens>& originals,
                              const std::vector<Tokens>& transferred, const TagLexicon& lex,
                              const EmbeddingTable& table) {
  if (originals.size() != transferred.size()) {
    throw ContractError("pos_distance_metric: " + std::to_string(originals.size()) +
                        " originals but " + std::to_string(transferred.size()) + " outputs");
  }
  PosMetric m;
  double sum = 0.0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    auto ex = embed_nouns(tag_nouns(originals[i], lex), table).vectors;
    auto ey = embed_nouns(tag_nouns(transferred[i], lex), table).vectors;
    auto pv = pos_distance(ex, ey);
    PosPair p{pv.value, pv.noun_free};
    if (p.excluded) {
      ++m.excluded;
    } else {
      sum += p.value;
    }
    m.pairs.push_back(p);
  }
  const std::size_t used = originals.size() - m.excluded;
  m.mean = used ? sum / static_cast<double>(used) : 0.0;
  return m;
}

double noun_preservation(const std::vector<Tokens>& originals,
                         const std::vector<Tokens>& transferred, const TagLexicon& lex,
                         const EmbeddingTable& table, double threshold) {
  if (originals.size() != transferred.size()) throw ContractError("noun_preservation: misaligned");
  std::size_t used = 0, kept = 0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    auto ex = embed_nouns(tag_nouns(originals[i], lex), table).vectors;
    if (ex.empty()) continue;
    ++used;
    auto ey = embed_nouns(tag_nouns(transferred[i], lex), table).vectors;
    bool ok = false;
    for (const auto& a : ex)
      for (const auto& b : ey) ok = ok || cosine(a, b) >= threshold;
    kept += ok;
  }
  return used ? static_cast<double>(kept) / static_cast<double>(used) : 0.0;
}

double perplexity(Model& model, const Vocabulary& vocab, const std::vector<Tokens>& sentences,
                  const std::vector<Style>& styles, const TagLexicon& lex,
                  const EmbeddingTable& table) {
  if (sentences.size() != styles.size()) throw ContractError("perplexity: misaligned styles");
  if (sentences.empty()) throw ContractError("perplexity: no sentences");
  double nll = 0.0;
  std::size_t tokens = 0;
  for (Style s : {Style::X, Style::Y}) {
    std::vector<Example> pool;
    for (std::size_t i = 0; i < sentences.size(); ++i)
      if (styles[i] == s) pool.push_back(make_example(clip(sentences[i]), vocab, lex, table));
    if (pool.empty()) continue;
    std::size_t n = 0;
    for (const auto& e : pool) n += e.ids.true_length - 1;
    nll += lm_mean_nll(model, pool, s) * static_cast<double>(n);
    tokens += n;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

std::string EvalReport::to_json(bool with_records) const {
  nlohmann::json j;
  j["accuracy"] = accuracy ? nlohmann::json(*accuracy) : nlohmann::json(nullptr);
  j["bleu"] = bleu;
  j["pos_distance"] = pos_distance;
  j["perplexity"] = perplexity ? nlohmann::json(*perplexity) : nlohmann::json(nullptr);
  j["n"] = n;
  j["excluded_noun_free"] = excluded_noun_free;
  if (with_records) {
    auto arr = nlohmann::json::array();
    for (const auto& r : records) {
      nlohmann::json e{{"original", r.original},
                       {"transferred", r.transferred},
                       {"pos_distance", r.pos_excluded ? nlohmann::json(nullptr) : nlohmann::json(r.pos)}};
      e["predicted_style"] = r.predicted ? nlohmann::json(style_name(*r.predicted)) : nlohmann::json(nullptr);
      arr.push_back(std::move(e));
    }
    j["sentences"] = std::move(arr);
  }
  return j.dump(2);
}

}  // namespace scp
