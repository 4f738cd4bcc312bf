#include "scp/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "scp/error.hpp"
#include "scp/rng.hpp"

namespace scp {

namespace {

using json = nlohmann::json;

struct Piece {
  enum Kind { Word, Noun, StyleWord, Choice } kind;
  std::string word;
  std::vector<Tokens> options;
};

std::vector<Piece> parse_template(const std::string& tpl) {
  std::vector<Piece> out;
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == ' ') {
      ++i;
      continue;
    }
    if (tpl[i] == '{') {
      const auto close = tpl.find('}', i);
      if (close == std::string::npos) throw ContractError("unterminated slot in template: " + tpl);
      const std::string body = tpl.substr(i + 1, close - i - 1);
      if (body == "NOUN") {
        out.push_back({Piece::Noun, {}, {}});
      } else if (body == "STYLE") {
        out.push_back({Piece::StyleWord, {}, {}});
      } else {
        Piece p{Piece::Choice, {}, {}};
        std::size_t start = 0;
        while (true) {
          const auto bar = body.find('|', start);
          auto opt = tokenize(body.substr(start, bar == std::string::npos ? std::string::npos
                                                                          : bar - start));
          if (opt.empty()) throw ContractError("empty choice in template: " + tpl);
          p.options.push_back(std::move(opt));
          if (bar == std::string::npos) break;
          start = bar + 1;
        }
        out.push_back(std::move(p));
      }
      i = close + 1;
    } else {
      auto end = tpl.find_first_of(" {", i);
      if (end == std::string::npos) end = tpl.size();
      out.push_back({Piece::Word, tpl.substr(i, end - i), {}});
      i = end;
    }
  }
  return out;
}

void validate(const SynthSpec& spec, const std::vector<std::vector<Piece>>& parsed) {
  if (spec.noun_classes.empty()) throw ContractError("synthetic spec needs at least one noun class");
  for (const auto& cls : spec.noun_classes)
    if (cls.empty()) throw ContractError("synthetic spec has an empty noun class");
  for (const auto& ws : spec.style_words)
    if (ws.empty()) throw ContractError("synthetic spec needs style words for both styles");
  if (spec.templates.empty()) throw ContractError("synthetic spec needs at least one template");
  if (spec.embedding_dim < 2) throw ContractError("embedding_dim too small");

  std::set<std::string> x(spec.style_words[0].begin(), spec.style_words[0].end());
  for (const auto& w : spec.style_words[1]) {
    if (x.count(w)) throw ContractError("style word '" + w + "' appears in both style sets");
  }
  std::set<std::string> nouns;
  for (const auto& cls : spec.noun_classes)
    for (const auto& n : cls) {
      if (!nouns.insert(n).second) throw ContractError("noun '" + n + "' listed twice");
    }
  std::set<std::string> styles = x;
  styles.insert(spec.style_words[1].begin(), spec.style_words[1].end());
  for (const auto& n : nouns)
    if (styles.count(n)) throw ContractError("'" + n + "' is both a noun and a style word");

  for (std::size_t t = 0; t < parsed.size(); ++t) {
    std::size_t noun_slots = 0, style_slots = 0, max_len = 0;
    for (const auto& p : parsed[t]) {
      switch (p.kind) {
        case Piece::Noun: ++noun_slots; ++max_len; break;
        case Piece::StyleWord: ++style_slots; ++max_len; break;
        case Piece::Word:
          if (nouns.count(p.word) || styles.count(p.word))
            throw ContractError("template word '" + p.word + "' collides with a noun or style word");
          ++max_len;
          break;
        case Piece::Choice: {
          std::size_t longest = 0;
          for (const auto& o : p.options) {
            longest = std::max(longest, o.size());
            for (const auto& w : o)
              if (nouns.count(w) || styles.count(w))
                throw ContractError("choice word '" + w + "' collides with a noun or style word");
          }
          max_len += longest;
          break;
        }
      }
    }
    if (noun_slots == 0) throw ContractError("template without a noun slot: " + spec.templates[t]);
    if (style_slots != 1)
      throw ContractError("template needs exactly one style slot: " + spec.templates[t]);
    if (max_len > kMaxContentTokens)
      throw ContractError("template can exceed 15 tokens: " + spec.templates[t]);
  }
}

std::string format_vector(const std::vector<double>& v) {
  std::string s;
  char buf[32];
  for (double x : v) {
    std::snprintf(buf, sizeof buf, " %.6f", x);
    s += buf;
  }
  return s;
}

std::vector<double> parse_back(const std::string& formatted) {
  std::vector<double> v;
  const char* p = formatted.c_str();
  char* end = nullptr;
  for (double x = std::strtod(p, &end); end != p; x = std::strtod(p, &end)) {
    v.push_back(x);
    p = end;
  }
  return v;
}

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

// Removes the components along each (orthonormal) basis vector.
void project_out(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) {
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) d += v[i] * b[i];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * b[i];
  }
}

}  // namespace

SynthSpec default_synth_spec() {
  SynthSpec s;
  s.noun_classes = {{"meal", "dish", "plate", "entree"},
                    {"waiter", "server", "staff", "host"},
                    {"place", "restaurant", "spot", "venue"}};
  s.style_words[0] = {"great", "excellent", "amazing", "wonderful", "fantastic", "perfect"};
  s.style_words[1] = {"terrible", "awful", "horrible", "bad", "disappointing", "mediocre"};
  s.templates = {
      "the {NOUN} was {STYLE}",
      "the {NOUN} here is {very|really|quite|so} {STYLE}",
      "i thought the {NOUN} was {STYLE} {today|tonight|again|overall}",
      "our {NOUN} and the {NOUN} were {STYLE}",
      "we found the {NOUN} {STYLE} and {will|might} {return|come back}",
      "my {friend|wife|husband|mom} said the {NOUN} is {STYLE}",
      "honestly the {NOUN} at this {NOUN} was {STYLE}",
      "{overall|honestly|frankly} , the {NOUN} seemed {STYLE} to {us|me}",
      "what a {STYLE} {NOUN} {we|they} {had|got} {here|there}",
      "the {NOUN} {is|was} always {STYLE} when we {visit|go} on {weekends|fridays|sundays}",
  };
  s.sentences_per_style = 2000;
  s.seed = 1;
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read synthetic spec " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  static const std::set<std::string> known{"noun_classes", "style_words_x", "style_words_y",
                                           "templates", "sentences_per_style", "seed",
                                           "embedding_dim", "synonym_spread"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ContractError("unknown synthetic spec key '" + it.key() + "'");
  SynthSpec s = default_synth_spec();
  try {
    if (j.contains("noun_classes")) s.noun_classes = j["noun_classes"].get<decltype(s.noun_classes)>();
    if (j.contains("style_words_x")) s.style_words[0] = j["style_words_x"].get<std::vector<std::string>>();
    if (j.contains("style_words_y")) s.style_words[1] = j["style_words_y"].get<std::vector<std::string>>();
    if (j.contains("templates")) s.templates = j["templates"].get<std::vector<std::string>>();
    if (j.contains("sentences_per_style")) s.sentences_per_style = j["sentences_per_style"].get<std::size_t>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("embedding_dim")) s.embedding_dim = j["embedding_dim"].get<std::size_t>();
    if (j.contains("synonym_spread")) s.synonym_spread = j["synonym_spread"].get<double>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return s;
}

std::string synth_spec_json(const SynthSpec& s) {
  json j;
  j["noun_classes"] = s.noun_classes;
  j["style_words_x"] = s.style_words[0];
  j["style_words_y"] = s.style_words[1];
  j["templates"] = s.templates;
  j["sentences_per_style"] = s.sentences_per_style;
  j["seed"] = s.seed;
  j["embedding_dim"] = s.embedding_dim;
  j["synonym_spread"] = s.synonym_spread;
  return j.dump(2);
}

std::array<std::size_t, 3> split_sizes(std::size_t n) {
  const std::size_t valid = n / 10, test = n / 5;
  return {n - valid - test, valid, test};
}

SynthOutput generate_synthetic(const SynthSpec& spec) {
  std::vector<std::vector<Piece>> parsed;
  for (const auto& t : spec.templates) parsed.push_back(parse_template(t));
  validate(spec, parsed);

  SynthOutput out{.parts = {}, .lexicon = {}, .embedding_tokens = {},
                  .embeddings = EmbeddingTable(spec.embedding_dim), .noun_class_members = {}};
  const Rng root(spec.seed);

  for (Style style : {Style::X, Style::Y}) {
    Rng rng = root.derive(std::string("corpus-") + style_name(style));
    const auto& words = spec.style_words[index(style)];
    std::vector<Tokens> sents, gold;
    for (std::size_t i = 0; i < spec.sentences_per_style; ++i) {
      const auto& tpl = parsed[rng.below(parsed.size())];
      Tokens s, nouns;
      for (const auto& p : tpl) {
        switch (p.kind) {
          case Piece::Word: s.push_back(p.word); break;
          case Piece::StyleWord: s.push_back(words[rng.below(words.size())]); break;
          case Piece::Noun: {
            const auto& cls = spec.noun_classes[rng.below(spec.noun_classes.size())];
            s.push_back(cls[rng.below(cls.size())]);
            nouns.push_back(s.back());
            break;
          }
          case Piece::Choice: {
            const auto& opt = p.options[rng.below(p.options.size())];
            s.insert(s.end(), opt.begin(), opt.end());
            break;
          }
        }
      }
      sents.push_back(std::move(s));
      gold.push_back(std::move(nouns));
    }
    const auto sizes = split_sizes(sents.size());
    std::size_t off = 0;
    for (std::size_t sp = 0; sp < 3; ++sp) {
      auto& part = out.parts[index(style)][sp];
      part.corpus.style = style;
      part.corpus.split = static_cast<Split>(sp);
      part.corpus.sentences.assign(sents.begin() + off, sents.begin() + off + sizes[sp]);
      part.gold_nouns.assign(gold.begin() + off, gold.begin() + off + sizes[sp]);
      off += sizes[sp];
    }
  }

  // Embeddings: orthonormal class centroids and per-noun perturbations, all
  // other tokens orthogonal to that subspace.
  const std::size_t dim = spec.embedding_dim;
  std::size_t n_nouns = 0;
  for (const auto& cls : spec.noun_classes) n_nouns += cls.size();
  if (spec.noun_classes.size() + n_nouns > dim) {
    throw ContractError("embedding_dim too small for the requested noun classes");
  }
  Rng erng = root.derive("embeddings");
  std::vector<std::vector<double>> basis;
  while (basis.size() < spec.noun_classes.size() + n_nouns) {
    std::vector<double> v(dim);
    for (auto& x : v) x = erng.normal();
    project_out(v, basis);
    project_out(v, basis);
    normalize(v);
    basis.push_back(std::move(v));
  }
  std::vector<std::pair<std::string, std::vector<double>>> entries;
  std::size_t next = spec.noun_classes.size();
  for (std::size_t k = 0; k < spec.noun_classes.size(); ++k) {
    std::vector<std::size_t> members;
    for (const auto& noun : spec.noun_classes[k]) {
      std::vector<double> v(dim);
      for (std::size_t i = 0; i < dim; ++i)
        v[i] = basis[k][i] + spec.synonym_spread * basis[next][i];
      ++next;
      members.push_back(entries.size());
      entries.emplace_back(noun, std::move(v));
      out.lexicon.add_noun(noun);
    }
    out.noun_class_members.push_back(std::move(members));
  }
  std::set<std::string> seen;
  for (const auto& [tok, v] : entries) seen.insert(tok);
  auto add_other = [&](const std::string& tok) {
    if (!seen.insert(tok).second) return;
    std::vector<double> v(dim);
    for (auto& x : v) x = erng.normal();
    project_out(v, basis);
    project_out(v, basis);
    normalize(v);
    entries.emplace_back(tok, std::move(v));
  };
  for (const auto& ws : spec.style_words)
    for (const auto& w : ws) add_other(w);
  for (const auto& tpl : parsed)
    for (const auto& p : tpl) {
      if (p.kind == Piece::Word) add_other(p.word);
      if (p.kind == Piece::Choice)
        for (const auto& o : p.options)
          for (const auto& w : o) add_other(w);
    }
  for (auto& [tok, v] : entries) {
    // Keep exactly the values a reader of the written file would see.
    out.embeddings.insert(tok, parse_back(format_vector(v)));
    out.embedding_tokens.push_back(tok);
  }
  return out;
}

std::string corpus_file_name(Style s, Split sp) {
  static const char* names[] = {"train", "valid", "test"};
  return std::string(style_name(s)) + "." + names[static_cast<std::size_t>(sp)] + ".txt";
}

void write_synthetic(const SynthOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (Style s : {Style::X, Style::Y})
    for (Split sp : {Split::Train, Split::Valid, Split::Test})
      write_lines(dir / corpus_file_name(s, sp), out.get(s, sp).corpus.sentences);
  write_lexicon(dir / kLexiconFile, out.lexicon);
  std::ofstream emb(dir / kEmbeddingFile, std::ios::binary);
  if (!emb) throw IoError("cannot write " + (dir / kEmbeddingFile).string());
  for (const auto& tok : out.embedding_tokens) emb << tok << format_vector(*out.embeddings.find(tok)) << '\n';
  if (!emb) throw IoError("error while writing embeddings");
}

}  // namespace scp
