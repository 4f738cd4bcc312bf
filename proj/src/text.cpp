#include "scp/text.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "scp/error.hpp"

namespace scp {

namespace {

const std::vector<std::string> kReserved{"<PAD>", "<BOS>", "<EOS>", "<UNK>"};

}  // namespace

const char* style_name(Style s) { return s == Style::X ? "x" : "y"; }

Style parse_style(const std::string& s) {
  if (s == "x" || s == "X") return Style::X;
  if (s == "y" || s == "Y") return Style::Y;
  throw ContractError("unknown style '" + s + "' (expected x or y)");
}

bool is_reserved_token(const std::string& token) {
  return std::find(kReserved.begin(), kReserved.end(), token) != kReserved.end();
}

Tokens tokenize(const std::string& line) {
  Tokens out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

Corpus load_corpus(const std::filesystem::path& path, Style style, Split split,
                   std::size_t max_tokens) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path.string());
  Corpus c;
  c.style = style;
  c.split = split;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize(line);
    if (toks.empty()) {
      ++c.skipped_blank;
    } else if (toks.size() > max_tokens) {
      ++c.dropped_overlong;
    } else {
      c.sentences.push_back(std::move(toks));
    }
  }
  if (in.bad()) throw IoError("error while reading " + path.string());
  if (c.sentences.empty()) {
    throw ContractError("corpus " + path.string() + " is empty after filtering (" +
                        std::to_string(c.dropped_overlong) + " overlong lines dropped)");
  }
  return c;
}

void write_lines(const std::filesystem::path& path, const std::vector<Tokens>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out << ' ';
      out << s[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("error while writing " + path.string());
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_ = kReserved;
  for (auto& t : tokens) {
    if (is_reserved_token(t)) continue;
    tokens_.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw ContractError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(std::span<const Corpus* const> corpora, std::size_t min_count) {
  if (corpora.empty()) throw ContractError("build_vocab needs at least one corpus");
  std::map<std::string, std::size_t> freq;
  for (const Corpus* c : corpora) {
    for (const auto& s : c->sentences)
      for (const auto& t : s)
        if (!is_reserved_token(t)) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : freq)
    if (n > min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> toks;
  toks.reserve(kept.size());
  for (auto& [tok, n] : kept) toks.push_back(tok);
  return Vocabulary(std::move(toks));
}

std::optional<std::size_t> Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(const std::string& token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

SentenceIds encode(const Tokens& sentence, const Vocabulary& vocab, std::size_t max_tokens) {
  if (sentence.size() > max_tokens) {
    throw ContractError("sentence of " + std::to_string(sentence.size()) +
                        " tokens exceeds the limit of " + std::to_string(max_tokens));
  }
  SentenceIds s;
  s.ids.assign(max_tokens + 2, kPad);
  s.ids[0] = kBos;
  for (std::size_t i = 0; i < sentence.size(); ++i) s.ids[i + 1] = vocab.id(sentence[i]);
  s.ids[sentence.size() + 1] = kEos;
  s.true_length = sentence.size() + 2;
  return s;
}

Tokens decode(const SentenceIds& s, const Vocabulary& vocab, DecodeStats* stats) {
  Tokens out;
  const std::size_t end = std::min(s.true_length, s.ids.size());
  for (std::size_t i = 0; i < end; ++i) {
    const std::size_t id = s.ids[i];
    if (id >= vocab.size()) {
      throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(vocab.size()));
    }
    if (id == kPad) {
      if (stats && i > 0 && i + 1 < end) ++stats->inner_pad;
      continue;
    }
    if (id == kBos || id == kEos) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

Tokens decode_generated(std::span<const std::size_t> ids, const Vocabulary& vocab) {
  Tokens out;
  for (std::size_t id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<SentenceIds> encode_all(const Corpus& c, const Vocabulary& vocab) {
  std::vector<SentenceIds> out;
  out.reserve(c.sentences.size());
  for (const auto& s : c.sentences) out.push_back(encode(s, vocab));
  return out;
}

}  // namespace scp
