#include "scp/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "scp/error.hpp"

namespace scp {

bool TagLexicon::is_noun(const std::string& token) const {
  if (is_reserved_token(token)) return false;
  if (nouns_.count(token)) return true;
  for (const auto& [suffix, noun] : suffixes_) {
    if (token.size() > suffix.size() &&
        token.compare(token.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return noun;
    }
  }
  return false;
}

TagLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read tag lexicon " + path.string());
  TagLexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path.string() + ": expected token<TAB>TAG at line " +
                        std::to_string(lineno));
    }
    if (line.substr(tab + 1) == "NOUN") lex.add_noun(line.substr(0, tab));
  }
  return lex;
}

void write_lexicon(const std::filesystem::path& path, const TagLexicon& lex) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& n : lex.nouns()) out << n << "\tNOUN\n";
}

std::map<std::size_t, Tokens> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read annotation file " + path.string());
  std::map<std::size_t, Tokens> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    try {
      std::size_t used = 0;
      const auto idx = std::stoull(line.substr(0, tab), &used);
      out[idx] = tab == std::string::npos ? Tokens{} : tokenize(line.substr(tab + 1));
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": bad sentence index at line " + std::to_string(lineno));
    }
  }
  return out;
}

NounSet tag_nouns(const Tokens& sentence, const TagLexicon& lex) {
  NounSet out;
  for (const auto& t : sentence)
    if (lex.is_noun(t)) out.nouns.push_back(t);
  return out;
}

bool EmbeddingTable::insert(const std::string& token, std::vector<double> v) {
  if (v.size() != dim_) {
    throw DimensionError("embedding for '" + token + "' has " + std::to_string(v.size()) +
                         " dims, expected " + std::to_string(dim_));
  }
  auto [it, fresh] = vectors_.insert_or_assign(token, std::move(v));
  if (!fresh) ++duplicates_;
  return fresh;
}

const std::vector<double>* EmbeddingTable::find(const std::string& token) const {
  auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embeddings " + path.string());
  EmbeddingTable table(dim);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string token;
    is >> token;
    std::vector<double> v;
    v.reserve(dim);
    std::string field;
    while (is >> field) {
      char* end = nullptr;
      const double x = std::strtod(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0' || !std::isfinite(x)) {
        throw FormatError(path.string() + ": bad number '" + field + "' at line " +
                          std::to_string(lineno));
      }
      v.push_back(x);
    }
    if (v.size() != dim) {
      throw FormatError("expected " + std::to_string(dim) + " dims at line " +
                        std::to_string(lineno) + " of " + path.string() + ", found " +
                        std::to_string(v.size()));
    }
    if (!table.insert(token, std::move(v))) {
      std::cerr << "warning: duplicate embedding for '" << token << "' at line " << lineno
                << ", keeping the last one\n";
    }
  }
  return table;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine: dimensions " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ContractError("cosine of a zero vector is undefined");
  // sqrt(na * nb) keeps cosine(a, a) exactly 1.
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

EmbeddedNouns embed_nouns(const NounSet& nouns, const EmbeddingTable& table) {
  EmbeddedNouns out;
  for (std::size_t i = 0; i < nouns.nouns.size(); ++i) {
    if (const auto* v = table.find(nouns.nouns[i])) {
      out.vectors.push_back(*v);
    } else {
      out.dropped.push_back(i);
    }
  }
  return out;
}

std::vector<double> centroid(const std::vector<std::vector<double>>& vectors, std::size_t dim) {
  std::vector<double> c(dim, 0.0);
  if (vectors.empty()) return c;
  for (const auto& v : vectors)
    for (std::size_t i = 0; i < dim; ++i) c[i] += v[i];
  for (auto& x : c) x /= static_cast<double>(vectors.size());
  return c;
}

}  // namespace scp
