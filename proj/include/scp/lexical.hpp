#pragma once

// Noun tagging and the pretrained embedding store.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "scp/text.hpp"

namespace scp {

inline constexpr std::size_t kEmbeddingDim = 100;

// Lexicon-first noun tagger; suffix rules only apply to tokens absent from the lexicon.
class TagLexicon {
 public:
  TagLexicon() = default;
  explicit TagLexicon(std::set<std::string> nouns) : nouns_(std::move(nouns)) {}

  void add_noun(const std::string& token) { nouns_.insert(token); }
  void add_suffix_rule(std::string suffix, bool noun) {
    suffixes_.emplace_back(std::move(suffix), noun);
  }
  bool is_noun(const std::string& token) const;
  const std::set<std::string>& nouns() const { return nouns_; }

 private:
  std::set<std::string> nouns_;
  std::vector<std::pair<std::string, bool>> suffixes_;
};

// "token<TAB>NOUN" per line.
TagLexicon load_lexicon(const std::filesystem::path& path);
void write_lexicon(const std::filesystem::path& path, const TagLexicon& lex);

// "sentence-index<TAB>space-separated noun tokens" per line.
std::map<std::size_t, Tokens> load_annotations(const std::filesystem::path& path);

// Noun tokens in sentence order, duplicates kept.
struct NounSet {
  Tokens nouns;
  std::size_t count() const { return nouns.size(); }
};

NounSet tag_nouns(const Tokens& sentence, const TagLexicon& lex);

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = kEmbeddingDim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  // Returns false when an existing entry was replaced.
  bool insert(const std::string& token, std::vector<double> v);
  const std::vector<double>* find(const std::string& token) const;
  std::size_t duplicate_warnings() const { return duplicates_; }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
  std::size_t duplicates_ = 0;
};

// GloVe text format; malformed lines raise FormatError with the line number.
// Duplicate tokens keep the last occurrence and bump duplicate_warnings().
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::size_t dim = kEmbeddingDim);

double cosine(std::span<const double> a, std::span<const double> b);

struct EmbeddedNouns {
  std::vector<std::vector<double>> vectors;
  std::vector<std::size_t> dropped;  // indices into the NounSet
};

EmbeddedNouns embed_nouns(const NounSet& nouns, const EmbeddingTable& table);

// Arithmetic mean; the zero vector for an empty list.
std::vector<double> centroid(const std::vector<std::vector<double>>& vectors, std::size_t dim);

}  // namespace scp
