#pragma once

// Deterministic two-style synthetic corpus with a noun lexicon and
// GloVe-format embeddings whose geometry is known by construction.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scp/lexical.hpp"
#include "scp/text.hpp"

namespace scp {

// Template slots: "{NOUN}", "{STYLE}", or "{a|b|c}" for a uniform choice
// (a choice may contain spaces to emit several tokens).
struct SynthSpec {
  std::vector<std::vector<std::string>> noun_classes;
  std::array<std::vector<std::string>, 2> style_words;  // indexed by Style
  std::vector<std::string> templates;
  std::size_t sentences_per_style = 2000;
  std::uint64_t seed = 1;
  std::size_t embedding_dim = kEmbeddingDim;
  // Perturbation size eps: synonyms get cosine 1 / (1 + eps^2).
  double synonym_spread = 0.35;
};

SynthSpec default_synth_spec();
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string synth_spec_json(const SynthSpec& spec);

struct SynthCorpus {
  Corpus corpus;
  std::vector<Tokens> gold_nouns;  // per sentence, in order
};

struct SynthOutput {
  // [style][split]
  std::array<std::array<SynthCorpus, 3>, 2> parts;
  TagLexicon lexicon;
  std::vector<std::string> embedding_tokens;  // file order
  EmbeddingTable embeddings;
  std::vector<std::vector<std::size_t>> noun_class_members;  // indices into embedding_tokens

  const SynthCorpus& get(Style s, Split sp) const {
    return parts[index(s)][static_cast<std::size_t>(sp)];
  }
};

// Per-style split sizes: valid = floor(n/10), test = floor(n/5), train gets the rest.
std::array<std::size_t, 3> split_sizes(std::size_t n);

SynthOutput generate_synthetic(const SynthSpec& spec);

// Writes {x,y}.{train,valid,test}.txt, lexicon.tsv and embeddings.txt.
void write_synthetic(const SynthOutput& out, const std::filesystem::path& dir);

std::string corpus_file_name(Style s, Split sp);
inline constexpr const char* kLexiconFile = "lexicon.tsv";
inline constexpr const char* kEmbeddingFile = "embeddings.txt";

}  // namespace scp
