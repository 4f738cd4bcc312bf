#pragma once

// Corpora, vocabulary and fixed-length sentence encoding.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace scp {

using Tokens = std::vector<std::string>;

enum class Style { X = 0, Y = 1 };
enum class Split { Train, Valid, Test };

inline Style other(Style s) { return s == Style::X ? Style::Y : Style::X; }
inline std::size_t index(Style s) { return static_cast<std::size_t>(s); }
const char* style_name(Style s);
Style parse_style(const std::string& s);

inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kUnk = 3;
inline constexpr std::size_t kMaxContentTokens = 15;
// BOS + 15 content tokens + EOS
inline constexpr std::size_t kEncodedLength = kMaxContentTokens + 2;

bool is_reserved_token(const std::string& token);

struct Corpus {
  Style style = Style::X;
  Split split = Split::Train;
  std::vector<Tokens> sentences;
  std::size_t dropped_overlong = 0;
  std::size_t skipped_blank = 0;
};

Tokens tokenize(const std::string& line);

// Reads one whitespace-tokenized sentence per line; lines longer than
// `max_tokens` are dropped and counted.
Corpus load_corpus(const std::filesystem::path& path, Style style, Split split = Split::Train,
                   std::size_t max_tokens = kMaxContentTokens);

void write_lines(const std::filesystem::path& path, const std::vector<Tokens>& sentences);

class Vocabulary {
 public:
  // Reserved tokens only.
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  // Keeps tokens whose training frequency is strictly greater than min_count.
  // Ids follow descending frequency, ties broken lexicographically.
  static Vocabulary build(std::span<const Corpus* const> corpora, std::size_t min_count = 5);

  std::size_t size() const { return tokens_.size(); }
  std::optional<std::size_t> find(const std::string& token) const;
  // UNK for unknown tokens.
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct SentenceIds {
  std::vector<std::size_t> ids;  // kEncodedLength entries
  std::size_t true_length = 0;   // BOS..EOS inclusive
};

SentenceIds encode(const Tokens& sentence, const Vocabulary& vocab,
                   std::size_t max_tokens = kMaxContentTokens);

struct DecodeStats {
  std::size_t inner_pad = 0;
};

// Strips BOS/EOS/PAD and maps ids back to tokens.
Tokens decode(const SentenceIds& s, const Vocabulary& vocab, DecodeStats* stats = nullptr);
// Decodes a generated id stream, stopping at the first EOS.
Tokens decode_generated(std::span<const std::size_t> ids, const Vocabulary& vocab);

std::vector<SentenceIds> encode_all(const Corpus& c, const Vocabulary& vocab);

}  // namespace scp
