#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace relcat {

inline constexpr std::string_view kContinuationPrefix = "##";

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr std::size_t kNumSpecials = 4;

  Vocab() = default;
  // Throws std::invalid_argument unless the list starts with the four specials
  // and contains no duplicates.
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  // -1 when absent.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const { return id(token) >= 0; }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct WordPieceOptions {
  std::size_t vocab_size = 8192;
  std::size_t min_frequency = 2;
  std::size_t max_word_chars = 64;
};

// Lowercases ASCII, splits on whitespace and isolates ASCII punctuation as
// one-character words. Digits and non-ASCII bytes are kept.
std::vector<std::string> normalize(std::string_view text);

// Splits a word into UTF-8 code points.
std::vector<std::string> code_points(std::string_view word);

// Word-initial characters plus "##"-prefixed continuation characters seen in
// the normalized corpus, sorted.
std::vector<std::string> alphabet(std::span<const std::string> corpus);

// Merges the pair maximizing count(ab) / (count(a) * count(b)); ties go to the
// more frequent pair, then to the lexicographically smaller (a, b).
// Throws std::invalid_argument for an empty corpus or a vocab_size that cannot
// hold the specials and the alphabet.
Vocab train_wordpiece(std::span<const std::string> corpus, const WordPieceOptions& options = {});

// Greedy longest-match-first pieces of one normalized word. A character with
// no matching piece becomes [UNK] and matching resumes after it.
std::vector<int> wordpiece(const Vocab& vocab, std::string_view word, std::size_t max_word_chars = 64);

// [CLS] pieces... [SEP]
std::vector<int> tokenize(const Vocab& vocab, std::string_view text, std::size_t max_word_chars = 64);

// Joins pieces back into space-separated words, dropping specials.
std::string detokenize(const Vocab& vocab, std::span<const int> ids);

// Mean count of non-special tokens per line. Throws on an empty corpus.
double mean_tokens_per_line(const Vocab& vocab, std::span<const std::string> corpus);

void save_vocab(const Vocab& vocab, const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

}  // namespace relcat
