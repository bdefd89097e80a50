#include "relcat/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include "relcat/errors.hpp"

namespace relcat {

namespace {

const std::vector<std::string> kSpecials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

bool is_continuation(std::string_view token) { return token.starts_with(kContinuationPrefix); }

std::string strip_prefix(std::string_view token) {
  return std::string(is_continuation(token) ? token.substr(kContinuationPrefix.size()) : token);
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumSpecials || !std::equal(kSpecials.begin(), kSpecials.end(), tokens_.begin()))
    throw std::invalid_argument("vocab must start with [PAD] [UNK] [CLS] [SEP]");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i] == kContinuationPrefix)
      throw std::invalid_argument("vocab contains an empty token at line " + std::to_string(i + 1));
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("duplicate vocab token '" + tokens_[i] + "'");
  }
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      words.emplace_back(1, ch);
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return words;
}

std::vector<std::string> code_points(std::string_view word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    const std::size_t n = std::min(utf8_length(static_cast<unsigned char>(word[i])), word.size() - i);
    out.emplace_back(word.substr(i, n));
    i += n;
  }
  return out;
}

std::vector<std::string> alphabet(std::span<const std::string> corpus) {
  std::set<std::string> chars;
  for (const auto& line : corpus)
    for (const auto& word : normalize(line)) {
      const auto cps = code_points(word);
      for (std::size_t i = 0; i < cps.size(); ++i)
        chars.insert(i == 0 ? cps[i] : std::string(kContinuationPrefix) + cps[i]);
    }
  return {chars.begin(), chars.end()};
}

Vocab train_wordpiece(std::span<const std::string> corpus, const WordPieceOptions& options) {
  if (corpus.empty()) throw std::invalid_argument("train_wordpiece: empty corpus");
  if (options.min_frequency < 1) throw std::invalid_argument("train_wordpiece: min_frequency must be >= 1");

  std::map<std::string, long> word_counts;
  for (const auto& line : corpus)
    for (auto& word : normalize(line)) ++word_counts[word];
  if (word_counts.empty()) throw std::invalid_argument("train_wordpiece: corpus has no words");

  std::vector<std::string> tokens(kSpecials);
  std::unordered_map<std::string, int> token_id;
  for (std::size_t i = 0; i < tokens.size(); ++i) token_id[tokens[i]] = static_cast<int>(i);
  auto intern = [&](const std::string& t) {
    auto [it, inserted] = token_id.emplace(t, static_cast<int>(tokens.size()));
    if (inserted) tokens.push_back(t);
    return it->second;
  };

  const std::vector<std::string> chars = alphabet(corpus);
  if (options.vocab_size < kSpecials.size() + chars.size())
    throw std::invalid_argument("train_wordpiece: vocab_size " + std::to_string(options.vocab_size) +
                                " cannot hold 4 specials and " + std::to_string(chars.size()) +
                                " alphabet symbols");
  for (const auto& c : chars) intern(c);

  struct Word {
    std::vector<int> symbols;
    long count;
  };
  std::vector<Word> words;
  words.reserve(word_counts.size());
  for (const auto& [w, n] : word_counts) {
    if (code_points(w).size() > options.max_word_chars) continue;
    Word word{{}, n};
    const auto cps = code_points(w);
    for (std::size_t i = 0; i < cps.size(); ++i)
      word.symbols.push_back(token_id.at(i == 0 ? cps[i] : std::string(kContinuationPrefix) + cps[i]));
    words.push_back(std::move(word));
  }

  using Pair = std::pair<int, int>;
  struct PairHash {
    std::size_t operator()(const Pair& p) const {
      return std::hash<long long>()((static_cast<long long>(p.first) << 32) ^ static_cast<unsigned>(p.second));
    }
  };
  std::unordered_map<Pair, long, PairHash> pair_counts;
  std::unordered_map<Pair, std::set<std::size_t>, PairHash> pair_words;
  std::vector<long> symbol_counts(tokens.size(), 0);

  auto account = [&](std::size_t wi, long sign) {
    const Word& w = words[wi];
    for (std::size_t i = 0; i < w.symbols.size(); ++i) {
      symbol_counts[static_cast<std::size_t>(w.symbols[i])] += sign * w.count;
      if (i + 1 < w.symbols.size()) {
        Pair p{w.symbols[i], w.symbols[i + 1]};
        long& c = pair_counts[p];
        c += sign * w.count;
        if (sign > 0) {
          pair_words[p].insert(wi);
        } else if (c == 0) {
          pair_counts.erase(p);
        }
      }
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) account(wi, +1);

  while (tokens.size() < options.vocab_size) {
    const Pair* best = nullptr;
    double best_score = -1.0;
    long best_count = 0;
    for (const auto& [p, c] : pair_counts) {
      if (c < static_cast<long>(options.min_frequency)) continue;
      const double score = static_cast<double>(c) /
                           (static_cast<double>(symbol_counts[static_cast<std::size_t>(p.first)]) *
                            static_cast<double>(symbol_counts[static_cast<std::size_t>(p.second)]));
      bool better = best == nullptr || score > best_score || (score == best_score && c > best_count);
      if (!better && score == best_score && c == best_count)
        better = std::tie(tokens[static_cast<std::size_t>(p.first)], tokens[static_cast<std::size_t>(p.second)]) <
                 std::tie(tokens[static_cast<std::size_t>(best->first)], tokens[static_cast<std::size_t>(best->second)]);
      if (better) {
        best = &p;
        best_score = score;
        best_count = c;
      }
    }
    if (best == nullptr) break;

    const Pair merge = *best;
    const std::string merged = tokens[static_cast<std::size_t>(merge.first)] +
                               strip_prefix(tokens[static_cast<std::size_t>(merge.second)]);
    const int merged_id = intern(merged);
    if (symbol_counts.size() < tokens.size()) symbol_counts.resize(tokens.size(), 0);

    const std::set<std::size_t> affected = std::move(pair_words[merge]);
    pair_words.erase(merge);
    for (std::size_t wi : affected) {
      Word& w = words[wi];
      account(wi, -1);
      std::vector<int> next;
      next.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == merge.first && w.symbols[i + 1] == merge.second) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(w.symbols[i]);
        }
      }
      w.symbols = std::move(next);
      account(wi, +1);
    }
    pair_counts.erase(merge);
  }
  return Vocab(std::move(tokens));
}

std::vector<int> wordpiece(const Vocab& vocab, std::string_view word, std::size_t max_word_chars) {
  const auto cps = code_points(word);
  if (cps.size() > max_word_chars) return {Vocab::kUnk};
  std::vector<int> out;
  std::size_t start = 0;
  std::string candidate;
  while (start < cps.size()) {
    int match = -1;
    std::size_t end = cps.size();
    for (; end > start; --end) {
      candidate.assign(start > 0 ? kContinuationPrefix : std::string_view{});
      for (std::size_t i = start; i < end; ++i) candidate += cps[i];
      match = vocab.id(candidate);
      if (match >= 0) break;
    }
    if (match < 0) {
      out.push_back(Vocab::kUnk);
      ++start;
    } else {
      out.push_back(match);
      start = end;
    }
  }
  return out;
}

std::vector<int> tokenize(const Vocab& vocab, std::string_view text, std::size_t max_word_chars) {
  std::vector<int> ids{Vocab::kCls};
  for (const auto& word : normalize(text)) {
    const auto pieces = wordpiece(vocab, word, max_word_chars);
    ids.insert(ids.end(), pieces.begin(), pieces.end());
  }
  ids.push_back(Vocab::kSep);
  return ids;
}

std::string detokenize(const Vocab& vocab, std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id == Vocab::kPad || id == Vocab::kCls || id == Vocab::kSep) continue;
    const std::string& t = vocab.token(id);
    if (is_continuation(t)) {
      out += t.substr(kContinuationPrefix.size());
    } else {
      if (!out.empty()) out += ' ';
      out += t;
    }
  }
  return out;
}

double mean_tokens_per_line(const Vocab& vocab, std::span<const std::string> corpus) {
  if (corpus.empty()) throw std::invalid_argument("mean_tokens_per_line: empty corpus");
  std::size_t total = 0;
  for (const auto& line : corpus) total += tokenize(vocab, line).size() - 2;
  return static_cast<double>(total) / static_cast<double>(corpus.size());
}

void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write vocab file " + path.string());
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read vocab file " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

}  // namespace relcat
