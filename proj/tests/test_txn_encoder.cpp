#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "relcat/errors.hpp"
#include "relcat/txn_encoder.hpp"

using namespace relcat;

namespace {

EncoderConfig small_config(std::size_t vocab_size) {
  return {.layers = 2, .hidden_dim = 16, .attention_heads = 2, .feedforward_dim = 32, .max_sequence_length = 32,
          .vocab_size = vocab_size};
}

const std::vector<std::pair<std::string, std::string>> kMerchants{
    {"EXXONMOBIL", "fuel"}, {"STARBUCKS", "coffee"}, {"UBER TRIP", "rides"}, {"AMAZON MKTPLACE", "supplies"}};

std::vector<TextPair> toy_pairs() {
  std::vector<TextPair> out;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> store(100, 999);
  for (int i = 0; i < 40; ++i)
    for (const auto& [merchant, name] : kMerchants) {
      TransactionRecord t = fixtures::txn("x", "c", std::nullopt, merchant + " " + std::to_string(store(rng)));
      out.push_back({format_transaction(t), name});
    }
  return out;
}

Vocab toy_vocab(std::span<const TextPair> pairs) {
  std::vector<std::string> corpus;
  for (const auto& p : pairs) {
    corpus.push_back(p.sentence);
    corpus.push_back(p.category_name);
  }
  return train_wordpiece(corpus, {.vocab_size = 400, .min_frequency = 1});
}

// Independent evaluation of the symmetric loss from its definition.
double loss_oracle(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.rows();
  std::vector<std::vector<double>> s(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s[i][j] = cosine(a.row(i), b.row(j));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += std::exp(s[i][j]);
      col += std::exp(s[j][i]);
    }
    total += -(s[i][i] - std::log(row)) - (s[i][i] - std::log(col));
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("sentence template") {
  CHECK(format_transaction(fixtures::txn("t", "c", std::nullopt, "UBER TRIP", "120.00")) ==
        "Transaction received $120.00 for: UBER TRIP");
  CHECK(format_transaction(fixtures::txn("t", "c", std::nullopt, "EXXON 123", "-45.50", "fuel")) ==
        "Transaction paid $45.50 for: EXXON 123 fuel");
  CHECK(format_transaction(fixtures::txn("t", "c", std::nullopt, "X", "0")) == "Transaction received $0.00 for: X");
  CHECK(format_transaction(fixtures::txn("t", "c", std::nullopt, "X", "-1234567.5")) ==
        "Transaction paid $1234567.50 for: X");
}

TEST_CASE("template is injective on its fields") {
  std::set<std::string> seen;
  for (const char* amount : {"1.00", "-1.00", "10.00"})
    for (const char* desc : {"A", "A B", "B"})
      for (const char* memo : {"", "m", "n"})
        CHECK(seen.insert(format_transaction(fixtures::txn("t", "c", std::nullopt, desc, amount, memo))).second);
}

TEST_CASE("configuration checks") {
  EncoderConfig c = small_config(10);
  CHECK_NOTHROW(c.validate());
  c.attention_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config(10);
  c.max_sequence_length = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("contrastive loss") {
  Matrix eye(2, 2);
  eye(0, 0) = eye(1, 1) = 1.0;
  CHECK(clip_loss(eye, eye) == doctest::Approx(2 * std::log(1 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(clip_loss(Matrix(1, 3, 1.0), Matrix(1, 3, 2.0)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(clip_loss(Matrix(1, 3), Matrix(1, 3, 1.0)), std::domain_error);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = fixtures::random_matrix(5, 4, rng), b = fixtures::random_matrix(5, 4, rng);
    const double l = clip_loss(a, b);
    CHECK(l == doctest::Approx(loss_oracle(a, b)).epsilon(1e-12));
    CHECK(l == doctest::Approx(clip_loss(b, a)).epsilon(1e-12));
    CHECK(l >= 0.0);
  }

  std::vector<Matrix> inputs{fixtures::random_matrix(4, 3, rng), fixtures::random_matrix(4, 3, rng)};
  CHECK(fixtures::gradient_check(inputs, [](ag::Tape&, std::vector<ag::Var>& v) { return clip_loss(v[0], v[1]); }) <
        1e-4);
}

TEST_CASE("encoding") {
  const auto pairs = toy_pairs();
  const Vocab vocab = toy_vocab(pairs);
  EncoderModel model(small_config(vocab.size()), 5);
  const std::vector<std::string> texts{pairs[0].sentence, pairs[1].sentence, "coffee", pairs[0].sentence};

  const Matrix all = encode(model, vocab, texts);
  REQUIRE(all.rows() == 4);
  CHECK(all.cols() == 16);
  CHECK(std::equal(all.row(0).begin(), all.row(0).end(), all.row(3).begin()));

  SUBCASE("padding invariance") {
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const Matrix one = encode(model, vocab, std::span(texts).subspan(i, 1));
      for (std::size_t j = 0; j < one.cols(); ++j) CHECK(std::abs(one(0, j) - all(i, j)) < 1e-5);
    }
  }
  SUBCASE("permutation equivariance") {
    const std::vector<std::string> reversed(texts.rbegin(), texts.rend());
    const Matrix r = encode(model, vocab, reversed);
    for (std::size_t i = 0; i < texts.size(); ++i)
      for (std::size_t j = 0; j < r.cols(); ++j) CHECK(std::abs(r(texts.size() - 1 - i, j) - all(i, j)) < 1e-9);
  }
  SUBCASE("chunking does not change results") {
    const Matrix chunked = encode(model, vocab, texts, 1);
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(std::abs(chunked.data()[i] - all.data()[i]) < 1e-9);
  }
  SUBCASE("long text is truncated, keeping the separator") {
    std::string long_text;
    for (int i = 0; i < 40; ++i) long_text += "coffee ";
    bool truncated = false;
    const auto ids = encode_ids(vocab, long_text, 32, &truncated);
    CHECK(truncated);
    CHECK(ids.size() == 32);
    CHECK(ids.back() == Vocab::kSep);
    CHECK(encode(model, vocab, std::vector<std::string>{long_text}).rows() == 1);
  }
}

TEST_CASE("pooling over one position returns that position") {
  std::mt19937_64 rng(1);
  ag::Tape t(false);
  const Matrix x = fixtures::random_matrix(4, 3, rng);
  const std::vector<int> lengths{1, 2};
  const Matrix p = ag::masked_mean_pool(t.constant(x), 2, 2, lengths).value();
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(p(0, j) == x(0, j));
    CHECK(p(1, j) == doctest::Approx((x(2, j) + x(3, j)) / 2));
  }
}

TEST_CASE("training") {
  const auto pairs = toy_pairs();
  const Vocab vocab = toy_vocab(pairs);
  const EncoderConfig config = small_config(vocab.size());

  SUBCASE("separable merchants are retrieved") {
    double last_loss = 0.0;
    EncoderModel model = train_encoder(pairs, vocab, config,
                                       {.steps = 200, .batch_size = 4, .learning_rate = 1e-3, .seed = 1},
                                       [&](const EncoderStepMetrics& m) { last_loss = m.loss; });
    std::vector<std::string> sentences, names;
    for (std::size_t i = 0; i < kMerchants.size(); ++i) {
      sentences.push_back(pairs[i].sentence);
      names.push_back(pairs[i].category_name);
    }
    CHECK(diagonal_argmax_accuracy(encode(model, vocab, sentences), encode(model, vocab, names)) > 0.9);

    EncoderModel again = train_encoder(pairs, vocab, config,
                                       {.steps = 200, .batch_size = 4, .learning_rate = 1e-3, .seed = 1});
    CHECK(encode(again, vocab, sentences) == encode(model, vocab, sentences));
    CHECK(std::isfinite(last_loss));

    std::vector<std::pair<std::string, std::string>> cats;
    for (std::size_t i = 0; i < kMerchants.size(); ++i) cats.emplace_back("cat-" + std::to_string(i), names[i]);
    const auto ranked = zero_shot_rank(model, vocab, fixtures::txn("t", "c", std::nullopt, "coffee", "0"), cats, 4);
    REQUIRE(ranked.size() == 4);
    CHECK(ranked[0].category_pk == "cat-1");
  }
  SUBCASE("zero steps return the initialization") {
    EncoderModel init(config, 4);
    EncoderModel trained = train_encoder(pairs, vocab, config, {.steps = 0, .seed = 4});
    const auto a = init.parameters(), b = trained.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
  }
  SUBCASE("one label is rejected") {
    std::vector<TextPair> one{{"a", "x"}, {"b", "x"}};
    CHECK_THROWS_AS(train_encoder(one, vocab, config, {}), std::invalid_argument);
  }
}

TEST_CASE("zero-shot ranking") {
  Matrix cats(3, 2);
  cats(0, 0) = 1;
  cats(1, 1) = 1;
  cats(2, 0) = 1;
  const std::vector<std::string> pks{"c", "b", "a"};
  const std::vector<double> target{1.0, 0.0};
  const auto r = zero_shot_rank(target, cats, pks, 5);
  REQUIRE(r.size() == 3);
  CHECK(r[0].category_pk == "a");
  CHECK(r[1].category_pk == "c");
  CHECK(r[2].category_pk == "b");
  CHECK(r[0].rank == 1);
  const auto single = zero_shot_rank(target, Matrix(1, 2, -1.0), std::vector<std::string>{"only"}, 3);
  REQUIRE(single.size() == 1);
  CHECK(single[0].category_pk == "only");
}
