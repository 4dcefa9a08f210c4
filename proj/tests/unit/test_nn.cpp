#include <doctest.h>

#include <random>

#include "core/error.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace fpp;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Matrix::NullaryExpr(r, c, [&]() { return u(rng); });
}

double unweighted_mean_ce(const Matrix& logits, const std::vector<FpTag>& gold) {
  double total = 0.0;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    double z = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(t, c));
    total += std::log(z) - logits(t, gold[static_cast<std::size_t>(t)].cls);
  }
  return total / static_cast<double>(logits.rows());
}

TaggerModel small_lookup_model(const AnnotatedCorpus& corpus, std::size_t d, std::size_t h, std::uint64_t seed) {
  return init_model(Hyper{d, h, corpus.vocabulary.class_count(), seed, SequenceUnit::Sentence},
                    TrainableLookup{TokenTable::from_corpus(corpus)});
}

}  // namespace

TEST_CASE("class weights") {
  const std::vector<std::size_t> a{90, 9, 1};
  const auto w = class_weights_from_counts(a).w;
  CHECK(w[0] == doctest::Approx(0.029703).epsilon(1e-5));
  CHECK(w[1] == doctest::Approx(0.297030).epsilon(1e-5));
  CHECK(w[2] == doctest::Approx(2.673267).epsilon(1e-5));
  CHECK((w[0] + w[1] + w[2]) / 3.0 == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<std::size_t> u{5, 5, 5};
  for (double x : class_weights_from_counts(u).w) CHECK(x == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<std::size_t> z{1, 0};
  const auto wz = class_weights_from_counts(z).w;
  CHECK(std::isfinite(wz[0]));
  CHECK(wz[1] == doctest::Approx(2.0).epsilon(1e-5));
  CHECK((wz[0] + wz[1]) / 2.0 == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<std::size_t> none{0, 0};
  CHECK_THROWS_AS(class_weights_from_counts(none), Error);
}

TEST_CASE("token table and lookup embedding") {
  const FpVocabulary v({"ee"});
  AnnotatedCorpus c{v, {}};
  c.speakers["s"].push_back(fixture::sentence(v, {{"b", "a", "b"}}, {nullptr, nullptr, nullptr, nullptr}));
  const auto table = TokenTable::from_corpus(c);
  CHECK(table.tokens() == std::vector<std::string>{"a", "b"});
  CHECK(table.row("a") == 2);
  CHECK(table.row("zzz") == TokenTable::kOovRow);

  const auto model = small_lookup_model(c, 4, 3, 1);
  const auto& s = c.sentences_of("s")[0];
  const auto e = embed(model, s, {"s", 0});
  CHECK(e.vectors.rows() == 4);
  CHECK(e.rows == std::vector<std::size_t>{3, 2, 3, TokenTable::kEndRow});
  CHECK(e.vectors.row(0) == e.vectors.row(2));

  Sentence two = fixture::sentence(v, {{"a", "b"}}, {nullptr, nullptr, nullptr});
  CHECK(embed(model, two, {"x", 0}).vectors.rows() == 3);
}

TEST_CASE("precomputed embeddings") {
  const FpVocabulary v({"ee"});
  const auto s = fixture::sentence(v, {{"a", "a"}}, {nullptr, nullptr, nullptr});
  auto vectors = std::make_shared<PrecomputedEmbeddings>(3);
  Eigen::MatrixXf m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  vectors->insert({"s", 0}, m);
  Eigen::MatrixXf m_end(3, 3);
  m_end << 1, 1, 1, 2, 2, 2, 3, 3, 3;
  vectors->insert({"s", 1}, m_end);

  const auto model = init_model(Hyper{3, 2, 2, 0, SequenceUnit::Sentence}, PrecomputedSource{vectors, ""});
  const auto e0 = embed(model, s, {"s", 0});
  CHECK(e0.rows.empty());
  CHECK(e0.vectors.row(0) != e0.vectors.row(1));  // same surface, different vectors
  CHECK(e0.vectors.row(2).isZero());
  const auto e1 = embed(model, s, {"s", 1});
  CHECK(e1.vectors(2, 0) == 3.0);
  CHECK_THROWS_AS(embed(model, s, {"s", 7}), Error);

  Eigen::MatrixXf wrong(2, 4);
  CHECK_THROWS_AS(vectors->insert({"t", 0}, wrong), Error);

  const auto dir = fixture::temp_dir("precomputed");
  vectors->save(dir / "vec.bin");
  CHECK(PrecomputedEmbeddings::load(dir / "vec.bin") == *vectors);
}

TEST_CASE("forward: zero parameters give zero logits") {
  const Hyper hyper{4, 3, 5, 0, SequenceUnit::Sentence};
  auto model = init_model(hyper, TrainableLookup{TokenTable({"a"})});
  model.params.for_each([](std::string_view, Matrix& m) { m.setZero(); });
  std::mt19937_64 rng(1);
  const auto logits = forward(model, random_matrix(rng, 6, 4));
  CHECK(logits.rows() == 6);
  CHECK(logits.cols() == 5);
  CHECK(logits.isZero());
  CHECK(forward(model, random_matrix(rng, 1, 4)).rows() == 1);
  CHECK_THROWS_AS(forward(model, random_matrix(rng, 2, 3)), Error);
}

TEST_CASE("forward matches the scalar LSTM reference") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = gradcheck::random_problem(seed, 4, 3, 3, 5, 6);
    const auto x = gradcheck::gather(p.params, p.rows);
    const auto logits = forward_trace(p.params, x).logits;
    std::vector<oracle::Vec> xs;
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      oracle::Vec row;
      for (Eigen::Index k = 0; k < x.cols(); ++k) row.push_back(x(t, k));
      xs.push_back(row);
    }
    const auto ref = oracle::reference_logits(p.params, xs);
    for (Eigen::Index t = 0; t < logits.rows(); ++t)
      for (Eigen::Index c = 0; c < logits.cols(); ++c)
        CHECK(std::abs(logits(t, c) - ref[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)]) <= 1e-12);
  }
}

TEST_CASE("weighted cross-entropy: hand examples") {
  Matrix one(1, 2);
  one << 0, 0;
  for (double w0 : {0.1, 1.0, 7.0}) {
    const ClassWeights w{{w0, 2.0}};
    CHECK(weighted_ce_loss(one, std::vector<FpTag>{FpTag{0}}, w).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  // p(gold) = 0.5 at slot 0 and 0.25 at slot 1.
  Matrix two(2, 4);
  two << 0, 0, -1e30, -1e30, 0, 0, 0, 0;
  const ClassWeights w{{2.0, 1.0, 1.0, 1.0}};
  const auto r = weighted_ce_loss(two, std::vector<FpTag>{FpTag{0}, FpTag{1}}, w);
  CHECK(r.loss == doctest::Approx((2 * std::log(2.0) + std::log(4.0)) / 3).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(0.924196).epsilon(1e-6));
}

TEST_CASE("weighted cross-entropy: unit weights and weight scaling") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index T = 1 + static_cast<Eigen::Index>(rng() % 8), C = 2 + static_cast<Eigen::Index>(rng() % 6);
    const Matrix logits = random_matrix(rng, T, C, 4.0);
    std::vector<FpTag> gold;
    for (Eigen::Index t = 0; t < T; ++t) gold.push_back(FpTag{static_cast<std::uint32_t>(rng() % static_cast<std::uint64_t>(C))});

    const auto uniform = weighted_ce_loss(logits, gold, ClassWeights::uniform(static_cast<std::size_t>(C)));
    CHECK(std::abs(uniform.loss - unweighted_mean_ce(logits, gold)) <= 1e-12);

    ClassWeights w;
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (Eigen::Index c = 0; c < C; ++c) w.w.push_back(u(rng));
    ClassWeights scaled = w;
    const double k = std::exp(std::uniform_real_distribution<double>(-5, 5)(rng));
    for (double& x : scaled.w) x *= k;
    const auto a = weighted_ce_loss(logits, gold, w);
    const auto b = weighted_ce_loss(logits, gold, scaled);
    CHECK(std::abs(a.loss - b.loss) <= 1e-12);
    CHECK((a.dlogits - b.dlogits).cwiseAbs().maxCoeff() <= 1e-12);

    const Matrix p = softmax_rows(logits);
    for (Eigen::Index t = 0; t < T; ++t) CHECK(std::abs(p.row(t).sum() - 1.0) <= 1e-9);
  }
}

TEST_CASE("backward: zero upstream gradient, untouched rows, finite differences") {
  const auto p = gradcheck::random_problem(3, 4, 3, 4, 6, 9);
  const auto x = gradcheck::gather(p.params, p.rows);
  const auto trace = forward_trace(p.params, x);

  auto zero = p.params.zeros_like();
  backward(p.params, trace, x, Matrix::Zero(6, 4), p.rows, zero);
  zero.for_each([](std::string_view, const Matrix& m) { CHECK(m.isZero()); });

  const auto grads = gradcheck::analytic(p);
  for (Eigen::Index r = 0; r < grads.embedding.rows(); ++r) {
    const bool touched = std::find(p.rows.begin(), p.rows.end(), static_cast<std::size_t>(r)) != p.rows.end();
    if (!touched) CHECK(grads.embedding.row(r).isZero());
  }

  for (std::uint64_t seed = 10; seed < 13; ++seed) {
    const auto report = gradcheck::check(gradcheck::random_problem(seed, 4, 3, 4, 6, 8));
    INFO("worst tensor " << report.worst_tensor << " rel " << report.worst_rel);
    CHECK(report.failures == 0);
    CHECK(report.checked > 200);
  }
}

TEST_CASE("clip_and_step") {
  Parameters p;
  p.out_b = Matrix::Zero(1, 1);
  for (Matrix* m : {&p.embedding, &p.fwd_w, &p.fwd_b, &p.bwd_w, &p.bwd_b, &p.out_w}) *m = Matrix::Zero(0, 0);

  SUBCASE("single scalar Adam step") {
    auto g = p.zeros_like();
    g.out_b(0, 0) = 0.1;
    auto state = AdamState::for_params(p);
    const auto info = clip_and_step(p, g, state, 1e-3, 0.5);
    CHECK_FALSE(info.clipped);
    CHECK(p.out_b(0, 0) == doctest::Approx(-1e-3 * 0.1 / (0.1 + 1e-8)).epsilon(1e-12));
    CHECK(p.out_b(0, 0) == doctest::Approx(-9.9999e-4).epsilon(1e-4));
  }
  SUBCASE("norm above the limit is scaled down") {
    Parameters q = p;
    q.out_w = Matrix::Zero(2, 2);
    auto g = q.zeros_like();
    g.out_w << 0.6, 0.0, 0.0, 0.8;  // norm 1.0
    auto state = AdamState::for_params(q);
    const auto info = clip_and_step(q, g, state, 1e-3, 0.5);
    CHECK(info.clipped);
    CHECK(info.grad_norm == doctest::Approx(1.0));
    CHECK(g.out_w(0, 0) == doctest::Approx(0.3));
    CHECK(g.out_w(1, 1) == doctest::Approx(0.4));
  }
  SUBCASE("norm below the limit is untouched") {
    auto g = p.zeros_like();
    g.out_b(0, 0) = 0.3;
    auto state = AdamState::for_params(p);
    CHECK_FALSE(clip_and_step(p, g, state, 1e-3, 0.5).clipped);
    CHECK(g.out_b(0, 0) == 0.3);
  }
  SUBCASE("non-finite gradient") {
    auto g = p.zeros_like();
    g.out_b(0, 0) = std::nan("");
    auto state = AdamState::for_params(p);
    CHECK_THROWS_AS(clip_and_step(p, g, state, 1e-3, 0.5), Error);
  }
}

TEST_CASE("argmax, shift invariance and hand-set output layer") {
  Matrix logits(3, 3);
  logits << 1, 1, 0, 0, 2, 2, -1, 0, 5;
  CHECK(argmax_tags(logits) == std::vector<FpTag>{FpTag{0}, FpTag{1}, FpTag{2}});

  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    Matrix z = random_matrix(rng, 5, 4);
    const auto before = argmax_tags(z);
    for (Eigen::Index t = 0; t < z.rows(); ++t) z.row(t).array() += std::uniform_real_distribution<double>(-3, 3)(rng);
    CHECK(argmax_tags(z) == before);
  }

  const auto v = FpVocabulary::standard();
  AnnotatedCorpus c{v, {}};
  c.speakers["s"].push_back(fixture::sentence(v, {{"x", "y", "z"}}, {nullptr, nullptr, nullptr, nullptr}));
  auto model = small_lookup_model(c, 4, 3, 0);
  model.params.for_each([](std::string_view, Matrix& m) { m.setZero(); });
  model.params.out_b(0, 0) = 1.0;
  // The "y" row drives the forward cell; its hidden state selects class 2 ("e").
  auto& p = model.params;
  const auto y_row = static_cast<Eigen::Index>(std::get<TrainableLookup>(model.embedding).table.row("y"));
  p.embedding(y_row, 0) = 5.0;
  for (Eigen::Index k = 0; k < 3; ++k) {
    p.fwd_w(0 * 3 + k, 0) = 5.0;  // input gate
    p.fwd_w(2 * 3 + k, 0) = 5.0;  // candidate
    p.fwd_w(3 * 3 + k, 0) = 5.0;  // output gate
    p.fwd_b(1 * 3 + k, 0) = -10.0;  // forget everything
    p.fwd_b(3 * 3 + k, 0) = -5.0;   // output closed unless driven
    p.out_w(k, 2) = 2.0;
  }
  const auto tags = predict_tags(model, c.sentences_of("s")[0], {"s", 0});
  CHECK(tags == std::vector<FpTag>{FpTag::none(), *v.find("e"), FpTag::none(), FpTag::none()});
}

TEST_CASE("sequence ranges") {
  const FpVocabulary v({"ee"});
  const auto s = fixture::sentence(v, {{"a", "b"}, {"c"}, {"d", "e"}}, {nullptr, nullptr, nullptr, nullptr, nullptr, nullptr});
  const auto whole = sequence_ranges(s, SequenceUnit::Sentence);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].end == 6);
  const auto groups = sequence_ranges(s, SequenceUnit::BreathGroup);
  REQUIRE(groups.size() == 3);
  CHECK((groups[0].begin == 0 && groups[0].end == 2));
  CHECK((groups[1].begin == 2 && groups[1].end == 3));
  CHECK((groups[2].begin == 3 && groups[2].end == 6));
  CHECK(parse_sequence_unit("breath_group") == SequenceUnit::BreathGroup);
  CHECK_THROWS_AS(parse_sequence_unit("word"), Error);
}

TEST_CASE("init is seeded and float-representable") {
  const Hyper h{8, 5, 4, 123, SequenceUnit::Sentence};
  const auto a = init_model(h, TrainableLookup{TokenTable({"a", "b"})});
  const auto b = init_model(h, TrainableLookup{TokenTable({"a", "b"})});
  CHECK(a.params == b.params);
  auto c = a.params;
  round_to_float(c);
  CHECK(c == a.params);
  CHECK(a.params.fwd_b.block(5, 0, 5, 1).isOnes());  // forget-gate bias
  const double bound = std::sqrt(1.0 / 13.0);
  CHECK(a.params.fwd_w.cwiseAbs().maxCoeff() <= bound);
}
