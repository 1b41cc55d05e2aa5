#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "helpers.hpp"
#include "stn/errors.hpp"
#include "stn/gradcheck.hpp"
#include "stn/transcribe.hpp"

using namespace stn;

TEST_CASE("history step with zero weights stays at zero") {
  const DecoderParams p = DecoderParams::create();
  CHECK(history_step(Vec::Zero(kHistorySize), Token::Start, p).cwiseAbs().maxCoeff() == 0.0);
  CHECK(history_step(Vec::Zero(kHistorySize), Token::C, p).cwiseAbs().maxCoeff() == 0.0);
  const ModelParams m = test::fresh_store(Variant::Stnr).params;
  const Vec h1 = history_step(Vec::Zero(kHistorySize), Token::B, m.decoder);
  CHECK((history_step(Vec::Zero(kHistorySize), Token::B, m.decoder) - h1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("output distribution") {
  const DecoderParams zero = DecoderParams::create();
  Rng rng(1);
  const Vec h = test::random_vec(rng, kHistorySize), sc = test::random_vec(rng, kFeatureDepth);
  const Vec p0 = output_distribution(h, sc, {3, 2, 1}, {16, 8}, zero);
  REQUIRE(p0.size() == kOutputSize);
  CHECK((p0.array() - 1.0 / kOutputSize).abs().maxCoeff() < 1e-15);

  DecoderParams d = test::fresh_store(Variant::Stnr).params.decoder;
  const Vec p1 = output_distribution(h, sc, {3, 2, 1}, {16, 8}, d);
  CHECK(std::abs(p1.sum() - 1.0) < 1e-6);
  CHECK((p1.array() >= 0.0).all());
  d.head.output.bias.array() += 17.0;
  CHECK((output_distribution(h, sc, {3, 2, 1}, {16, 8}, d) - p1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sentinel handling") {
  CHECK(with_end(tokenize("a b")) == TokenSequence{Token::A, Token::B, Token::End});
  CHECK_THROWS_AS(with_end(TokenSequence{Token::A, Token::End}), UnknownTokenError);
  CHECK_THROWS_AS(with_end(TokenSequence{Token::Start}), UnknownTokenError);
  const ModelParams m = test::fresh_store(Variant::Stnm).params;
  const Image img = render(parse(tokenize("a")));
  CHECK_THROWS_AS(sequence_nll(m, img, tokenize("a")), Error);
  CHECK_THROWS_AS(sequence_nll(m, Image(10, 10), with_end(tokenize("a"))), ShapeError);
}

TEST_CASE("fresh models are close to uniform") {
  const Dataset data = dataset_generate(100, 3);
  for (Variant v : {Variant::Stnm, Variant::Stnr, Variant::NoSpotlight}) {
    const ModelParams m = test::fresh_store(v, 5).params;
    double loss = 0.0, expected = 0.0;
    for (const auto& s : data) {
      const TokenSequence t = with_end(s.tokens);
      loss += sequence_nll(m, s.image, t);
      expected += static_cast<double>(t.size()) * std::log(static_cast<double>(kOutputSize));
    }
    CHECK(loss >= 0.8 * expected);
    CHECK(loss <= 1.2 * expected);
  }
}

TEST_CASE("sequence likelihood factorizes over steps") {
  const ModelParams m = test::fresh_store(Variant::Stnr, 2).params;
  const Sample s = dataset_generate(1, 9)[0];
  const TokenSequence t = with_end(s.tokens);
  const double nll = sequence_nll(m, s.image, t);
  CHECK(nll >= 0.0);

  Trace trace = begin_trace(m, s.image, false);
  const double stepwise = teacher_forced(m, trace, t);
  CHECK(stepwise == nll);
  REQUIRE(trace.steps.size() == t.size());
  double product = 1.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    CHECK(trace.steps[k].input == (k == 0 ? Token::Start : t[k - 1]));
    product *= trace.steps[k].probs[token_id(t[k])];
  }
  CHECK(std::exp(-nll) == doctest::Approx(product).epsilon(1e-10));
}

TEST_CASE("spotlight weights and handles stay valid along a decode") {
  const ModelParams m = test::fresh_store(Variant::Stnr, 3).params;
  const Image img = render(parse(tokenize("frac { a } { b }")));
  const DecodeResult r = greedy_decode(m, img);
  REQUIRE(r.handles.size() == r.tokens.size());
  REQUIRE(r.weights.size() == r.tokens.size());
  CHECK(r.tokens.size() <= static_cast<std::size_t>(kMaxSteps));
  for (std::size_t k = 0; k < r.tokens.size(); ++k) {
    CHECK(std::abs(r.weights[k].alpha.sum() - 1.0) < 1e-6);
    CHECK(is_valid(r.handles[k], {16, 8}));
  }
  const DecodeResult again = greedy_decode(m, img);
  CHECK(again.tokens == r.tokens);
}

TEST_CASE("greedy decoding stops at END or at the step limit") {
  ModelParams m = test::fresh_store(Variant::Stnm, 4).params;
  const Image img = render(parse(tokenize("c")));
  m.decoder.head.output.bias.setZero();
  m.decoder.head.output.bias[token_id(Token::End)] = 1e3;
  const DecodeResult ends = greedy_decode(m, img);
  CHECK(ends.tokens == TokenSequence{Token::End});
  CHECK(ends.body().empty());

  m.decoder.head.output.bias[token_id(Token::End)] = -1e3;
  m.decoder.head.output.bias[token_id(Token::D)] = 1e3;
  const DecodeResult runs = greedy_decode(m, img);
  CHECK(runs.tokens.size() == static_cast<std::size_t>(kMaxSteps));
  CHECK(runs.body().size() == static_cast<std::size_t>(kMaxSteps));
  for (Token t : runs.tokens) CHECK(t == Token::D);
}

TEST_CASE("greedy ties go to the lowest id") {
  ModelParams m = test::fresh_store(Variant::NoSpotlight, 4).params;
  m.decoder.head.output.weight.setZero();
  m.decoder.head.output.bias.setZero();
  const DecodeResult r = greedy_decode(m, render(parse(tokenize("c"))));
  CHECK(r.tokens.front() == Token::A);
}

TEST_CASE("sampled decoding") {
  const ModelParams m = test::fresh_store(Variant::Stnr, 6).params;
  const Image img = render(parse(tokenize("sqrt { g }")));
  Rng r1(42), r2(42), r3(43);
  const SampledEpisode a = sample_decode(m, img, r1), b = sample_decode(m, img, r2);
  CHECK(a.actions == b.actions);
  CHECK(a.log_probs == b.log_probs);
  REQUIRE(a.trace.steps.size() == a.actions.size());
  for (std::size_t k = 0; k < a.actions.size(); ++k)
    CHECK(std::abs(a.log_probs[k] - std::log(a.trace.steps[k].probs[token_id(a.actions[k])])) < 1e-12);
  CHECK(a.actions.size() <= static_cast<std::size_t>(kMaxSteps));
  bool any_different = false;
  for (int k = 0; k < 5 && !any_different; ++k) any_different = sample_decode(m, img, r3).actions != a.actions;
  CHECK(any_different);
}

TEST_CASE("sampling frequencies follow the distribution") {
  const ModelParams m = test::fresh_store(Variant::Stnr, 7).params;
  const Trace trace = [&] {
    Trace t = begin_trace(m, render(parse(tokenize("a b"))), false);
    DecoderState s = initial_state(m, t);
    decode_step(m, t, s, Token::Start);
    return t;
  }();
  const Vec& p = trace.steps[0].probs;
  constexpr int kSamples = 10000;
  std::vector<int> counts(kOutputSize, 0);
  Rng rng(8);
  for (int n = 0; n < kSamples; ++n) counts[static_cast<std::size_t>(sample_index(p, rng))]++;
  double chi2 = 0.0;
  for (int k = 0; k < kOutputSize; ++k) {
    const double expected = kSamples * p[k];
    const double se = std::sqrt(kSamples * p[k] * (1.0 - p[k]));
    CHECK(std::abs(counts[static_cast<std::size_t>(k)] - expected) <= 3.0 * se);
    chi2 += (counts[static_cast<std::size_t>(k)] - expected) * (counts[static_cast<std::size_t>(k)] - expected) / expected;
  }
  // 13 degrees of freedom; the 99.9% quantile is 34.5
  CHECK(chi2 < 34.5);
}

TEST_CASE("decode_step refuses a finished episode") {
  const ModelParams m = test::fresh_store(Variant::Stnm).params;
  Trace t = begin_trace(m, render(parse(tokenize("a"))), false);
  DecoderState s = initial_state(m, t);
  s.finished = true;
  CHECK_THROWS_AS(decode_step(m, t, s, Token::Start), StateError);
}

TEST_CASE("end-to-end gradients match finite differences on the toy instance") {
  for (Variant v : {Variant::Stnm, Variant::Stnr, Variant::NoSpotlight}) {
    CAPTURE(variant_name(v));
    for (std::uint64_t seed : {1, 2}) {
      const ParameterStore store = test::fresh_store(v, seed);
      const GradCheckReport report = gradient_check(store.params, make_toy_instance(seed));
      CHECK(report.passed);
      for (const auto& g : report.groups) {
        CAPTURE(g.group);
        CHECK(g.max_error < 1e-4);
        CHECK(g.coordinates == 50);
      }
      CHECK(report.groups.size() == (v == Variant::NoSpotlight ? 3u : 4u));
    }
  }
}

TEST_CASE("restricted backward scope leaves frozen groups untouched") {
  const ModelParams m = test::fresh_store(Variant::Stnr, 3).params;
  const ToyInstance toy = make_toy_instance(3);
  ModelParams full = m.zeros_like(), partial = m.zeros_like();
  const double a = sequence_nll_gradient(m, toy.image, toy.targets, full);
  const double b = sequence_nll_gradient(m, toy.image, toy.targets, partial, nullptr, {false, false});
  CHECK(a == b);
  const auto fv = full.views(), pv = partial.views();
  for (std::size_t k = 0; k < fv.size(); ++k) {
    CAPTURE(fv[k].name);
    if (pv[k].group == "encoder" || pv[k].group == "history") {
      CHECK(pv[k].vec().cwiseAbs().maxCoeff() == 0.0);
    } else {
      CHECK((pv[k].vec() - fv[k].vec()).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}
