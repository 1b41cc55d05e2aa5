#include <doctest.h>

#include <numeric>

#include "fixtures.hpp"
#include "helpers.hpp"
#include "stn/errors.hpp"
#include "stn/gradcheck.hpp"
#include "stn/transcribe.hpp"

using namespace stn;

namespace {

bool bit_identical(const ModelParams& a, const ModelParams& b, const std::string& group = "") {
  const auto va = a.views(), vb = b.views();
  if (va.size() != vb.size()) return false;
  for (std::size_t k = 0; k < va.size(); ++k) {
    if (!group.empty() && va[k].group != group) continue;
    if (va[k].size() != vb[k].size()) return false;
    if (std::memcmp(va[k].data, vb[k].data, sizeof(double) * static_cast<std::size_t>(va[k].size())) != 0)
      return false;
  }
  return true;
}

const ConstParamView& find_view(const std::vector<ConstParamView>& views, std::string_view group,
                                std::string_view name) {
  for (const auto& v : views)
    if (v.group == group && v.name == name) return v;
  throw std::runtime_error("no such array");
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.epochs = 3;
  c.patience = 0;
  return c;
}

}  // namespace

TEST_CASE("glorot limits and determinism") {
  CHECK(glorot_limit(64, 64) == doctest::Approx(std::sqrt(6.0 / 128.0)));
  CHECK(glorot_limit(64, 64) == doctest::Approx(0.2165).epsilon(1e-3));

  const ParameterStore a = test::fresh_store(Variant::Stnr, 9), b = test::fresh_store(Variant::Stnr, 9);
  CHECK(bit_identical(a.params, b.params));
  CHECK_FALSE(bit_identical(a.params, test::fresh_store(Variant::Stnr, 10).params));

  const auto views = a.params.views();
  // each gate block of the recurrent matrix is 64 x 64
  const auto& rec = find_view(views, "control", "path_gru.recurrent_weight");
  CHECK(rec.vec().cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 128.0));
  const auto& head = find_view(views, "head", "hidden.weight");
  CHECK(head.vec().cwiseAbs().maxCoeff() <= glorot_limit(kStateFeatureSize, kHeadHidden));

  const auto& big = find_view(views, "history", "gru.recurrent_weight");
  REQUIRE(big.size() >= 10000);
  const double limit = std::sqrt(6.0 / 128.0);
  const double se = limit / std::sqrt(3.0) / std::sqrt(static_cast<double>(big.size()));
  CHECK(std::abs(big.vec().mean()) < 3.0 * se);

  for (const auto& v : views) {
    CAPTURE(v.name);
    const bool unit = v.name.ends_with("scale") || v.name.ends_with("running_var");
    if (v.kind != ParamKind::Weight) CHECK((v.vec().array() == (unit ? 1.0 : 0.0)).all());
  }
}

TEST_CASE("every array belongs to exactly one known group") {
  for (Variant v : {Variant::Stnm, Variant::Stnr, Variant::NoSpotlight}) {
    const ModelParams m = ModelParams::create(v);
    std::set<std::string> seen;
    for (const auto& view : m.views()) {
      CHECK(std::find(kParamGroups.begin(), kParamGroups.end(), view.group) != kParamGroups.end());
      CHECK(seen.insert(std::string(view.group) + "/" + view.name).second);
    }
  }
}

TEST_CASE("adam step matches the update rule") {
  Vec p = (Vec(2) << 1.0, -2.0).finished(), m = Vec::Zero(2), v = Vec::Zero(2);
  const Vec g = (Vec(2) << 0.5, -0.25).finished();
  adam_apply(Eigen::Map<Vec>(p.data(), 2), Eigen::Map<const Vec>(g.data(), 2), Eigen::Map<Vec>(m.data(), 2),
             Eigen::Map<Vec>(v.data(), 2), 1, 0.1);
  // first step: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-14));
  CHECK(m[0] == doctest::Approx(0.05));
  CHECK(v[0] == doctest::Approx(0.001 * 0.25));
}

TEST_CASE("regularizer covers weights only") {
  ParameterStore store = test::fresh_store(Variant::Stnm, 3);
  const double base = l2_penalty(store.params);
  double manual = 0.0;
  for (const auto& v : store.params.views())
    if (v.kind == ParamKind::Weight) manual += v.vec().squaredNorm();
  CHECK(base == doctest::Approx(manual).epsilon(1e-14));
  for (auto& v : store.params.views())
    if (v.kind == ParamKind::Bias) v.vec().array() += 3.0;
  CHECK(l2_penalty(store.params) == base);

  ModelParams grad = store.params.zeros_like();
  add_l2_gradient(store.params, grad, 0.5);
  for (const auto& v : grad.views()) {
    if (v.kind != ParamKind::Weight) CHECK(v.vec().cwiseAbs().maxCoeff() == 0.0);
  }
  const auto gv = grad.views();
  const auto pv = store.params.views();
  CHECK((gv[0].vec() - pv[0].vec()).cwiseAbs().maxCoeff() < 1e-15);  // d(0.5 w^2)/dw
}

TEST_CASE("lambda changes only the additive penalty") {
  const Dataset data = dataset_generate(8, 21);
  std::vector<std::size_t> batch(8);
  std::iota(batch.begin(), batch.end(), 0);
  ParameterStore a = test::fresh_store(Variant::Stnr, 4), b = a;
  TrainConfig ca, cb;
  ca.l2 = 0.0;
  cb.l2 = 1e-5;
  const double weights = l2_penalty(a.params, {"value"});
  const BatchResult ra = train_batch(a, data, batch, ca, 0);
  const BatchResult rb = train_batch(b, data, batch, cb, 0);
  CHECK(ra.loss == rb.loss);
  CHECK(ra.penalty == 0.0);
  CHECK(rb.total() - ra.total() == doctest::Approx(1e-5 * weights).epsilon(1e-12));
  CHECK(ra.tokens == rb.tokens);
}

TEST_CASE("frozen groups are bit-identical after training") {
  const Dataset data = dataset_generate(20, 5);
  ParameterStore store = test::fresh_store(Variant::Stnr, 5);
  store.frozen = {"encoder", "history", "head", "control", "value"};
  TrainConfig c = quick_config(5);
  c.epochs = 1;
  c.batch_size = 4;
  const ParameterStore before = store;
  const TrainResult r = train_supervised(store, c, data);
  CHECK(bit_identical(r.store.params, before.params));

  ParameterStore partial = test::fresh_store(Variant::Stnr, 5);
  partial.frozen = {"encoder"};
  const TrainResult p = train_supervised(partial, c, data);
  CHECK(bit_identical(p.store.params, before.params, "encoder"));
  CHECK(bit_identical(p.store.params, before.params, "value"));
  CHECK_FALSE(bit_identical(p.store.params, before.params, "head"));
}

TEST_CASE("training loss decreases on a small memorizable set") {
  const Dataset data = dataset_generate(50, 2);
  TrainConfig c;
  c.seed = 2;
  c.epochs = 5;
  c.patience = 0;
  c.variant = Variant::Stnr;
  const TrainResult r = train_supervised(c, data);
  REQUIRE(r.metrics.size() == 5);
  CHECK(r.metrics[1].train_loss < r.metrics[0].train_loss);
  CHECK(r.metrics[2].train_loss < r.metrics[1].train_loss);
  for (const auto& m : r.metrics) {
    CHECK(std::isfinite(m.val_loss));
    CHECK(m.val_token_acc >= 0.0);
    CHECK(m.val_token_acc <= 1.0);
  }
  CHECK(r.best_epoch >= 1);
  CHECK(r.store.config.at("train_variant") == "stnr");
  CHECK(r.store.config.at("learning_rate") == "0.001");
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset data = dataset_generate(24, 8);
  const auto dir = test::scratch_dir("determinism");
  TrainConfig c = quick_config(8);
  c.epochs = 2;
  train_supervised(c, data, dir / "a.csv");
  train_supervised(c, data, dir / "b.csv");
  const std::string a = test::read_file(dir / "a.csv");
  CHECK(a == test::read_file(dir / "b.csv"));
  CHECK(a.rfind("epoch,train_loss,val_loss,val_token_acc\n", 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 3);

  c.workers = 3;
  const TrainResult threaded = train_supervised(c, data);
  c.workers = 1;
  const TrainResult serial = train_supervised(c, data);
  CHECK(threaded.metrics.back().train_loss == doctest::Approx(serial.metrics.back().train_loss).epsilon(1e-9));
}

TEST_CASE("non-finite losses abort with the batch index") {
  const Dataset data = dataset_generate(4, 1);
  ParameterStore store = test::fresh_store(Variant::Stnm, 1);
  store.params.decoder.head.output.bias[0] = std::nan("");
  std::vector<std::size_t> batch{0, 1};
  try {
    train_batch(store, data, batch, TrainConfig{}, 7);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(e.batch() == 7);
  }
}

TEST_CASE("checkpoints round trip exactly") {
  const auto dir = test::scratch_dir("checkpoint");
  const Dataset data = dataset_generate(6, 3);
  ParameterStore store = test::fresh_store(Variant::Stnm, 3);
  std::vector<std::size_t> batch{0, 1, 2};
  train_batch(store, data, batch, TrainConfig{}, 0);
  store.frozen = {"encoder"};
  store.config["seed"] = "3";
  save_checkpoint(store, dir / "model.ckpt");
  const std::string bytes = test::read_file(dir / "model.ckpt");
  CHECK(bytes.substr(0, 4) == "STN1");

  const ParameterStore back = load_checkpoint(dir / "model.ckpt");
  CHECK(back.params.variant == Variant::Stnm);
  CHECK(bit_identical(back.params, store.params));
  CHECK(bit_identical(back.adam_m, store.adam_m));
  CHECK(bit_identical(back.adam_v, store.adam_v));
  CHECK(back.adam_step == store.adam_step);
  CHECK(back.frozen == store.frozen);
  CHECK(back.config.at("seed") == "3");

  {
    std::ofstream f(dir / "bad.ckpt", std::ios::binary);
    f << "NOPE" << bytes.substr(4);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), Error);
  {
    std::ofstream f(dir / "short.ckpt", std::ios::binary);
    f << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST_CASE("train config key-values") {
  TrainConfig c;
  c.learning_rate = 0.002;
  c.batch_size = 8;
  c.variant = Variant::NoSpotlight;
  const TrainConfig back = TrainConfig::from_key_values(c.to_key_values());
  CHECK(back.learning_rate == 0.002);
  CHECK(back.batch_size == 8);
  CHECK(back.variant == Variant::NoSpotlight);
  CHECK_THROWS_AS(TrainConfig::from_key_values({{"learning_rat", "1"}}), Error);
  CHECK_THROWS_AS(TrainConfig::from_key_values({{"batch_size", "x"}}), Error);
  CHECK_THROWS_AS(TrainConfig::from_key_values({{"learning_rate", "-1"}}), Error);
}

TEST_CASE("validation split") {
  const Split s = split_validation(2000, 0.1, 3);
  CHECK(s.validation.size() == 200);
  CHECK(s.train.size() == 1800);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (std::size_t i : s.validation) CHECK(all.insert(i).second);
  CHECK(all.size() == 2000);
  const Split again = split_validation(2000, 0.1, 3);
  CHECK(again.validation == s.validation);
  const Split none = split_validation(10, 0.0, 3);
  CHECK(none.train.size() == 10);
  CHECK(none.validation.size() == 10);
}

TEST_CASE("edit distance and token accuracy") {
  const TokenSequence truth = tokenize("a b c d e f g h a b");
  TokenSequence one_sub = truth;
  one_sub[4] = Token::H;
  CHECK(edit_distance(truth, one_sub) == 1);
  CHECK(token_accuracy(one_sub, truth) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(token_accuracy({}, truth) == 0.0);
  CHECK(token_accuracy({}, {}) == 1.0);
  CHECK(edit_distance(tokenize("a b c"), tokenize("b c")) == 1);
  CHECK(edit_distance(tokenize("a b c"), tokenize("c b a")) == 2);
  CHECK(edit_distance(tokenize("frac { a }"), tokenize("")) == 4);
}

TEST_CASE("evaluate_accuracy on a model that only emits END") {
  const Dataset data = dataset_generate(5, 4);
  ModelParams m = test::fresh_store(Variant::Stnm, 2).params;
  m.decoder.head.output.bias[token_id(Token::End)] = 1e3;
  const Accuracy acc = evaluate_accuracy(m, data);
  CHECK(acc.token_accuracy == 0.0);
  CHECK(acc.sequence_accuracy == 0.0);
  CHECK(acc.mean_reward == -1.0);
  const std::vector<std::size_t> subset{1, 3};
  CHECK(evaluate_accuracy(m, data, subset).token_accuracy == 0.0);
}

TEST_CASE("a memorized pair is reproduced by greedy decoding") {
  const Dataset data{Sample{render(parse(tokenize("sup { a } { b }"))), tokenize("sup { a } { b }")}};
  TrainConfig c;
  c.seed = 1;
  c.epochs = 150;
  c.patience = 0;
  c.validation_fraction = 0.0;
  c.variant = Variant::Stnm;
  const TrainResult r = train_supervised(c, data);
  CHECK(r.metrics.back().train_loss < 0.05);
  CHECK(greedy_decode(r.store.params, data[0].image).body() == data[0].tokens);
  const Accuracy acc = evaluate_accuracy(r.store.params, data);
  CHECK(acc.token_accuracy == 1.0);
  CHECK(acc.sequence_accuracy == 1.0);
  CHECK(acc.mean_reward == 1.0);
}

TEST_CASE("gradient check harness flags a corrupted backward pass") {
  const ParameterStore store = test::fresh_store(Variant::Stnm, 1);
  const ToyInstance toy = make_toy_instance(1);
  LossFn loss = [&](const ModelParams& p) { return sequence_nll(p, toy.image, toy.targets); };
  GradientFn flipped = [&](const ModelParams& p, ModelParams& g) {
    const double l = sequence_nll_gradient(p, toy.image, toy.targets, g);
    for (auto& v : g.views()) v.vec() *= -1.0;
    return l;
  };
  GradCheckOptions o;
  o.skip_groups = {"value"};
  const GradCheckReport report = gradient_check(store.params, loss, flipped, o);
  CHECK_FALSE(report.passed);
  for (const auto& g : report.groups) CHECK(g.max_error == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(format_report(report).find("FAIL") != std::string::npos);

  CHECK(gradient_error(0.0, 0.0) == 0.0);
  CHECK(gradient_error(1e-9, -1e-9) == doctest::Approx(2e-9));
  CHECK(gradient_error(1.0, -1.0) == 2.0);
  CHECK(gradient_error(1.0, 1.0 + 1e-6) == doctest::Approx(1e-6 / (1.0 + 1e-6)));
}
