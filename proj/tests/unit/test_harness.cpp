// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "core/error.hpp"
#include "data/synth.hpp"
#include "harness/bench.hpp"
#include "harness/optim.hpp"
#include "harness/report.hpp"
#include "harness/trainer.hpp"
#include "support/testing.hpp"

using namespace phonebench;

namespace {

ArchConfig small(Arch arch, std::size_t width = 8) {
  ArchConfig c;
  c.arch = arch;
  c.depth = 2;
  c.width = width;
  c.heads = 2;
  c.kernel = 3;
  c.range = AttentionRange::frames(2);
  c.subsample_channels = 4;
  c.se_reduction = 4;
  return c;
}

FrameCorpus tiny_corpus(std::size_t n, std::uint64_t seed, double fraction = 0.0) {
  SynthSpec s;
  s.n_utts = n;
  s.t_min = 60;
  s.t_max = 80;
  s.cue_distance = 24;
  s.long_range_fraction = fraction;
  s.seed = seed;
  return synth_corpus(s);
}

std::vector<std::vector<double>> snapshot(const Model& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

NamedParameter param(std::vector<double> values) {
  const std::size_t n = values.size();
  return {"w", Tensor::parameter({n}, std::move(values))};
}

void set_grad(NamedParameter& p, std::vector<double> g) { p.tensor.node()->grad = std::move(g); }

}  // namespace

TEST(AdamW, ZeroGradZeroDecayIsNoop) {
  std::vector<NamedParameter> ps{param({1.0, -2.0, 3.0})};
  set_grad(ps[0], {0, 0, 0});
  AdamWState st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(ps, st, 0.1, cfg);
  EXPECT_EQ(std::vector<double>(ps[0].tensor.values().begin(), ps[0].tensor.values().end()),
            (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(AdamW, FirstStepClosedForm) {
  std::vector<NamedParameter> ps{param({0.5, -0.25})};
  set_grad(ps[0], {0.3, -2.0});
  AdamWState st;
  AdamWConfig cfg;
  const double lr = 0.01;
  adamw_step(ps, st, lr, cfg);
  // t = 1: m_hat = g, v_hat = g^2, so the Adam step is g / (|g| + eps).
  const double w0 = 0.5 * (1 - lr * cfg.weight_decay) - lr * 0.3 / (0.3 + 1e-8);
  const double w1 = -0.25 * (1 - lr * cfg.weight_decay) - lr * -2.0 / (2.0 + 1e-8);
  EXPECT_NEAR(ps[0].tensor[0], w0, 1e-15);
  EXPECT_NEAR(ps[0].tensor[1], w1, 1e-15);
}

TEST(AdamW, DecayAloneIsGeometric) {
  std::vector<NamedParameter> ps{param({2.0})};
  AdamWState st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  for (int i = 0; i < 5; ++i) {
    set_grad(ps[0], {0.0});
    adamw_step(ps, st, 0.5, cfg);
  }
  EXPECT_NEAR(ps[0].tensor[0], 2.0 * std::pow(1 - 0.05, 5), 1e-15);
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
  std::vector<NamedParameter> ps{param({1.0})};
  ps[0].name = "encoder.3.ff.up.weight";
  set_grad(ps[0], {std::nan("")});
  AdamWState st;
  try {
    adamw_step(ps, st, 0.1, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Numeric);
    EXPECT_NE(std::string(e.what()).find("encoder.3.ff.up.weight"), std::string::npos);
  }
}

TEST(Schedule, WarmupThenCosine) {
  const double peak = 1e-3;
  EXPECT_DOUBLE_EQ(learning_rate(0, 100, 5, peak), peak / 5);
  EXPECT_DOUBLE_EQ(learning_rate(4, 100, 5, peak), peak);
  EXPECT_DOUBLE_EQ(learning_rate(5, 100, 5, peak), peak);
  EXPECT_NEAR(learning_rate(52, 100, 5, peak), peak * 0.5 * (1 + std::cos(M_PI * 47.0 / 95.0)), 1e-18);
  double prev = peak;
  for (std::size_t t = 5; t < 100; ++t) {
    const double lr = learning_rate(t, 100, 5, peak);
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, 0.0);
    prev = lr;
  }
  EXPECT_LT(learning_rate(99, 100, 5, peak), peak * 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate(0, 10, 0, peak), peak);
}

TEST(Clip, GlobalNorm) {
  std::vector<NamedParameter> ps{param({0, 0}), param({0})};
  set_grad(ps[0], {3.0, 0.0});
  set_grad(ps[1], {4.0});
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(ps[0].tensor.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(ps[1].tensor.grad()[0], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 10.0), 1.0);
  EXPECT_NEAR(ps[1].tensor.grad()[0], 0.8, 1e-15);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  auto m = build_model(small(Arch::Conformer), 1);
  const auto before = snapshot(*m);
  TrainConfig cfg;
  cfg.iterations = 3;
  cfg.batch_size = 2;
  cfg.max_lr = 0.0;
  train(*m, tiny_corpus(4, 1), cfg);
  EXPECT_EQ(snapshot(*m), before);
}

TEST(Train, SameSeedSameCurveAndBits) {
  const auto corpus = tiny_corpus(6, 2, 0.2);
  TrainConfig cfg;
  cfg.iterations = 6;
  cfg.batch_size = 3;
  cfg.seed = 5;
  for (Arch a : {Arch::ContextNet, Arch::Lstm, Arch::Transformer, Arch::Conformer}) {
    auto m1 = build_model(small(a), 4), m2 = build_model(small(a), 4);
    const auto r1 = train(*m1, corpus, cfg), r2 = train(*m2, corpus, cfg);
    ASSERT_EQ(r1.history.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(r1.history[i].loss, r2.history[i].loss);
    EXPECT_EQ(snapshot(*m1), snapshot(*m2));
    const auto dir = std::filesystem::temp_directory_path();
    m1->save(dir / "pb_det_a.pbck");
    m2->save(dir / "pb_det_b.pbck");
    std::ifstream fa(dir / "pb_det_a.pbck", std::ios::binary), fb(dir / "pb_det_b.pbck", std::ios::binary);
    EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(fa), {}, std::istreambuf_iterator<char>(fb)));
  }
}

TEST(Train, SmokeRunLearnsLocalTask) {
  // 200 iterations on 50 noise-free local-only utterances at d = 32.
  SynthSpec s;
  s.n_utts = 50;
  s.seed = 3;
  const auto corpus = synth_corpus(s);
  ArchConfig c = small(Arch::Transformer, 32);
  c.depth = 2;
  c.heads = 4;
  c.range = AttentionRange::unlimited();
  c.subsample_channels = 8;
  auto m = build_model(c, 2);
  TrainConfig cfg;
  cfg.iterations = 200;
  cfg.batch_size = 8;
  cfg.max_lr = 3e-3;
  cfg.augment = false;
  const auto r = train(*m, corpus, cfg);
  double tail = 0.0;
  for (std::size_t i = 190; i < 200; ++i) tail += r.history[i].loss / 10.0;
  EXPECT_LT(tail, std::log(37.0) / 10.0);
}

TEST(Train, DivergenceReportsIteration) {
  auto corpus = tiny_corpus(2, 3);
  auto v = corpus[1].features.mutable_values();
  v[5] = std::nan("");
  auto m = build_model(small(Arch::Transformer), 1);
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.batch_size = 1;
  cfg.augment = false;
  try {
    train(*m, corpus, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Numeric);
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(Train, RejectsEmptyCorpus) {
  auto m = build_model(small(Arch::Transformer), 1);
  EXPECT_THROW(train(*m, {}, TrainConfig{}), Error);
}

TEST(Evaluate, PerfectAndCountingOracle) {
  auto m = build_model(small(Arch::Transformer), 6);
  auto corpus = tiny_corpus(5, 4);
  // Relabel so the model's own predictions are the truth.
  for (auto& u : corpus) {
    NoGradGuard g;
    const auto pred = predict(m->forward(u.features));
    for (std::size_t t = 0; t < u.labels.size(); ++t) u.labels[t] = pred[std::min(t / 4, pred.size() - 1)];
  }
  const auto perfect = evaluate(*m, corpus);
  EXPECT_EQ(perfect.accuracy(), 1.0);

  Rng rng(1);
  std::size_t correct = 0, total = 0;
  std::array<std::size_t, 37> per_total{};
  for (auto& u : corpus) {
    NoGradGuard g;
    const auto pred = predict(m->forward(u.features));
    for (auto& y : u.labels) y = rng.below(3) == 0 ? y : static_cast<int>((y + 1 + rng.below(36)) % 37);
    const auto sub = subsample_labels(u.labels, pred.size());
    for (std::size_t t = 0; t < pred.size(); ++t) {
      correct += pred[t] == sub[t];
      ++total;
      ++per_total[sub[t]];
    }
  }
  const auto r = evaluate(*m, corpus);
  EXPECT_EQ(r.correct, correct);
  EXPECT_EQ(r.total, total);
  EXPECT_EQ(r.class_total, per_total);
}

TEST(Evaluate, TrainedRangeOverrideIsIdentity) {
  auto m = build_model(small(Arch::Conformer), 7);
  const auto corpus = tiny_corpus(3, 5);
  const auto a = evaluate(*m, corpus), b = evaluate(*m, corpus, AttentionRange::frames(2));
  EXPECT_EQ(a.correct, b.correct);
  EXPECT_EQ(a.class_correct, b.class_correct);
}

TEST(Evaluate, NeverAugments) {
  auto m = build_model(small(Arch::Transformer), 8);
  const auto corpus = tiny_corpus(3, 6);
  const auto before = spec_augment_invocations();
  evaluate(*m, corpus);
  evaluate(*m, corpus, AttentionRange::unlimited());
  EXPECT_EQ(spec_augment_invocations(), before);
  TrainConfig cfg;
  cfg.iterations = 2;
  cfg.batch_size = 2;
  train(*m, corpus, cfg);
  EXPECT_EQ(spec_augment_invocations(), before + 4);
}

TEST(Transfer, DiagonalMatchesEvaluate) {
  auto m1 = build_model(small(Arch::Transformer), 9);
  ArchConfig wide = small(Arch::Transformer);
  wide.range = AttentionRange::unlimited();
  auto m2 = build_model(wide, 10);
  const auto corpus = tiny_corpus(3, 7);
  const AttentionRange ranges[] = {AttentionRange::frames(2), AttentionRange::unlimited()};
  const Model* models[] = {m1.get(), m2.get()};
  const auto tm = range_transfer_matrix(models, ranges, corpus, ranges);
  ASSERT_EQ(tm.accuracy.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(tm.accuracy[i][i], evaluate(*models[i], corpus).accuracy());
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(tm.accuracy[i][j], evaluate(*models[i], corpus, ranges[j]).accuracy());
  }
  const Model* one[] = {m1.get()};
  const auto single = range_transfer_matrix(one, std::span(ranges, 1), corpus, std::span(ranges, 1));
  EXPECT_EQ(single.accuracy[0][0], evaluate(*m1, corpus).accuracy());
}

TEST(Scaling, ExactPowerLaws) {
  const std::vector<double> lengths = {512, 1024, 2048, 4096, 8192};
  std::vector<double> lin, quad;
  for (double t : lengths) {
    lin.push_back(0.003 * t);
    quad.push_back(2e-7 * t * t);
  }
  EXPECT_NEAR(fit_scaling_exponent(lengths, lin), 1.0, 1e-6);
  EXPECT_NEAR(fit_scaling_exponent(lengths, quad), 2.0, 1e-6);
  std::vector<double> bad = lin;
  bad[2] = 0.0;
  EXPECT_THROW(fit_scaling_exponent(lengths, bad), Error);
  EXPECT_THROW(fit_scaling_exponent(std::span(lengths).first(3), std::span(lin).first(3)), Error);
  const std::vector<double> narrow = {100, 200, 300, 400};
  EXPECT_THROW(fit_scaling_exponent(narrow, std::span(lin).first(4)), Error);
}

TEST(Bench, MedianAndShapes) {
  auto m = build_model(small(Arch::ContextNet), 1);
  BenchConfig cfg;
  cfg.input_frames = {64, 128};
  cfg.batch = 2;
  cfg.repeats = 1;
  const auto pts = time_inference(*m, cfg);
  ASSERT_EQ(pts.size(), 2u);
  for (const auto& p : pts) {
    EXPECT_EQ(p.samples.size(), 1u);
    EXPECT_EQ(p.ms_per_sequence, p.samples[0]);
    EXPECT_EQ(p.encoder_frames, SubsampleFrontend::output_length(p.input_frames));
    EXPECT_GT(p.ms_per_sequence, 0.0);
  }
  cfg.repeats = 4;
  const auto four = time_inference(*m, cfg);
  auto s = four[0].samples;
  std::sort(s.begin(), s.end());
  EXPECT_DOUBLE_EQ(four[0].ms_per_sequence, 0.5 * (s[1] + s[2]));
}

TEST(Report, CsvLayoutAndNumbers) {
  TrainResult r;
  r.history = {{0, 0.5, 1.25, 3.0}, {1, 1e-3, 0.1, 2.0}};
  const auto csv = history_table("abc", r).str();
  EXPECT_EQ(csv, "# config_hash=abc\niteration,lr,loss,grad_norm\n0,0.5,1.25,3\n1,0.001,0.1,2\n");
  for (double v : {0.1, 1.0 / 3.0, 6.02e23, -0.0}) EXPECT_EQ(std::stod(format_number(v)), v);
  const nlohmann::json a = {{"b", 1}, {"a", 2}}, b = {{"a", 2}, {"b", 1}};
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(nlohmann::json{{"a", 3}, {"b", 1}}));
}

TEST(TrainConfig, ProfilesAndJson) {
  EXPECT_EQ(TrainConfig::paper().iterations, 25000u);
  EXPECT_EQ(TrainConfig::paper().batch_size, 128u);
  EXPECT_EQ(TrainConfig::desk().iterations, 2000u);
  EXPECT_EQ(TrainConfig::desk().batch_size, 16u);
  EXPECT_EQ(TrainConfig::desk().warmup_iters(), 100u);
  const auto back = TrainConfig::from_json(TrainConfig::paper().to_json());
  EXPECT_EQ(back.to_json(), TrainConfig::paper().to_json());
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"lr", 1}}), Error);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"batch_size", 0}}), Error);
}
