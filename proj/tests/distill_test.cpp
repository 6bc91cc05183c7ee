// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "roskd/distill.hpp"
#include "roskd/partition.hpp"

using namespace roskd;

namespace {

Matrix matrix_from(std::vector<std::vector<double>> rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace

TEST_CASE("tempered softmax") {
  SUBCASE("uniform logits give the uniform distribution") {
    const std::vector<double> z{0.0, 0.0};
    for (double tau : {0.25, 0.5, 1.0, 4.0}) {
      const auto q = tempered_softmax(z, tau);
      CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-15));
      CHECK(q[1] == doctest::Approx(0.5).epsilon(1e-15));
    }
  }
  SUBCASE("matches direct evaluation at tau 0.5") {
    const std::vector<double> z{1.0, 2.0, 3.0};
    const auto q = tempered_softmax(z, 0.5);
    const double e2 = std::exp(2.0), e4 = std::exp(4.0), e6 = std::exp(6.0);
    const double sum = e2 + e4 + e6;
    CHECK(q[0] == doctest::Approx(e2 / sum).epsilon(1e-12));
    CHECK(q[1] == doctest::Approx(e4 / sum).epsilon(1e-12));
    CHECK(q[2] == doctest::Approx(e6 / sum).epsilon(1e-12));
    CHECK(q[0] == doctest::Approx(0.01588).epsilon(1e-3));
    CHECK(q[1] == doctest::Approx(0.11731).epsilon(1e-3));
    CHECK(q[2] == doctest::Approx(0.86681).epsilon(1e-3));
  }
  SUBCASE("higher temperature softens the distribution") {
    const std::vector<double> z{0.3, -1.2, 2.0};
    const auto sharp = tempered_softmax(z, 1.0);
    const auto soft = tempered_softmax(z, 2.0);
    CHECK(*std::max_element(soft.begin(), soft.end()) <
          *std::max_element(sharp.begin(), sharp.end()));
  }
  SUBCASE("sums to one even for extreme logits") {
    const std::vector<double> z{1000.0, -1000.0, 500.0};
    const auto q = tempered_softmax(z, 0.5);
    double sum = 0.0;
    for (double v : q) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("invalid inputs rejected") {
    CHECK_THROWS_AS(tempered_softmax(std::vector<double>{1.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(tempered_softmax(std::vector<double>{1.0}, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(tempered_softmax(std::vector<double>{std::nan("")}, 1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("kl divergence") {
  SUBCASE("zero iff identical") {
    const std::vector<double> q{0.2, 0.5, 0.3};
    CHECK(kl_div(q, q) == 0.0);
  }
  SUBCASE("matches direct scalar evaluation") {
    const std::vector<double> q{0.7, 0.3}, p{0.5, 0.5};
    const double expected = 0.7 * std::log(1.4) + 0.3 * std::log(0.6);
    CHECK(kl_div(q, p) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(kl_div(q, p) == doctest::Approx(0.082282).epsilon(1e-4));
  }
  SUBCASE("asymmetric") {
    const std::vector<double> q{0.7, 0.3}, p{0.5, 0.5};
    CHECK(kl_div(q, p) != kl_div(p, q));
    const double reversed = 0.5 * std::log(0.5 / 0.7) + 0.5 * std::log(0.5 / 0.3);
    CHECK(kl_div(p, q) == doctest::Approx(reversed).epsilon(1e-14));
  }
  SUBCASE("nonnegative on random simplex pairs") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> q(4), p(4);
      double qs = 0.0, ps = 0.0;
      for (int j = 0; j < 4; ++j) {
        q[j] = rng.next_exponential();
        p[j] = rng.next_exponential();
        qs += q[j];
        ps += p[j];
      }
      for (int j = 0; j < 4; ++j) {
        q[j] /= qs;
        p[j] /= ps;
      }
      CHECK(kl_div(q, p) >= 0.0);
    }
  }
  SUBCASE("length mismatch rejected") {
    CHECK_THROWS_AS(kl_div(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}),
                    std::invalid_argument);
  }
}

TEST_CASE("weight sampling") {
  SUBCASE("single teacher normalizes to one") {
    const TeacherWeights w = sample_weights(1, {SamplerKind::kExponential}, 55);
    CHECK(w.w == std::vector<double>{1.0});
  }
  SUBCASE("equal weights") {
    const TeacherWeights w = sample_weights(5, {SamplerKind::kEqualWeight}, 0);
    for (double v : w.w) CHECK(v == 1.0 / 5.0);
  }
  SUBCASE("single-teacher mode is one-hot") {
    const TeacherWeights w = sample_weights(4, {SamplerKind::kSingleTeacher, 1.0, 2}, 0);
    CHECK(w.w == std::vector<double>{0.0, 0.0, 1.0, 0.0});
    CHECK_THROWS_AS(sample_weights(4, {SamplerKind::kSingleTeacher, 1.0, 4}, 0),
                    std::invalid_argument);
  }
  SUBCASE("exponential draws live on the simplex and often concentrate") {
    Rng seed_stream(1234);
    const int draws = 100000;
    std::vector<double> mean(5, 0.0);
    int dominated = 0;
    for (int d = 0; d < draws; ++d) {
      const TeacherWeights w = sample_weights(5, {SamplerKind::kExponential}, seed_stream.next_u64());
      double sum = 0.0, mx = 0.0;
      for (int m = 0; m < 5; ++m) {
        CHECK(w.w[m] >= 0.0);
        sum += w.w[m];
        mean[m] += w.w[m];
        mx = std::max(mx, w.w[m]);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
      dominated += mx > 0.5;
    }
    for (int m = 0; m < 5; ++m) {
      CHECK(mean[m] / draws == doctest::Approx(0.2).epsilon(0.025));  // 0.2 +/- 0.005
    }
    // one teacher dominates (> 1/2 mass) in roughly 31% of draws
    const double dominated_fraction = static_cast<double>(dominated) / draws;
    CHECK(dominated_fraction > 0.2);
    CHECK(dominated_fraction < 0.45);
  }
  SUBCASE("k below one rejected") {
    CHECK_THROWS_AS(sample_weights(0, {SamplerKind::kEqualWeight}, 0), std::invalid_argument);
  }
}

TEST_CASE("distill loss reductions") {
  const DistillConfig base_cfg = [] {
    DistillConfig cfg;
    cfg.alpha = 0.9;
    cfg.tau = 0.5;
    return cfg;
  }();
  const Matrix student = matrix_from({{0.2, -0.4, 1.0}, {1.2, 0.1, -0.3}});
  const std::vector<std::uint32_t> labels{2, 0};
  const std::vector<Matrix> teachers{matrix_from({{0.5, -0.1, 0.7}, {0.9, 0.4, -0.6}}),
                                     matrix_from({{-0.2, 0.3, 0.8}, {1.4, -0.2, 0.0}})};
  const TeacherWeights w{{0.6, 0.4}, 0};

  SUBCASE("alpha zero reduces to plain cross-entropy") {
    DistillConfig cfg = base_cfg;
    cfg.alpha = 0.0;
    const auto result = distill_loss_at_logits(student, labels, teachers, {w}, cfg);
    const auto ce = ce_loss_and_grad(student, labels, TaskMode::kSingleLabel);
    CHECK(result.loss == ce.loss);
    CHECK(result.logit_grad.data == ce.logit_grad.data);
  }
  SUBCASE("alpha one with the student as its own teacher gives zero loss") {
    DistillConfig cfg = base_cfg;
    cfg.alpha = 1.0;
    const TeacherWeights self{{1.0}, 0};
    const auto result = distill_loss_at_logits(student, labels, {student}, {self}, cfg);
    CHECK(result.loss == 0.0);
    for (double g : result.logit_grad.data) CHECK(g == 0.0);
  }
  SUBCASE("loss decomposes linearly in alpha") {
    DistillConfig kl_only = base_cfg;
    kl_only.alpha = 1.0;
    DistillConfig ce_only = base_cfg;
    ce_only.alpha = 0.0;
    const double kl_part = distill_loss_at_logits(student, labels, teachers, {w}, kl_only).loss;
    const double ce_part = distill_loss_at_logits(student, labels, teachers, {w}, ce_only).loss;
    for (double alpha : {0.1, 0.25, 0.5, 0.9}) {
      DistillConfig cfg = base_cfg;
      cfg.alpha = alpha;
      const double mixed = distill_loss_at_logits(student, labels, teachers, {w}, cfg).loss;
      CHECK(mixed == doctest::Approx(alpha * kl_part + (1 - alpha) * ce_part).epsilon(1e-13));
    }
  }
  SUBCASE("invalid inputs rejected") {
    CHECK_THROWS_AS(
        distill_loss_at_logits(student, labels, teachers, {TeacherWeights{{0.6, 0.6}, 0}}, base_cfg),
        std::invalid_argument);
    CHECK_THROWS_AS(
        distill_loss_at_logits(student, labels, teachers, {TeacherWeights{{-0.2, 1.2}, 0}}, base_cfg),
        std::invalid_argument);
    CHECK_THROWS_AS(
        distill_loss_at_logits(student, labels, {matrix_from({{1.0, 2.0}})}, {w}, base_cfg),
        std::invalid_argument);
  }
}

TEST_CASE("distill loss matches the scalar oracle") {
  Rng rng(314);
  for (int trial = 0; trial < 40; ++trial) {
    const int batch = 1 + static_cast<int>(rng.next_below(3));
    const int classes = 2 + static_cast<int>(rng.next_below(2));
    const int k = 1 + static_cast<int>(rng.next_below(3));

    std::vector<std::vector<double>> student_rows(batch, std::vector<double>(classes));
    std::vector<int> labels(batch);
    std::vector<std::vector<std::vector<double>>> teacher_rows(
        k, std::vector<std::vector<double>>(batch, std::vector<double>(classes)));
    for (int i = 0; i < batch; ++i) {
      labels[i] = static_cast<int>(rng.next_below(classes));
      for (int c = 0; c < classes; ++c) student_rows[i][c] = 2.0 * rng.next_normal();
    }
    for (int m = 0; m < k; ++m) {
      for (int i = 0; i < batch; ++i) {
        for (int c = 0; c < classes; ++c) teacher_rows[m][i][c] = 2.0 * rng.next_normal();
      }
    }
    std::vector<double> w(k);
    double sum = 0.0;
    for (double& v : w) {
      v = rng.next_exponential();
      sum += v;
    }
    for (double& v : w) v /= sum;

    DistillConfig cfg;
    cfg.alpha = 0.9;
    cfg.tau = 0.5;
    Matrix student(batch, classes);
    std::vector<Matrix> teachers(k, Matrix(batch, classes));
    std::vector<std::uint32_t> label_u32(batch);
    for (int i = 0; i < batch; ++i) {
      label_u32[i] = static_cast<std::uint32_t>(labels[i]);
      for (int c = 0; c < classes; ++c) {
        student(i, c) = student_rows[i][c];
        for (int m = 0; m < k; ++m) teachers[m](i, c) = teacher_rows[m][i][c];
      }
    }
    const auto result =
        distill_loss_at_logits(student, label_u32, teachers, {TeacherWeights{w, 0}}, cfg);
    const double expected =
        oracles::distill_loss_scalar_single(student_rows, labels, teacher_rows, w, 0.9, 0.5);
    CHECK(result.loss == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("multi-label distill loss matches the scalar oracle") {
  Rng rng(2718);
  for (int trial = 0; trial < 20; ++trial) {
    const int batch = 1 + static_cast<int>(rng.next_below(3));
    const int classes = 3;
    const int k = 2;
    std::vector<std::vector<double>> student_rows(batch, std::vector<double>(classes));
    std::vector<std::uint32_t> masks(batch);
    std::vector<std::vector<std::vector<double>>> teacher_rows(
        k, std::vector<std::vector<double>>(batch, std::vector<double>(classes)));
    for (int i = 0; i < batch; ++i) {
      masks[i] = static_cast<std::uint32_t>(rng.next_below(1u << classes));
      for (int c = 0; c < classes; ++c) student_rows[i][c] = rng.next_normal();
    }
    for (int m = 0; m < k; ++m) {
      for (int i = 0; i < batch; ++i) {
        for (int c = 0; c < classes; ++c) teacher_rows[m][i][c] = rng.next_normal();
      }
    }
    DistillConfig cfg;
    cfg.alpha = 0.7;
    cfg.tau = 0.5;
    cfg.mode = TaskMode::kMultiLabel;
    Matrix student(batch, classes);
    std::vector<Matrix> teachers(k, Matrix(batch, classes));
    for (int i = 0; i < batch; ++i) {
      for (int c = 0; c < classes; ++c) {
        student(i, c) = student_rows[i][c];
        for (int m = 0; m < k; ++m) teachers[m](i, c) = teacher_rows[m][i][c];
      }
    }
    const auto result = distill_loss_at_logits(student, masks, teachers,
                                               {TeacherWeights{{0.3, 0.7}, 0}}, cfg);
    const double expected =
        oracles::distill_loss_scalar_multi(student_rows, masks, teacher_rows, {0.3, 0.7}, 0.7, 0.5);
    CHECK(result.loss == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("full objective gradient matches finite differences") {
  Rng rng(777);
  for (int trial = 0; trial < 5; ++trial) {
    const ModelSpec spec{{3, 5, 3}, Activation::kRelu, rng.next_u64()};
    const ParamVector params = init_model(spec);
    Matrix x(2, 3);
    for (double& v : x.data) v = rng.next_normal();
    std::vector<std::uint32_t> y{static_cast<std::uint32_t>(rng.next_below(3)),
                                 static_cast<std::uint32_t>(rng.next_below(3))};
    const std::vector<Matrix> teachers{matrix_from({{0.4, -0.2, 0.1}, {0.8, 0.3, -0.5}})};
    const TeacherWeights w{{1.0}, 0};
    DistillConfig cfg;
    cfg.alpha = 0.9;
    cfg.tau = 0.5;

    const auto result = distill_loss(params, x, y, teachers, w, cfg);
    const ParamVector analytic = backward(params, x, result.logit_grad);
    const auto numeric = oracles::central_difference_gradient(params, [&](const ParamVector& p) {
      return distill_loss(p, x, y, teachers, w, cfg).loss;
    });
    CHECK(oracles::max_rel_error(analytic.values, numeric) < 1e-4);
  }
}

TEST_CASE("per-example weights are accepted and change the loss") {
  const Matrix student = matrix_from({{0.2, -0.4}, {1.2, 0.1}});
  const std::vector<std::uint32_t> labels{1, 0};
  const std::vector<Matrix> teachers{matrix_from({{0.5, -0.1}, {0.9, 0.4}}),
                                     matrix_from({{-0.2, 0.3}, {1.4, -0.2}})};
  DistillConfig cfg;
  cfg.alpha = 1.0;
  cfg.tau = 0.5;
  const std::vector<TeacherWeights> per_example{{{1.0, 0.0}, 0}, {{0.0, 1.0}, 0}};
  const auto mixed = distill_loss_at_logits(student, labels, teachers, per_example, cfg);
  const auto first = distill_loss_at_logits(student, labels, teachers, {per_example[0]}, cfg);
  CHECK(mixed.loss != first.loss);
  CHECK_THROWS_AS(distill_loss_at_logits(student, labels, teachers,
                                         {per_example[0], per_example[0], per_example[0]}, cfg),
                  std::invalid_argument);
}

TEST_CASE("averaging update is an exact running mean") {
  const ModelSpec spec{{1, 1}, Activation::kRelu, 0};
  SUBCASE("first checkpoint initializes the mean") {
    AveragingState state;
    averaging_update(state, ParamVector{spec, {2.0, 0.0}});
    CHECK(state.n == 1);
    CHECK(state.smooth.values[0] == 2.0);
  }
  SUBCASE("running mean over 2, 4, 9") {
    AveragingState state;
    averaging_update(state, ParamVector{spec, {2.0, 0.0}});
    CHECK(state.smooth.values[0] == 2.0);
    averaging_update(state, ParamVector{spec, {4.0, 0.0}});
    CHECK(state.smooth.values[0] == 3.0);
    averaging_update(state, ParamVector{spec, {9.0, 0.0}});
    CHECK(state.smooth.values[0] == 5.0);
    CHECK(state.n == 3);
  }
  SUBCASE("mean of identical checkpoints is that checkpoint") {
    AveragingState state;
    const ParamVector p{spec, {1.23456789, -0.5}};
    for (int i = 0; i < 7; ++i) averaging_update(state, p);
    CHECK(state.smooth.values == p.values);
  }
  SUBCASE("spec mismatch rejected") {
    AveragingState state;
    averaging_update(state, ParamVector{spec, {1.0, 0.0}});
    const ModelSpec other{{1, 2}, Activation::kRelu, 0};
    CHECK_THROWS_AS(
        averaging_update(state, ParamVector{other, std::vector<double>(param_count(other), 0.0)}),
        std::invalid_argument);
  }
}

namespace {

struct TinyRun {
  LabeledDataset ds;
  SplitIndices split;
  TeacherEnsemble ensemble;
};

TinyRun make_tiny_run() {
  TinyRun run;
  run.ds = inject_noise(generate(3, 4, 60, 4.0, 5), 0.2, 6);
  run.split = split_70_10_20(run.ds.size(), 7);
  const Partition part = make_partition(run.split.train.size(), {2, 0.5, 8});
  std::vector<std::vector<int>> rows(2);
  for (int s = 0; s < 2; ++s) {
    for (int pos : part.subsets[s]) rows[s].push_back(run.split.train[pos]);
  }
  run.ensemble = train_ensemble({{{4, 8, 3}, Activation::kRelu, 1}, {{4, 10, 3}, Activation::kRelu, 2}},
                                run.ds, rows, {}, 6, 16, 9, 1);
  return run;
}

DistillConfig tiny_config() {
  DistillConfig cfg;
  cfg.epochs = 8;
  cfg.warmup_epochs = 3;
  cfg.batch = 16;
  cfg.seed = 77;
  return cfg;
}

}  // namespace

TEST_CASE("run_distillation trains and averages") {
  const TinyRun run = make_tiny_run();
  const ModelSpec student{{4, 6, 3}, Activation::kRelu, 50};
  const DistillConfig cfg = tiny_config();
  const DistillResult result =
      run_distillation(student, run.ds, run.split.train, run.split.val, run.ensemble, cfg);

  SUBCASE("history covers every epoch with warmup flags") {
    REQUIRE(result.history.size() == 8);
    for (int e = 0; e < 8; ++e) {
      CHECK(result.history[e].epoch == e);
      CHECK(result.history[e].averaging_active == (e + 1 > 3));
      CHECK(result.history[e].mean_weights.size() == 2);
    }
  }
  SUBCASE("smooth equals the running mean of post-warmup checkpoints") {
    REQUIRE(result.post_warmup_checkpoints.size() == 5);  // epochs 4..8 of 8, warmup 3
    const auto mean = oracles::checkpoint_mean(result.post_warmup_checkpoints);
    REQUIRE(mean.size() == result.smooth.values.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
      CHECK(std::abs(mean[i] - result.smooth.values[i]) <= 1e-12);
    }
  }
  SUBCASE("determinism") {
    const DistillResult again =
        run_distillation(student, run.ds, run.split.train, run.split.val, run.ensemble, cfg);
    CHECK(again.student.values == result.student.values);
    CHECK(again.smooth.values == result.smooth.values);
  }
}

TEST_CASE("averaging disabled returns the raw student") {
  const TinyRun run = make_tiny_run();
  const ModelSpec student{{4, 6, 3}, Activation::kRelu, 51};
  DistillConfig cfg = tiny_config();
  cfg.averaging_enabled = false;
  const DistillResult result =
      run_distillation(student, run.ds, run.split.train, run.split.val, run.ensemble, cfg);
  CHECK(result.smooth.values == result.student.values);
  CHECK(result.post_warmup_checkpoints.empty());
}

TEST_CASE("equal-weight configuration degenerates to the fixed-weight baseline") {
  const TinyRun run = make_tiny_run();
  const ModelSpec student{{4, 6, 3}, Activation::kRelu, 52};
  DistillConfig manual = tiny_config();
  manual.sampler.kind = SamplerKind::kEqualWeight;
  manual.averaging_enabled = false;
  const DistillConfig baseline = apply_baseline(tiny_config(), Baseline::kIII);
  const DistillResult a =
      run_distillation(student, run.ds, run.split.train, run.split.val, run.ensemble, manual);
  const DistillResult b =
      run_distillation(student, run.ds, run.split.train, run.split.val, run.ensemble, baseline);
  CHECK(a.student.values == b.student.values);
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
  }
}

TEST_CASE("baseline reductions configure the expected modes") {
  const DistillConfig base = tiny_config();
  const DistillConfig b1 = apply_baseline(base, Baseline::kI);
  CHECK(b1.alpha == 0.0);
  CHECK_FALSE(b1.averaging_enabled);
  const DistillConfig b2 = apply_baseline(base, Baseline::kII, 3);
  CHECK(b2.sampler.kind == SamplerKind::kSingleTeacher);
  CHECK(b2.sampler.single_index == 3);
  CHECK_FALSE(b2.averaging_enabled);
  const DistillConfig b3 = apply_baseline(base, Baseline::kIII);
  CHECK(b3.sampler.kind == SamplerKind::kEqualWeight);
  const DistillConfig b5 = apply_baseline(base, Baseline::kV);
  CHECK(b5.sampler.kind == SamplerKind::kExponential);
  CHECK_FALSE(b5.averaging_enabled);
  CHECK(b5.alpha == base.alpha);
  CHECK_THROWS_AS(baseline_from_string("IV"), std::invalid_argument);
}

TEST_CASE("invalid distillation configs rejected") {
  const TinyRun run = make_tiny_run();
  const ModelSpec student{{4, 6, 3}, Activation::kRelu, 53};
  DistillConfig cfg = tiny_config();
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(
      run_distillation(student, run.ds, run.split.train, run.split.val, run.ensemble, cfg),
      std::invalid_argument);
  cfg = tiny_config();
  cfg.warmup_epochs = cfg.epochs;
  CHECK_THROWS_AS(
      run_distillation(student, run.ds, run.split.train, run.split.val, run.ensemble, cfg),
      std::invalid_argument);
  cfg = tiny_config();
  CHECK_THROWS_AS(
      run_distillation(student, run.ds, run.split.train, run.split.val, TeacherEnsemble{}, cfg),
      std::invalid_argument);
}
