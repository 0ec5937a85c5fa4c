#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "grad_check.hpp"
#include "sqz/augment.hpp"
#include "sqz/ctc.hpp"
#include "sqz/optimizer.hpp"
#include "sqz/schedule.hpp"
#include "sqz/synthetic.hpp"
#include "sqz/trainer.hpp"

using namespace sqz;

TEST_CASE("learning-rate schedule closed forms") {
  ScheduleParams p{2e-3, 1000.0, 500.0, 1.0};
  CHECK(lr(500.0, p) == doctest::Approx(1e-3).epsilon(1e-12));  // warmup half
  CHECK(lr(1000.0, p) == doctest::Approx(2e-3).epsilon(1e-12));
  CHECK(lr(1500.0, p) == doctest::Approx(2e-3).epsilon(1e-12));  // plateau end
  // d = 1, t = 2 T0 + Tpeak: decay gives T0 / (2 T0) = 1/2.
  CHECK(lr(2500.0, p) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr(0.0, p) == 0.0);
  CHECK_THROWS_AS(lr(-1.0, p), std::invalid_argument);

  ScheduleParams bad = p;
  bad.warmup_steps = 0.0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = p;
  bad.decay = 0.0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("schedule is continuous at both breakpoints for random draws") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    ScheduleParams p;
    p.lr_peak = rng.uniform(1e-5, 1e-1);
    p.warmup_steps = rng.uniform(1.0, 5000.0);
    p.plateau_steps = rng.uniform(0.0, 5000.0);
    p.decay = rng.uniform(0.05, 3.0);
    const double t1 = p.warmup_steps;
    const double t2 = p.warmup_steps + p.plateau_steps;
    const double eps = 1e-9;
    CHECK(std::fabs(lr(t1 - eps, p) - lr(t1, p)) < 1e-6 * p.lr_peak);
    CHECK(std::fabs(lr(t2 - eps, p) - lr(t2, p)) < 1e-6 * p.lr_peak);
    CHECK(lr(t1, p) == doctest::Approx(p.lr_peak).epsilon(1e-9));
    CHECK(lr(t2, p) == doctest::Approx(p.lr_peak).epsilon(1e-9));
  }
}

TEST_CASE("noam annealing is the d=0.5, plateau=0 special case") {
  ScheduleParams p{3e-3, 4000.0, 0.0, 0.5};
  // Classic form: scale * min(t^-0.5, t * warmup^-1.5), scaled to peak at
  // t = warmup.
  auto classic = [&](double t) {
    const double scale = p.lr_peak * std::sqrt(p.warmup_steps);
    return scale * std::min(1.0 / std::sqrt(t),
                            t * std::pow(p.warmup_steps, -1.5));
  };
  for (double t : {1.0, 100.0, 2000.0, 4000.0, 4001.0, 10000.0, 123456.0}) {
    CHECK(lr(t, p) == doctest::Approx(classic(t)).epsilon(1e-12));
  }
}

TEST_CASE("adamw decoupled decay semantics") {
  auto w = tensor({3}, {1.0, -2.0, 0.5}, true);

  // Zero gradients, zero decay: parameters unchanged.
  AdamWParams hp;
  hp.weight_decay = 0.0;
  AdamW opt({w}, hp);
  w->ensure_grad();
  opt.step(0.1);
  CHECK(w->data == std::vector<double>{1.0, -2.0, 0.5});

  // Zero gradients, decay lambda: parameters shrink by (1 - lr * lambda).
  AdamWParams hp2;
  hp2.weight_decay = 0.2;
  AdamW opt2({w}, hp2);
  opt2.step(0.1);
  const double shrink = 1.0 - 0.1 * 0.2;
  CHECK(w->data[0] == doctest::Approx(1.0 * shrink).epsilon(1e-12));
  CHECK(w->data[1] == doctest::Approx(-2.0 * shrink).epsilon(1e-12));
  opt2.step(0.1);
  CHECK(w->data[0] == doctest::Approx(1.0 * shrink * shrink).epsilon(1e-12));
}

TEST_CASE("adamw minimizes a scalar quadratic within 500 steps") {
  auto w = tensor({1}, {-4.0}, true);
  AdamWParams hp;
  hp.weight_decay = 0.0;
  AdamW opt({w}, hp);
  for (int step = 0; step < 500; ++step) {
    Graph g;
    auto diff = add_scaled(g, w, scalar_tensor(3.0), -1.0);  // w - 3
    auto loss = sum_all(g, mul(g, diff, diff));
    opt.zero_grad();
    g.backward(loss);
    opt.step(0.05);
  }
  CHECK(w->data[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("spec_augment zero widths are the identity") {
  Rng rng(3);
  auto x = zeros({20, 10});
  for (auto& v : x->data) v = rng.uniform(-1, 1);
  SpecAugmentParams p;
  p.freq_width = 0;
  p.time_mask_ratio = 0.0;
  auto y = spec_augment(x, p, 7);
  CHECK(y->data == x->data);
}

TEST_CASE("spec_augment masks obey the union bound and leave the rest alone") {
  Rng rng(4);
  auto x = zeros({50, 30});
  for (auto& v : x->data) v = rng.uniform(0.5, 1.5);  // strictly nonzero
  SpecAugmentParams p;
  p.freq_masks = 2;
  p.freq_width = 9;
  p.time_masks = 3;
  p.time_mask_ratio = 0.05;
  AppliedMasks masks;
  auto y = spec_augment(x, p, 11, &masks);

  REQUIRE(masks.freq.size() == 2);
  REQUIRE(masks.time.size() == 3);
  int64_t freq_total = 0;
  for (auto [f0, w] : masks.freq) {
    CHECK(w <= 9);
    freq_total += w;
  }
  CHECK(freq_total <= p.freq_masks * p.freq_width);  // union bound

  auto masked = [&](int64_t r, int64_t c) {
    for (auto [f0, w] : masks.freq) {
      if (c >= f0 && c < f0 + w) return true;
    }
    for (auto [t0, w] : masks.time) {
      if (r >= t0 && r < t0 + w) return true;
    }
    return false;
  };
  for (int64_t r = 0; r < 50; ++r) {
    for (int64_t c = 0; c < 30; ++c) {
      if (masked(r, c)) {
        CHECK(y->data[r * 30 + c] == 0.0);
      } else {
        CHECK(y->data[r * 30 + c] == x->data[r * 30 + c]);
      }
    }
  }

  // Same seed, same placement.
  auto y2 = spec_augment(x, p, 11);
  CHECK(y2->data == y->data);
  auto y3 = spec_augment(x, p, 12);
  CHECK(y3->data != y->data);
}

TEST_CASE("synthetic task shapes, repeats and determinism") {
  SyntheticTask task;
  task.vocab = 8;
  task.label_len = 3;
  task.upsample = 4;
  task.feature_dim = 16;
  task.noise = 0.0;
  task.seed = 5;
  auto data = gen_synthetic(task, 6);
  REQUIRE(data.size() == 6);
  for (const auto& s : data) {
    CHECK(s.features->shape == std::vector<int64_t>{12, 16});
    REQUIRE(s.labels.size() == 3);
    for (int64_t j = 0; j < 3; ++j) {
      CHECK(s.labels[static_cast<size_t>(j)] >= 0);
      CHECK(s.labels[static_cast<size_t>(j)] < 8);
      if (j > 0) CHECK(s.labels[static_cast<size_t>(j)] != s.labels[static_cast<size_t>(j - 1)]);
      // Each label block is u identical one-hot rows.
      for (int64_t r = j * 4; r < (j + 1) * 4; ++r) {
        for (int64_t c = 0; c < 16; ++c) {
          const double expect =
              c == s.labels[static_cast<size_t>(j)] ? 1.0 : 0.0;
          CHECK(s.features->data[r * 16 + c] == expect);
        }
      }
    }
  }
  // Distinct row patterns match distinct labels.
  const auto& first = data[0];
  std::map<std::vector<double>, int> patterns;
  for (int64_t r = 0; r < 12; ++r) {
    std::vector<double> row(first.features->data.begin() + r * 16,
                            first.features->data.begin() + (r + 1) * 16);
    patterns[row]++;
  }
  std::map<int64_t, int> label_counts;
  for (auto l : first.labels) label_counts[l]++;
  CHECK(patterns.size() == label_counts.size());

  auto again = gen_synthetic(task, 6);
  for (size_t i = 0; i < 6; ++i) {
    CHECK(again[i].labels == data[i].labels);
    CHECK(again[i].features->data == data[i].features->data);
  }
  SyntheticTask noisy = task;
  noisy.noise = 0.1;
  auto n1 = gen_synthetic(noisy, 2);
  auto n2 = gen_synthetic(noisy, 2);
  CHECK(n1[0].features->data == n2[0].features->data);
}

TEST_CASE("edit distance basics") {
  CHECK(edit_distance({1, 2, 3}, {1, 2, 3}) == 0);
  CHECK(edit_distance({1, 2, 3}, {1, 3}) == 1);
  CHECK(edit_distance({}, {1, 2}) == 2);
  CHECK(edit_distance({1, 2}, {2, 1}) == 2);
}

TEST_CASE("ctc loss single-alignment and empty-target closed forms") {
  Graph g;
  // V=2 plus blank; T=1; p(a) = 0.7.
  auto lp = tensor({1, 3}, {std::log(0.7), std::log(0.2), std::log(0.1)}, true);
  auto loss = ctc_loss(g, lp, {0});
  CHECK(loss->data[0] == doctest::Approx(-std::log(0.7)).epsilon(1e-12));

  // Empty target: loss = -sum_t log p_t(blank).
  Rng rng(6);
  auto logits = zeros({4, 3}, true);
  for (auto& v : logits->data) v = rng.uniform(-1, 1);
  Graph g2;
  auto lsm = log_softmax(g2, logits);
  auto l2 = ctc_loss(g2, lsm, {});
  double expect = 0.0;
  for (int64_t t = 0; t < 4; ++t) expect -= lsm->data[t * 3 + 2];
  CHECK(l2->data[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ctc loss equals brute-force path enumeration (T<=6, V<=3, len<=3)") {
  Rng rng(7);
  for (int64_t vocab = 1; vocab <= 3; ++vocab) {
    for (int64_t t_len = 1; t_len <= 6; ++t_len) {
      // Random normalized log-probs over V+1 symbols.
      auto logits = zeros({t_len, vocab + 1});
      for (auto& v : logits->data) v = rng.uniform(-2, 2);
      Graph g0(false);
      auto lp = log_softmax(g0, logits);

      // Enumerate every (V+1)^T path once; accumulate path probability per
      // collapsed sequence (remove repeats, then blanks).
      std::map<std::vector<int64_t>, double> collapsed_prob;
      const int64_t n_paths =
          static_cast<int64_t>(std::pow(vocab + 1, t_len));
      for (int64_t code = 0; code < n_paths; ++code) {
        int64_t c = code;
        double logp = 0.0;
        std::vector<int64_t> collapsed;
        int64_t prev = -1;
        for (int64_t t = 0; t < t_len; ++t) {
          const int64_t sym = c % (vocab + 1);
          c /= vocab + 1;
          logp += lp->data[t * (vocab + 1) + sym];
          if (sym != prev && sym != vocab) collapsed.push_back(sym);
          prev = sym;
        }
        collapsed_prob[collapsed] += std::exp(logp);
      }

      // All targets of length 0..3 over the vocab.
      std::vector<std::vector<int64_t>> targets = {{}};
      for (int len = 1; len <= 3; ++len) {
        std::vector<std::vector<int64_t>> next;
        for (const auto& base : targets) {
          if (static_cast<int>(base.size()) != len - 1) continue;
          for (int64_t v = 0; v < vocab; ++v) {
            auto seq = base;
            seq.push_back(v);
            next.push_back(seq);
          }
        }
        targets.insert(targets.end(), next.begin(), next.end());
      }

      for (const auto& target : targets) {
        Graph g(false);
        if (ctc_min_frames(target) > t_len) {
          CHECK_THROWS_AS(ctc_loss(g, lp, target), std::invalid_argument);
          continue;
        }
        auto loss = ctc_loss(g, lp, target);
        const double brute = collapsed_prob.count(target)
                                 ? collapsed_prob.at(target)
                                 : 0.0;
        REQUIRE(brute > 0.0);
        CHECK(std::fabs(loss->data[0] - (-std::log(brute))) < 1e-10);
      }
    }
  }
}

TEST_CASE("ctc gradients match finite differences") {
  Rng rng(8);
  for (auto target : std::vector<std::vector<int64_t>>{
           {0}, {0, 1}, {1, 1}, {0, 1, 0}, {}}) {
    auto logits = zeros({6, 4}, true);
    for (auto& v : logits->data) v = rng.uniform(-1, 1);
    CHECK(testing::max_grad_discrepancy({logits}, [&](Graph& g) {
            return ctc_loss(g, log_softmax(g, logits), target);
          }) < 1e-4);
  }
}

TEST_CASE("ctc rejects targets that cannot be aligned") {
  Graph g;
  auto lp = zeros({2, 3}, false);
  CHECK_THROWS_AS(ctc_loss(g, lp, {0, 0}), std::invalid_argument);  // needs 3
  CHECK_THROWS_AS(ctc_loss(g, lp, {0, 1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(ctc_loss(g, lp, {5}), std::invalid_argument);  // bad id
}

TEST_CASE("training with zero peak learning rate changes nothing") {
  auto model = build(preset("tiny"), 21);
  auto before = model.named_parameters();
  std::vector<std::vector<double>> saved;
  for (auto& [n, t] : before) saved.push_back(t->data);

  SyntheticTask task;
  task.vocab = 8;
  task.label_len = 4;
  task.feature_dim = 16;
  task.seed = 2;
  TrainOptions opt;
  opt.steps = 5;
  opt.batch_size = 2;
  opt.eval_interval = 0;
  opt.schedule.lr_peak = 0.0;
  opt.optimizer.weight_decay = 5e-4;  // decay is scaled by lr, so inert too
  train(model, task, opt);
  auto after = model.named_parameters();
  for (size_t i = 0; i < after.size(); ++i) {
    CHECK(after[i].second->data == saved[i]);
  }
}

TEST_CASE("a short training run reduces the loss") {
  auto model = build(preset("tiny"), 22);
  SyntheticTask task;
  task.vocab = 8;
  task.label_len = 4;
  task.feature_dim = 16;
  task.seed = 3;
  TrainOptions opt;
  opt.steps = 60;
  opt.batch_size = 4;
  opt.eval_interval = 0;
  opt.seed = 1;
  opt.schedule = {2e-3, 30.0, 1000.0, 1.0};
  auto log = train(model, task, opt);
  REQUIRE(log.records.size() == 60);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 10; ++i) {
    early += log.records[static_cast<size_t>(i)].loss;
    late += log.records[log.records.size() - 1 - static_cast<size_t>(i)].loss;
  }
  CHECK(late < early);
  CHECK(log.to_jsonl().find("\"step\":1,") != std::string::npos);
}

TEST_CASE("vocab mismatch is rejected") {
  auto model = build(preset("tiny"), 23);
  SyntheticTask task;
  task.vocab = 4;  // model expects 8
  task.feature_dim = 16;
  TrainOptions opt;
  opt.steps = 1;
  CHECK_THROWS_AS(train(model, task, opt), std::invalid_argument);
}
