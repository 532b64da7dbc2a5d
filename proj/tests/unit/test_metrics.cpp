#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pagan/augment.hpp"
#include "pagan/data_io.hpp"
#include "pagan/metrics.hpp"
#include "pagan/rng.hpp"

using pagan::Dataset;
using pagan::Rng;
using pagan::Shape;
using TensorD = pagan::Tensor<double>;

namespace {

// Random rows on the probability simplex with entries bounded well away
// from the 1e-7 log clamp, so exact KL identities hold.
TensorD simplex_rows(int n, int k, std::uint64_t seed) {
  Rng r(seed);
  std::vector<double> v(std::size_t(n) * k);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      const double x = 0.05 + r.uniform();
      v[std::size_t(i) * k + j] = x;
      s += x;
    }
    for (int j = 0; j < k; ++j) v[std::size_t(i) * k + j] /= s;
  }
  return TensorD({n, k}, std::move(v));
}

double kl_direct(const double* p, const double* q, int k) {
  double acc = 0.0;
  for (int j = 0; j < k; ++j)
    acc += p[j] * (std::log(std::max(p[j], 1e-7)) -
                   std::log(std::max(q[j], 1e-7)));
  return acc;
}

}  // namespace

TEST_CASE("identical posteriors score an exact unit rid") {
  TensorD p = simplex_rows(30, 5, 3);
  auto [mean, sd] = pagan::rid_from_posteriors(p, p, 10);
  CHECK(mean == 1.0);
  CHECK(sd == 0.0);

  TensorD u({20, 4}, std::vector<double>(80, 0.25));
  auto [umean, usd] = pagan::rid_from_posteriors(u, u, 10);
  CHECK(umean == 1.0);
  CHECK(usd == 0.0);
}

TEST_CASE("rid reproduces the two-class closed form") {
  std::vector<double> pv, qv;
  for (int i = 0; i < 20; ++i) {
    pv.insert(pv.end(), {0.9, 0.1});
    qv.insert(qv.end(), {0.5, 0.5});
  }
  TensorD p({20, 2}, pv), q({20, 2}, qv);
  auto [mean, sd] = pagan::rid_from_posteriors(p, q, 10);
  const double want = std::exp(0.9 * std::log(1.8) + 0.1 * std::log(0.2));
  CHECK(mean == doctest::Approx(want).epsilon(1e-12));
  CHECK(sd <= 1e-12);
}

TEST_CASE("rid validates its inputs") {
  TensorD p = simplex_rows(12, 3, 4);
  TensorD q = simplex_rows(13, 3, 5);
  CHECK_THROWS_AS(pagan::rid_from_posteriors(p, q, 4), std::invalid_argument);
  CHECK_THROWS_AS(pagan::rid_from_posteriors(p, p, 13), std::invalid_argument);
  CHECK_THROWS_AS(pagan::rid_from_posteriors(p, p, 0), std::invalid_argument);
  TensorD bad({2, 2}, {0.9, 0.3, 0.5, 0.5});
  CHECK_THROWS_AS(pagan::rid_from_posteriors(bad, bad, 1),
                  std::invalid_argument);
  TensorD neg({2, 2}, {1.1, -0.1, 0.5, 0.5});
  CHECK_THROWS_AS(pagan::rid_from_posteriors(neg, neg, 1),
                  std::invalid_argument);
}

TEST_CASE("rid never drops below one on clean posteriors") {
  for (int rep = 0; rep < 50; ++rep) {
    TensorD p = simplex_rows(20, 4, 100 + rep);
    TensorD q = simplex_rows(20, 4, 200 + rep);
    auto [mean, sd] = pagan::rid_from_posteriors(p, q, 4);
    CHECK(mean >= 1.0 - 1e-9);
    CHECK(sd >= 0.0);
  }
}

TEST_CASE("rid ignores order within splits and order of splits") {
  TensorD p = simplex_rows(40, 5, 6);
  TensorD q = simplex_rows(40, 5, 7);
  auto base = pagan::rid_from_posteriors(p, q, 4);

  auto permute = [](const TensorD& t, int begin, int end, bool reverse_block,
                    bool swap_with_next) {
    std::vector<double> v = *t.values;
    const int k = t.shape[1];
    if (reverse_block) {
      for (int a = begin, b = end - 1; a < b; ++a, --b)
        for (int j = 0; j < k; ++j)
          std::swap(v[std::size_t(a) * k + j], v[std::size_t(b) * k + j]);
    }
    if (swap_with_next) {
      const int len = end - begin;
      for (int i = 0; i < len; ++i)
        for (int j = 0; j < k; ++j)
          std::swap(v[std::size_t(begin + i) * k + j],
                    v[std::size_t(begin + len + i) * k + j]);
    }
    return TensorD(t.shape, std::move(v));
  };

  // Same shuffle inside split 2 of both sets.
  auto within = pagan::rid_from_posteriors(permute(p, 20, 30, true, false),
                                           permute(q, 20, 30, true, false), 4);
  CHECK(within.first == doctest::Approx(base.first).epsilon(1e-14));
  CHECK(within.second == doctest::Approx(base.second).epsilon(1e-12));

  // Whole split 0 exchanged with split 1 in both sets.
  auto swapped = pagan::rid_from_posteriors(permute(p, 0, 10, false, true),
                                            permute(q, 0, 10, false, true), 4);
  CHECK(swapped.first == doctest::Approx(base.first).epsilon(1e-14));
  CHECK(swapped.second == doctest::Approx(base.second).epsilon(1e-12));
}

TEST_CASE("uniform posteriors give a unit inception score") {
  TensorD u({30, 6}, std::vector<double>(180, 1.0 / 6.0));
  auto [mean, sd] = pagan::is_from_posteriors(u, 10);
  CHECK(mean == 1.0);
  CHECK(sd == 0.0);
}

TEST_CASE("one-hot posteriors spread over k classes score k") {
  const int k = 10, n = 100;
  std::vector<double> v(std::size_t(n) * k, 0.0);
  for (int i = 0; i < n; ++i) v[std::size_t(i) * k + i % k] = 1.0;
  TensorD p({n, k}, std::move(v));
  auto [mean, sd] = pagan::is_from_posteriors(p, 10);
  CHECK(mean == doctest::Approx(double(k)).epsilon(1e-6));
  CHECK(sd <= 1e-9);
}

TEST_CASE("inception score matches a direct re-summation") {
  TensorD p = simplex_rows(30, 4, 8);
  auto [mean, sd] = pagan::is_from_posteriors(p, 3);
  const auto& pv = *p.values;
  std::vector<double> per;
  for (int s = 0; s < 3; ++s) {
    const int b = s * 10, e = b + 10;
    std::vector<double> marg(4, 0.0);
    for (int i = b; i < e; ++i)
      for (int j = 0; j < 4; ++j) marg[std::size_t(j)] += pv[std::size_t(i) * 4 + j] / 10.0;
    double acc = 0.0;
    for (int i = b; i < e; ++i)
      acc += kl_direct(pv.data() + std::size_t(i) * 4, marg.data(), 4) / 10.0;
    per.push_back(std::exp(acc));
  }
  const double m = (per[0] + per[1] + per[2]) / 3.0;
  double var = 0.0;
  for (double x : per) var += (x - m) * (x - m) / 3.0;
  CHECK(mean == doctest::Approx(m).epsilon(1e-10));
  CHECK(sd == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
}

TEST_CASE("inception score is invariant under class relabeling") {
  TensorD p = simplex_rows(24, 5, 9);
  auto base = pagan::is_from_posteriors(p, 4);
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  std::vector<double> v(p.values->size());
  for (int i = 0; i < 24; ++i)
    for (int j = 0; j < 5; ++j)
      v[std::size_t(i) * 5 + perm[std::size_t(j)]] =
          (*p.values)[std::size_t(i) * 5 + j];
  TensorD r({24, 5}, std::move(v));
  auto rel = pagan::is_from_posteriors(r, 4);
  CHECK(rel.first == doctest::Approx(base.first).epsilon(1e-12));
  CHECK(rel.second == doctest::Approx(base.second).epsilon(1e-12));

  CHECK_THROWS_AS(pagan::is_from_posteriors(p, 25), std::invalid_argument);
}

TEST_CASE("fid vanishes on identical sets and is symmetric") {
  Rng r(10);
  std::vector<double> v(60 * 5);
  for (double& x : v) x = r.normal();
  TensorD a({60, 5}, v);
  CHECK(std::fabs(pagan::fid_from_features(a, a)) <= 1e-6);

  std::vector<double> w(60 * 5);
  for (double& x : w) x = 0.4 + 1.3 * r.normal();
  TensorD b({60, 5}, std::move(w));
  const double ab = pagan::fid_from_features(a, b);
  const double ba = pagan::fid_from_features(b, a);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-6));
  CHECK(ab > 0.0);

  TensorD tiny({4, 5}, std::vector<double>(20, 0.0));
  CHECK_THROWS_AS(pagan::fid_from_features(tiny, a), std::invalid_argument);
  CHECK_THROWS_AS(pagan::fid_from_features(a, tiny), std::invalid_argument);
}

TEST_CASE("a pure mean shift moves fid by its square") {
  Rng r(11);
  const int n = 10000, d = 5;
  std::vector<double> v(std::size_t(n) * d);
  for (double& x : v) x = r.normal();
  std::vector<double> w = v;
  const double shift = 1.5;
  for (int i = 0; i < n; ++i) w[std::size_t(i) * d] += shift;
  TensorD a({n, d}, std::move(v));
  TensorD b({n, d}, std::move(w));
  CHECK(pagan::fid_from_features(a, b) ==
        doctest::Approx(shift * shift).epsilon(1e-3 / (shift * shift)));
}

TEST_CASE("fid tracks the closed form of known diagonal gaussians") {
  const int n = 20000, d = 5;
  const double mu2[5] = {0.6, -0.3, 0.2, 0.0, 0.1};
  const double sd2[5] = {1.2, 0.8, 1.0, 1.1, 0.9};
  Rng r(12);
  std::vector<double> av(std::size_t(n) * d), bv(std::size_t(n) * d);
  for (double& x : av) x = r.normal();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      bv[std::size_t(i) * d + j] = mu2[j] + sd2[j] * r.normal();
  double want = 0.0;
  for (int j = 0; j < d; ++j)
    want += mu2[j] * mu2[j] + (1.0 - sd2[j]) * (1.0 - sd2[j]);
  TensorD a({n, d}, std::move(av));
  TensorD b({n, d}, std::move(bv));
  const double got = pagan::fid_from_features(a, b);
  CHECK(got == doctest::Approx(want).epsilon(0.05 / want));
}

TEST_CASE("rmse closed forms and re-summation") {
  TensorD a({3, 1, 2, 2}, {0.1, -0.2, 0.3, 0.4, 0.0, 1.0, -1.0, 0.5, 0.2,
                           0.2, 0.2, 0.2});
  CHECK(pagan::rmse(a, a) == 0.0);
  std::vector<double> shifted = *a.values;
  for (double& x : shifted) x += 0.5;
  TensorD b(a.shape, std::move(shifted));
  CHECK(pagan::rmse(a, b) == doctest::Approx(0.5).epsilon(1e-12));

  Rng r(13);
  std::vector<double> cv(a.values->size());
  for (double& x : cv) x = r.normal();
  TensorD c(a.shape, std::move(cv));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values->size(); ++i) {
    const double dd = (*a.values)[i] - (*c.values)[i];
    acc += dd * dd;
  }
  CHECK(pagan::rmse(a, c) ==
        doctest::Approx(std::sqrt(acc / double(a.values->size())))
            .epsilon(1e-12));
  TensorD d2({2, 2}, std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(pagan::rmse(a, d2), std::invalid_argument);
}

TEST_CASE("the probe classifier learns the shape classes robustly") {
  Rng data_rng(14);
  Dataset shapes = pagan::synthetic_shapes(60, 16, data_rng);
  pagan::ProbeConfig pc;
  pc.steps = 250;
  pc.seed = 15;
  pagan::ProbeResult res = pagan::train_probe_classifier(shapes, pc);

  // Posterior rows live on the simplex.
  pagan::Tensor<float> post =
      res.probe.posterior(pagan::Tensor<float>(shapes.items));
  for (int i = 0; i < post.shape[0]; ++i) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) {
      const float x = (*post.values)[std::size_t(i) * 4 + j];
      CHECK(x >= 0.0f);
      s += x;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }

  CHECK(res.holdout_accuracy >= 0.85);
  CHECK(res.augmented_accuracy >= res.holdout_accuracy - 0.05);

  pagan::Tensor<float> feats = res.probe.features(shapes.items);
  CHECK(feats.shape == Shape{240, 32});
}

TEST_CASE("probe training is deterministic and validates its dataset") {
  Rng data_rng(16);
  Dataset shapes = pagan::synthetic_shapes(10, 16, data_rng);
  pagan::ProbeConfig pc;
  pc.steps = 20;
  pc.seed = 17;
  pagan::ProbeResult r1 = pagan::train_probe_classifier(shapes, pc);
  pagan::ProbeResult r2 = pagan::train_probe_classifier(shapes, pc);
  CHECK(*r1.probe.net.params[0].W.values == *r2.probe.net.params[0].W.values);
  CHECK(r1.holdout_accuracy == r2.holdout_accuracy);

  Dataset unlabeled = shapes;
  unlabeled.num_classes = 1;
  CHECK_THROWS_AS(pagan::train_probe_classifier(unlabeled, pc),
                  std::invalid_argument);
  Dataset misaligned = shapes;
  misaligned.labels.pop_back();
  CHECK_THROWS_AS(pagan::train_probe_classifier(misaligned, pc),
                  std::invalid_argument);
  Dataset out_of_range = shapes;
  out_of_range.labels[0] = 9;
  CHECK_THROWS_AS(pagan::train_probe_classifier(out_of_range, pc),
                  std::invalid_argument);
}

TEST_CASE("rid ranks augmentations closer than mismatched images") {
  Rng data_rng(18);
  Dataset shapes = pagan::synthetic_shapes(60, 16, data_rng);
  pagan::ProbeConfig pc;
  pc.steps = 250;
  pc.seed = 19;
  pagan::ProbeResult res = pagan::train_probe_classifier(shapes, pc);

  std::vector<int> head(200);
  std::iota(head.begin(), head.end(), 0);
  std::vector<float> ov(std::size_t(200) * 256);
  std::copy_n(shapes.items.values->begin(), ov.size(), ov.begin());
  pagan::Tensor<float> originals({200, 1, 16, 16}, std::move(ov));

  pagan::AugmentConfig ac;
  Rng aug_rng(20);
  pagan::Tensor<float> augmented = pagan::augment(originals, ac, aug_rng);

  // Mismatch by rotating the batch one position: every original is paired
  // with a different item (of a different class three times out of four).
  std::vector<float> sv(originals.values->size());
  std::copy_n(originals.values->begin() + 256, sv.size() - 256, sv.begin());
  std::copy_n(originals.values->begin(), 256, sv.end() - 256);
  pagan::Tensor<float> shuffled({200, 1, 16, 16}, std::move(sv));

  auto aug_rid = pagan::rid(res.probe, originals, augmented, 10);
  auto mis_rid = pagan::rid(res.probe, originals, shuffled, 10);
  CHECK(aug_rid.first < mis_rid.first);
}

TEST_CASE("the combined report satisfies its range invariants") {
  Rng data_rng(21);
  Dataset shapes = pagan::synthetic_shapes(30, 16, data_rng);
  pagan::ProbeConfig pc;
  pc.steps = 120;
  pc.seed = 22;
  pagan::ProbeResult res = pagan::train_probe_classifier(shapes, pc);

  pagan::Tensor<float> originals(shapes.items);
  std::vector<float> noisy = *originals.values;
  Rng noise(23);
  for (float& v : noisy)
    v = std::min(1.0f, std::max(-1.0f, v + 0.05f * float(noise.normal())));
  pagan::Tensor<float> recons(originals.shape, std::move(noisy));

  pagan::MetricReport rep =
      pagan::compute_metrics(res.probe, originals, recons, originals, 10);
  CHECK(std::isfinite(rep.rid_mean));
  CHECK(std::isfinite(rep.rid_std));
  CHECK(std::isfinite(rep.is_mean));
  CHECK(std::isfinite(rep.is_std));
  CHECK(std::isfinite(rep.fid));
  CHECK(std::isfinite(rep.rmse));
  CHECK(rep.rid_mean >= 1.0 - 1e-4);  // clamp effects only
  CHECK(rep.is_mean >= 1.0 - 1e-9);
  CHECK(rep.is_mean <= 4.0 + 1e-9);
  CHECK(rep.fid >= -1e-6);
  CHECK(rep.fid <= 1e-3);  // samples are the originals themselves
  CHECK(rep.rmse == doctest::Approx(0.05).epsilon(0.2));
}
