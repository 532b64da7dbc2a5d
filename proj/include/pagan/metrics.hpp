#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pagan/augment.hpp"
#include "pagan/data_io.hpp"
#include "pagan/nets.hpp"
#include "pagan/rng.hpp"
#include "pagan/tensor.hpp"

namespace pagan {

struct MetricReport {
  double rid_mean = 0.0;
  double rid_std = 0.0;
  double is_mean = 0.0;
  double is_std = 0.0;
  double fid = 0.0;
  double rmse = 0.0;
};

// One "name<TAB>value" line per field, shortest round-trip number format.
void write_metric_report(const MetricReport& rep, const std::string& path);

// A small classifier whose class posteriors and penultimate activations
// stand in for the reference network the sample-quality metrics are usually
// computed against.
template <typename T>
struct ProbeClassifier {
  Network<T> net;
  int feature_layer = -1;  // layer whose post-activation is the feature tap
  int num_classes = 0;

  // (N, K) rows on the probability simplex.
  Tensor<T> posterior(const Tensor<T>& items) {
    return softmax(net.forward(items));
  }

  // (N, F) penultimate activations for distribution distances.
  Tensor<T> features(const Tensor<T>& items) {
    typename Network<T>::ForwardCache cache;
    net.forward(items, {}, &cache);
    return cache.post[static_cast<std::size_t>(feature_layer)];
  }
};

struct ProbeConfig {
  int steps = 400;
  int batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double holdout_fraction = 0.2;
  int feature_dim = 32;
  int width = 8;  // base conv channels / MLP hidden width
  AugmentConfig augment;
  std::uint64_t seed = 1;
};

struct ProbeResult {
  ProbeClassifier<float> probe;
  double holdout_accuracy = 0.0;
  double augmented_accuracy = 0.0;  // same held-out items, augmented once
};

// Trains the probe on a labeled dataset with the same augmentation pipeline
// the adversarial games use, so its posteriors are stable under crops.
ProbeResult train_probe_classifier(const Dataset& data, const ProbeConfig& cfg);

// --- Core computations over plain posterior / feature matrices -------------

// Reconstruction-inversion distance over aligned posterior rows: per split,
// exp(mean KL(p_row || q_row)); returns mean and population std across the
// sequential unshuffled splits (remainder rows join the last split). Log
// arguments are clamped below at 1e-7; identical rows score exactly zero.
std::pair<double, double> rid_from_posteriors(const Tensor<double>& p,
                                              const Tensor<double>& q,
                                              int splits = 10);

// Per split, exp(mean KL(row || split marginal)); mean and population std.
std::pair<double, double> is_from_posteriors(const Tensor<double>& p,
                                             int splits = 10);

// Fréchet distance between gaussian fits of two feature sets (rows =
// samples): ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2),
// with a 1e-6 ridge on both covariances and eigenvalue clamping at zero.
double fid_from_features(const Tensor<double>& a, const Tensor<double>& b);

// --- Probe-backed wrappers -------------------------------------------------

template <typename T>
Tensor<double> to_double(const Tensor<T>& t) {
  std::vector<double> v(t.values->begin(), t.values->end());
  return Tensor<double>(t.shape, std::move(v));
}

template <typename T>
std::pair<double, double> rid(ProbeClassifier<T>& probe,
                              const Tensor<T>& originals,
                              const Tensor<T>& reconstructions,
                              int splits = 10) {
  if (originals.shape != reconstructions.shape)
    throw std::invalid_argument(
        "rid: originals and reconstructions must pair up one to one");
  return rid_from_posteriors(to_double(probe.posterior(originals)),
                             to_double(probe.posterior(reconstructions)),
                             splits);
}

template <typename T>
std::pair<double, double> inception_score(ProbeClassifier<T>& probe,
                                          const Tensor<T>& samples,
                                          int splits = 10) {
  return is_from_posteriors(to_double(probe.posterior(samples)), splits);
}

template <typename T>
double fid(ProbeClassifier<T>& probe, const Tensor<T>& a, const Tensor<T>& b) {
  return fid_from_features(to_double(probe.features(a)),
                           to_double(probe.features(b)));
}

// Root mean squared per-element difference, accumulated in double.
template <typename T>
double rmse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument("rmse: shapes must match");
  const auto& av = *a.values;
  const auto& bv = *b.values;
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = double(av[i]) - double(bv[i]);
    acc += d * d;
  }
  return av.empty() ? 0.0 : std::sqrt(acc / double(av.size()));
}

// One-stop report: RID over original/reconstruction pairs, IS and FID of
// model samples against the originals, and pixel RMSE.
MetricReport compute_metrics(ProbeClassifier<float>& probe,
                             const Tensor<float>& originals,
                             const Tensor<float>& reconstructions,
                             const Tensor<float>& samples, int splits = 10);

}  // namespace pagan
