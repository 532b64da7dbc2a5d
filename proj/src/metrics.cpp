#include "pagan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "pagan/linalg.hpp"

namespace pagan {

namespace {

// Sequential unshuffled split ranges; the remainder joins the last split.
std::vector<std::pair<int, int>> split_ranges(const char* who, int n,
                                              int splits) {
  if (splits < 1)
    throw std::invalid_argument(std::string(who) +
                                ": splits must be at least 1");
  if (n < splits)
    throw std::invalid_argument(std::string(who) + ": only " +
                                std::to_string(n) + " rows for " +
                                std::to_string(splits) + " splits");
  const int base = n / splits;
  std::vector<std::pair<int, int>> r;
  r.reserve(static_cast<std::size_t>(splits));
  for (int j = 0; j < splits; ++j)
    r.emplace_back(j * base, j == splits - 1 ? n : (j + 1) * base);
  return r;
}

void check_posteriors(const char* who, const Tensor<double>& p) {
  if (p.shape.size() != 2)
    throw std::invalid_argument(std::string(who) +
                                ": posteriors must be (rows, classes)");
  const int n = p.shape[0], k = p.shape[1];
  const auto& v = *p.values;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      const double x = v[std::size_t(i) * k + j];
      if (x < -1e-6)
        throw std::invalid_argument(std::string(who) + ": row " +
                                    std::to_string(i) +
                                    " has a negative probability");
      s += x;
    }
    if (std::fabs(s - 1.0) > 1e-4)
      throw std::invalid_argument(std::string(who) + ": row " +
                                  std::to_string(i) +
                                  " does not sum to one");
  }
}

// KL between two posterior rows. Only the log arguments are clamped (below,
// at 1e-7), so identical rows cancel term by term to exactly zero.
double kl_row(const double* p, const double* q, int k) {
  double acc = 0.0;
  for (int j = 0; j < k; ++j)
    acc += p[j] * (std::log(std::max(p[j], 1e-7)) -
                   std::log(std::max(q[j], 1e-7)));
  return acc;
}

std::pair<double, double> mean_and_pop_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  return {m, std::sqrt(var / n)};
}

}  // namespace

std::pair<double, double> rid_from_posteriors(const Tensor<double>& p,
                                              const Tensor<double>& q,
                                              int splits) {
  if (p.shape != q.shape)
    throw std::invalid_argument(
        "rid_from_posteriors: posterior sets must pair up one to one");
  check_posteriors("rid_from_posteriors", p);
  check_posteriors("rid_from_posteriors", q);
  const int n = p.shape[0], k = p.shape[1];
  const auto& pv = *p.values;
  const auto& qv = *q.values;
  std::vector<double> per_split;
  for (auto [b, e] : split_ranges("rid_from_posteriors", n, splits)) {
    double acc = 0.0;
    for (int i = b; i < e; ++i)
      acc += kl_row(pv.data() + std::size_t(i) * k,
                    qv.data() + std::size_t(i) * k, k);
    per_split.push_back(std::exp(acc / (e - b)));
  }
  return mean_and_pop_std(per_split);
}

std::pair<double, double> is_from_posteriors(const Tensor<double>& p,
                                             int splits) {
  check_posteriors("is_from_posteriors", p);
  const int n = p.shape[0], k = p.shape[1];
  const auto& pv = *p.values;
  std::vector<double> per_split;
  std::vector<double> marginal(static_cast<std::size_t>(k));
  for (auto [b, e] : split_ranges("is_from_posteriors", n, splits)) {
    std::fill(marginal.begin(), marginal.end(), 0.0);
    for (int i = b; i < e; ++i)
      for (int j = 0; j < k; ++j)
        marginal[std::size_t(j)] += pv[std::size_t(i) * k + j];
    for (double& m : marginal) m /= (e - b);
    double acc = 0.0;
    for (int i = b; i < e; ++i)
      acc += kl_row(pv.data() + std::size_t(i) * k, marginal.data(), k);
    per_split.push_back(std::exp(acc / (e - b)));
  }
  return mean_and_pop_std(per_split);
}

namespace {

// Column means of a (n, d) matrix.
std::vector<double> col_means(const std::vector<double>& x, int n, int d) {
  std::vector<double> m(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m[std::size_t(j)] += x[std::size_t(i) * d + j];
  for (double& v : m) v /= n;
  return m;
}

// Unbiased covariance with a 1e-6 ridge.
std::vector<double> covariance(const std::vector<double>& x, int n, int d,
                               const std::vector<double>& mean) {
  std::vector<double> c(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      const double xa = x[std::size_t(i) * d + a] - mean[std::size_t(a)];
      for (int b = a; b < d; ++b)
        c[std::size_t(a) * d + b] +=
            xa * (x[std::size_t(i) * d + b] - mean[std::size_t(b)]);
    }
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      const double v = c[std::size_t(a) * d + b] / (n - 1);
      c[std::size_t(a) * d + b] = v;
      c[std::size_t(b) * d + a] = v;
    }
  for (int a = 0; a < d; ++a) c[std::size_t(a) * d + a] += 1e-6;
  return c;
}

std::vector<double> matmul_sq(const std::vector<double>& a,
                              const std::vector<double>& b, int d) {
  std::vector<double> c(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double aik = a[std::size_t(i) * d + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < d; ++j)
        c[std::size_t(i) * d + j] += aik * b[std::size_t(k) * d + j];
    }
  return c;
}

// Symmetric PSD square root via eigendecomposition, negative eigenvalues
// clamped to zero.
std::vector<double> sqrtm_psd(const std::vector<double>& a, int d) {
  SymEig e = sym_eig(a, d);
  for (double& l : e.values) l = std::sqrt(std::max(l, 0.0));
  std::vector<double> s(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k)
        acc += e.vectors[std::size_t(i) * d + k] * e.values[std::size_t(k)] *
               e.vectors[std::size_t(j) * d + k];
      s[std::size_t(i) * d + j] = acc;
      s[std::size_t(j) * d + i] = acc;
    }
  return s;
}

}  // namespace

double fid_from_features(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[1])
    throw std::invalid_argument(
        "fid_from_features: feature sets must be (samples, dim) with equal dim");
  const int d = a.shape[1];
  const int na = a.shape[0], nb = b.shape[0];
  if (na < d + 1 || nb < d + 1)
    throw std::invalid_argument(
        "fid_from_features: need at least dim+1 samples per set (dim " +
        std::to_string(d) + ", got " + std::to_string(na) + " and " +
        std::to_string(nb) + ")");

  const auto& av = *a.values;
  const auto& bv = *b.values;
  const std::vector<double> ma = col_means(av, na, d);
  const std::vector<double> mb = col_means(bv, nb, d);
  const std::vector<double> ca = covariance(av, na, d, ma);
  const std::vector<double> cb = covariance(bv, nb, d, mb);

  double mean_term = 0.0;
  for (int j = 0; j < d; ++j) {
    const double diff = ma[std::size_t(j)] - mb[std::size_t(j)];
    mean_term += diff * diff;
  }
  double tr_a = 0.0, tr_b = 0.0;
  for (int j = 0; j < d; ++j) {
    tr_a += ca[std::size_t(j) * d + j];
    tr_b += cb[std::size_t(j) * d + j];
  }

  const std::vector<double> sa = sqrtm_psd(ca, d);
  std::vector<double> m = matmul_sq(sa, matmul_sq(cb, sa, d), d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double v =
          0.5 * (m[std::size_t(i) * d + j] + m[std::size_t(j) * d + i]);
      m[std::size_t(i) * d + j] = v;
      m[std::size_t(j) * d + i] = v;
    }
  SymEig e = sym_eig(std::move(m), d);
  double tr_sqrt = 0.0;
  for (double l : e.values) tr_sqrt += std::sqrt(std::max(l, 0.0));

  return mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
}

namespace {

// Builds the probe topology: the shared stride-2 conv stack (a no-op for
// vector-like items), a dense feature layer, then the class logits.
NetworkSpec probe_spec(const Shape& item, int width, int feature_dim,
                       int classes) {
  NetworkSpec s = conv_encoder_like_spec("probe", item, width, feature_dim,
                                         Act::relu, Act::relu, false);
  s.layers.push_back({LayerSpec::Kind::dense, feature_dim, classes, 0, 1, 0,
                      Act::none, false, {}});
  validate_spec(s);
  return s;
}

Tensor<float> gather_items(const Tensor<float>& items,
                           const std::vector<int>& idx) {
  const std::int64_t per = items.numel() / items.shape[0];
  std::vector<float> out(static_cast<std::size_t>(per) * idx.size());
  const auto& v = *items.values;
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(v.begin() + idx[i] * per, per,
                out.begin() + static_cast<std::int64_t>(i) * per);
  Shape s = items.shape;
  s[0] = static_cast<int>(idx.size());
  return Tensor<float>(std::move(s), std::move(out));
}

double accuracy_of(ProbeClassifier<float>& probe, const Tensor<float>& items,
                   const std::vector<int>& labels) {
  const int n = items.shape[0];
  const int chunk = 256;
  int hits = 0;
  for (int b = 0; b < n; b += chunk) {
    std::vector<int> idx(static_cast<std::size_t>(std::min(chunk, n - b)));
    std::iota(idx.begin(), idx.end(), b);
    Tensor<float> part = gather_items(items, idx);
    Tensor<float> post = probe.posterior(part);
    const int k = post.shape[1];
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const float* row = post.values->data() + i * static_cast<std::size_t>(k);
      const int arg = static_cast<int>(
          std::max_element(row, row + k) - row);
      if (arg == labels[static_cast<std::size_t>(idx[i])]) ++hits;
    }
  }
  return n > 0 ? static_cast<double>(hits) / n : 0.0;
}

}  // namespace

ProbeResult train_probe_classifier(const Dataset& data,
                                   const ProbeConfig& cfg) {
  if (data.num_classes < 2)
    throw std::invalid_argument(
        "train_probe_classifier: need at least 2 classes");
  if (data.items.shape.size() != 4 || data.items.shape[0] < 2)
    throw std::invalid_argument(
        "train_probe_classifier: expected a batch of (C,H,W) items");
  const int n = data.items.shape[0];
  if (static_cast<int>(data.labels.size()) != n)
    throw std::invalid_argument(
        "train_probe_classifier: labels must align with items");
  if (cfg.holdout_fraction < 0.0 || cfg.holdout_fraction > 0.9)
    throw std::invalid_argument(
        "train_probe_classifier: holdout_fraction must lie in [0, 0.9]");
  if (cfg.steps < 0 || cfg.batch_size < 1 || !(cfg.lr > 0.0))
    throw std::invalid_argument(
        "train_probe_classifier: bad optimization settings");
  for (int lab : data.labels)
    if (lab < 0 || lab >= data.num_classes)
      throw std::invalid_argument(
          "train_probe_classifier: label out of range");

  // Deterministic shuffle, then a trailing holdout block.
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, 101));
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);
  const int nh = static_cast<int>(n * cfg.holdout_fraction);
  const int ntr = n - nh;
  std::vector<int> train_idx(perm.begin(), perm.begin() + ntr);

  const Shape item(data.items.shape.begin() + 1, data.items.shape.end());
  ProbeResult result;
  Rng init_rng(derive_seed(cfg.seed, 102));
  result.probe.net = Network<float>(
      probe_spec(item, cfg.width, cfg.feature_dim, data.num_classes),
      init_rng);
  result.probe.feature_layer =
      static_cast<int>(result.probe.net.spec.layers.size()) - 2;
  result.probe.num_classes = data.num_classes;
  Network<float>& net = result.probe.net;

  // Adam state per parameter tensor.
  std::vector<Tensor<float>*> params = net.parameters();
  std::vector<std::vector<float>> ms(params.size()), vs(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    ms[i].assign(params[i]->values->size(), 0.0f);
    vs[i].assign(params[i]->values->size(), 0.0f);
  }

  Rng batch_rng(derive_seed(cfg.seed, 103));
  Rng aug_rng(derive_seed(cfg.seed, 104));
  const float inv_b = 1.0f / static_cast<float>(cfg.batch_size);
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<int> idx(static_cast<std::size_t>(cfg.batch_size));
    for (int& i : idx)
      i = train_idx[static_cast<std::size_t>(batch_rng.uniform_int(ntr))];
    Tensor<float> batch = gather_items(data.items, idx);
    Tensor<float> x = augment(batch, cfg.augment, aug_rng);

    std::vector<float> mask(static_cast<std::size_t>(cfg.batch_size) *
                                data.num_classes,
                            0.0f);
    for (int i = 0; i < cfg.batch_size; ++i)
      mask[static_cast<std::size_t>(i) * data.num_classes +
           data.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(
               i)])]] = 1.0f;
    Tensor<float> onehot({cfg.batch_size, data.num_classes}, std::move(mask));

    TapeScope<float> scope;
    Tensor<float> post = softmax(net.forward(x));
    Tensor<float> picked =
        mul(onehot, log_t(clamp(post, 1e-7f, 1.0f)));
    Tensor<float> loss = mul_scalar(sum(picked), -inv_b);
    auto grads = scope.tape().backward(loss);

    const double bc1 = 1.0 - std::pow(cfg.beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor<float> g = grads.get_or_zeros(*params[pi]);
      auto& pv = *params[pi]->values;
      const auto& gv = *g.values;
      for (std::size_t j = 0; j < pv.size(); ++j) {
        ms[pi][j] = static_cast<float>(cfg.beta1 * ms[pi][j] +
                                       (1.0 - cfg.beta1) * gv[j]);
        vs[pi][j] = static_cast<float>(cfg.beta2 * vs[pi][j] +
                                       (1.0 - cfg.beta2) * gv[j] * gv[j]);
        const double mhat = ms[pi][j] / bc1;
        const double vhat = vs[pi][j] / bc2;
        pv[j] -= static_cast<float>(cfg.lr * mhat /
                                    (std::sqrt(vhat) + 1e-8));
      }
    }
  }

  // Held-out evaluation, clean and augmented; with no holdout the full
  // training set is scored instead.
  std::vector<int> eval_idx =
      nh > 0 ? std::vector<int>(perm.begin() + ntr, perm.end()) : perm;
  std::vector<int> eval_labels(eval_idx.size());
  for (std::size_t i = 0; i < eval_idx.size(); ++i)
    eval_labels[i] = data.labels[static_cast<std::size_t>(eval_idx[i])];
  Tensor<float> eval_items = gather_items(data.items, eval_idx);
  result.holdout_accuracy = accuracy_of(result.probe, eval_items, eval_labels);
  Rng eval_aug_rng(derive_seed(cfg.seed, 105));
  Tensor<float> eval_aug = augment(eval_items, cfg.augment, eval_aug_rng);
  result.augmented_accuracy =
      accuracy_of(result.probe, eval_aug, eval_labels);
  return result;
}

MetricReport compute_metrics(ProbeClassifier<float>& probe,
                             const Tensor<float>& originals,
                             const Tensor<float>& reconstructions,
                             const Tensor<float>& samples, int splits) {
  MetricReport r;
  std::tie(r.rid_mean, r.rid_std) =
      rid(probe, originals, reconstructions, splits);
  std::tie(r.is_mean, r.is_std) = inception_score(probe, samples, splits);
  r.fid = fid(probe, originals, samples);
  r.rmse = rmse(originals, reconstructions);
  return r;
}

void write_metric_report(const MetricReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("write_metric_report: cannot write " + path);
  out << "rid_mean\t" << format_double(rep.rid_mean) << "\n"
      << "rid_std\t" << format_double(rep.rid_std) << "\n"
      << "is_mean\t" << format_double(rep.is_mean) << "\n"
      << "is_std\t" << format_double(rep.is_std) << "\n"
      << "fid\t" << format_double(rep.fid) << "\n"
      << "rmse\t" << format_double(rep.rmse) << "\n";
  if (!out)
    throw std::runtime_error("write_metric_report: short write to " + path);
}

}  // namespace pagan
