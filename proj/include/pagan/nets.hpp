#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pagan/rng.hpp"
#include "pagan/tensor.hpp"

namespace pagan {

// Network definitions for the five players: generator, encoder (factorized
// normal head), and the three discriminators (data, latent, pair), plus
// spectral normalization for discriminator weights.

enum class Act { none, relu, lrelu, sigmoid, tanh_act };

enum class PairFusion { width, channel };

struct LayerSpec {
  enum class Kind { dense, conv, convt, flatten, unflatten };
  Kind kind = Kind::dense;
  int in = 0, out = 0;  // dense: features; conv/convt: channels
  int k = 0, stride = 1, pad = 0;
  Act act = Act::none;
  bool spectral_norm = false;
  Shape target;  // unflatten: per-sample (C,H,W)
};

struct NetworkSpec {
  std::string name;
  Shape input_shape;   // per-sample
  Shape output_shape;  // per-sample, filled by validate_spec
  std::vector<LayerSpec> layers;
};

// Walks the layer list symbolically, throwing on any shape incompatibility,
// and records the resulting per-sample output shape.
inline void validate_spec(NetworkSpec& spec) {
  Shape s = spec.input_shape;
  auto fail = [&](std::size_t li, const std::string& why) {
    throw std::invalid_argument("NetworkSpec '" + spec.name + "' layer " +
                                std::to_string(li) + ": " + why);
  };
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    switch (l.kind) {
      case LayerSpec::Kind::dense:
        if (s.size() != 1) fail(li, "dense needs flat input, have " + shape_str(s));
        if (s[0] != l.in)
          fail(li, "dense expects " + std::to_string(l.in) + " features, have " +
                       std::to_string(s[0]));
        if (l.out <= 0) fail(li, "dense fan-out must be positive");
        s = {l.out};
        break;
      case LayerSpec::Kind::conv: {
        if (s.size() != 3) fail(li, "conv needs (C,H,W) input, have " + shape_str(s));
        if (s[0] != l.in) fail(li, "conv channel mismatch");
        if (l.k < 1 || l.stride < 1 || l.pad < 0) fail(li, "bad conv geometry");
        const int h = (s[1] + 2 * l.pad - l.k) / l.stride + 1;
        const int w = (s[2] + 2 * l.pad - l.k) / l.stride + 1;
        if (l.k > s[1] + 2 * l.pad || l.k > s[2] + 2 * l.pad)
          fail(li, "kernel exceeds padded input");
        s = {l.out, h, w};
        break;
      }
      case LayerSpec::Kind::convt: {
        if (s.size() != 3) fail(li, "convt needs (C,H,W) input, have " + shape_str(s));
        if (s[0] != l.in) fail(li, "convt channel mismatch");
        const int h = (s[1] - 1) * l.stride - 2 * l.pad + l.k;
        const int w = (s[2] - 1) * l.stride - 2 * l.pad + l.k;
        if (h < 1 || w < 1) fail(li, "convt output collapses");
        s = {l.out, h, w};
        break;
      }
      case LayerSpec::Kind::flatten:
        if (s.size() != 3) fail(li, "flatten needs (C,H,W) input");
        s = {static_cast<int>(shape_numel(s))};
        break;
      case LayerSpec::Kind::unflatten:
        if (s.size() != 1) fail(li, "unflatten needs flat input");
        if (l.target.size() != 3 || shape_numel(l.target) != s[0])
          fail(li, "unflatten target " + shape_str(l.target) +
                       " does not hold " + std::to_string(s[0]) + " values");
        s = l.target;
        break;
    }
  }
  spec.output_shape = s;
}

namespace detail {

inline bool layer_has_params(const LayerSpec& l) {
  return l.kind == LayerSpec::Kind::dense || l.kind == LayerSpec::Kind::conv ||
         l.kind == LayerSpec::Kind::convt;
}

// Power iteration on a row-major m x n matrix; u has length m. Returns the
// spectral-norm estimate and leaves u/v as the current singular vector pair.
// A zero matrix leaves u untouched and reports sigma 0.
template <typename T>
double power_iteration(const T* M, int m, int n, std::vector<T>& u,
                       std::vector<T>& v, int iters) {
  v.assign(static_cast<std::size_t>(n), T(0));
  for (int it = 0; it < iters; ++it) {
    // v = normalize(M^T u)
    double nv = 0.0;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i)
        acc += static_cast<double>(M[static_cast<std::int64_t>(i) * n + j]) *
               static_cast<double>(u[static_cast<std::size_t>(i)]);
      v[static_cast<std::size_t>(j)] = static_cast<T>(acc);
      nv += acc * acc;
    }
    nv = std::sqrt(nv);
    if (nv == 0.0) return 0.0;  // zero matrix: leave u as it was
    for (T& x : v) x = static_cast<T>(static_cast<double>(x) / nv);
    // u = normalize(M v)
    double nu = 0.0;
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j)
        acc += static_cast<double>(M[static_cast<std::int64_t>(i) * n + j]) *
               static_cast<double>(v[static_cast<std::size_t>(j)]);
      u[static_cast<std::size_t>(i)] = static_cast<T>(acc);
      nu += acc * acc;
    }
    nu = std::sqrt(nu);
    if (nu == 0.0) return 0.0;
    for (T& x : u) x = static_cast<T>(static_cast<double>(x) / nu);
  }
  // sigma = u^T M v
  double sigma = 0.0;
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j)
      acc += static_cast<double>(M[static_cast<std::int64_t>(i) * n + j]) *
             static_cast<double>(v[static_cast<std::size_t>(j)]);
    sigma += static_cast<double>(u[static_cast<std::size_t>(i)]) * acc;
  }
  return sigma;
}

}  // namespace detail

// Standalone spectral normalization: divides W by the power-iteration
// estimate of its largest singular value. Rank-4 kernels are treated as
// (out-channels) x (everything else). The estimate is clamped below at 1e-12,
// so a zero matrix comes back unchanged (still zero) with u untouched.
template <typename T>
std::pair<Tensor<T>, std::vector<T>> spectral_normalize(const Tensor<T>& W,
                                                        std::vector<T> u,
                                                        int iters) {
  if (iters < 1)
    throw std::invalid_argument("spectral_normalize: iters must be >= 1");
  if (W.shape.size() != 2 && W.shape.size() != 4)
    throw std::invalid_argument(
        "spectral_normalize: expected a matrix or a conv kernel, got " +
        shape_str(W.shape));
  const int m = W.shape[0];
  const int n = static_cast<int>(W.numel() / m);
  if (static_cast<int>(u.size()) != m)
    throw std::invalid_argument(
        "spectral_normalize: u must match the fan-out dimension");
  std::vector<T> v;
  const double sigma = detail::power_iteration(W.data(), m, n, u, v, iters);
  const double denom = std::max(sigma, 1e-12);
  std::vector<T> out(W.values->begin(), W.values->end());
  for (T& x : out) x = static_cast<T>(static_cast<double>(x) / denom);
  return {Tensor<T>(W.shape, std::move(out)), std::move(u)};
}

template <typename T>
struct Network {
  NetworkSpec spec;

  struct ParamSet {
    int layer = -1;       // index into spec.layers
    Tensor<T> W, b;
    std::vector<T> u;     // persistent power-iteration vector (spectral norm)
    double sigma = 0.0;   // estimate from the most recent live forward
    bool has_sigma = false;
  };
  std::vector<ParamSet> params;

  struct ForwardOptions {
    bool frozen = false;    // detach parameters: values flow, gradients stop
    int sn_iters = 1;       // power iterations before use
    bool sn_update = true;  // advance the stored u/sigma state
    bool sn_reuse = false;  // divide by the stored sigma (exact replay of the
                            // last live pass; used for same-step re-forwards)
    bool check_finite = true;
  };

  // Per-layer activations and effective weights from one forward call; feeds
  // the input-gradient sweep for gradient penalties.
  struct ForwardCache {
    Tensor<T> input;                // batch actually fed (post shape check)
    std::vector<Tensor<T>> post;    // output of each layer, aligned to layers
    std::vector<Tensor<T>> eff_w;   // on-tape weight used by each layer
  };

  Network() = default;

  Network(NetworkSpec s, Rng& rng) : spec(std::move(s)) {
    validate_spec(spec);
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
      const LayerSpec& l = spec.layers[li];
      if (!detail::layer_has_params(l)) continue;
      ParamSet p;
      p.layer = static_cast<int>(li);
      Shape ws;
      int fan_in = 0, fan_out = 0;
      switch (l.kind) {
        case LayerSpec::Kind::dense:
          ws = {l.in, l.out};
          fan_in = l.in;
          fan_out = l.out;
          break;
        case LayerSpec::Kind::conv:
          ws = {l.out, l.in, l.k, l.k};
          fan_in = l.in * l.k * l.k;
          fan_out = l.out;
          break;
        case LayerSpec::Kind::convt:
          ws = {l.in, l.out, l.k, l.k};
          fan_in = l.in * l.k * l.k;
          fan_out = l.out;
          break;
        default:
          break;
      }
      // Scaled normal init: He-style for the rectifier hidden layers, plain
      // Xavier-style for linear/saturating heads.
      const bool rectified = l.act == Act::relu || l.act == Act::lrelu;
      const double std_dev =
          std::sqrt((rectified ? 2.0 : 1.0) / static_cast<double>(fan_in));
      std::vector<T> w(static_cast<std::size_t>(shape_numel(ws)));
      for (T& x : w) x = static_cast<T>(std_dev * rng.normal());
      p.W = Tensor<T>::param(ws, std::move(w));
      p.b = Tensor<T>::param({l.out}, std::vector<T>(static_cast<std::size_t>(l.out), T(0)));
      if (l.spectral_norm) {
        p.u.resize(static_cast<std::size_t>(fan_out));
        double norm = 0.0;
        for (T& x : p.u) {
          x = static_cast<T>(rng.normal());
          norm += static_cast<double>(x) * x;
        }
        norm = std::sqrt(norm);
        for (T& x : p.u) x = static_cast<T>(static_cast<double>(x) / norm);
      }
      params.push_back(std::move(p));
    }
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (ParamSet& p : params) {
      out.push_back(&p.W);
      out.push_back(&p.b);
    }
    return out;
  }

  std::vector<const Tensor<T>*> parameters() const {
    std::vector<const Tensor<T>*> out;
    for (const ParamSet& p : params) {
      out.push_back(&p.W);
      out.push_back(&p.b);
    }
    return out;
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardOptions& opt = {},
                    ForwardCache* cache = nullptr) {
    // Expect (N, ...per-sample input shape...).
    if (x.shape.size() != spec.input_shape.size() + 1 ||
        !std::equal(spec.input_shape.begin(), spec.input_shape.end(),
                    x.shape.begin() + 1))
      throw std::invalid_argument("Network '" + spec.name + "': input " +
                                  shape_str(x.shape) +
                                  " does not match per-sample shape " +
                                  shape_str(spec.input_shape));
    const int N = x.shape[0];
    Tensor<T> h = x;
    if (cache) {
      cache->input = x;
      cache->post.assign(spec.layers.size(), Tensor<T>());
      cache->eff_w.assign(spec.layers.size(), Tensor<T>());
    }
    std::size_t pi = 0;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
      const LayerSpec& l = spec.layers[li];
      switch (l.kind) {
        case LayerSpec::Kind::dense:
        case LayerSpec::Kind::conv:
        case LayerSpec::Kind::convt: {
          ParamSet& p = params[pi++];
          Tensor<T> W = opt.frozen ? p.W.detached() : p.W;
          Tensor<T> b = opt.frozen ? p.b.detached() : p.b;
          Tensor<T> Weff = l.spectral_norm ? normalized_weight(p, W, opt) : W;
          if (cache) cache->eff_w[li] = Weff;
          if (l.kind == LayerSpec::Kind::dense)
            h = add_bias(matmul(h, Weff), b);
          else if (l.kind == LayerSpec::Kind::conv)
            h = add_bias(conv2d(h, Weff, l.stride, l.pad), b);
          else
            h = add_bias(conv_transpose2d(h, Weff, l.stride, l.pad), b);
          break;
        }
        case LayerSpec::Kind::flatten:
          h = reshape(h, {N, static_cast<int>(h.numel() / N)});
          break;
        case LayerSpec::Kind::unflatten: {
          Shape s = l.target;
          s.insert(s.begin(), N);
          h = reshape(h, std::move(s));
          break;
        }
      }
      switch (l.act) {
        case Act::none:
          break;
        case Act::relu:
          h = leaky_relu(h, T(0));
          break;
        case Act::lrelu:
          h = leaky_relu(h, T(0.2));
          break;
        case Act::sigmoid:
          h = sigmoid(h);
          break;
        case Act::tanh_act:
          h = tanh_t(h);
          break;
      }
      if (opt.check_finite && !all_finite(h))
        throw std::runtime_error("Network '" + spec.name +
                                 "': non-finite activation at layer " +
                                 std::to_string(li));
      if (cache) cache->post[li] = h;
    }
    return h;
  }

  // Builds d(sum_n out_n)/d(input) as an on-tape expression, given the cache
  // of a forward pass that ended in one value per sample. Because samples do
  // not interact, this is the per-sample input gradient. Differentiating the
  // result against the network parameters stays ordinary first-order reverse
  // mode, which is what the gradient penalty needs.
  Tensor<T> input_gradient(const ForwardCache& cache) const {
    if (cache.post.size() != spec.layers.size())
      throw std::invalid_argument("input_gradient: cache does not match network");
    const Tensor<T>& out = cache.post.back();
    if (out.shape.size() != 2 || out.shape[1] != 1)
      throw std::invalid_argument(
          "input_gradient: network must end in one value per sample");
    const int N = out.shape[0];
    Tensor<T> g = Tensor<T>::ones({N, 1});
    for (std::size_t li = spec.layers.size(); li-- > 0;) {
      const LayerSpec& l = spec.layers[li];
      const Tensor<T>& post = cache.post[li];
      // Activation derivative, expressed from the recorded outputs.
      switch (l.act) {
        case Act::none:
          break;
        case Act::sigmoid:
          g = mul(g, mul(post, sub_from_scalar(T(1), post)));
          break;
        case Act::tanh_act:
          g = mul(g, sub_from_scalar(T(1), mul(post, post)));
          break;
        case Act::relu:
        case Act::lrelu: {
          const T slope = l.act == Act::relu ? T(0) : T(0.2);
          std::vector<T> mask(static_cast<std::size_t>(post.numel()));
          const auto& pv = *post.values;
          for (std::size_t i = 0; i < mask.size(); ++i)
            mask[i] = pv[i] > T(0) ? T(1) : slope;
          g = mul(g, Tensor<T>(post.shape, std::move(mask)));
          break;
        }
      }
      // Transpose of the linear part.
      const Shape in_shape =
          li == 0 ? cache.input.shape : cache.post[li - 1].shape;
      switch (l.kind) {
        case LayerSpec::Kind::dense:
          g = matmul(g, transpose(cache.eff_w[li]));
          break;
        case LayerSpec::Kind::conv:
          g = conv_transpose2d(g, cache.eff_w[li], l.stride, l.pad);
          if (g.shape != in_shape)
            throw std::invalid_argument(
                "input_gradient: conv geometry does not invert exactly");
          break;
        case LayerSpec::Kind::flatten:
          g = reshape(g, in_shape);
          break;
        case LayerSpec::Kind::unflatten:
          g = reshape(g, in_shape);
          break;
        case LayerSpec::Kind::convt:
          throw std::invalid_argument(
              "input_gradient: transposed conv layers are not supported here");
      }
    }
    return g;
  }

 private:
  // On-tape spectral normalization: sigma is assembled as sum(W .* u v^T)
  // with u, v held constant, so gradients flow through both W occurrences in
  // W / sigma exactly as in the reference method.
  Tensor<T> normalized_weight(ParamSet& p, const Tensor<T>& W,
                              const ForwardOptions& opt) {
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(p.layer)];
    double sigma = 0.0;
    std::vector<T> u = p.u, v;
    if (opt.sn_reuse && p.has_sigma) {
      sigma = p.sigma;
      // v is not needed: reuse mode divides by the stored scalar directly.
      Tensor<T> s = Tensor<T>::scalar(static_cast<T>(std::max(sigma, 1e-12)));
      return scale(W, recip(s));
    }
    // Arrange the effective (fan-out x rest) view.
    int m = 0, n = 0;
    std::vector<T> M;
    if (l.kind == LayerSpec::Kind::dense) {
      m = l.out;
      n = l.in;
      M.resize(static_cast<std::size_t>(m) * n);
      const auto& wv = *W.values;
      for (int i = 0; i < l.in; ++i)
        for (int o = 0; o < l.out; ++o)
          M[static_cast<std::size_t>(o) * n + i] =
              wv[static_cast<std::size_t>(i) * l.out + o];
    } else if (l.kind == LayerSpec::Kind::conv) {
      m = l.out;
      n = l.in * l.k * l.k;
      M.assign(W.values->begin(), W.values->end());
    } else {
      // convt kernels store (in, out, k, k); gather the fan-out rows.
      m = l.out;
      n = l.in * l.k * l.k;
      M.resize(static_cast<std::size_t>(m) * n);
      const auto& wv = *W.values;
      const int kk = l.k * l.k;
      for (int i = 0; i < l.in; ++i)
        for (int o = 0; o < l.out; ++o)
          for (int t = 0; t < kk; ++t)
            M[static_cast<std::size_t>(o) * n + i * kk + t] =
                wv[(static_cast<std::size_t>(i) * l.out + o) * kk + t];
    }
    sigma = detail::power_iteration(M.data(), m, n, u, v, std::max(1, opt.sn_iters));
    if (sigma == 0.0) {
      // Zero matrix: normalized weight is the zero matrix itself.
      if (opt.sn_update) {
        p.sigma = 0.0;
        p.has_sigma = true;
      }
      Tensor<T> s = Tensor<T>::scalar(static_cast<T>(1e-12));
      return scale(W, recip(s));
    }
    // sigma on tape: sum over W .* (u v^T rearranged into W's layout).
    std::vector<T> uv(static_cast<std::size_t>(W.numel()));
    if (l.kind == LayerSpec::Kind::dense) {
      for (int i = 0; i < l.in; ++i)
        for (int o = 0; o < l.out; ++o)
          uv[static_cast<std::size_t>(i) * l.out + o] =
              u[static_cast<std::size_t>(o)] * v[static_cast<std::size_t>(i)];
    } else if (l.kind == LayerSpec::Kind::conv) {
      const int rest = l.in * l.k * l.k;
      for (int o = 0; o < l.out; ++o)
        for (int r = 0; r < rest; ++r)
          uv[static_cast<std::size_t>(o) * rest + r] =
              u[static_cast<std::size_t>(o)] * v[static_cast<std::size_t>(r)];
    } else {
      const int kk = l.k * l.k;
      for (int i = 0; i < l.in; ++i)
        for (int o = 0; o < l.out; ++o)
          for (int t = 0; t < kk; ++t)
            uv[(static_cast<std::size_t>(i) * l.out + o) * kk + t] =
                u[static_cast<std::size_t>(o)] *
                v[static_cast<std::size_t>(i * kk + t)];
    }
    Tensor<T> sigma_t = sum(mul(W, Tensor<T>(W.shape, std::move(uv))));
    if (opt.sn_update) {
      // Store the value the tape actually divides by, so a stored-sigma
      // replay reproduces this pass bit for bit.
      p.u = u;
      p.sigma = static_cast<double>((*sigma_t.values)[0]);
      p.has_sigma = true;
    }
    Tensor<T> sigma_c =
        clamp(sigma_t, T(1e-12), std::numeric_limits<T>::max());
    return scale(W, recip(sigma_c));
  }
};

// ---------------------------------------------------------------------------
// Posterior head and forward wrappers
// ---------------------------------------------------------------------------

template <typename T>
struct GaussianPosterior {
  Tensor<T> mu, log_sigma;
};

template <typename T>
Tensor<T> generator_forward(Network<T>& gen, const Tensor<T>& z,
                            const typename Network<T>::ForwardOptions& opt = {}) {
  return gen.forward(z, opt);
}

template <typename T>
GaussianPosterior<T> encoder_forward(
    Network<T>& enc, const Tensor<T>& x,
    const typename Network<T>::ForwardOptions& opt = {}) {
  Tensor<T> out = enc.forward(x, opt);
  if (out.shape.size() != 2 || out.shape[1] % 2 != 0)
    throw std::invalid_argument(
        "encoder_forward: head must emit (mu, log_sigma) pairs");
  const int N = out.shape[0];
  const int L = out.shape[1] / 2;
  GaussianPosterior<T> post;
  post.mu = slice(out, {0, 0}, {N, L});
  post.log_sigma = slice(out, {0, L}, {N, L});
  return post;
}

// Reparameterized draw z = mu + exp(log_sigma) * eps for a provided noise
// tensor; differentiable w.r.t. the posterior parameters.
template <typename T>
Tensor<T> sample_latent(const GaussianPosterior<T>& post, const Tensor<T>& eps) {
  detail::check_same_shape("sample_latent", post.mu, eps);
  return add(post.mu, mul(exp_t(post.log_sigma), eps));
}

template <typename T>
Tensor<T> sample_latent(const GaussianPosterior<T>& post, Rng& rng) {
  std::vector<T> e(static_cast<std::size_t>(post.mu.numel()));
  for (T& x : e) x = static_cast<T>(rng.normal());
  return sample_latent(post, Tensor<T>(post.mu.shape, std::move(e)));
}

template <typename T>
Tensor<T> data_discriminator_forward(
    Network<T>& d, const Tensor<T>& x,
    const typename Network<T>::ForwardOptions& opt = {}) {
  return d.forward(x, opt);
}

template <typename T>
Tensor<T> latent_discriminator_forward(
    Network<T>& d, const Tensor<T>& z,
    const typename Network<T>::ForwardOptions& opt = {}) {
  return d.forward(z, opt);
}

template <typename T>
Tensor<T> fuse_pair(const Tensor<T>& x, const Tensor<T>& y, PairFusion fusion) {
  detail::check_same_shape("fuse_pair", x, y);
  if (x.shape.size() != 4)
    throw std::invalid_argument("fuse_pair: expected image batches, got " +
                                shape_str(x.shape));
  return fusion == PairFusion::width ? concat(x, y, 3) : concat(x, y, 1);
}

template <typename T>
Tensor<T> pair_discriminator_forward(
    Network<T>& d, const Tensor<T>& x, const Tensor<T>& y, PairFusion fusion,
    const typename Network<T>::ForwardOptions& opt = {}) {
  return d.forward(fuse_pair(x, y, fusion), opt);
}

// ---------------------------------------------------------------------------
// Spec factories and the model bundle
// ---------------------------------------------------------------------------

inline NetworkSpec mlp_spec(std::string name, int in_dim,
                            const std::vector<int>& hidden, int out_dim,
                            Act hidden_act, Act final_act, bool sn) {
  NetworkSpec s;
  s.name = std::move(name);
  s.input_shape = {in_dim};
  int cur = in_dim;
  for (int h : hidden) {
    s.layers.push_back({LayerSpec::Kind::dense, cur, h, 0, 1, 0, hidden_act, sn, {}});
    cur = h;
  }
  s.layers.push_back({LayerSpec::Kind::dense, cur, out_dim, 0, 1, 0, final_act, sn, {}});
  validate_spec(s);
  return s;
}

// Stride-2 conv stack over (C,H,W), halving spatial extents while they stay
// even and at least 8, then a dense head. Works for 16/28/32-sized inputs and
// their width-fused doubles.
inline NetworkSpec conv_encoder_like_spec(std::string name, const Shape& item,
                                          int width, int out_dim,
                                          Act hidden_act, Act final_act,
                                          bool sn) {
  if (item.size() != 3)
    throw std::invalid_argument("conv spec: item shape must be (C,H,W)");
  NetworkSpec s;
  s.name = std::move(name);
  s.input_shape = item;
  int c = item[0], h = item[1], w = item[2], ch = width;
  while (h % 2 == 0 && w % 2 == 0 && std::min(h, w) >= 8) {
    s.layers.push_back({LayerSpec::Kind::conv, c, ch, 4, 2, 1, hidden_act, sn, {}});
    c = ch;
    ch = std::min(ch * 2, width * 4);
    h /= 2;
    w /= 2;
  }
  s.layers.push_back({LayerSpec::Kind::flatten, 0, 0, 0, 1, 0, Act::none, false, {}});
  s.layers.push_back({LayerSpec::Kind::dense, c * h * w, out_dim, 0, 1, 0,
                      final_act, sn, {}});
  validate_spec(s);
  return s;
}

// Mirror of the conv stack: dense from the latent, then stride-2 transposed
// convs back up to (C,H,W) with a tanh output.
inline NetworkSpec conv_generator_spec(std::string name, int latent_dim,
                                       const Shape& item, int width,
                                       Act hidden_act) {
  if (item.size() != 3)
    throw std::invalid_argument("conv spec: item shape must be (C,H,W)");
  NetworkSpec s;
  s.name = std::move(name);
  s.input_shape = {latent_dim};
  int h = item[1], w = item[2];
  int ups = 0;
  while (h % 2 == 0 && w % 2 == 0 && std::min(h, w) >= 8) {
    h /= 2;
    w /= 2;
    ++ups;
  }
  int ch = width;
  for (int i = 1; i < ups; ++i) ch = std::min(ch * 2, width * 4);
  s.layers.push_back({LayerSpec::Kind::dense, latent_dim, ch * h * w, 0, 1, 0,
                      hidden_act, false, {}});
  s.layers.push_back({LayerSpec::Kind::unflatten, 0, 0, 0, 1, 0, Act::none,
                      false, Shape{ch, h, w}});
  for (int i = 0; i < ups; ++i) {
    const bool last = i == ups - 1;
    const int next = last ? item[0] : std::max(width, ch / 2);
    s.layers.push_back({LayerSpec::Kind::convt, ch, next, 4, 2, 1,
                        last ? Act::tanh_act : hidden_act, false, {}});
    ch = next;
  }
  if (ups == 0) {
    // No spatial doubling possible (vector-like data): emit directly.
    throw std::invalid_argument(
        "conv_generator_spec: item too small for a conv stack; use mlp_spec");
  }
  validate_spec(s);
  return s;
}

struct BundleConfig {
  Shape item_shape;           // per-sample (C,H,W)
  int latent_dim = 2;
  int width = 32;             // base channel count / MLP hidden width
  bool critic_heads = false;  // identity outputs (Wasserstein / variational)
  bool spectral_norm = true;  // discriminators only; forced off for critics
  PairFusion fusion = PairFusion::width;
  Act disc_act = Act::lrelu;
  Act gen_act = Act::relu;
};

template <typename T>
struct ModelBundle {
  Network<T> generator, encoder, disc_x, disc_z, disc_xx;
  Shape item_shape;
  int latent_dim = 0;
  PairFusion fusion = PairFusion::width;
  bool critic_heads = false;

  std::vector<Tensor<T>*> block_parameters(int block) {
    switch (block) {
      case 0: return disc_x.parameters();
      case 1: return disc_z.parameters();
      case 2: return disc_xx.parameters();
      case 3: return generator.parameters();
      case 4: return encoder.parameters();
      default: throw std::invalid_argument("block_parameters: bad block index");
    }
  }
};

// Decides conv vs dense stacks from the item geometry: anything too small to
// halve spatially is treated as vector data behind dense networks.
template <typename T>
ModelBundle<T> build_model_bundle(const BundleConfig& cfg, Rng& rng) {
  if (cfg.item_shape.size() != 3)
    throw std::invalid_argument("build_model_bundle: item shape must be (C,H,W)");
  const int C = cfg.item_shape[0], H = cfg.item_shape[1], W = cfg.item_shape[2];
  const int d = C * H * W;
  const bool convs = H % 2 == 0 && W % 2 == 0 && std::min(H, W) >= 8;
  const Act head = cfg.critic_heads ? Act::none : Act::sigmoid;
  const bool sn = cfg.spectral_norm && !cfg.critic_heads;

  ModelBundle<T> b;
  b.item_shape = cfg.item_shape;
  b.latent_dim = cfg.latent_dim;
  b.fusion = cfg.fusion;
  b.critic_heads = cfg.critic_heads;

  Shape fused = cfg.item_shape;
  if (cfg.fusion == PairFusion::width)
    fused[2] *= 2;
  else
    fused[0] *= 2;

  auto flat_front = [&](NetworkSpec s, const Shape& in_shape) {
    // Prefix dense specs with a flatten so they accept (N,C,H,W) batches.
    NetworkSpec out;
    out.name = s.name;
    out.input_shape = in_shape;
    out.layers.push_back({LayerSpec::Kind::flatten, 0, 0, 0, 1, 0, Act::none, false, {}});
    for (auto& l : s.layers) out.layers.push_back(l);
    validate_spec(out);
    return out;
  };

  const std::vector<int> hid{cfg.width * 2, cfg.width * 2};
  if (convs) {
    b.generator = Network<T>(
        conv_generator_spec("generator", cfg.latent_dim, cfg.item_shape, cfg.width, cfg.gen_act),
        rng);
    b.encoder = Network<T>(
        conv_encoder_like_spec("encoder", cfg.item_shape, cfg.width,
                               2 * cfg.latent_dim, cfg.disc_act, Act::none, false),
        rng);
    b.disc_x = Network<T>(
        conv_encoder_like_spec("disc_x", cfg.item_shape, cfg.width, 1,
                               cfg.disc_act, head, sn),
        rng);
    b.disc_xx = Network<T>(
        conv_encoder_like_spec("disc_xx", fused, cfg.width, 1, cfg.disc_act,
                               head, sn),
        rng);
  } else {
    NetworkSpec gs = mlp_spec("generator", cfg.latent_dim, hid, d, cfg.gen_act,
                              Act::tanh_act, false);
    gs.layers.push_back({LayerSpec::Kind::unflatten, 0, 0, 0, 1, 0, Act::none,
                         false, cfg.item_shape});
    validate_spec(gs);
    b.generator = Network<T>(std::move(gs), rng);
    b.encoder = Network<T>(
        flat_front(mlp_spec("encoder", d, hid, 2 * cfg.latent_dim,
                            cfg.disc_act, Act::none, false),
                   cfg.item_shape),
        rng);
    b.disc_x = Network<T>(
        flat_front(mlp_spec("disc_x", d, hid, 1, cfg.disc_act, head, sn),
                   cfg.item_shape),
        rng);
    b.disc_xx = Network<T>(
        flat_front(mlp_spec("disc_xx", static_cast<int>(shape_numel(fused)),
                            hid, 1, cfg.disc_act, head, sn),
                   fused),
        rng);
  }
  // The latent discriminator is always the fixed-width MLP.
  b.disc_z = Network<T>(mlp_spec("disc_z", cfg.latent_dim, {512, 256}, 1,
                                 Act::lrelu, head, sn),
                        rng);

  // Shrink the encoder's output head so every initial posterior sits at the
  // standard-normal prior (mean ~0, log-sigma ~0). The latent matching game
  // then opens at its balanced point and only has to hold the aggregate
  // there, instead of walking it back from a random offset — a drift the
  // norm-constrained latent discriminator corrects too slowly.
  for (T& x : *b.encoder.params.back().W.values)
    x = static_cast<T>(static_cast<double>(x) * 1e-2);
  return b;
}

}  // namespace pagan
