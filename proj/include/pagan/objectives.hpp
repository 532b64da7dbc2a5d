#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pagan/augment.hpp"
#include "pagan/nets.hpp"
#include "pagan/rng.hpp"
#include "pagan/tensor.hpp"

namespace pagan {

// Losses for the three adversarial games (data, latent, augmented pair), the
// non-saturating surrogates the training loop uses, the f-divergence variants,
// and the Wasserstein-with-gradient-penalty variant.

// Probabilities are clamped to this band before any logarithm.
inline constexpr double kProbClamp = 1e-7;

// ---------------------------------------------------------------------------
// f-divergence specifications
// ---------------------------------------------------------------------------

enum class FDivTag { kl, reverse_kl, js, squared_hellinger };

// Scalar-side description of one f-divergence: the convex generator f, its
// derivative, the Fenchel conjugate f*, and the output activation mapping a
// raw critic value into dom(f*). The closures are double-precision and used
// by tests and oracles; the tensor ops below mirror them on the tape.
struct FDivergenceSpec {
  std::string name;
  FDivTag tag = FDivTag::js;
  std::function<double(double)> f;
  std::function<double(double)> f_prime;
  std::function<double(double)> f_star;
  std::function<double(double)> activation;
};

inline const std::vector<FDivergenceSpec>& fdiv_registry() {
  static const std::vector<FDivergenceSpec> specs = [] {
    std::vector<FDivergenceSpec> r;
    r.push_back({"kl",
                 FDivTag::kl,
                 [](double u) { return u * std::log(u); },
                 [](double u) { return std::log(u) + 1.0; },
                 [](double t) { return std::exp(t - 1.0); },
                 [](double v) { return v; }});
    r.push_back({"reverse-kl",
                 FDivTag::reverse_kl,
                 [](double u) { return -std::log(u); },
                 [](double u) { return -1.0 / u; },
                 [](double t) { return -1.0 - std::log(-t); },
                 [](double v) { return -std::exp(-v); }});
    r.push_back({"js",
                 FDivTag::js,
                 [](double u) {
                   return u * std::log(u) - (u + 1.0) * std::log((u + 1.0) / 2.0);
                 },
                 [](double u) { return std::log(2.0 * u / (u + 1.0)); },
                 [](double t) { return -std::log(2.0 - std::exp(t)); },
                 [](double v) {
                   // ln 2 + log sigmoid(v), computed stably for either sign.
                   const double sp =
                       v >= 0.0 ? std::log1p(std::exp(-v))
                                : -v + std::log1p(std::exp(v));
                   return std::log(2.0) - sp;
                 }});
    r.push_back({"squared-hellinger",
                 FDivTag::squared_hellinger,
                 [](double u) {
                   const double s = std::sqrt(u) - 1.0;
                   return s * s;
                 },
                 [](double u) { return 1.0 - 1.0 / std::sqrt(u); },
                 [](double t) { return t / (1.0 - t); },
                 [](double v) { return 1.0 - std::exp(-v); }});
    return r;
  }();
  return specs;
}

inline const FDivergenceSpec& fdiv_spec(FDivTag tag) {
  for (const FDivergenceSpec& s : fdiv_registry())
    if (s.tag == tag) return s;
  throw std::invalid_argument("fdiv_spec: unknown divergence tag");
}

inline FDivTag fdiv_tag_from_name(const std::string& name) {
  for (const FDivergenceSpec& s : fdiv_registry())
    if (s.name == name) return s.tag;
  throw std::invalid_argument("fdiv_tag_from_name: unknown divergence '" +
                              name + "'");
}

// Tape versions of the activation and conjugate, so critic outputs stay
// differentiable. Domain violations surface as the underlying op's domain
// errors (log/recip of a non-positive value).
template <typename T>
Tensor<T> fdiv_activation(const Tensor<T>& v, FDivTag tag) {
  switch (tag) {
    case FDivTag::kl:
      return v;
    case FDivTag::reverse_kl:
      return neg(exp_t(neg(v)));
    case FDivTag::js: {
      Tensor<T> s = clamp(sigmoid(v), T(kProbClamp), T(1.0 - kProbClamp));
      return add_scalar(log_t(s), T(std::log(2.0)));
    }
    case FDivTag::squared_hellinger:
      return sub_from_scalar(T(1), exp_t(neg(v)));
  }
  throw std::invalid_argument("fdiv_activation: unknown divergence tag");
}

template <typename T>
Tensor<T> fdiv_conjugate(const Tensor<T>& t, FDivTag tag) {
  switch (tag) {
    case FDivTag::kl:
      return exp_t(add_scalar(t, T(-1)));
    case FDivTag::reverse_kl:
      return add_scalar(neg(log_t(neg(t))), T(-1));
    case FDivTag::js:
      return neg(log_t(sub_from_scalar(T(2), exp_t(t))));
    case FDivTag::squared_hellinger:
      return mul(t, recip(sub_from_scalar(T(1), t)));
  }
  throw std::invalid_argument("fdiv_conjugate: unknown divergence tag");
}

// ---------------------------------------------------------------------------
// Game selection
// ---------------------------------------------------------------------------

enum class GameMode { minimax, nonsaturating, fgan, wasserstein };

enum class AlphaMode { shared, independent };

struct GameKind {
  GameMode mode = GameMode::nonsaturating;
  FDivTag fdiv = FDivTag::js;           // used when mode == fgan
  double gp_lambda = 10.0;              // used when mode == wasserstein
  AlphaMode alpha_mode = AlphaMode::shared;
};

inline void validate_game(const GameKind& game) {
  if (game.mode == GameMode::wasserstein && !(game.gp_lambda > 0.0))
    throw std::invalid_argument(
        "GameKind: gradient penalty strength must be positive");
}

// ---------------------------------------------------------------------------
// Core scalar losses
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Tensor<T> clamp_prob(const Tensor<T>& d) {
  return clamp(d, T(kProbClamp), T(1.0 - kProbClamp));
}

template <typename T>
void check_prob_range(const char* op, const Tensor<T>& d) {
  if (d.numel() < 1)
    throw std::invalid_argument(std::string(op) + ": empty batch");
  for (const T& v : *d.values)
    if (!(v >= T(0) && v <= T(1)))
      throw std::invalid_argument(std::string(op) +
                                  ": inputs must be probabilities in [0,1]");
}

// mean over log(1 - d), clamped; the saturating generator-side objective.
template <typename T>
Tensor<T> mean_log_one_minus(const Tensor<T>& d) {
  return mean(log_t(sub_from_scalar(T(1), clamp_prob(d))));
}

}  // namespace detail

// -mean log d_real - mean log(1 - d_fake): the objective every discriminator
// descends, identical in form across the three games.
template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  detail::check_prob_range("discriminator_loss", d_real);
  detail::check_prob_range("discriminator_loss", d_fake);
  Tensor<T> a = mean(log_t(detail::clamp_prob(d_real)));
  Tensor<T> b = detail::mean_log_one_minus(d_fake);
  return neg(add(a, b));
}

// -mean log d: the stable surrogate for generator- and encoder-side terms.
template <typename T>
Tensor<T> nonsaturating_loss(const Tensor<T>& d) {
  detail::check_prob_range("nonsaturating_loss", d);
  return neg(mean(log_t(detail::clamp_prob(d))));
}

// Variational value V = mean T_real - mean f*(T_fake) for activated critic
// outputs; the critic ascends this, generator and encoder descend it.
template <typename T>
Tensor<T> f_gan_value(const Tensor<T>& t_real, const Tensor<T>& t_fake,
                      FDivTag tag) {
  if (t_real.numel() < 1 || t_fake.numel() < 1)
    throw std::invalid_argument("f_gan_value: empty batch");
  return sub(mean(t_real), mean(fdiv_conjugate(t_fake, tag)));
}

// ---------------------------------------------------------------------------
// Wasserstein losses with gradient penalty
// ---------------------------------------------------------------------------

template <typename T>
struct WassersteinParts {
  Tensor<T> critic_loss;     // mean f(fake) - mean f(real) + penalty
  Tensor<T> adversary_loss;  // -mean f(fake)
  Tensor<T> penalty;         // lambda * mean((|grad| - 1)^2), on tape
};

namespace detail {

// Per-sample convex combination a*real + (1-a)*fake as detached data.
template <typename T>
Tensor<T> interpolate_rows(const Tensor<T>& real, const Tensor<T>& fake,
                           const std::vector<double>& alpha) {
  check_same_shape("interpolate_rows", real, fake);
  const int N = real.shape[0];
  const std::int64_t row = real.numel() / N;
  std::vector<T> out(static_cast<std::size_t>(real.numel()));
  const auto& rv = *real.values;
  const auto& fv = *fake.values;
  for (int n = 0; n < N; ++n) {
    const double a = alpha[static_cast<std::size_t>(n)];
    for (std::int64_t j = 0; j < row; ++j) {
      const std::int64_t i = static_cast<std::int64_t>(n) * row + j;
      out[static_cast<std::size_t>(i)] =
          static_cast<T>(a * static_cast<double>(rv[static_cast<std::size_t>(i)]) +
                         (1.0 - a) * static_cast<double>(fv[static_cast<std::size_t>(i)]));
    }
  }
  return Tensor<T>(real.shape, std::move(out));
}

// lambda * mean((||d out / d input||_2 - 1)^2) for an interpolate batch fed
// through the critic; built from an explicit first-order gradient expression,
// so differentiating it against the critic weights is still single-backward.
template <typename T>
Tensor<T> gradient_penalty(Network<T>& critic, const Tensor<T>& x_tilde,
                           double lambda) {
  typename Network<T>::ForwardCache cache;
  critic.forward(x_tilde, {}, &cache);
  Tensor<T> g = critic.input_gradient(cache);
  const int N = g.shape[0];
  Tensor<T> flat = reshape(g, {N, static_cast<int>(g.numel() / N)});
  Tensor<T> norms = sqrt_t(row_sum(mul(flat, flat)));
  Tensor<T> excess = add_scalar(norms, T(-1));
  return mul_scalar(mean(mul(excess, excess)), T(lambda));
}

}  // namespace detail

// Single-input critic game (data or latent): interpolation draws one alpha
// per sample, then the penalty differentiates the critic at the mixture.
template <typename T>
WassersteinParts<T> wasserstein_losses(Network<T>& critic, const Tensor<T>& real,
                                       const Tensor<T>& fake, double lambda,
                                       Rng& rng) {
  if (!(lambda > 0.0))
    throw std::invalid_argument(
        "wasserstein_losses: penalty strength must be positive");
  detail::check_same_shape("wasserstein_losses", real, fake);
  const int N = real.shape[0];
  std::vector<double> alpha(static_cast<std::size_t>(N));
  for (double& a : alpha) a = rng.uniform();
  Tensor<T> x_tilde = detail::interpolate_rows(real, fake, alpha);

  Tensor<T> both = critic.forward(concat(real.detached(), fake.detached(), 0));
  Tensor<T> f_real = slice(both, {0, 0}, {N, 1});
  Tensor<T> f_fake = slice(both, {N, 0}, {N, 1});
  Tensor<T> pen = detail::gradient_penalty(critic, x_tilde, lambda);
  WassersteinParts<T> parts;
  parts.penalty = pen;
  parts.critic_loss = add(sub(mean(f_fake), mean(f_real)), pen);
  parts.adversary_loss = neg(mean(f_fake));
  return parts;
}

// Pair-critic game: the interpolation mixes the real pair with the fake pair
// either with one alpha per sample for both halves (shared) or with separate
// alphas per half (independent). Draw order: x-half alphas, then y-half.
template <typename T>
WassersteinParts<T> wasserstein_pair_losses(
    Network<T>& critic, const Tensor<T>& real_x, const Tensor<T>& real_y,
    const Tensor<T>& fake_x, const Tensor<T>& fake_y, PairFusion fusion,
    double lambda, AlphaMode amode, Rng& rng) {
  if (!(lambda > 0.0))
    throw std::invalid_argument(
        "wasserstein_pair_losses: penalty strength must be positive");
  const int N = real_x.shape[0];
  std::vector<double> ax(static_cast<std::size_t>(N));
  for (double& a : ax) a = rng.uniform();
  std::vector<double> ay = ax;
  if (amode == AlphaMode::independent)
    for (double& a : ay) a = rng.uniform();
  Tensor<T> xt = detail::interpolate_rows(real_x, fake_x, ax);
  Tensor<T> yt = detail::interpolate_rows(real_y, fake_y, ay);
  Tensor<T> fused_tilde = fuse_pair(xt, yt, fusion);

  Tensor<T> fused_real = fuse_pair(real_x.detached(), real_y.detached(), fusion);
  Tensor<T> fused_fake = fuse_pair(fake_x.detached(), fake_y.detached(), fusion);
  Tensor<T> both = critic.forward(concat(fused_real, fused_fake, 0));
  Tensor<T> f_real = slice(both, {0, 0}, {N, 1});
  Tensor<T> f_fake = slice(both, {N, 0}, {N, 1});
  Tensor<T> pen = detail::gradient_penalty(critic, fused_tilde, lambda);
  WassersteinParts<T> parts;
  parts.penalty = pen;
  parts.critic_loss = add(sub(mean(f_fake), mean(f_real)), pen);
  parts.adversary_loss = neg(mean(f_fake));
  return parts;
}

// ---------------------------------------------------------------------------
// The full five-loss evaluation
// ---------------------------------------------------------------------------

template <typename T>
struct PaganLosses {
  Tensor<T> d_x, d_z, d_xx;  // discriminator losses (data, latent, pair)
  Tensor<T> g, e;            // generator and encoder losses
};

// Intermediate values from one evaluation, for inspection and metrics.
template <typename T>
struct PaganTrace {
  Tensor<T> z, eps, x_aug, x_pr, x_rec, zhat;
  Tensor<T> d_x_real, d_x_fake, d_z_real, d_z_fake, d_xx_real, d_xx_fake;
};

// One evaluation of the five losses on a batch, with hard stop-gradient
// boundaries: discriminator losses see the generator and encoder frozen;
// generator and encoder losses see the discriminators frozen at exactly the
// weights (and spectral scales) the discriminator pass used. The rng draw
// order is pinned: latent prior z, posterior noise eps, augmentation offsets
// (per image, row before column), then Wasserstein interpolation alphas in
// game order data, latent, pair.
template <typename T>
PaganLosses<T> pagan_losses(ModelBundle<T>& bundle, const Tensor<T>& x_batch,
                            const AugmentConfig& aug, Rng& rng,
                            const GameKind& game,
                            PaganTrace<T>* trace = nullptr) {
  validate_game(game);
  if (x_batch.shape.size() != 4)
    throw std::invalid_argument("pagan_losses: expected an image batch");
  const int N = x_batch.shape[0];
  if (N < 2)
    throw std::invalid_argument("pagan_losses: batch size must be at least 2");
  const int L = bundle.latent_dim;
  const bool critic_game =
      game.mode == GameMode::fgan || game.mode == GameMode::wasserstein;
  if (critic_game != bundle.critic_heads)
    throw std::invalid_argument(
        "pagan_losses: game needs identity heads exactly when the bundle has "
        "critic heads");

  using Net = Network<T>;
  typename Net::ForwardOptions frozen_ge;
  frozen_ge.frozen = true;
  typename Net::ForwardOptions live_d;  // one power iteration, state advances
  typename Net::ForwardOptions frozen_d;
  frozen_d.frozen = true;
  frozen_d.sn_reuse = true;

  // Pinned draws.
  std::vector<T> zdraw(static_cast<std::size_t>(N) * L);
  for (T& v : zdraw) v = static_cast<T>(rng.normal());
  Tensor<T> z(Shape{N, L}, std::move(zdraw));
  std::vector<T> edraw(static_cast<std::size_t>(N) * L);
  for (T& v : edraw) v = static_cast<T>(rng.normal());
  Tensor<T> eps(Shape{N, L}, std::move(edraw));
  Tensor<T> x = x_batch.detached();
  Tensor<T> x_aug = augment(x, aug, rng);

  // ---- Pass A: generator and encoder frozen; discriminators live. ----
  GaussianPosterior<T> post_a = encoder_forward(bundle.encoder, x, frozen_ge);
  Tensor<T> zhat_a = sample_latent(post_a, eps);
  Tensor<T> x_pr = generator_forward(bundle.generator, z, frozen_ge);
  Tensor<T> x_rec_a = generator_forward(bundle.generator, zhat_a, frozen_ge);

  PaganLosses<T> out;
  Tensor<T> dx_real, dx_fake, dz_real, dz_fake, dxx_real, dxx_fake;
  if (game.mode == GameMode::wasserstein) {
    auto wx = wasserstein_losses(bundle.disc_x, x, x_pr, game.gp_lambda, rng);
    auto wz = wasserstein_losses(bundle.disc_z, z, zhat_a, game.gp_lambda, rng);
    auto wxx = wasserstein_pair_losses(bundle.disc_xx, x, x_aug, x, x_rec_a,
                                       bundle.fusion, game.gp_lambda,
                                       game.alpha_mode, rng);
    out.d_x = wx.critic_loss;
    out.d_z = wz.critic_loss;
    out.d_xx = wxx.critic_loss;
  } else {
    Tensor<T> dx_all = bundle.disc_x.forward(concat(x, x_pr, 0), live_d);
    dx_real = slice(dx_all, {0, 0}, {N, 1});
    dx_fake = slice(dx_all, {N, 0}, {N, 1});
    Tensor<T> dz_all = bundle.disc_z.forward(concat(z, zhat_a, 0), live_d);
    dz_real = slice(dz_all, {0, 0}, {N, 1});
    dz_fake = slice(dz_all, {N, 0}, {N, 1});
    Tensor<T> pair_real = fuse_pair(x, x_aug, bundle.fusion);
    Tensor<T> pair_fake = fuse_pair(x, x_rec_a, bundle.fusion);
    Tensor<T> dxx_all =
        bundle.disc_xx.forward(concat(pair_real, pair_fake, 0), live_d);
    dxx_real = slice(dxx_all, {0, 0}, {N, 1});
    dxx_fake = slice(dxx_all, {N, 0}, {N, 1});
    if (game.mode == GameMode::fgan) {
      const FDivTag tag = game.fdiv;
      out.d_x = neg(f_gan_value(fdiv_activation(dx_real, tag),
                                fdiv_activation(dx_fake, tag), tag));
      out.d_z = neg(f_gan_value(fdiv_activation(dz_real, tag),
                                fdiv_activation(dz_fake, tag), tag));
      out.d_xx = neg(f_gan_value(fdiv_activation(dxx_real, tag),
                                 fdiv_activation(dxx_fake, tag), tag));
    } else {
      out.d_x = discriminator_loss(dx_real, dx_fake);
      out.d_z = discriminator_loss(dz_real, dz_fake);
      out.d_xx = discriminator_loss(dxx_real, dxx_fake);
    }
  }

  // ---- Pass B: discriminators frozen at pass-A weights; G/E live. ----
  GaussianPosterior<T> post_b = encoder_forward(bundle.encoder, x);
  Tensor<T> zhat_b = sample_latent(post_b, eps);
  Tensor<T> x_pr_b = generator_forward(bundle.generator, z);
  Tensor<T> x_rec_b = generator_forward(bundle.generator, zhat_b);
  Tensor<T> db_x = bundle.disc_x.forward(x_pr_b, frozen_d);
  Tensor<T> db_z = bundle.disc_z.forward(zhat_b, frozen_d);
  Tensor<T> db_xx =
      bundle.disc_xx.forward(fuse_pair(x, x_rec_b, bundle.fusion), frozen_d);

  switch (game.mode) {
    case GameMode::nonsaturating:
      out.g = add(nonsaturating_loss(db_x), nonsaturating_loss(db_xx));
      out.e = add(nonsaturating_loss(db_z), nonsaturating_loss(db_xx));
      break;
    case GameMode::minimax:
      out.g = add(detail::mean_log_one_minus(db_x),
                  detail::mean_log_one_minus(db_xx));
      out.e = add(detail::mean_log_one_minus(db_z),
                  detail::mean_log_one_minus(db_xx));
      break;
    case GameMode::fgan: {
      const FDivTag tag = game.fdiv;
      // Real-side terms are constants for the generator and encoder; reuse
      // the pass-A values detached so no gradient reaches the critics.
      Tensor<T> vx = f_gan_value(fdiv_activation(dx_real, tag).detached(),
                                 fdiv_activation(db_x, tag), tag);
      Tensor<T> vz = f_gan_value(fdiv_activation(dz_real, tag).detached(),
                                 fdiv_activation(db_z, tag), tag);
      Tensor<T> vxx = f_gan_value(fdiv_activation(dxx_real, tag).detached(),
                                  fdiv_activation(db_xx, tag), tag);
      out.g = add(vx, vxx);
      out.e = add(vz, vxx);
      break;
    }
    case GameMode::wasserstein:
      out.g = neg(add(mean(db_x), mean(db_xx)));
      out.e = neg(add(mean(db_z), mean(db_xx)));
      break;
  }

  const std::pair<const char*, const Tensor<T>*> named[] = {
      {"data discriminator loss", &out.d_x},
      {"latent discriminator loss", &out.d_z},
      {"pair discriminator loss", &out.d_xx},
      {"generator loss", &out.g},
      {"encoder loss", &out.e}};
  for (const auto& [name, t] : named)
    if (!all_finite(*t))
      throw std::runtime_error(std::string("pagan_losses: non-finite ") + name);

  if (trace) {
    trace->z = z;
    trace->eps = eps;
    trace->x_aug = x_aug;
    trace->x_pr = x_pr;
    trace->x_rec = x_rec_a;
    trace->zhat = zhat_a;
    trace->d_x_real = dx_real;
    trace->d_x_fake = dx_fake;
    trace->d_z_real = dz_real;
    trace->d_z_fake = dz_fake;
    trace->d_xx_real = dxx_real;
    trace->d_xx_fake = dxx_fake;
  }
  return out;
}

}  // namespace pagan
