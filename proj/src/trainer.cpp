#include "pagan/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pagan {

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'A', 'G', 'A', 'N', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kCheckpointTrailer = 0xCAFEF00Du;

// The run() path and tests that resume from its artifacts tolerate lr == 0
// (a deliberate no-op run used to pin down state invariance); everything
// else follows the parse-time rules.
void check_trainer_config(const TrainConfig& cfg) {
  if (!(cfg.lr >= 0.0))
    throw std::invalid_argument("config: lr must be non-negative");
  TrainConfig relaxed = cfg;
  if (relaxed.lr == 0.0) relaxed.lr = 1.0;
  validate_config(relaxed);
}

// --- Little-endian byte packing for checkpoints ----------------------------

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& buf, float v) {
  put_u32(buf, std::bit_cast<std::uint32_t>(v));
}

void put_str(std::string& buf, const std::string& s) {
  put_u32(buf, static_cast<std::uint32_t>(s.size()));
  buf += s;
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  explicit ByteReader(const std::string& b) : buf(b) {}

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw std::runtime_error("load_checkpoint: truncated checkpoint");
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }

  void floats(std::vector<float>& out, std::size_t n) {
    need(4 * n);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f32();
  }
};

}  // namespace

Dataset load_training_dataset(const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 200));
  if (cfg.dataset == "ring") {
    GaussianRingSpec spec;
    spec.samples = 8192;
    return gaussian_ring(spec, rng);
  }
  if (cfg.dataset == "shapes") return synthetic_shapes(256, 16, rng);
  const char* env = std::getenv("PAGAN_MNIST_DIR");
  const std::string dir = env != nullptr ? env : "data/mnist";
  return load_mnist_idx(dir + "/t10k-images-idx3-ubyte",
                        dir + "/t10k-labels-idx1-ubyte");
}

Trainer::Trainer(const TrainConfig& cfg)
    : Trainer(cfg, load_training_dataset(cfg)) {}

Trainer::Trainer(const TrainConfig& cfg, Dataset data)
    : cfg_(cfg),
      data_(std::move(data)),
      loss_rng_(derive_seed(cfg.seed, 202)),
      data_rng_(derive_seed(cfg.seed, 203)) {
  check_trainer_config(cfg_);
  if (data_.items.shape.size() != 4 || data_.items.shape[0] < 1)
    throw std::invalid_argument("Trainer: dataset items must be (N,C,H,W)");
  const int H = data_.items.shape[2], W = data_.items.shape[3];
  const int pad = augment_pad(cfg_.augment, H, W);
  if (pad >= H || pad >= W)
    throw std::invalid_argument(
        "Trainer: augmentation padding exceeds the item size; lower "
        "augment_pad for this dataset");

  BundleConfig bc;
  bc.item_shape = {data_.items.shape[1], H, W};
  bc.latent_dim = cfg_.latent_dim;
  bc.fusion =
      cfg_.fusion == "channel" ? PairFusion::channel : PairFusion::width;
  bc.critic_heads = cfg_.game.mode == GameMode::fgan ||
                    cfg_.game.mode == GameMode::wasserstein;
  Rng init_rng(derive_seed(cfg_.seed, 201));
  bundle_ = build_model_bundle<float>(bc, init_rng);

  for (int blk = 0; blk < 5; ++blk) {
    for (Tensor<float>* p : bundle_.block_parameters(blk)) {
      opt_[blk].m.emplace_back(p->values->size(), 0.0f);
      opt_[blk].v.emplace_back(p->values->size(), 0.0f);
    }
  }
}

Tensor<float> Trainer::next_batch() {
  const Shape& s = data_.items.shape;
  const int n = s[0];
  const int B = cfg_.batch_size;
  const std::int64_t item = data_.items.numel() / n;
  std::vector<float> out(static_cast<std::size_t>(B) * item);
  const auto& src = *data_.items.values;
  for (int i = 0; i < B; ++i) {
    const int idx = data_rng_.uniform_int(n);
    std::copy_n(src.begin() + idx * item, item, out.begin() + i * item);
  }
  return Tensor<float>(Shape{B, s[1], s[2], s[3]}, std::move(out));
}

StepRecord Trainer::train_step() {
  if (diverged_)
    throw std::runtime_error("train_step: run already flagged as diverged");
  StepRecord rec;
  rec.step = step_ + 1;
  for (int round = 0; round < cfg_.critic_steps; ++round) {
    const bool last = round + 1 == cfg_.critic_steps;
    Tensor<float> batch = next_batch();
    TapeScope<float> scope;
    PaganLosses<float> parts =
        pagan_losses(bundle_, batch, cfg_.augment, loss_rng_, cfg_.game);
    rec.d_x = parts.d_x.item();
    rec.d_z = parts.d_z.item();
    rec.d_xx = parts.d_xx.item();
    rec.g = parts.g.item();
    rec.e = parts.e.item();
    const double vals[5] = {rec.d_x, rec.d_z, rec.d_xx, rec.g, rec.e};
    for (double v : vals) {
      if (!std::isfinite(v) || std::abs(v) > kDivergenceThreshold) {
        rec.diverged = true;
        diverged_ = true;
        return rec;  // leave every parameter untouched
      }
    }
    // All gradients are taken before any parameter moves, then applied in
    // block order, so each update sees the same frozen objective landscape.
    GradientMap<float> grads[5];
    grads[0] = scope.tape().backward(parts.d_x);
    grads[1] = scope.tape().backward(parts.d_z);
    grads[2] = scope.tape().backward(parts.d_xx);
    if (last) {
      grads[3] = scope.tape().backward(parts.g);
      grads[4] = scope.tape().backward(parts.e);
    }
    const int blocks = last ? 5 : 3;
    for (int blk = 0; blk < blocks; ++blk)
      rec.grad_norms[static_cast<std::size_t>(blk)] =
          apply_update(blk, grads[blk]);
  }
  step_ += 1;
  return rec;
}

double Trainer::apply_update(int block, GradientMap<float>& grads) {
  std::vector<Tensor<float>*> params = bundle_.block_parameters(block);
  OptimizerBlock& st = opt_[static_cast<std::size_t>(block)];
  std::vector<Tensor<float>> gs;
  gs.reserve(params.size());
  double sq = 0.0;
  for (Tensor<float>* p : params) {
    Tensor<float> g = grads.get_or_zeros(*p);
    for (float v : *g.values) {
      if (!std::isfinite(v))
        throw std::runtime_error(std::string("train_step: non-finite gradient in ") +
                                 kBlockNames[block]);
      sq += static_cast<double>(v) * v;
    }
    gs.push_back(std::move(g));
  }

  if (cfg_.optimizer == "sgd") {
    const float lr = static_cast<float>(cfg_.lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& pv = *params[i]->values;
      const auto& gv = *gs[i].values;
      for (std::size_t j = 0; j < pv.size(); ++j) pv[j] -= lr * gv[j];
    }
  } else {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& pv = *params[i]->values;
      const auto& gv = *gs[i].values;
      auto& m = st.m[i];
      auto& v = st.v[i];
      for (std::size_t j = 0; j < pv.size(); ++j) {
        const double g = gv[j];
        const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
        const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
        m[j] = static_cast<float>(mj);
        v[j] = static_cast<float>(vj);
        pv[j] -= static_cast<float>(cfg_.lr * (mj / bc1) /
                                    (std::sqrt(vj / bc2) + 1e-8));
      }
    }
  }
  return std::sqrt(sq);
}

void Trainer::save_checkpoint(const std::string& path) {
  std::string buf;
  buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(buf, kCheckpointVersion);
  put_u64(buf, config_hash(cfg_));
  put_u64(buf, static_cast<std::uint64_t>(step_));
  put_str(buf, loss_rng_.save_state());
  put_str(buf, data_rng_.save_state());
  for (int blk = 0; blk < 5; ++blk) {
    std::vector<Tensor<float>*> params = bundle_.block_parameters(blk);
    const OptimizerBlock& st = opt_[static_cast<std::size_t>(blk)];
    put_u64(buf, st.t);
    put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& pv = *params[i]->values;
      put_u64(buf, pv.size());
      for (float v : pv) put_f32(buf, v);
      for (float v : st.m[i]) put_f32(buf, v);
      for (float v : st.v[i]) put_f32(buf, v);
    }
  }
  Network<float>* nets[5] = {&bundle_.disc_x, &bundle_.disc_z, &bundle_.disc_xx,
                             &bundle_.generator, &bundle_.encoder};
  std::uint32_t sn_count = 0;
  for (Network<float>* net : nets)
    for (const auto& ps : net->params)
      if (!ps.u.empty()) ++sn_count;
  put_u32(buf, sn_count);
  for (Network<float>* net : nets) {
    for (const auto& ps : net->params) {
      if (ps.u.empty()) continue;
      put_u64(buf, ps.u.size());
      for (float v : ps.u) put_f32(buf, v);
    }
  }
  put_u32(buf, kCheckpointTrailer);

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out)
    throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

void Trainer::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  ByteReader r(buf);
  r.need(sizeof(kCheckpointMagic));
  if (std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw std::runtime_error("load_checkpoint: not a checkpoint file");
  r.pos = sizeof(kCheckpointMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  const std::uint64_t hash = r.u64();
  if (hash != config_hash(cfg_))
    throw std::runtime_error(
        "load_checkpoint: checkpoint belongs to a different config");
  const std::uint64_t step = r.u64();
  const std::string loss_state = r.str();
  const std::string data_state = r.str();

  // Everything is staged and validated before any live state changes, so a
  // bad file can never leave the trainer half-loaded.
  struct StagedBlock {
    std::uint64_t t = 0;
    std::vector<std::vector<float>> p, m, v;
  };
  StagedBlock staged[5];
  for (int blk = 0; blk < 5; ++blk) {
    std::vector<Tensor<float>*> params = bundle_.block_parameters(blk);
    StagedBlock& sb = staged[blk];
    sb.t = r.u64();
    const std::uint32_t count = r.u32();
    if (count != params.size())
      throw std::runtime_error("load_checkpoint: parameter layout mismatch");
    sb.p.resize(count);
    sb.m.resize(count);
    sb.v.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint64_t n = r.u64();
      if (n != params[i]->values->size())
        throw std::runtime_error("load_checkpoint: parameter layout mismatch");
      r.floats(sb.p[i], n);
      r.floats(sb.m[i], n);
      r.floats(sb.v[i], n);
    }
  }
  Network<float>* nets[5] = {&bundle_.disc_x, &bundle_.disc_z, &bundle_.disc_xx,
                             &bundle_.generator, &bundle_.encoder};
  std::vector<std::vector<float>*> u_slots;
  for (Network<float>* net : nets)
    for (auto& ps : net->params)
      if (!ps.u.empty()) u_slots.push_back(&ps.u);
  const std::uint32_t sn_count = r.u32();
  if (sn_count != u_slots.size())
    throw std::runtime_error("load_checkpoint: parameter layout mismatch");
  std::vector<std::vector<float>> staged_u(sn_count);
  for (std::uint32_t i = 0; i < sn_count; ++i) {
    const std::uint64_t n = r.u64();
    if (n != u_slots[i]->size())
      throw std::runtime_error("load_checkpoint: parameter layout mismatch");
    r.floats(staged_u[i], n);
  }
  if (r.u32() != kCheckpointTrailer)
    throw std::runtime_error("load_checkpoint: truncated checkpoint");
  if (r.pos != buf.size())
    throw std::runtime_error("load_checkpoint: trailing bytes after checkpoint");

  loss_rng_.load_state(loss_state);
  data_rng_.load_state(data_state);
  step_ = static_cast<int>(step);
  diverged_ = false;
  for (int blk = 0; blk < 5; ++blk) {
    std::vector<Tensor<float>*> params = bundle_.block_parameters(blk);
    OptimizerBlock& st = opt_[static_cast<std::size_t>(blk)];
    st.t = staged[blk].t;
    for (std::size_t i = 0; i < params.size(); ++i) {
      *params[i]->values = std::move(staged[blk].p[i]);
      st.m[i] = std::move(staged[blk].m[i]);
      st.v[i] = std::move(staged[blk].v[i]);
    }
  }
  for (std::size_t i = 0; i < u_slots.size(); ++i)
    *u_slots[i] = std::move(staged_u[i]);
}

Tensor<float> Trainer::sample(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample: need at least one draw");
  Network<float>::ForwardOptions opt;
  opt.sn_update = false;  // keep inference out of the training state
  const int L = bundle_.latent_dim;
  const Shape& is = bundle_.item_shape;
  std::vector<float> out(static_cast<std::size_t>(n) * is[0] * is[1] * is[2]);
  const std::int64_t item = static_cast<std::int64_t>(is[0]) * is[1] * is[2];
  for (int start = 0; start < n; start += 256) {
    const int b = std::min(256, n - start);
    std::vector<float> zv(static_cast<std::size_t>(b) * L);
    for (float& v : zv) v = static_cast<float>(rng.normal());
    Tensor<float> z(Shape{b, L}, std::move(zv));
    Tensor<float> xs = generator_forward(bundle_.generator, z, opt);
    std::copy_n(xs.values->begin(), static_cast<std::size_t>(b) * item,
                out.begin() + static_cast<std::int64_t>(start) * item);
  }
  return Tensor<float>(Shape{n, is[0], is[1], is[2]}, std::move(out));
}

Tensor<float> Trainer::reconstruct(const Tensor<float>& x, Rng& rng) {
  if (x.shape.size() != 4 || x.shape[1] != bundle_.item_shape[0] ||
      x.shape[2] != bundle_.item_shape[1] || x.shape[3] != bundle_.item_shape[2])
    throw std::invalid_argument("reconstruct: batch does not match the item shape");
  Network<float>::ForwardOptions opt;
  opt.sn_update = false;
  const int n = x.shape[0];
  const std::int64_t item = x.numel() / n;
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  for (int start = 0; start < n; start += 256) {
    const int b = std::min(256, n - start);
    std::vector<float> xv(static_cast<std::size_t>(b) * item);
    std::copy_n(x.values->begin() + static_cast<std::int64_t>(start) * item,
                b * item, xv.begin());
    Tensor<float> xc(Shape{b, x.shape[1], x.shape[2], x.shape[3]},
                     std::move(xv));
    GaussianPosterior<float> post = encoder_forward(bundle_.encoder, xc, opt);
    Tensor<float> z = sample_latent(post, rng);
    Tensor<float> xr = generator_forward(bundle_.generator, z, opt);
    std::copy_n(xr.values->begin(), static_cast<std::size_t>(b) * item,
                out.begin() + static_cast<std::int64_t>(start) * item);
  }
  return Tensor<float>(x.shape, std::move(out));
}

Tensor<float> Trainer::encode(const Tensor<float>& x, Rng& rng) {
  if (x.shape.size() != 4 || x.shape[1] != bundle_.item_shape[0] ||
      x.shape[2] != bundle_.item_shape[1] || x.shape[3] != bundle_.item_shape[2])
    throw std::invalid_argument("encode: batch does not match the item shape");
  Network<float>::ForwardOptions opt;
  opt.sn_update = false;
  const int n = x.shape[0];
  const std::int64_t item = x.numel() / n;
  const int latent = cfg_.latent_dim;
  std::vector<float> out(static_cast<std::size_t>(n) * latent);
  for (int start = 0; start < n; start += 256) {
    const int b = std::min(256, n - start);
    std::vector<float> xv(static_cast<std::size_t>(b) * item);
    std::copy_n(x.values->begin() + static_cast<std::int64_t>(start) * item,
                b * item, xv.begin());
    Tensor<float> xc(Shape{b, x.shape[1], x.shape[2], x.shape[3]},
                     std::move(xv));
    GaussianPosterior<float> post = encoder_forward(bundle_.encoder, xc, opt);
    Tensor<float> z = sample_latent(post, rng);
    std::copy_n(z.values->begin(), static_cast<std::size_t>(b) * latent,
                out.begin() + static_cast<std::int64_t>(start) * latent);
  }
  return Tensor<float>({n, latent}, std::move(out));
}

MetricReport Trainer::evaluate() {
  const int n = data_.items.shape[0];
  const int m = std::min(n, 500);
  const std::int64_t item = data_.items.numel() / n;
  std::vector<float> ov(static_cast<std::size_t>(m) * item);
  std::copy_n(data_.items.values->begin(), ov.size(), ov.begin());
  Tensor<float> originals(
      Shape{m, data_.items.shape[1], data_.items.shape[2], data_.items.shape[3]},
      std::move(ov));

  Rng eval_rng(derive_seed(cfg_.seed, 204));
  Tensor<float> recons = reconstruct(originals, eval_rng);
  Tensor<float> samples = sample(m, eval_rng);

  ProbeConfig pc;
  pc.augment = cfg_.augment;
  pc.seed = derive_seed(cfg_.seed, 205);
  ProbeResult probe = train_probe_classifier(data_, pc);
  return compute_metrics(probe.probe, originals, recons, samples, 10);
}

void Trainer::emit_previews(int step) {
  Rng rng(derive_seed(cfg_.seed + static_cast<std::uint64_t>(step), 206));
  const Shape& is = bundle_.item_shape;
  const std::string base = cfg_.out_dir + "/";
  const std::string tag = std::to_string(step);
  Tensor<float> samples = sample(64, rng);
  // Height-1 items are point clouds, not images; everything else is a grid.
  if (is[1] == 1) {
    write_scatter(samples, base + "samples_" + tag + ".tsv");
    const int m = std::min(data_.items.shape[0], 64);
    std::vector<float> ov(static_cast<std::size_t>(m) * is[0] * is[1] * is[2]);
    std::copy_n(data_.items.values->begin(), ov.size(), ov.begin());
    Tensor<float> originals(Shape{m, is[0], is[1], is[2]}, std::move(ov));
    write_scatter(reconstruct(originals, rng), base + "recons_" + tag + ".tsv");
    return;
  }
  const char* ext = is[0] == 3 ? ".ppm" : ".pgm";
  write_image_grid(samples, 8, base + "samples_" + tag + ext);
  const int m = std::min(data_.items.shape[0], 8);
  std::vector<float> ov(static_cast<std::size_t>(m) * is[0] * is[1] * is[2]);
  std::copy_n(data_.items.values->begin(), ov.size(), ov.begin());
  Tensor<float> originals(Shape{m, is[0], is[1], is[2]}, std::move(ov));
  Tensor<float> recons = reconstruct(originals, rng);
  // Odd columns show the original, even columns its reconstruction.
  write_image_grid(interleave_pairs(originals, recons), 8,
                   base + "recons_" + tag + ext);
}

void Trainer::run() {
  namespace fs = std::filesystem;
  fs::create_directories(cfg_.out_dir);
  write_config(cfg_, cfg_.out_dir + "/config.txt");
  save_checkpoint(cfg_.out_dir + "/ckpt_0.bin");

  std::ofstream log(cfg_.out_dir + "/losses.tsv");
  if (!log)
    throw std::runtime_error("run: cannot write losses.tsv in " + cfg_.out_dir);
  log << "step\tloss_d_x\tloss_d_z\tloss_d_xx\tloss_g\tloss_e\n";

  int last_checkpoint = 0;
  for (int s = 1; s <= cfg_.steps; ++s) {
    StepRecord rec = train_step();
    log << rec.step << '\t' << format_double(rec.d_x) << '\t'
        << format_double(rec.d_z) << '\t' << format_double(rec.d_xx) << '\t'
        << format_double(rec.g) << '\t' << format_double(rec.e) << '\n';
    if (rec.diverged) break;
    if (rec.step % cfg_.checkpoint_every == 0) {
      save_checkpoint(cfg_.out_dir + "/ckpt_" + std::to_string(rec.step) +
                      ".bin");
      last_checkpoint = rec.step;
    }
    if (rec.step % cfg_.eval_every == 0) emit_previews(rec.step);
  }
  log.close();

  if (!diverged_ && step_ > 0 && last_checkpoint != step_)
    save_checkpoint(cfg_.out_dir + "/ckpt_" + std::to_string(step_) + ".bin");

  if (!diverged_ && cfg_.steps > 0)
    write_metric_report(evaluate(), cfg_.out_dir + "/metrics.txt");

  std::ofstream manifest(cfg_.out_dir + "/manifest.txt");
  manifest << "steps_completed=" << step_ << "\n"
           << "diverged=" << (diverged_ ? 1 : 0) << "\n";
  if (!manifest)
    throw std::runtime_error("run: cannot write manifest.txt in " +
                             cfg_.out_dir);
}

}  // namespace pagan
