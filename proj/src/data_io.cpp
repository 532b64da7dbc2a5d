#include "pagan/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pagan/config.hpp"

namespace pagan {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw std::runtime_error("load_mnist_idx: truncated " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::vector<std::uint8_t> read_payload(std::istream& in, std::size_t n,
                                       const std::string& what) {
  std::vector<std::uint8_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw std::runtime_error("load_mnist_idx: truncated " + what);
  return buf;
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs)
    throw std::runtime_error("load_mnist_idx: cannot open image file " +
                             images_path);
  if (read_be32(imgs, "image header") != 0x00000803u)
    throw std::runtime_error("load_mnist_idx: image file magic mismatch in " +
                             images_path);
  const std::uint32_t n = read_be32(imgs, "image count");
  const std::uint32_t rows = read_be32(imgs, "image rows");
  const std::uint32_t cols = read_be32(imgs, "image cols");
  if (n > (1u << 24) || rows == 0 || rows > 4096 || cols == 0 || cols > 4096)
    throw std::runtime_error("load_mnist_idx: implausible image dimensions");
  const std::size_t count = std::size_t(n) * rows * cols;
  std::vector<std::uint8_t> pix = read_payload(imgs, count, "image data");

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs)
    throw std::runtime_error("load_mnist_idx: cannot open label file " +
                             labels_path);
  if (read_be32(labs, "label header") != 0x00000801u)
    throw std::runtime_error("load_mnist_idx: label file magic mismatch in " +
                             labels_path);
  const std::uint32_t ln = read_be32(labs, "label count");
  if (ln != n)
    throw std::runtime_error(
        "load_mnist_idx: image/label count mismatch (" + std::to_string(n) +
        " images vs " + std::to_string(ln) + " labels)");
  std::vector<std::uint8_t> lab = read_payload(labs, ln, "label data");

  Dataset d;
  d.name = "mnist";
  std::vector<float> vals(count);
  for (std::size_t i = 0; i < count; ++i)
    vals[i] = static_cast<float>(pix[i]) / 255.0f * 2.0f - 1.0f;
  d.items = Tensor<float>(
      Shape{int(n), 1, int(rows), int(cols)}, std::move(vals));
  d.labels.resize(ln);
  int max_label = 0;
  for (std::uint32_t i = 0; i < ln; ++i) {
    d.labels[i] = lab[i];
    max_label = std::max(max_label, int(lab[i]));
  }
  d.num_classes = max_label + 1;
  return d;
}

Dataset gaussian_ring(const GaussianRingSpec& spec, Rng& rng) {
  if (spec.modes < 1)
    throw std::invalid_argument("gaussian_ring: modes must be at least 1");
  if (!(spec.stddev > 0.0))
    throw std::invalid_argument("gaussian_ring: stddev must be positive");
  if (spec.radius < 0.0)
    throw std::invalid_argument("gaussian_ring: radius must be non-negative");
  if (spec.samples < 0)
    throw std::invalid_argument("gaussian_ring: samples must be non-negative");

  const double two_pi = 2.0 * 3.14159265358979323846;
  std::vector<double> cx(spec.modes), cy(spec.modes);
  for (int k = 0; k < spec.modes; ++k) {
    const double a = two_pi * k / spec.modes;
    cx[k] = spec.radius * std::cos(a);
    cy[k] = spec.radius * std::sin(a);
  }
  Dataset d;
  d.name = "ring";
  std::vector<float> vals(std::size_t(spec.samples) * 2);
  d.labels.resize(std::size_t(spec.samples));
  for (int i = 0; i < spec.samples; ++i) {
    const int k = rng.uniform_int(spec.modes);
    d.labels[std::size_t(i)] = k;
    vals[std::size_t(2 * i)] =
        static_cast<float>(cx[k] + spec.stddev * rng.normal());
    vals[std::size_t(2 * i + 1)] =
        static_cast<float>(cy[k] + spec.stddev * rng.normal());
  }
  d.items = Tensor<float>(Shape{spec.samples, 1, 1, 2}, std::move(vals));
  d.num_classes = spec.modes;
  return d;
}

Dataset synthetic_shapes(int per_class, int side, Rng& rng) {
  if (per_class < 1)
    throw std::invalid_argument("synthetic_shapes: per_class must be positive");
  if (side < 8)
    throw std::invalid_argument("synthetic_shapes: side must be at least 8");

  const int kClasses = 4;
  const int n = kClasses * per_class;
  const std::size_t hw = std::size_t(side) * side;
  Dataset d;
  d.name = "shapes";
  d.num_classes = kClasses;
  d.labels.resize(std::size_t(n));
  std::vector<float> vals(std::size_t(n) * hw, -1.0f);

  for (int i = 0; i < n; ++i) {
    const int cls = i % kClasses;
    d.labels[std::size_t(i)] = cls;
    float* img = vals.data() + std::size_t(i) * hw;
    const int cx = side / 2 + rng.uniform_int(5) - 2;
    const int cy = side / 2 + rng.uniform_int(5) - 2;
    const int s = side / 5 + rng.uniform_int(std::max(1, side / 6));
    auto put = [&](int y, int x) {
      if (y >= 0 && y < side && x >= 0 && x < side)
        img[std::size_t(y) * side + x] = 1.0f;
    };
    switch (cls) {
      case 0:  // filled square
        for (int y = cy - s; y <= cy + s; ++y)
          for (int x = cx - s; x <= cx + s; ++x) put(y, x);
        break;
      case 1:  // filled disk
        for (int y = cy - s; y <= cy + s; ++y)
          for (int x = cx - s; x <= cx + s; ++x)
            if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= s * s) put(y, x);
        break;
      case 2:  // plus-shaped cross
        for (int t = -1; t <= 1; ++t)
          for (int u = -s - 1; u <= s + 1; ++u) {
            put(cy + t, cx + u);
            put(cy + u, cx + t);
          }
        break;
      default:  // upward triangle
        for (int r = 0; r <= 2 * s; ++r) {
          const int half = r / 2;
          for (int x = cx - half; x <= cx + half; ++x) put(cy - s + r, x);
        }
        break;
    }
    for (std::size_t p = 0; p < hw; ++p) {
      const float noisy = img[p] + 0.05f * static_cast<float>(rng.normal());
      img[p] = std::min(1.0f, std::max(-1.0f, noisy));
    }
  }
  d.items = Tensor<float>(Shape{n, 1, side, side}, std::move(vals));
  return d;
}

std::uint8_t pixel_byte(float v) {
  const double x = std::min(1.0, std::max(-1.0, double(v)));
  const double b = std::floor((x + 1.0) * 127.5 + 0.5);
  return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, b)));
}

void write_image_grid(const Tensor<float>& images, int cols,
                      const std::string& path) {
  if (images.shape.size() != 4)
    throw std::invalid_argument("write_image_grid: expected (N,C,H,W) images");
  const int n = images.shape[0], c = images.shape[1];
  const int h = images.shape[2], w = images.shape[3];
  if (c != 1 && c != 3)
    throw std::invalid_argument(
        "write_image_grid: unsupported channel count " + std::to_string(c));
  if (cols < 1)
    throw std::invalid_argument("write_image_grid: cols must be at least 1");
  if (n < 1)
    throw std::invalid_argument("write_image_grid: empty batch");

  const int rows = (n + cols - 1) / cols;
  const int gw = cols * w, gh = rows * h;
  std::vector<std::uint8_t> canvas(std::size_t(gw) * gh * c, 0);
  const auto& v = *images.values;
  for (int i = 0; i < n; ++i) {
    const int oy = (i / cols) * h, ox = (i % cols) * w;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t src = ((std::size_t(i) * c + ch) * h + y) * w + x;
          const std::size_t dst =
              (std::size_t(oy + y) * gw + (ox + x)) * c + ch;
          canvas[dst] = pixel_byte(v[src]);
        }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("write_image_grid: cannot write " + path);
  out << (c == 1 ? "P5" : "P6") << "\n" << gw << " " << gh << "\n255\n";
  out.write(reinterpret_cast<const char*>(canvas.data()),
            static_cast<std::streamsize>(canvas.size()));
  if (!out)
    throw std::runtime_error("write_image_grid: short write to " + path);
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty())
    throw std::runtime_error("read_pgm: truncated header in " + path);
  return tok;
}

int pnm_int(std::istream& in, const std::string& path, const char* what) {
  const std::string tok = pnm_token(in, path);
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || v <= 0)
    throw std::runtime_error("read_pgm: bad " + std::string(what) + " in " +
                             path);
  return v;
}

}  // namespace

PgmImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
  const std::string magic = pnm_token(in, path);
  PgmImage img;
  if (magic == "P5")
    img.channels = 1;
  else if (magic == "P6")
    img.channels = 3;
  else
    throw std::runtime_error("read_pgm: unsupported magic '" + magic +
                             "' in " + path);
  img.width = pnm_int(in, path, "width");
  img.height = pnm_int(in, path, "height");
  const int maxval = pnm_int(in, path, "maxval");
  if (maxval != 255)
    throw std::runtime_error("read_pgm: expected maxval 255 in " + path);
  // The single whitespace byte after maxval was already consumed by the
  // tokenizer; the payload starts here.
  const std::size_t count =
      std::size_t(img.width) * img.height * img.channels;
  img.bytes.resize(count);
  in.read(reinterpret_cast<char*>(img.bytes.data()),
          static_cast<std::streamsize>(count));
  if (in.gcount() != static_cast<std::streamsize>(count))
    throw std::runtime_error("read_pgm: truncated pixel data in " + path);
  return img;
}

Tensor<float> interleave_pairs(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape != b.shape || a.shape.empty())
    throw std::invalid_argument("interleave_pairs: batches must share a shape");
  const int n = a.shape[0];
  const std::int64_t item = n > 0 ? a.numel() / n : 0;
  std::vector<float> out(std::size_t(a.numel()) * 2);
  const auto& av = *a.values;
  const auto& bv = *b.values;
  for (int i = 0; i < n; ++i) {
    std::copy_n(av.begin() + i * item, item,
                out.begin() + std::size_t(2 * i) * item);
    std::copy_n(bv.begin() + i * item, item,
                out.begin() + std::size_t(2 * i + 1) * item);
  }
  Shape s = a.shape;
  s[0] = 2 * n;
  return Tensor<float>(std::move(s), std::move(out));
}

void write_scatter(const Tensor<float>& points, const std::string& path) {
  if (points.shape.empty() || points.shape[0] < 0)
    throw std::invalid_argument("write_scatter: expected a batch of points");
  const int n = points.shape[0];
  if (n > 0 && points.numel() != std::int64_t(n) * 2)
    throw std::invalid_argument("write_scatter: expected 2-D points");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_scatter: cannot write " + path);
  const auto& v = *points.values;
  out.precision(9);
  for (int i = 0; i < n; ++i)
    out << v[std::size_t(2 * i)] << "\t" << v[std::size_t(2 * i + 1)] << "\n";
  if (!out) throw std::runtime_error("write_scatter: short write to " + path);
}

// ---------------------------------------------------------------------------
// Configuration text format
// ---------------------------------------------------------------------------

namespace {

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config: bad value '" + value + "' for key '" +
                              key + "'");
}

int parse_int(const std::string& key, const std::string& value) {
  int v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size())
    bad_value(key, value);
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size())
    bad_value(key, value);
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  if (value.empty()) bad_value(key, value);
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || !std::isfinite(v))
    bad_value(key, value);
  return v;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, p);
}

const char* game_mode_name(GameMode m) {
  switch (m) {
    case GameMode::minimax: return "minimax";
    case GameMode::nonsaturating: return "nonsaturating";
    case GameMode::fgan: return "fgan";
    case GameMode::wasserstein: return "wasserstein";
  }
  return "?";
}

const char* alpha_mode_name(AlphaMode m) {
  return m == AlphaMode::shared ? "shared" : "independent";
}

void apply_config_entry(TrainConfig& cfg, const std::string& key,
                        const std::string& value) {
  if (key == "batch_size") {
    cfg.batch_size = parse_int(key, value);
  } else if (key == "steps") {
    cfg.steps = parse_int(key, value);
  } else if (key == "optimizer") {
    if (value != "adam" && value != "sgd") bad_value(key, value);
    cfg.optimizer = value;
  } else if (key == "lr") {
    cfg.lr = parse_double(key, value);
  } else if (key == "beta1") {
    cfg.beta1 = parse_double(key, value);
  } else if (key == "beta2") {
    cfg.beta2 = parse_double(key, value);
  } else if (key == "critic_steps") {
    cfg.critic_steps = parse_int(key, value);
    cfg.critic_steps_explicit = true;
  } else if (key == "game") {
    if (value == "minimax")
      cfg.game.mode = GameMode::minimax;
    else if (value == "nonsaturating")
      cfg.game.mode = GameMode::nonsaturating;
    else if (value == "fgan")
      cfg.game.mode = GameMode::fgan;
    else if (value == "wasserstein")
      cfg.game.mode = GameMode::wasserstein;
    else
      bad_value(key, value);
  } else if (key == "fdiv") {
    try {
      cfg.game.fdiv = fdiv_tag_from_name(value);
    } catch (const std::invalid_argument&) {
      bad_value(key, value);
    }
  } else if (key == "gp_lambda") {
    cfg.game.gp_lambda = parse_double(key, value);
  } else if (key == "alpha_mode") {
    if (value == "shared")
      cfg.game.alpha_mode = AlphaMode::shared;
    else if (value == "independent")
      cfg.game.alpha_mode = AlphaMode::independent;
    else
      bad_value(key, value);
  } else if (key == "pad_fraction") {
    cfg.augment.pad_fraction = parse_double(key, value);
  } else if (key == "latent_dim") {
    cfg.latent_dim = parse_int(key, value);
  } else if (key == "fusion") {
    if (value != "width" && value != "channel") bad_value(key, value);
    cfg.fusion = value;
    cfg.fusion_explicit = true;
  } else if (key == "dataset") {
    cfg.dataset = value;
  } else if (key == "seed") {
    cfg.seed = parse_u64(key, value);
  } else if (key == "checkpoint_every") {
    cfg.checkpoint_every = parse_int(key, value);
  } else if (key == "eval_every") {
    cfg.eval_every = parse_int(key, value);
  } else if (key == "out_dir") {
    if (value.empty()) bad_value(key, value);
    cfg.out_dir = value;
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 2)
    throw std::invalid_argument("config: batch_size must be at least 2");
  if (cfg.steps < 0)
    throw std::invalid_argument("config: steps must be non-negative");
  if (cfg.optimizer != "adam" && cfg.optimizer != "sgd")
    throw std::invalid_argument("config: optimizer must be adam or sgd");
  if (!(cfg.lr > 0.0))
    throw std::invalid_argument("config: lr must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0)
    throw std::invalid_argument("config: beta1 must lie in [0, 1)");
  if (cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw std::invalid_argument("config: beta2 must lie in [0, 1)");
  if (cfg.critic_steps < 1)
    throw std::invalid_argument("config: critic_steps must be at least 1");
  if (cfg.latent_dim < 1)
    throw std::invalid_argument("config: latent_dim must be at least 1");
  if (cfg.fusion != "width" && cfg.fusion != "channel")
    throw std::invalid_argument("config: fusion must be width or channel");
  if (cfg.dataset != "ring" && cfg.dataset != "shapes" &&
      cfg.dataset != "mnist")
    throw std::invalid_argument("config: dataset must be ring, shapes or mnist");
  if (cfg.checkpoint_every < 1)
    throw std::invalid_argument("config: checkpoint_every must be at least 1");
  if (cfg.eval_every < 1)
    throw std::invalid_argument("config: eval_every must be at least 1");
  if (cfg.augment.pad_fraction < 0.0 || cfg.augment.pad_fraction >= 0.5)
    throw std::invalid_argument("config: pad_fraction must lie in [0, 0.5)");
  if (cfg.out_dir.empty())
    throw std::invalid_argument("config: out_dir must not be empty");
  try {
    validate_game(cfg.game);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

void finalize_config(TrainConfig& cfg) {
  if (!cfg.critic_steps_explicit && cfg.game.mode == GameMode::wasserstein)
    cfg.critic_steps = 10;
  if (!cfg.fusion_explicit && cfg.game.mode == GameMode::wasserstein)
    cfg.fusion = "channel";
  if (const char* env = std::getenv("PAGAN_SEED"))
    cfg.seed = parse_u64("PAGAN_SEED", env);
  validate_config(cfg);
}

TrainConfig parse_config_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  TrainConfig cfg;
  std::string line;
  while (std::getline(in, line)) {
    if (const std::size_t h = line.find('#'); h != std::string::npos)
      line.erase(h);
    line = trimmed(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value, got '" + line +
                                  "'");
    apply_config_entry(cfg, trimmed(line.substr(0, eq)),
                       trimmed(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig parse_config(const std::string& path) {
  TrainConfig cfg = parse_config_raw(path);
  finalize_config(cfg);
  return cfg;
}

namespace {

std::string config_body(const TrainConfig& cfg, bool with_out_dir) {
  std::ostringstream os;
  os << "batch_size=" << cfg.batch_size << "\n"
     << "steps=" << cfg.steps << "\n"
     << "optimizer=" << cfg.optimizer << "\n"
     << "lr=" << format_double(cfg.lr) << "\n"
     << "beta1=" << format_double(cfg.beta1) << "\n"
     << "beta2=" << format_double(cfg.beta2) << "\n"
     << "critic_steps=" << cfg.critic_steps << "\n"
     << "game=" << game_mode_name(cfg.game.mode) << "\n"
     << "fdiv=" << fdiv_spec(cfg.game.fdiv).name << "\n"
     << "gp_lambda=" << format_double(cfg.game.gp_lambda) << "\n"
     << "alpha_mode=" << alpha_mode_name(cfg.game.alpha_mode) << "\n"
     << "pad_fraction=" << format_double(cfg.augment.pad_fraction) << "\n"
     << "latent_dim=" << cfg.latent_dim << "\n"
     << "fusion=" << cfg.fusion << "\n"
     << "dataset=" << cfg.dataset << "\n"
     << "seed=" << cfg.seed << "\n"
     << "checkpoint_every=" << cfg.checkpoint_every << "\n"
     << "eval_every=" << cfg.eval_every << "\n";
  if (with_out_dir) os << "out_dir=" << cfg.out_dir << "\n";
  return os.str();
}

}  // namespace

std::string config_text(const TrainConfig& cfg) {
  return config_body(cfg, true);
}

void write_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_config: cannot write " + path);
  out << config_text(cfg);
  if (!out) throw std::runtime_error("write_config: short write to " + path);
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  // FNV-1a over the canonical text, minus the purely operational out_dir so
  // a checkpoint can be resumed into a different directory.
  const std::string body = config_body(cfg, false);
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : body) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace pagan
