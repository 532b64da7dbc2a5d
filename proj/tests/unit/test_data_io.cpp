#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "pagan/config.hpp"
#include "pagan/data_io.hpp"
#include "pagan/rng.hpp"

using pagan::Dataset;
using pagan::GaussianRingSpec;
using pagan::Rng;
using pagan::TrainConfig;

namespace {

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(std::uint8_t(x >> 24));
  v.push_back(std::uint8_t(x >> 16));
  v.push_back(std::uint8_t(x >> 8));
  v.push_back(std::uint8_t(x));
}

std::string write_bytes(const std::string& name,
                        const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(name, std::ios::binary);
  REQUIRE(bool(out));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  return name;
}

std::string write_text(const std::string& name, const std::string& text) {
  std::ofstream out(name);
  REQUIRE(bool(out));
  out << text;
  return name;
}

std::vector<std::uint8_t> slurp(const std::string& name) {
  std::ifstream in(name, std::ios::binary);
  REQUIRE(bool(in));
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

// Tiny IDX pair: two 2x2 images with pinned corner bytes, labels {3, 7}.
std::pair<std::string, std::string> tiny_idx() {
  std::vector<std::uint8_t> imgs;
  push_be32(imgs, 0x00000803u);
  push_be32(imgs, 2);
  push_be32(imgs, 2);
  push_be32(imgs, 2);
  for (std::uint8_t b : {0, 255, 128, 64, 10, 20, 30, 40}) imgs.push_back(b);
  std::vector<std::uint8_t> labs;
  push_be32(labs, 0x00000801u);
  push_be32(labs, 2);
  labs.push_back(3);
  labs.push_back(7);
  return {write_bytes("idx_imgs.bin", imgs), write_bytes("idx_labs.bin", labs)};
}

}  // namespace

TEST_CASE("idx loading normalizes bytes onto the unit interval") {
  auto [ip, lp] = tiny_idx();
  Dataset d = pagan::load_mnist_idx(ip, lp);
  CHECK(d.name == "mnist");
  CHECK(d.items.shape == pagan::Shape{2, 1, 2, 2});
  CHECK((*d.items.values)[0] == -1.0f);
  CHECK((*d.items.values)[1] == 1.0f);
  CHECK((*d.items.values)[2] ==
        doctest::Approx(128.0 / 255.0 * 2.0 - 1.0).epsilon(1e-6));
  CHECK(d.labels == std::vector<int>{3, 7});
  CHECK(d.num_classes == 8);
}

TEST_CASE("idx loading rejects malformed files by name") {
  auto [ip, lp] = tiny_idx();

  std::vector<std::uint8_t> bad_magic;
  push_be32(bad_magic, 0x00000802u);
  push_be32(bad_magic, 1);
  push_be32(bad_magic, 2);
  push_be32(bad_magic, 2);
  for (int i = 0; i < 4; ++i) bad_magic.push_back(0);
  const std::string bm = write_bytes("idx_badmagic.bin", bad_magic);
  CHECK_THROWS_WITH_AS(pagan::load_mnist_idx(bm, lp),
                       doctest::Contains("magic"), std::runtime_error);

  std::vector<std::uint8_t> trunc;
  push_be32(trunc, 0x00000803u);
  push_be32(trunc, 2);
  push_be32(trunc, 2);
  push_be32(trunc, 2);
  trunc.push_back(1);  // 1 of 8 payload bytes
  const std::string tr = write_bytes("idx_trunc.bin", trunc);
  CHECK_THROWS_WITH_AS(pagan::load_mnist_idx(tr, lp),
                       doctest::Contains("truncated"), std::runtime_error);

  std::vector<std::uint8_t> labs3;
  push_be32(labs3, 0x00000801u);
  push_be32(labs3, 3);
  for (int i = 0; i < 3; ++i) labs3.push_back(0);
  const std::string l3 = write_bytes("idx_labs3.bin", labs3);
  CHECK_THROWS_WITH_AS(pagan::load_mnist_idx(ip, l3),
                       doctest::Contains("count mismatch"), std::runtime_error);

  CHECK_THROWS_WITH_AS(pagan::load_mnist_idx("no_such_file.bin", lp),
                       doctest::Contains("cannot open"), std::runtime_error);
  CHECK_THROWS_WITH_AS(pagan::load_mnist_idx(ip, bm),
                       doctest::Contains("label file magic"),
                       std::runtime_error);
}

TEST_CASE("a single gaussian mode at the origin has a tight sample mean") {
  GaussianRingSpec spec;
  spec.modes = 1;
  spec.radius = 0.0;
  spec.stddev = 0.1;
  spec.samples = 10000;
  Rng rng(7);
  Dataset d = pagan::gaussian_ring(spec, rng);
  CHECK(d.items.shape == pagan::Shape{10000, 1, 1, 2});
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < spec.samples; ++i) {
    mx += (*d.items.values)[std::size_t(2 * i)];
    my += (*d.items.values)[std::size_t(2 * i + 1)];
  }
  mx /= spec.samples;
  my /= spec.samples;
  const double tol = 3.0 * spec.stddev / std::sqrt(double(spec.samples));
  CHECK(std::fabs(mx) < tol);
  CHECK(std::fabs(my) < tol);
}

TEST_CASE("ring modes are hit uniformly and sit on their centers") {
  GaussianRingSpec spec;
  spec.samples = 100000;
  Rng rng(8);
  Dataset d = pagan::gaussian_ring(spec, rng);
  std::vector<int> counts(8, 0);
  for (int lab : d.labels) counts[std::size_t(lab)]++;
  const double expect = spec.samples / 8.0;
  const double sigma = std::sqrt(spec.samples * (1.0 / 8.0) * (7.0 / 8.0));
  for (int k = 0; k < 8; ++k)
    CHECK(std::fabs(counts[std::size_t(k)] - expect) < 4.0 * sigma);

  GaussianRingSpec narrow = spec;
  narrow.samples = 512;
  narrow.stddev = 1e-9;
  Rng rng2(9);
  Dataset nd = pagan::gaussian_ring(narrow, rng2);
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int i = 0; i < narrow.samples; ++i) {
    const int k = nd.labels[std::size_t(i)];
    const double cx = narrow.radius * std::cos(two_pi * k / 8.0);
    const double cy = narrow.radius * std::sin(two_pi * k / 8.0);
    CHECK(std::fabs((*nd.items.values)[std::size_t(2 * i)] - cx) < 1e-6);
    CHECK(std::fabs((*nd.items.values)[std::size_t(2 * i + 1)] - cy) < 1e-6);
  }
}

TEST_CASE("ring sampling is deterministic under a seed and validates input") {
  GaussianRingSpec spec;
  spec.samples = 64;
  Rng a(11), b(11);
  Dataset da = pagan::gaussian_ring(spec, a);
  Dataset db = pagan::gaussian_ring(spec, b);
  CHECK(*da.items.values == *db.items.values);
  CHECK(da.labels == db.labels);

  Rng r(12);
  GaussianRingSpec bad = spec;
  bad.modes = 0;
  CHECK_THROWS_AS(pagan::gaussian_ring(bad, r), std::invalid_argument);
  bad = spec;
  bad.stddev = 0.0;
  CHECK_THROWS_AS(pagan::gaussian_ring(bad, r), std::invalid_argument);
  bad = spec;
  bad.radius = -0.1;
  CHECK_THROWS_AS(pagan::gaussian_ring(bad, r), std::invalid_argument);
}

TEST_CASE("shape dataset is balanced, bounded and class-distinct") {
  Rng rng(13);
  Dataset d = pagan::synthetic_shapes(25, 16, rng);
  CHECK(d.items.shape == pagan::Shape{100, 1, 16, 16});
  CHECK(d.num_classes == 4);
  std::vector<int> counts(4, 0);
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    CHECK(d.labels[i] == int(i % 4));
    counts[std::size_t(d.labels[i])]++;
  }
  for (int c : counts) CHECK(c == 25);
  for (float v : *d.items.values) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  // Filled squares carry clearly more ink than crosses.
  double square_mass = 0.0, cross_mass = 0.0;
  for (int i = 0; i < 100; ++i) {
    double m = 0.0;
    for (int p = 0; p < 256; ++p)
      m += (*d.items.values)[std::size_t(i) * 256 + p] > 0.0f ? 1.0 : 0.0;
    if (d.labels[std::size_t(i)] == 0) square_mass += m;
    if (d.labels[std::size_t(i)] == 2) cross_mass += m;
  }
  CHECK(square_mass > cross_mass);

  Rng r2(13);
  Dataset d2 = pagan::synthetic_shapes(25, 16, r2);
  CHECK(*d.items.values == *d2.items.values);
  CHECK_THROWS_AS(pagan::synthetic_shapes(0, 16, r2), std::invalid_argument);
  CHECK_THROWS_AS(pagan::synthetic_shapes(2, 4, r2), std::invalid_argument);
}

TEST_CASE("grid writing hits the exact byte mapping") {
  CHECK(pagan::pixel_byte(-1.0f) == 0);
  CHECK(pagan::pixel_byte(1.0f) == 255);
  CHECK(pagan::pixel_byte(0.0f) == 128);
  CHECK(pagan::pixel_byte(-2.0f) == 0);
  CHECK(pagan::pixel_byte(2.0f) == 255);

  pagan::Tensor<float> black({1, 1, 2, 2}, std::vector<float>(4, -1.0f));
  pagan::write_image_grid(black, 1, "grid_black.pgm");
  const std::vector<std::uint8_t> raw = slurp("grid_black.pgm");
  const std::string header = "P5\n2 2\n255\n";
  REQUIRE(raw.size() == header.size() + 4);
  for (std::size_t i = 0; i < header.size(); ++i)
    CHECK(raw[i] == std::uint8_t(header[i]));
  for (std::size_t i = 0; i < 4; ++i) CHECK(raw[header.size() + i] == 0);
}

TEST_CASE("image grids round-trip through the reader byte-exactly") {
  Rng rng(14);
  std::vector<float> vals(6 * 3 * 4);
  for (float& v : vals) v = float(rng.uniform() * 2.0 - 1.0);
  pagan::Tensor<float> batch({6, 1, 3, 4}, vals);
  pagan::write_image_grid(batch, 3, "grid_rand.pgm");
  pagan::PgmImage img = pagan::read_pgm("grid_rand.pgm");
  CHECK(img.width == 12);
  CHECK(img.height == 6);
  CHECK(img.channels == 1);
  REQUIRE(img.bytes.size() == 72);
  for (int i = 0; i < 6; ++i) {
    const int oy = (i / 3) * 3, ox = (i % 3) * 4;
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) {
        const std::uint8_t want =
            pagan::pixel_byte(vals[std::size_t(i * 12 + y * 4 + x)]);
        CHECK(img.bytes[std::size_t((oy + y) * 12 + ox + x)] == want);
      }
  }
}

TEST_CASE("three channel grids interleave rgb per pixel") {
  std::vector<float> vals(2 * 3 * 2 * 2);
  // Image 0: R=+1, G=0, B=-1; image 1: all 0.
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 4; ++p)
      vals[std::size_t(c * 4 + p)] = c == 0 ? 1.0f : (c == 1 ? 0.0f : -1.0f);
  for (int i = 12; i < 24; ++i) vals[std::size_t(i)] = 0.0f;
  pagan::Tensor<float> batch({2, 3, 2, 2}, vals);
  pagan::write_image_grid(batch, 2, "grid_rgb.ppm");
  pagan::PgmImage img = pagan::read_pgm("grid_rgb.ppm");
  CHECK(img.channels == 3);
  CHECK(img.width == 4);
  CHECK(img.height == 2);
  CHECK(img.bytes[0] == 255);
  CHECK(img.bytes[1] == 128);
  CHECK(img.bytes[2] == 0);
  // First pixel of the second tile.
  CHECK(img.bytes[3 * 2] == 128);
  CHECK(img.bytes[3 * 2 + 1] == 128);
  CHECK(img.bytes[3 * 2 + 2] == 128);

  pagan::Tensor<float> two({1, 2, 2, 2}, std::vector<float>(8, 0.0f));
  CHECK_THROWS_AS(pagan::write_image_grid(two, 1, "grid_bad.pgm"),
                  std::invalid_argument);
  pagan::Tensor<float> one({1, 1, 2, 2}, std::vector<float>(4, 0.0f));
  CHECK_THROWS_AS(pagan::write_image_grid(one, 0, "grid_bad.pgm"),
                  std::invalid_argument);
}

TEST_CASE("pair interleaving alternates originals and partners") {
  pagan::Tensor<float> a({2, 1, 1, 2}, {1, 2, 3, 4});
  pagan::Tensor<float> b({2, 1, 1, 2}, {-1, -2, -3, -4});
  pagan::Tensor<float> m = pagan::interleave_pairs(a, b);
  CHECK(m.shape == pagan::Shape{4, 1, 1, 2});
  CHECK(*m.values == std::vector<float>{1, 2, -1, -2, 3, 4, -3, -4});
  pagan::Tensor<float> c({3, 1, 1, 2}, std::vector<float>(6, 0.0f));
  CHECK_THROWS_AS(pagan::interleave_pairs(a, c), std::invalid_argument);
}

TEST_CASE("scatter dumps one point per line") {
  pagan::Tensor<float> pts({3, 1, 1, 2}, {0.5f, -0.25f, 1.0f, 2.0f, -3.5f, 0.0f});
  pagan::write_scatter(pts, "scatter.tsv");
  std::ifstream in("scatter.tsv");
  REQUIRE(bool(in));
  double x = 0.0, y = 0.0;
  int lines = 0;
  while (in >> x >> y) {
    if (lines == 0) {
      CHECK(x == doctest::Approx(0.5));
      CHECK(y == doctest::Approx(-0.25));
    }
    ++lines;
  }
  CHECK(lines == 3);
  pagan::Tensor<float> bad({2, 1, 1, 3}, std::vector<float>(6, 0.0f));
  CHECK_THROWS_AS(pagan::write_scatter(bad, "scatter_bad.tsv"),
                  std::invalid_argument);
}

TEST_CASE("an empty config file yields the documented defaults") {
  const std::string p = write_text("cfg_empty.txt", "");
  TrainConfig cfg = pagan::parse_config(p);
  TrainConfig def;
  CHECK(pagan::config_text(cfg) == pagan::config_text(def));
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.lr == 2e-4);
  CHECK(cfg.critic_steps == 1);
  CHECK(cfg.game.mode == pagan::GameMode::nonsaturating);
}

TEST_CASE("wasserstein configs default to ten critic steps unless pinned") {
  const std::string p =
      write_text("cfg_w.txt", "game=wasserstein\ncritic_steps=10\n");
  TrainConfig cfg = pagan::parse_config(p);
  CHECK(cfg.game.mode == pagan::GameMode::wasserstein);
  CHECK(cfg.critic_steps == 10);

  const std::string q = write_text("cfg_w2.txt", "game=wasserstein\n");
  TrainConfig c2 = pagan::parse_config(q);
  CHECK(c2.critic_steps == 10);

  const std::string r =
      write_text("cfg_w3.txt", "game=wasserstein\ncritic_steps=3\n");
  TrainConfig c3 = pagan::parse_config(r);
  CHECK(c3.critic_steps == 3);
}

TEST_CASE("pair fusion defaults to channel stacking only under wasserstein") {
  TrainConfig def;
  CHECK(def.fusion == "width");

  const std::string p = write_text("cfg_f1.txt", "game=wasserstein\n");
  CHECK(pagan::parse_config(p).fusion == "channel");

  const std::string q =
      write_text("cfg_f2.txt", "game=wasserstein\nfusion=width\n");
  CHECK(pagan::parse_config(q).fusion == "width");

  const std::string r = write_text("cfg_f3.txt", "fusion=channel\n");
  CHECK(pagan::parse_config(r).fusion == "channel");

  const std::string bad = write_text("cfg_f4.txt", "fusion=diagonal\n");
  CHECK_THROWS_WITH_AS(pagan::parse_config(bad), doctest::Contains("fusion"),
                       std::invalid_argument);
}

TEST_CASE("config errors name the offending key") {
  const std::string p = write_text("cfg_b1.txt", "batch_size=1\n");
  CHECK_THROWS_WITH_AS(pagan::parse_config(p),
                       doctest::Contains("batch_size"), std::invalid_argument);
  const std::string u = write_text("cfg_b2.txt", "frobnicate=3\n");
  CHECK_THROWS_WITH_AS(pagan::parse_config(u),
                       doctest::Contains("frobnicate"), std::invalid_argument);
  const std::string v = write_text("cfg_b3.txt", "steps=abc\n");
  CHECK_THROWS_WITH_AS(pagan::parse_config(v), doctest::Contains("steps"),
                       std::invalid_argument);
  const std::string w = write_text("cfg_b4.txt", "just a line\n");
  CHECK_THROWS_WITH_AS(pagan::parse_config(w),
                       doctest::Contains("key=value"), std::invalid_argument);
  const std::string x = write_text("cfg_b5.txt", "game=wasserstein\ngp_lambda=0\n");
  CHECK_THROWS_AS(pagan::parse_config(x), std::invalid_argument);
  TrainConfig cfg;
  CHECK_THROWS_WITH_AS(pagan::apply_config_entry(cfg, "fdiv", "hellinger3"),
                       doctest::Contains("fdiv"), std::invalid_argument);
}

TEST_CASE("configs round-trip through their text form") {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.steps = 321;
  cfg.optimizer = "sgd";
  cfg.lr = 1e-3;
  cfg.game.mode = pagan::GameMode::fgan;
  cfg.game.fdiv = pagan::FDivTag::kl;
  cfg.game.gp_lambda = 7.5;
  cfg.game.alpha_mode = pagan::AlphaMode::independent;
  cfg.augment.pad_fraction = 0.2;
  cfg.latent_dim = 5;
  cfg.fusion = "channel";
  cfg.dataset = "shapes";
  cfg.seed = 42;
  cfg.checkpoint_every = 50;
  cfg.eval_every = 25;
  cfg.out_dir = "runs/x";
  pagan::write_config(cfg, "cfg_rt.txt");
  TrainConfig back = pagan::parse_config("cfg_rt.txt");
  CHECK(pagan::config_text(back) == pagan::config_text(cfg));
  CHECK(pagan::config_hash(back) == pagan::config_hash(cfg));

  TrainConfig moved = back;
  moved.out_dir = "elsewhere";
  CHECK(pagan::config_hash(moved) == pagan::config_hash(cfg));
  TrainConfig reseeded = back;
  reseeded.seed = 43;
  CHECK(pagan::config_hash(reseeded) != pagan::config_hash(cfg));
}

TEST_CASE("comments, whitespace and the seed override are honored") {
  const std::string p = write_text(
      "cfg_c.txt", "  batch_size = 8   # eight\n\n# full comment line\n");
  TrainConfig cfg = pagan::parse_config(p);
  CHECK(cfg.batch_size == 8);

  setenv("PAGAN_SEED", "777", 1);
  TrainConfig over = pagan::parse_config(p);
  CHECK(over.seed == 777);
  setenv("PAGAN_SEED", "not-a-number", 1);
  CHECK_THROWS_WITH_AS(pagan::parse_config(p),
                       doctest::Contains("PAGAN_SEED"), std::invalid_argument);
  unsetenv("PAGAN_SEED");
  TrainConfig plain = pagan::parse_config(p);
  CHECK(plain.seed == 1);
}
