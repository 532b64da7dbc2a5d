#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pagan/oracle.hpp"
#include "pagan/trainer.hpp"

namespace fs = std::filesystem;
using namespace pagan;

namespace {

// File entries first, then --set overrides in order, then mode-dependent
// defaults and validation.
TrainConfig assemble_config(const std::string& config_path,
                            const std::vector<std::string>& overrides) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = parse_config_raw(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  finalize_config(cfg);
  return cfg;
}

// Stacks every .pgm/.ppm file in a directory (sorted by name) into one
// (N,C,H,W) batch with values mapped back to [-1, 1].
Tensor<float> load_image_dir(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("metrics: '" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
  }
  if (files.empty())
    throw std::runtime_error("metrics: no .pgm/.ppm files in '" + dir + "'");
  std::sort(files.begin(), files.end());
  int C = 0, H = 0, W = 0;
  std::vector<float> values;
  for (const fs::path& f : files) {
    const PgmImage img = read_pgm(f.string());
    if (C == 0) {
      C = img.channels;
      H = img.height;
      W = img.width;
    } else if (img.channels != C || img.height != H || img.width != W) {
      throw std::runtime_error("metrics: image geometry differs across '" +
                               dir + "'");
    }
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          values.push_back(
              static_cast<float>(
                  img.bytes[static_cast<std::size_t>(y * W + x) * C + c]) /
                  255.0f * 2.0f -
              1.0f);
  }
  return Tensor<float>(Shape{static_cast<int>(files.size()), C, H, W},
                       std::move(values));
}

void print_report(const MetricReport& rep) {
  std::cout << "rid_mean\t" << format_double(rep.rid_mean) << "\n"
            << "rid_std\t" << format_double(rep.rid_std) << "\n"
            << "is_mean\t" << format_double(rep.is_mean) << "\n"
            << "is_std\t" << format_double(rep.is_std) << "\n"
            << "fid\t" << format_double(rep.fid) << "\n"
            << "rmse\t" << format_double(rep.rmse) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Adversarial autoencoder laboratory with data, latent, and pair "
      "discriminators"};
  app.require_subcommand(1);

  auto* train_cmd =
      app.add_subcommand("train", "Run training from a config plus overrides");
  std::string t_cfg;
  std::vector<std::string> t_set;
  std::string t_out, t_steps, t_seed, t_dataset, t_game;
  train_cmd->add_option("--config", t_cfg, "key=value config file");
  train_cmd->add_option("--set", t_set,
                        "config override key=value (repeatable)");
  train_cmd->add_option("--out", t_out, "run directory (out_dir)");
  train_cmd->add_option("--steps", t_steps, "training steps");
  train_cmd->add_option("--seed", t_seed, "master seed");
  train_cmd->add_option("--dataset", t_dataset, "ring | shapes | mnist");
  train_cmd->add_option("--game", t_game,
                        "minimax | nonsaturating | fgan | wasserstein");

  auto* metrics_cmd = app.add_subcommand(
      "metrics",
      "Write a metric report from a checkpoint, or from two image "
      "directories scored by a probe trained on --data");
  std::string m_cfg, m_ckpt, m_data, m_a, m_b, m_out = "metrics.txt";
  std::vector<std::string> m_set;
  metrics_cmd->add_option("--config", m_cfg, "key=value config file");
  metrics_cmd->add_option("--set", m_set,
                          "config override key=value (repeatable)");
  metrics_cmd->add_option("--ckpt", m_ckpt, "checkpoint to evaluate");
  metrics_cmd->add_option("--data", m_data,
                          "dataset id for the probe (ring | shapes | mnist)");
  metrics_cmd->add_option("--dir-a", m_a, "reference image directory");
  metrics_cmd->add_option("--dir-b", m_b, "generated image directory");
  metrics_cmd->add_option("--out", m_out, "report file path");

  auto* verify_cmd = app.add_subcommand(
      "verify", "Run the numerical verification suite and print PASS/FAIL");
  std::uint64_t v_seed = 1;
  verify_cmd->add_option("--seed", v_seed, "suite seed");

  auto* eval_cmd = app.add_subcommand(
      "eval", "Emit previews and a metric report from a checkpoint");
  std::string e_cfg, e_ckpt, e_out;
  std::vector<std::string> e_set;
  eval_cmd->add_option("--config", e_cfg, "key=value config file");
  eval_cmd->add_option("--set", e_set,
                       "config override key=value (repeatable)");
  eval_cmd->add_option("--ckpt", e_ckpt, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--out", e_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      if (!t_out.empty()) t_set.push_back("out_dir=" + t_out);
      if (!t_steps.empty()) t_set.push_back("steps=" + t_steps);
      if (!t_seed.empty()) t_set.push_back("seed=" + t_seed);
      if (!t_dataset.empty()) t_set.push_back("dataset=" + t_dataset);
      if (!t_game.empty()) t_set.push_back("game=" + t_game);
      const TrainConfig cfg = assemble_config(t_cfg, t_set);
      Trainer t(cfg);
      t.run();
      std::cout << (t.diverged() ? "run diverged after " : "run completed ")
                << t.step_count() << " steps; artifacts in " << cfg.out_dir
                << "\n";
      return 0;
    }
    if (*verify_cmd)
      return oracle::run_verification_suite(std::cout, v_seed) ? 0 : 1;
    if (*metrics_cmd) {
      if (!m_data.empty()) m_set.push_back("dataset=" + m_data);
      const TrainConfig cfg = assemble_config(m_cfg, m_set);
      const bool dirs = !m_a.empty() || !m_b.empty();
      if (m_ckpt.empty() == !dirs)
        throw std::invalid_argument(
            "metrics: pass either --ckpt or both --dir-a and --dir-b");
      MetricReport rep;
      if (!m_ckpt.empty()) {
        Trainer t(cfg);
        t.load_checkpoint(m_ckpt);
        rep = t.evaluate();
      } else {
        if (m_a.empty() || m_b.empty())
          throw std::invalid_argument(
              "metrics: both --dir-a and --dir-b are required");
        const Tensor<float> a = load_image_dir(m_a);
        const Tensor<float> b = load_image_dir(m_b);
        const Dataset data = load_training_dataset(cfg);
        ProbeConfig pc;
        pc.augment = cfg.augment;
        pc.seed = derive_seed(cfg.seed, 205);
        ProbeResult probe = train_probe_classifier(data, pc);
        // Directory A plays the reference role, B the generated role; B is
        // scored both against A (distances) and on its own (sharpness).
        rep = compute_metrics(probe.probe, a, b, b, 10);
      }
      write_metric_report(rep, m_out);
      print_report(rep);
      return 0;
    }
    if (*eval_cmd) {
      TrainConfig cfg = assemble_config(e_cfg, e_set);
      cfg.out_dir = e_out;  // excluded from the hash, so checkpoints still fit
      Trainer t(cfg);
      t.load_checkpoint(e_ckpt);
      fs::create_directories(e_out);
      t.emit_previews(t.step_count());
      const MetricReport rep = t.evaluate();
      write_metric_report(rep, e_out + "/metrics.txt");
      print_report(rep);
      std::cout << "eval artifacts in " << e_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
