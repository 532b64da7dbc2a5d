#pragma once

#include <cstdint>
#include <string>

#include "pagan/augment.hpp"
#include "pagan/objectives.hpp"

namespace pagan {

// Everything a training run needs, parseable from `key=value` text and
// echoed back verbatim into the run directory so a run is reproducible from
// its own config.txt.
struct TrainConfig {
  int batch_size = 64;
  int steps = 1000;
  std::string optimizer = "adam";  // "adam" | "sgd"
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int critic_steps = 1;  // defaults to 10 when game=wasserstein and unset
  GameKind game;
  AugmentConfig augment;
  int latent_dim = 2;
  // How the pair discriminator sees (x, y): side by side along width, or
  // stacked along channels (the default under wasserstein, where the critic
  // benefits from aligned pixels sharing a receptive field).
  std::string fusion = "width";  // "width" | "channel"
  std::string dataset = "ring";  // "ring" | "shapes" | "mnist"
  std::uint64_t seed = 1;
  int checkpoint_every = 1000;
  int eval_every = 1000;
  std::string out_dir = "runs/run";

  // Bookkeeping, not config keys: whether critic_steps / fusion were
  // assigned explicitly, so game-dependent defaults only fill true gaps.
  bool critic_steps_explicit = false;
  bool fusion_explicit = false;
};

// Throws std::invalid_argument naming the offending key if the config is
// internally inconsistent.
void validate_config(const TrainConfig& cfg);

// Applies a single key=value assignment (the unit parse_config is built
// from; also used for CLI flag overrides).
void apply_config_entry(TrainConfig& cfg, const std::string& key,
                        const std::string& value);

// Fills mode-dependent defaults (critic_steps=10 and fusion=channel under
// wasserstein when not explicitly set), applies the PAGAN_SEED environment
// override, validates.
void finalize_config(TrainConfig& cfg);

// Parses `key=value` lines ('#' starts a comment, blank lines ignored).
// Unknown keys and unparsable values are rejected by key name. The raw
// variant skips finalize_config so CLI flags can still land on top.
TrainConfig parse_config_raw(const std::string& path);
TrainConfig parse_config(const std::string& path);

// Canonical text form: every key, fixed order, round-trips through
// parse_config to an equal config.
std::string config_text(const TrainConfig& cfg);
void write_config(const TrainConfig& cfg, const std::string& path);

// FNV-1a over the canonical text; stamped into checkpoints so a checkpoint
// refuses to resume under a different configuration.
std::uint64_t config_hash(const TrainConfig& cfg);

const char* game_mode_name(GameMode m);
const char* alpha_mode_name(AlphaMode m);

}  // namespace pagan
