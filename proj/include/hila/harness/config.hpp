#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hila/error.hpp"
#include "hila/opl.hpp"

namespace hila::harness {

/// Ablation ladder, from the attention-pooling baseline (A) to the full model (G).
enum class Variant { A, B, C, D, E, F, G };

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::A, Variant::B, Variant::C, Variant::D,
                                      Variant::E, Variant::F, Variant::G};
  return v;
}

inline std::string to_string(Variant v) { return std::string(1, static_cast<char>('A' + static_cast<int>(v))); }

inline Variant parse_variant(const std::string& s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'G') return static_cast<Variant>(s[0] - 'A');
  throw ConfigError("unknown variant id '" + s + "' (expected one of A-G)");
}

inline std::string describe(Variant v) {
  switch (v) {
    case Variant::A: return "gated-attention pooling of patch tokens (no prompts)";
    case Variant::B: return "single prompt, cosine top-r patch selection";
    case Variant::C: return "multiple prompts, mean-cosine top-r patch selection";
    case Variant::D: return "multiple prompts, transport-based patch selection";
    case Variant::E: return "D plus transport-selected region tokens";
    case Variant::F: return "E plus gated cross-level propagation";
    case Variant::G: return "F plus mutual contrastive learning (full model)";
  }
  return "";
}

enum class PatchScorer { none, single_cosine, multi_cosine, transport };

/// Feature switches a variant turns on.
struct Switches {
  PatchScorer patch_scorer = PatchScorer::transport;
  bool region_tokens = true;
  bool cross_level = true;
  bool contrastive = true;

  bool attention_pool() const { return patch_scorer == PatchScorer::none; }
  bool needs_prompts() const { return patch_scorer != PatchScorer::none; }
  friend bool operator==(const Switches&, const Switches&) = default;
};

inline Switches switches_for(Variant v) {
  switch (v) {
    case Variant::A: return {PatchScorer::none, false, false, false};
    case Variant::B: return {PatchScorer::single_cosine, false, false, false};
    case Variant::C: return {PatchScorer::multi_cosine, false, false, false};
    case Variant::D: return {PatchScorer::transport, false, false, false};
    case Variant::E: return {PatchScorer::transport, true, false, false};
    case Variant::F: return {PatchScorer::transport, true, true, false};
    case Variant::G: return {PatchScorer::transport, true, true, true};
  }
  throw ConfigError("unknown variant");
}

struct TrainConfig {
  int epochs = 20;
  double lr = 2e-4;
  int batch_size = 1;
  double r = 0.6;
  std::size_t queue_length = 20;  // B; each queue holds B - 1 prototypes
  double lambda = 0.01;
  int bins = 4;
  opl::SinkhornOptions sinkhorn{};
  std::uint64_t seed = 7;
  Variant variant = Variant::G;
  int folds = 5;
  double temperature = 1.0;
  bool reset_queues_each_epoch = false;
  std::size_t attention_dim = 16;  // hidden width of the variant-A attention pool
  // Overrides on top of the variant's switches.
  std::optional<bool> region_tokens;
  std::optional<bool> cross_level;
  std::optional<bool> contrastive;

  Switches switches() const {
    Switches s = switches_for(variant);
    if (region_tokens) s.region_tokens = *region_tokens;
    if (cross_level) s.cross_level = *cross_level;
    if (contrastive) s.contrastive = *contrastive;
    return s;
  }

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch_size != 1) throw ConfigError("batch_size is fixed at 1 (queue updates are per patient)");
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("r must lie in (0, 1]");
    if (queue_length < 1) throw ConfigError("queue_length must be >= 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (bins < 2) throw ConfigError("bins must be >= 2");
    if (!(sinkhorn.epsilon > 0.0)) throw ConfigError("sinkhorn epsilon must be > 0");
    if (!(sinkhorn.tol > 0.0)) throw ConfigError("sinkhorn tol must be > 0");
    if (sinkhorn.max_iters < 1) throw ConfigError("sinkhorn max_iters must be >= 1");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (attention_dim < 1) throw ConfigError("attention_dim must be >= 1");
    const Switches s = switches();
    if (s.cross_level && !s.region_tokens) throw ConfigError("cross-level propagation requires region tokens");
    if (s.contrastive && !s.region_tokens) throw ConfigError("contrastive learning requires region tokens");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"epochs", c.epochs},
                   {"lr", c.lr},
                   {"batch_size", c.batch_size},
                   {"r", c.r},
                   {"queue_length", c.queue_length},
                   {"lambda", c.lambda},
                   {"bins", c.bins},
                   {"sinkhorn", {{"epsilon", c.sinkhorn.epsilon}, {"tol", c.sinkhorn.tol}, {"max_iters", c.sinkhorn.max_iters}}},
                   {"seed", c.seed},
                   {"variant", to_string(c.variant)},
                   {"folds", c.folds},
                   {"temperature", c.temperature},
                   {"reset_queues_each_epoch", c.reset_queues_each_epoch},
                   {"attention_dim", c.attention_dim}};
  if (c.region_tokens) j["region_tokens"] = *c.region_tokens;
  if (c.cross_level) j["cross_level"] = *c.cross_level;
  if (c.contrastive) j["contrastive"] = *c.contrastive;
  return j;
}

/// Overlays every field present in `j` onto `c`. Unknown keys are rejected.
inline void apply_json(TrainConfig& c, const nlohmann::json& j) {
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "epochs") c.epochs = val.get<int>();
      else if (key == "lr") c.lr = val.get<double>();
      else if (key == "batch_size") c.batch_size = val.get<int>();
      else if (key == "r") c.r = val.get<double>();
      else if (key == "queue_length") c.queue_length = val.get<std::size_t>();
      else if (key == "lambda") c.lambda = val.get<double>();
      else if (key == "bins") c.bins = val.get<int>();
      else if (key == "seed") c.seed = val.get<std::uint64_t>();
      else if (key == "variant") c.variant = parse_variant(val.get<std::string>());
      else if (key == "folds") c.folds = val.get<int>();
      else if (key == "temperature") c.temperature = val.get<double>();
      else if (key == "reset_queues_each_epoch") c.reset_queues_each_epoch = val.get<bool>();
      else if (key == "attention_dim") c.attention_dim = val.get<std::size_t>();
      else if (key == "region_tokens") c.region_tokens = val.get<bool>();
      else if (key == "cross_level") c.cross_level = val.get<bool>();
      else if (key == "contrastive") c.contrastive = val.get<bool>();
      else if (key == "sinkhorn") {
        for (const auto& [sk, sv] : val.items()) {
          if (sk == "epsilon") c.sinkhorn.epsilon = sv.get<double>();
          else if (sk == "tol") c.sinkhorn.tol = sv.get<double>();
          else if (sk == "max_iters") c.sinkhorn.max_iters = sv.get<int>();
          else throw ConfigError("unknown sinkhorn config key '" + sk + "'");
        }
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  TrainConfig c;
  apply_json(c, j);
  return c;
}

}  // namespace hila::harness
