#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace tgeat::nn {

struct ConvLayerSpec {
  int channels = 0;
  int kernel = 1;
  int stride = 1;

  bool operator==(const ConvLayerSpec&) const = default;
};

enum class Fusion { none, text };

struct ModelConfig {
  std::vector<ConvLayerSpec> conv{{16, 4, 4}, {32, 4, 4}, {64, 2, 2}, {64, 2, 2}};
  int d_model = 64;
  int n_layers = 3;
  int n_heads = 4;
  int ffn_dim = 128;
  int head_hidden = 512;
  double head_dropout = 0.5;
  int n_outputs = 3;
  Fusion fusion = Fusion::none;
  int text_dim = 0;
  // Whether the regression head's average pooling covers the text slot.
  bool pool_text_slot = true;
  bool env_classifier = false;
  int n_environments = 20;
  double grl_lambda = 1.0;
  double text_projection_gain = 0.1;

  // Throws a config error on inconsistent settings.
  void validate() const;
  // Smallest waveform the conv stack maps to at least one frame.
  long min_input_length() const;
  // Frame count after the conv stack (0 when the input is too short).
  long frames_for(long samples) const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace tgeat::nn
