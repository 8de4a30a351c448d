#include "tgeat/error.hpp"
#include "tgeat/nn/config.hpp"
#include "tgeat/nn/param.hpp"

namespace tgeat::nn {

using nlohmann::json;

std::string to_string(Group group) {
  switch (group) {
    case Group::conv:
      return "conv";
    case Group::transformer:
      return "transformer";
    case Group::head:
      return "head";
    case Group::text_projection:
      return "text_projection";
    case Group::env_classifier:
      return "env_classifier";
    case Group::provider:
      return "provider";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (conv.empty()) fail(ErrorKind::config, "model needs at least one conv layer");
  for (const auto& c : conv) {
    if (c.channels < 1 || c.kernel < 1 || c.stride < 1) fail(ErrorKind::config, "conv layer fields must be >= 1");
  }
  if (conv.back().channels != d_model) {
    fail(ErrorKind::config, "last conv layer must have d_model (" + std::to_string(d_model) + ") channels");
  }
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    fail(ErrorKind::config, "d_model must be a positive multiple of n_heads");
  }
  if (n_layers < 0 || ffn_dim < 1 || head_hidden < 1 || n_outputs < 1) fail(ErrorKind::config, "invalid layer sizes");
  if (head_dropout < 0.0 || head_dropout >= 1.0) fail(ErrorKind::config, "head_dropout must be in [0, 1)");
  if (fusion == Fusion::text && text_dim < 1) fail(ErrorKind::config, "text fusion requires text_dim >= 1");
  if (env_classifier && (n_environments < 2 || !(grl_lambda > 0.0))) {
    fail(ErrorKind::config, "environment classifier needs >= 2 environments and grl_lambda > 0");
  }
}

long ModelConfig::min_input_length() const {
  long length = 1;
  for (auto it = conv.rbegin(); it != conv.rend(); ++it) length = (length - 1) * it->stride + it->kernel;
  return length;
}

long ModelConfig::frames_for(long samples) const {
  long length = samples;
  for (const auto& c : conv) {
    if (length < c.kernel) return 0;
    length = (length - c.kernel) / c.stride + 1;
  }
  return length;
}

json to_json(const ModelConfig& c) {
  json conv = json::array();
  for (const auto& l : c.conv) conv.push_back({{"channels", l.channels}, {"kernel", l.kernel}, {"stride", l.stride}});
  return {{"conv", conv},
          {"d_model", c.d_model},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"ffn_dim", c.ffn_dim},
          {"head_hidden", c.head_hidden},
          {"head_dropout", c.head_dropout},
          {"n_outputs", c.n_outputs},
          {"fusion", c.fusion == Fusion::text ? "text" : "none"},
          {"text_dim", c.text_dim},
          {"pool_text_slot", c.pool_text_slot},
          {"env_classifier", c.env_classifier},
          {"n_environments", c.n_environments},
          {"grl_lambda", c.grl_lambda},
          {"text_projection_gain", c.text_projection_gain}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    if (j.contains("conv")) {
      c.conv.clear();
      for (const auto& l : j.at("conv")) {
        c.conv.push_back({l.at("channels").get<int>(), l.at("kernel").get<int>(), l.at("stride").get<int>()});
      }
    }
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.head_dropout = j.value("head_dropout", c.head_dropout);
    c.n_outputs = j.value("n_outputs", c.n_outputs);
    const std::string fusion = j.value("fusion", std::string("none"));
    if (fusion != "none" && fusion != "text") fail(ErrorKind::config, "fusion must be 'none' or 'text'");
    c.fusion = fusion == "text" ? Fusion::text : Fusion::none;
    c.text_dim = j.value("text_dim", c.text_dim);
    c.pool_text_slot = j.value("pool_text_slot", c.pool_text_slot);
    c.env_classifier = j.value("env_classifier", c.env_classifier);
    c.n_environments = j.value("n_environments", c.n_environments);
    c.grl_lambda = j.value("grl_lambda", c.grl_lambda);
    c.text_projection_gain = j.value("text_projection_gain", c.text_projection_gain);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace tgeat::nn
