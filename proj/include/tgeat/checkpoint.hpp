#pragma once

// Binary checkpoints: "TGEATCKP", u32 version, u64 header length, a JSON
// header (model config, stage, parameter table, payload digest) and then raw
// little-endian float32 data in parameter-table order.

#include "tgeat/envtext.hpp"
#include "tgeat/nn/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tgeat {

inline constexpr std::string_view kCheckpointMagic = "TGEATCKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string stage;
  nn::SerModel<float> model;
  std::string provider_id;
  // Fine-tuned provider parameters; empty when the provider was frozen.
  std::vector<nn::Param<float>> provider_params;
  nlohmann::json metadata = nlohmann::json::object();
};

// Writes provider parameters only when `provider` is non-null.
void save_checkpoint(const std::filesystem::path& path, const nn::SerModel<float>& model, const std::string& stage,
                     const EncoderProvider* provider = nullptr,
                     const nlohmann::json& metadata = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies saved provider parameters into `provider` (names and shapes must match).
void restore_provider(EncoderProvider& provider, const Checkpoint& checkpoint);

// git-style object hash: SHA-1 of "blob <len>\0<content>", lowercase hex.
std::string content_hash(std::string_view content);
std::string sha1_hex(std::string_view data);

}  // namespace tgeat
