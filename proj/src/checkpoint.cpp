#include "tgeat/checkpoint.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tgeat {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string sha1_hex(std::string_view data) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest) {
    out += kHex[c >> 4];
    out += kHex[c & 15];
  }
  return out;
}

std::string content_hash(std::string_view content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob.append(content);
  return sha1_hex(blob);
}

namespace {

json param_entry(const nn::Param<float>& p) {
  return {{"name", p.name}, {"group", nn::to_string(p.group)}, {"rows", p.value.rows()}, {"cols", p.value.cols()}};
}

void append_values(std::string& payload, const Matrix<float>& m) {
  const auto bytes = static_cast<std::size_t>(m.size()) * sizeof(float);
  const std::size_t at = payload.size();
  payload.resize(at + bytes);
  std::memcpy(payload.data() + at, m.data(), bytes);
}

nn::Group parse_param_group(const std::string& s) {
  using nn::Group;
  for (Group g : {Group::conv, Group::transformer, Group::head, Group::text_projection, Group::env_classifier,
                  Group::provider}) {
    if (nn::to_string(g) == s) return g;
  }
  fail(ErrorKind::validation, "unknown parameter group '" + s + "'");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nn::SerModel<float>& model, const std::string& stage,
                     const EncoderProvider* provider, const json& metadata) {
  json params = json::array();
  std::string payload;
  for (const auto* p : model.parameters()) {
    params.push_back(param_entry(*p));
    append_values(payload, p->value);
  }
  json provider_params = json::array();
  if (provider) {
    for (const auto* p : provider->parameters()) {
      provider_params.push_back(param_entry(*p));
      append_values(payload, p->value);
    }
  }
  const json header{{"stage", stage},
                    {"model_config", nn::to_json(model.config())},
                    {"dtype", "float32"},
                    {"params", params},
                    {"provider_id", provider ? provider->id() : ""},
                    {"provider_params", provider_params},
                    {"payload_sha1", sha1_hex(payload)},
                    {"metadata", metadata}};
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) fail(ErrorKind::io, "cannot write checkpoint " + path.string());
    os.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t length = text.size();
    os.write(reinterpret_cast<const char*>(&version), sizeof version);
    os.write(reinterpret_cast<const char*>(&length), sizeof length);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os) fail(ErrorKind::io, "failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size(), '\0');
  is.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!is || magic != kCheckpointMagic) fail(ErrorKind::validation, path.string() + " is not a checkpoint file");
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!is || version != kCheckpointVersion) {
    fail(ErrorKind::validation, "unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  std::string text(length, '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  std::stringstream rest;
  rest << is.rdbuf();
  const std::string payload = rest.str();

  Checkpoint ck;
  try {
    const json header = json::parse(text);
    if (header.at("payload_sha1").get<std::string>() != sha1_hex(payload)) {
      fail(ErrorKind::validation, "checkpoint " + path.string() + " failed its checksum");
    }
    ck.stage = header.at("stage").get<std::string>();
    ck.model = nn::SerModel<float>(nn::model_config_from_json(header.at("model_config")), 0);
    ck.provider_id = header.at("provider_id").get<std::string>();
    ck.metadata = header.at("metadata");
    std::size_t offset = 0;
    auto read_into = [&](Matrix<float>& m, const json& entry) {
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      if (m.rows() != rows || m.cols() != cols) {
        fail(ErrorKind::validation, "shape mismatch for parameter " + entry.at("name").get<std::string>());
      }
      const auto bytes = static_cast<std::size_t>(rows * cols) * sizeof(float);
      if (offset + bytes > payload.size()) fail(ErrorKind::validation, "checkpoint payload is truncated");
      std::memcpy(m.data(), payload.data() + offset, bytes);
      offset += bytes;
    };
    auto model_params = ck.model.parameters();
    const auto& entries = header.at("params");
    if (entries.size() != model_params.size()) fail(ErrorKind::validation, "checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].at("name").get<std::string>() != model_params[i]->name) {
        fail(ErrorKind::validation, "checkpoint parameter order mismatch at " + model_params[i]->name);
      }
      read_into(model_params[i]->value, entries[i]);
    }
    for (const auto& entry : header.at("provider_params")) {
      nn::Param<float> p(entry.at("name").get<std::string>(), parse_param_group(entry.at("group").get<std::string>()),
                         Matrix<float>(entry.at("rows").get<Eigen::Index>(), entry.at("cols").get<Eigen::Index>()));
      read_into(p.value, entry);
      ck.provider_params.push_back(std::move(p));
    }
    if (offset != payload.size()) fail(ErrorKind::validation, "checkpoint payload has trailing bytes");
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, "malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  return ck;
}

void restore_provider(EncoderProvider& provider, const Checkpoint& checkpoint) {
  if (checkpoint.provider_params.empty()) return;
  if (provider.id() != checkpoint.provider_id) {
    fail(ErrorKind::validation, "checkpoint was trained with provider '" + checkpoint.provider_id + "', got '" +
                                    provider.id() + "'");
  }
  auto params = provider.parameters();
  if (params.size() != checkpoint.provider_params.size()) fail(ErrorKind::validation, "provider parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& saved = checkpoint.provider_params[i];
    if (params[i]->name != saved.name || params[i]->value.rows() != saved.value.rows() ||
        params[i]->value.cols() != saved.value.cols()) {
      fail(ErrorKind::validation, "provider parameter mismatch at " + saved.name);
    }
    params[i]->value = saved.value;
  }
}

}  // namespace tgeat
