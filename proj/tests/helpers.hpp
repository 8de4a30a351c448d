#pragma once

#include "tgeat/corpus.hpp"
#include "tgeat/error.hpp"
#include "tgeat/nn/config.hpp"

#include <filesystem>
#include <optional>
#include <random>
#include <string>

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("tgeat_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline tgeat::SynthConfig tiny_synth() {
  tgeat::SynthConfig c;
  c.train_count = 48;
  c.dev_count = 12;
  c.test_count = 12;
  c.min_duration_s = 0.25;
  c.max_duration_s = 0.3;
  c.clips_per_adapt_environment = 1;
  c.clips_per_test_environment = 1;
  c.noise_duration_s = 0.5;
  return c;
}

// Small enough for finite differences in double.
inline tgeat::nn::ModelConfig tiny_model() {
  tgeat::nn::ModelConfig c;
  c.conv = {{4, 4, 4}, {8, 4, 4}};
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.ffn_dim = 12;
  c.head_hidden = 10;
  c.head_dropout = 0.0;
  return c;
}

// Reduced stack for fast training tests on the tiny corpus.
inline tgeat::nn::ModelConfig small_model() {
  tgeat::nn::ModelConfig c;
  c.conv = {{8, 8, 8}, {16, 4, 4}, {16, 2, 2}};
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ffn_dim = 32;
  c.head_hidden = 32;
  return c;
}

}  // namespace testing

namespace testing {

// Kind of the tgeat::Error thrown by f, or nullopt when nothing is thrown.
template <typename F>
std::optional<tgeat::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const tgeat::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace testing
