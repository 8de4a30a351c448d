#pragma once

#include "tgeat/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tgeat {

enum class Split { train, dev, test };
enum class NoiseSplit { adapt, test };

std::string to_string(Split split);
std::string to_string(NoiseSplit split);
Split parse_split(const std::string& s);
NoiseSplit parse_noise_split(const std::string& s);

struct LabelTriple {
  double arousal = 0.0;
  double dominance = 0.0;
  double valence = 0.0;

  double operator[](int i) const { return i == 0 ? arousal : (i == 1 ? dominance : valence); }
  double& operator[](int i) { return i == 0 ? arousal : (i == 1 ? dominance : valence); }
  bool operator==(const LabelTriple&) const = default;
};

struct Utterance {
  std::string id;
  Samples samples;
  LabelTriple labels_raw;  // 1-7 scale
  Split split = Split::train;
};

struct NoiseClip {
  std::string id;
  std::string environment;
  Samples samples;
  NoiseSplit split = NoiseSplit::adapt;
};

enum class EnvironmentGroup { indoor, outdoor, vehicle };
std::string to_string(EnvironmentGroup group);
EnvironmentGroup parse_group(const std::string& s);

struct EnvironmentCatalog {
  std::vector<std::string> adapt_environments;
  std::vector<std::string> test_environments;
  std::map<std::string, EnvironmentGroup> group_of;

  // Throws a validation error when the catalog shape is wrong.
  void validate() const;

  // Index in the adapt list, or nullopt for unseen environments.
  std::optional<int> adapt_index(const std::string& environment) const;
  bool contains(const std::string& environment) const;
  EnvironmentGroup group(const std::string& environment) const;
  // Adapt environments followed by test environments.
  std::vector<std::string> all_environments() const;
};

EnvironmentCatalog default_catalog();

struct WaveformStats {
  double mean = 0.0;
  double std = 1.0;
};

LabelTriple normalize_labels(const LabelTriple& raw);
LabelTriple denormalize_labels(const LabelTriple& normalized);

// Population statistics pooled over every sample of the given utterances.
WaveformStats compute_stats(std::span<const Utterance> train_utterances);
WaveformStats compute_stats(std::span<const Utterance* const> train_utterances);
Samples z_normalize(std::span<const float> samples, const WaveformStats& stats);

// ---- WAV (PCM16 mono 16 kHz) ----
Samples read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, std::span<const float> samples);

// ---- Manifests (JSONL) ----
struct UtteranceRecord {
  std::string id;
  std::filesystem::path wav;
  LabelTriple labels_raw;
  Split split = Split::train;
};

struct NoiseRecord {
  std::string id;
  std::filesystem::path wav;
  std::string environment;
  NoiseSplit split = NoiseSplit::adapt;
};

using ManifestEntry = std::variant<UtteranceRecord, NoiseRecord>;

// Parses a JSONL manifest. Relative wav paths are resolved against the
// manifest's directory. Audio is not touched.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

Utterance load_utterance(const UtteranceRecord& record);
NoiseClip load_noise(const NoiseRecord& record);

EnvironmentCatalog load_catalog(const std::filesystem::path& path);
void write_catalog(const std::filesystem::path& path, const EnvironmentCatalog& catalog);

// ---- Synthetic corpus ----
struct SynthConfig {
  int train_count = 2000;
  int dev_count = 200;
  int test_count = 200;
  double min_duration_s = 0.5;
  double max_duration_s = 0.75;
  int clips_per_adapt_environment = 4;
  int clips_per_test_environment = 4;
  double noise_duration_s = 2.0;
};

struct SynthCorpus {
  std::vector<Utterance> utterances;
  std::vector<NoiseClip> noise;
  EnvironmentCatalog catalog;
};

// Speech for one label triple (normalized [0,1] scale drives the acoustics).
Samples synth_utterance_audio(const LabelTriple& normalized, double duration_s, std::uint64_t seed);
Samples synth_noise_audio(const std::string& environment, EnvironmentGroup group, double duration_s,
                          std::uint64_t seed);

SynthCorpus synth_corpus(const SynthConfig& config, const EnvironmentCatalog& catalog, std::uint64_t seed);

// Writes <dir>/wav/*.wav, utterances.jsonl, noise.jsonl and catalog.json.
void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus);

// Reads a corpus written by write_corpus (or any manifests in that layout).
SynthCorpus read_corpus(const std::filesystem::path& dir);

std::vector<const Utterance*> select_split(const std::vector<Utterance>& utterances, Split split);

}  // namespace tgeat
