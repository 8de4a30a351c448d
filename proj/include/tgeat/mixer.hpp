#pragma once

#include "tgeat/corpus.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tgeat {

inline constexpr std::array<double, 3> kAdaptSnrsDb{2.5, 7.5, 12.5};
inline constexpr std::array<double, 3> kEvalSnrsDb{5.0, 0.0, -5.0};
inline constexpr int kEvalReplications = 10;

// A reproducible contamination event: clean + scale * tile(noise, offset).
struct MixSpec {
  std::string utterance_id;
  std::string noise_id;
  std::int64_t noise_offset = 0;
  double target_snr_db = 0.0;
  double scale = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const MixSpec&) const = default;
};

struct MixedSample {
  Samples samples;
  MixSpec spec;
  std::string environment;
  LabelTriple labels_raw;
};

// Mean of squared amplitudes over the whole clip.
double measure_power(std::span<const float> samples);

// Cyclically tiles `noise` starting at `offset` to exactly `length` samples.
Samples fit_noise(std::span<const float> noise, std::size_t length, std::size_t offset);

// Noise gain that puts clean + scale*noise at the target SNR.
double compute_scale(double signal_power, double noise_power, double target_snr_db);

MixedSample mix(const Utterance& utterance, const NoiseClip& noise, double target_snr_db, std::uint64_t seed);

// Re-creates a mixture from a stored spec (scale is taken from the spec).
MixedSample apply_spec(const Utterance& utterance, const NoiseClip& noise, const MixSpec& spec);

// 10*log10(P_clean / P_scaled_noise) recomputed from the two addends.
double achieved_snr_db(const Utterance& utterance, const NoiseClip& noise, const MixSpec& spec);

struct AdaptCondition {
  std::string environment;
  double snr_db = 0.0;
};

AdaptCondition sample_adapt_condition(const EnvironmentCatalog& catalog, Rng& rng);

// Picks `count` clips, distinct while the pool allows and with replacement after.
std::vector<const NoiseClip*> choose_noise_clips(std::span<const NoiseClip* const> pool, std::size_t count, Rng& rng);

struct EvalSetSpec {
  int replication = 0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  std::vector<MixSpec> specs;

  bool operator==(const EvalSetSpec&) const = default;
};

// Per-sample seed for an evaluation mixture; independent of iteration order.
std::uint64_t eval_sample_seed(std::uint64_t master, const std::string& utterance_id, int replication);

// 10 replications x the given SNR levels. Noise choice and offset depend on
// (seed, utterance, replication), so the three SNR variants of a replication
// share their noise segments.
std::vector<EvalSetSpec> build_eval_sets(std::span<const Utterance* const> test_utterances,
                                         std::span<const NoiseClip* const> test_noise, std::uint64_t seed,
                                         std::span<const double> snrs_db = kEvalSnrsDb,
                                         int replications = kEvalReplications);

void write_eval_set(const std::filesystem::path& path, const EvalSetSpec& set);
EvalSetSpec read_eval_set(const std::filesystem::path& path);

std::string eval_set_filename(const EvalSetSpec& set);

}  // namespace tgeat
