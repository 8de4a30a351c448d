#include "tgeat/mixer.hpp"

#include "tgeat/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace tgeat {

using nlohmann::json;

double measure_power(std::span<const float> samples) {
  if (samples.empty()) fail(ErrorKind::validation, "cannot measure power of an empty signal");
  double ss = 0.0;
  for (float x : samples) ss += static_cast<double>(x) * x;
  return ss / static_cast<double>(samples.size());
}

Samples fit_noise(std::span<const float> noise, std::size_t length, std::size_t offset) {
  if (noise.empty()) fail(ErrorKind::validation, "cannot tile an empty noise clip");
  Samples out(length);
  std::size_t j = offset % noise.size();
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = noise[j];
    if (++j == noise.size()) j = 0;
  }
  return out;
}

double compute_scale(double signal_power, double noise_power, double target_snr_db) {
  if (!(signal_power > 0.0)) fail(ErrorKind::numeric, "zero-power speech cannot be mixed at a target SNR");
  if (!(noise_power > 0.0)) fail(ErrorKind::numeric, "zero-power noise cannot be mixed at a target SNR");
  return std::sqrt(signal_power / (noise_power * std::pow(10.0, target_snr_db / 10.0)));
}

namespace {

Samples add_scaled(std::span<const float> clean, std::span<const float> fitted, double scale) {
  Samples out(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    out[i] = static_cast<float>(clean[i] + scale * fitted[i]);
  }
  return out;
}

void check_pair(const Utterance& utterance, const NoiseClip& noise) {
  if (utterance.samples.empty()) fail(ErrorKind::validation, "utterance " + utterance.id + " is empty");
  if (noise.samples.empty()) fail(ErrorKind::validation, "noise clip " + noise.id + " is empty");
}

}  // namespace

MixedSample mix(const Utterance& utterance, const NoiseClip& noise, double target_snr_db, std::uint64_t seed) {
  check_pair(utterance, noise);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, noise.samples.size() - 1);
  const std::size_t offset = pick(rng);
  const Samples fitted = fit_noise(noise.samples, utterance.samples.size(), offset);
  const double scale = compute_scale(measure_power(utterance.samples), measure_power(fitted), target_snr_db);

  MixedSample out;
  out.spec = {utterance.id, noise.id, static_cast<std::int64_t>(offset), target_snr_db, scale, seed};
  out.samples = add_scaled(utterance.samples, fitted, scale);
  out.environment = noise.environment;
  out.labels_raw = utterance.labels_raw;
  return out;
}

MixedSample apply_spec(const Utterance& utterance, const NoiseClip& noise, const MixSpec& spec) {
  check_pair(utterance, noise);
  if (spec.utterance_id != utterance.id || spec.noise_id != noise.id) {
    fail(ErrorKind::validation, "mix spec (" + spec.utterance_id + ", " + spec.noise_id +
                                    ") does not match inputs (" + utterance.id + ", " + noise.id + ")");
  }
  if (!(spec.scale > 0.0)) fail(ErrorKind::validation, "mix spec scale must be positive");
  const Samples fitted = fit_noise(noise.samples, utterance.samples.size(), static_cast<std::size_t>(spec.noise_offset));
  return {add_scaled(utterance.samples, fitted, spec.scale), spec, noise.environment, utterance.labels_raw};
}

double achieved_snr_db(const Utterance& utterance, const NoiseClip& noise, const MixSpec& spec) {
  const Samples fitted = fit_noise(noise.samples, utterance.samples.size(), static_cast<std::size_t>(spec.noise_offset));
  const double noise_power = measure_power(fitted) * spec.scale * spec.scale;
  return 10.0 * std::log10(measure_power(utterance.samples) / noise_power);
}

AdaptCondition sample_adapt_condition(const EnvironmentCatalog& catalog, Rng& rng) {
  std::uniform_int_distribution<std::size_t> env(0, catalog.adapt_environments.size() - 1);
  std::uniform_int_distribution<std::size_t> snr(0, kAdaptSnrsDb.size() - 1);
  AdaptCondition c;
  c.environment = catalog.adapt_environments[env(rng)];
  c.snr_db = kAdaptSnrsDb[snr(rng)];
  return c;
}

std::vector<const NoiseClip*> choose_noise_clips(std::span<const NoiseClip* const> pool, std::size_t count, Rng& rng) {
  if (pool.empty()) fail(ErrorKind::validation, "empty noise pool");
  std::vector<const NoiseClip*> out;
  out.reserve(count);
  std::vector<std::size_t> order(pool.size());
  while (out.size() < count) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size() && out.size() < count; ++i) out.push_back(pool[order[i]]);
  }
  return out;
}

std::uint64_t eval_sample_seed(std::uint64_t master, const std::string& utterance_id, int replication) {
  return derive_seed(master, hash_string(utterance_id), static_cast<std::uint64_t>(replication));
}

std::vector<EvalSetSpec> build_eval_sets(std::span<const Utterance* const> test_utterances,
                                         std::span<const NoiseClip* const> test_noise, std::uint64_t seed,
                                         std::span<const double> snrs_db, int replications) {
  if (test_noise.empty()) fail(ErrorKind::validation, "cannot build evaluation sets from an empty test noise pool");
  if (test_utterances.empty()) fail(ErrorKind::validation, "cannot build evaluation sets without test utterances");
  std::vector<EvalSetSpec> sets;
  for (int rep = 0; rep < replications; ++rep) {
    for (double snr : snrs_db) {
      EvalSetSpec set;
      set.replication = rep;
      set.snr_db = snr;
      set.seed = seed;
      for (const Utterance* u : test_utterances) {
        const std::uint64_t sample_seed = eval_sample_seed(seed, u->id, rep);
        Rng rng(sample_seed);
        std::uniform_int_distribution<std::size_t> pick(0, test_noise.size() - 1);
        const NoiseClip& clip = *test_noise[pick(rng)];
        set.specs.push_back(mix(*u, clip, snr, mix_seed(sample_seed)).spec);
      }
      sets.push_back(std::move(set));
    }
  }
  return sets;
}

void write_eval_set(const std::filesystem::path& path, const EvalSetSpec& set) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot write evaluation set " + path.string());
  os << json{{"replication", set.replication}, {"snr_db", set.snr_db}, {"seed", set.seed}}.dump() << '\n';
  for (const auto& s : set.specs) {
    os << json{{"utterance_id", s.utterance_id}, {"noise_id", s.noise_id},     {"noise_offset", s.noise_offset},
               {"target_snr_db", s.target_snr_db}, {"scale", s.scale}, {"seed", s.seed}}
              .dump()
       << '\n';
  }
}

EvalSetSpec read_eval_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open evaluation set " + path.string());
  EvalSetSpec set;
  std::string line;
  bool header = true;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (header) {
        set.replication = j.at("replication").get<int>();
        set.snr_db = j.at("snr_db").get<double>();
        set.seed = j.at("seed").get<std::uint64_t>();
        header = false;
        continue;
      }
      MixSpec s;
      s.utterance_id = j.at("utterance_id").get<std::string>();
      s.noise_id = j.at("noise_id").get<std::string>();
      s.noise_offset = j.at("noise_offset").get<std::int64_t>();
      s.target_snr_db = j.at("target_snr_db").get<double>();
      s.scale = j.at("scale").get<double>();
      s.seed = j.at("seed").get<std::uint64_t>();
      set.specs.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
  if (header) fail(ErrorKind::validation, "evaluation set " + path.string() + " has no header record");
  return set;
}

std::string eval_set_filename(const EvalSetSpec& set) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "evalset_snr%+05.1f_rep%02d.jsonl", set.snr_db, set.replication);
  return buf;
}

}  // namespace tgeat
