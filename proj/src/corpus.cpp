#include "tgeat/corpus.hpp"

#include "tgeat/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace tgeat {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::dev:
      return "dev";
    case Split::test:
      return "test";
  }
  return "?";
}

std::string to_string(NoiseSplit split) { return split == NoiseSplit::adapt ? "adapt" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  fail(ErrorKind::validation, "unknown utterance split '" + s + "'");
}

NoiseSplit parse_noise_split(const std::string& s) {
  if (s == "adapt") return NoiseSplit::adapt;
  if (s == "test") return NoiseSplit::test;
  fail(ErrorKind::validation, "unknown noise split '" + s + "'");
}

std::string to_string(EnvironmentGroup group) {
  switch (group) {
    case EnvironmentGroup::indoor:
      return "indoor";
    case EnvironmentGroup::outdoor:
      return "outdoor";
    case EnvironmentGroup::vehicle:
      return "vehicle";
  }
  return "?";
}

EnvironmentGroup parse_group(const std::string& s) {
  if (s == "indoor") return EnvironmentGroup::indoor;
  if (s == "outdoor") return EnvironmentGroup::outdoor;
  if (s == "vehicle") return EnvironmentGroup::vehicle;
  fail(ErrorKind::validation, "unknown environment group '" + s + "'");
}

// ---------------------------------------------------------------------------
// Catalog

void EnvironmentCatalog::validate() const {
  if (adapt_environments.size() != 20) {
    fail(ErrorKind::validation, "catalog must list exactly 20 adapt environments, got " +
                                    std::to_string(adapt_environments.size()));
  }
  if (test_environments.size() != 6) {
    fail(ErrorKind::validation,
         "catalog must list exactly 6 test environments, got " + std::to_string(test_environments.size()));
  }
  std::set<std::string> seen;
  for (const auto& name : all_environments()) {
    if (!seen.insert(name).second) {
      fail(ErrorKind::validation, "environment '" + name + "' appears more than once in the catalog");
    }
    if (!group_of.contains(name)) fail(ErrorKind::validation, "environment '" + name + "' has no group");
  }
}

std::optional<int> EnvironmentCatalog::adapt_index(const std::string& environment) const {
  auto it = std::find(adapt_environments.begin(), adapt_environments.end(), environment);
  if (it == adapt_environments.end()) return std::nullopt;
  return static_cast<int>(it - adapt_environments.begin());
}

bool EnvironmentCatalog::contains(const std::string& environment) const { return group_of.contains(environment); }

EnvironmentGroup EnvironmentCatalog::group(const std::string& environment) const {
  auto it = group_of.find(environment);
  if (it == group_of.end()) fail(ErrorKind::validation, "environment '" + environment + "' is not in the catalog");
  return it->second;
}

std::vector<std::string> EnvironmentCatalog::all_environments() const {
  std::vector<std::string> out = adapt_environments;
  out.insert(out.end(), test_environments.begin(), test_environments.end());
  return out;
}

EnvironmentCatalog default_catalog() {
  EnvironmentCatalog c;
  c.adapt_environments = {"mall",   "restaurant", "office",  "airport",    "station",  "city",
                          "park",   "street",     "traffic", "home",       "kitchen",  "living room",
                          "bathroom", "bedroom",  "metro",   "bus",        "car",      "construction site",
                          "pedestrian", "beach"};
  c.test_environments = {"plaza", "garden", "school", "tram", "sea", "boat"};
  using G = EnvironmentGroup;
  c.group_of = {
      {"mall", G::indoor},        {"restaurant", G::indoor},  {"office", G::indoor},
      {"airport", G::indoor},     {"home", G::indoor},        {"kitchen", G::indoor},
      {"living room", G::indoor}, {"bathroom", G::indoor},    {"bedroom", G::indoor},
      {"school", G::indoor},      {"city", G::outdoor},       {"park", G::outdoor},
      {"street", G::outdoor},     {"traffic", G::outdoor},    {"construction site", G::outdoor},
      {"pedestrian", G::outdoor}, {"beach", G::outdoor},      {"plaza", G::outdoor},
      {"garden", G::outdoor},     {"sea", G::outdoor},        {"station", G::vehicle},
      {"metro", G::vehicle},      {"bus", G::vehicle},        {"car", G::vehicle},
      {"tram", G::vehicle},       {"boat", G::vehicle},
  };
  return c;
}

// ---------------------------------------------------------------------------
// Normalization

LabelTriple normalize_labels(const LabelTriple& raw) {
  LabelTriple out;
  for (int i = 0; i < 3; ++i) {
    const double x = raw[i];
    if (!std::isfinite(x) || x < 1.0 || x > 7.0) {
      fail(ErrorKind::validation, "label component " + std::to_string(x) + " outside [1, 7]");
    }
    out[i] = (x - 1.0) / 6.0;
  }
  return out;
}

LabelTriple denormalize_labels(const LabelTriple& normalized) {
  LabelTriple out;
  for (int i = 0; i < 3; ++i) out[i] = normalized[i] * 6.0 + 1.0;
  return out;
}

namespace {

template <typename Range, typename Get>
WaveformStats pooled_stats(const Range& utterances, Get get) {
  // Two passes in double; the pooled sample count reaches millions.
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& u : utterances) {
    for (float x : get(u).samples) sum += x;
    n += get(u).samples.size();
  }
  if (n == 0) fail(ErrorKind::validation, "cannot compute waveform statistics over an empty training split");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& u : utterances) {
    for (float x : get(u).samples) ss += (x - mean) * (x - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(n))};
}

}  // namespace

WaveformStats compute_stats(std::span<const Utterance> train_utterances) {
  return pooled_stats(train_utterances, [](const Utterance& u) -> const Utterance& { return u; });
}

WaveformStats compute_stats(std::span<const Utterance* const> train_utterances) {
  return pooled_stats(train_utterances, [](const Utterance* u) -> const Utterance& { return *u; });
}

Samples z_normalize(std::span<const float> samples, const WaveformStats& stats) {
  if (!(stats.std > 0.0)) fail(ErrorKind::numeric, "degenerate corpus: waveform std is zero");
  Samples out(samples.size());
  const double inv = 1.0 / stats.std;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i] = static_cast<float>((samples[i] - stats.mean) * inv);
  }
  return out;
}

// ---------------------------------------------------------------------------
// WAV

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::int16_t quantize(float x) {
  const double v = std::round(static_cast<double>(x) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
}

}  // namespace

Samples read_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto bad = [&](const std::string& why) { fail(ErrorKind::io, "malformed WAV " + path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    bad("missing RIFF/WAVE header");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = get_u32(bytes.data() + pos + 4);
    const unsigned char* body = bytes.data() + pos + 8;
    if (pos + 8 + size > bytes.size()) bad("truncated chunk");
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (size < 16) bad("short fmt chunk");
      const auto format = get_u16(body);
      const auto channels = get_u16(body + 2);
      const auto rate = get_u32(body + 4);
      const auto bits = get_u16(body + 14);
      if (format != 1 || channels != 1 || bits != 16) bad("expected PCM 16-bit mono");
      if (rate != static_cast<std::uint32_t>(kSampleRate)) bad("expected 16 kHz, got " + std::to_string(rate));
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      if (!have_fmt) bad("data chunk before fmt chunk");
      Samples out(size / 2);
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(static_cast<std::int16_t>(get_u16(body + 2 * i))) / 32768.0f;
      }
      return out;
    }
    pos += 8 + size + (size & 1u);
  }
  bad("no data chunk");
}

void write_wav(const fs::path& path, std::span<const float> samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write audio file " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  put_u32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put_u32(os, 16);
  put_u16(os, 1);
  put_u16(os, 1);
  put_u32(os, kSampleRate);
  put_u32(os, kSampleRate * 2);
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (float x : samples) put_u16(os, static_cast<std::uint16_t>(quantize(x)));
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

template <typename T>
T required(const json& rec, const char* key, std::size_t line, const fs::path& path) {
  if (!rec.contains(key)) {
    fail(ErrorKind::validation,
         path.string() + ":" + std::to_string(line) + ": manifest record missing field \"" + key + "\"");
  }
  try {
    return rec.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::validation,
         path.string() + ":" + std::to_string(line) + ": manifest field \"" + key + "\" has the wrong type");
  }
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::validation, path.string() + ":" + std::to_string(line) + ": malformed JSON: " + e.what());
    }
    const auto id = required<std::string>(rec, "id", line, path);
    fs::path wav = required<std::string>(rec, "wav", line, path);
    if (wav.is_relative()) wav = base / wav;
    if (rec.contains("environment")) {
      NoiseRecord r{id, wav, rec.at("environment").get<std::string>(), NoiseSplit::adapt};
      r.split = parse_noise_split(required<std::string>(rec, "split", line, path));
      out.emplace_back(std::move(r));
    } else {
      UtteranceRecord r{id, wav, {}, Split::train};
      r.labels_raw.arousal = required<double>(rec, "arousal", line, path);
      r.labels_raw.dominance = required<double>(rec, "dominance", line, path);
      r.labels_raw.valence = required<double>(rec, "valence", line, path);
      r.split = parse_split(required<std::string>(rec, "split", line, path));
      out.emplace_back(std::move(r));
    }
  }
  return out;
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  for (const auto& entry : entries) {
    json rec;
    std::visit(
        [&](const auto& r) {
          rec["id"] = r.id;
          rec["wav"] = r.wav.lexically_relative(base).generic_string();
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, UtteranceRecord>) {
            rec["arousal"] = r.labels_raw.arousal;
            rec["dominance"] = r.labels_raw.dominance;
            rec["valence"] = r.labels_raw.valence;
          } else {
            rec["environment"] = r.environment;
          }
          rec["split"] = to_string(r.split);
        },
        entry);
    os << rec.dump() << '\n';
  }
}

Utterance load_utterance(const UtteranceRecord& record) {
  return {record.id, read_wav(record.wav), record.labels_raw, record.split};
}

NoiseClip load_noise(const NoiseRecord& record) {
  return {record.id, record.environment, read_wav(record.wav), record.split};
}

EnvironmentCatalog load_catalog(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open catalog " + path.string());
  EnvironmentCatalog c;
  try {
    const json j = json::parse(in);
    c.adapt_environments = j.at("adapt").get<std::vector<std::string>>();
    c.test_environments = j.at("test").get<std::vector<std::string>>();
    for (const auto& [name, group] : j.at("groups").items()) c.group_of[name] = parse_group(group.get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, "malformed catalog " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void write_catalog(const fs::path& path, const EnvironmentCatalog& catalog) {
  json j;
  j["adapt"] = catalog.adapt_environments;
  j["test"] = catalog.test_environments;
  json groups = json::object();
  for (const auto& [name, group] : catalog.group_of) groups[name] = to_string(group);
  j["groups"] = groups;
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot write catalog " + path.string());
  os << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

constexpr double kPi = std::numbers::pi;

// RBJ band-pass (constant 0 dB peak gain).
struct Biquad {
  double b0, b1, b2, a1, a2;
  double z1 = 0.0, z2 = 0.0;

  static Biquad bandpass(double center_hz, double q) {
    const double w0 = 2.0 * kPi * center_hz / kSampleRate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    return {alpha / a0, 0.0, -alpha / a0, -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0};
  }

  double operator()(double x) {
    const double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

void scale_to_rms(std::vector<double>& x, double target_rms) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(x.size()));
  if (rms > 0.0) {
    for (double& v : x) v *= target_rms / rms;
  }
}

Samples to_pcm_grid(const std::vector<double>& x) {
  // Samples live on the PCM16 grid so a WAV round trip is lossless.
  Samples out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = std::clamp(std::round(x[i] * 32768.0), -32768.0, 32767.0);
    out[i] = static_cast<float>(v / 32768.0);
  }
  return out;
}

double group_center_hz(EnvironmentGroup group) {
  switch (group) {
    case EnvironmentGroup::indoor:
      return 700.0;
    case EnvironmentGroup::outdoor:
      return 2600.0;
    case EnvironmentGroup::vehicle:
      return 200.0;
  }
  return 1000.0;
}

}  // namespace

Samples synth_utterance_audio(const LabelTriple& normalized, double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::lround(duration_s * kSampleRate));

  // Dominance -> f0, arousal -> level, valence -> spectral tilt.
  const double f0 = 110.0 * std::pow(2.0, 1.5 * normalized.dominance) * (1.0 + 0.03 * gauss(rng));
  const double level_db = -30.0 + 18.0 * normalized.arousal + 1.0 * gauss(rng);
  const double smoothing = std::clamp(0.92 - 0.55 * normalized.valence + 0.02 * gauss(rng), 0.2, 0.97);
  const double vibrato_hz = 4.0 + 2.0 * unit(rng);
  const double vibrato_phase = 2.0 * kPi * unit(rng);
  const double syllable_hz = 3.0 + 2.0 * unit(rng);
  const double syllable_phase = 2.0 * kPi * unit(rng);

  // Band-limited enough for our purposes: an impulse train with fractional
  // placement, shaped by two one-pole low-passes whose pole sets the tilt.
  std::vector<double> x(n, 0.0);
  double phase = unit(rng);
  for (std::size_t t = 0; t < n; ++t) {
    const double time = static_cast<double>(t) / kSampleRate;
    const double f = f0 * (1.0 + 0.02 * std::sin(2.0 * kPi * vibrato_hz * time + vibrato_phase));
    phase += f / kSampleRate;
    if (phase >= 1.0) {
      phase -= 1.0;
      const double frac = phase / (f / kSampleRate);
      x[t] += 1.0 - frac;
      if (t > 0) x[t - 1] += frac;
    }
  }
  double y1 = 0.0, y2 = 0.0, dc_in = 0.0, dc_out = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    y1 = (1.0 - smoothing) * x[t] + smoothing * y1;
    y2 = (1.0 - smoothing) * y1 + smoothing * y2;
    // DC blocker.
    const double hp = y2 - dc_in + 0.995 * dc_out;
    dc_in = y2;
    dc_out = hp;
    const double time = static_cast<double>(t) / kSampleRate;
    const double envelope = 0.3 + 0.7 * std::abs(std::sin(kPi * syllable_hz * time + syllable_phase));
    x[t] = hp * envelope + 1e-4 * gauss(rng);
  }
  scale_to_rms(x, std::pow(10.0, level_db / 20.0));
  return to_pcm_grid(x);
}

Samples synth_noise_audio(const std::string& environment, EnvironmentGroup group, double duration_s,
                          std::uint64_t seed) {
  // Environment-level traits depend only on the name; the seed varies the clip.
  Rng env_rng(hash_string(environment));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double detune = 0.85 + 0.3 * unit(env_rng);
  const double q = 0.8 + 0.6 * unit(env_rng);
  const double modulation_hz = 0.5 + 5.5 * unit(env_rng);
  const double depth = 0.3 + 0.4 * unit(env_rng);

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double mod_phase = 2.0 * kPi * unit(rng);
  const auto n = static_cast<std::size_t>(std::lround(duration_s * kSampleRate));
  Biquad bp = Biquad::bandpass(group_center_hz(group) * detune, q);
  Biquad bp2 = Biquad::bandpass(group_center_hz(group) * detune, q);
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double time = static_cast<double>(t) / kSampleRate;
    const double am = 1.0 + depth * std::sin(2.0 * kPi * modulation_hz * time + mod_phase);
    x[t] = am * bp2(bp(gauss(rng))) + 0.02 * gauss(rng);
  }
  scale_to_rms(x, 0.1);
  return to_pcm_grid(x);
}

SynthCorpus synth_corpus(const SynthConfig& config, const EnvironmentCatalog& catalog, std::uint64_t seed) {
  if (config.train_count < 1 || config.dev_count < 1 || config.test_count < 1) {
    fail(ErrorKind::config, "synthetic corpus counts must be >= 1 for every split");
  }
  if (config.clips_per_adapt_environment < 1 || config.clips_per_test_environment < 1) {
    fail(ErrorKind::config, "synthetic corpus needs at least one noise clip per environment");
  }
  if (!(config.min_duration_s > 0.0) || config.max_duration_s < config.min_duration_s || !(config.noise_duration_s > 0.0)) {
    fail(ErrorKind::config, "invalid synthetic duration range");
  }
  catalog.validate();

  SynthCorpus corpus;
  corpus.catalog = catalog;
  Rng label_rng(tagged_seed(seed, "labels"));
  std::uniform_real_distribution<double> scale7(1.0, 7.0);
  std::uniform_real_distribution<double> duration(config.min_duration_s, config.max_duration_s);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto make_split = [&](Split split, int count) {
    for (int i = 0; i < count; ++i) {
      Utterance u;
      u.id = to_string(split) + "_" + std::to_string(i);
      u.split = split;
      // Arousal and dominance are correlated, as in natural emotional speech.
      u.labels_raw.arousal = scale7(label_rng);
      u.labels_raw.dominance = std::clamp(u.labels_raw.arousal + 1.3 * gauss(label_rng), 1.0, 7.0);
      u.labels_raw.valence = scale7(label_rng);
      const double dur = duration(label_rng);
      u.samples = synth_utterance_audio(normalize_labels(u.labels_raw), dur, tagged_seed(seed, u.id));
      corpus.utterances.push_back(std::move(u));
    }
  };
  make_split(Split::train, config.train_count);
  make_split(Split::dev, config.dev_count);
  make_split(Split::test, config.test_count);

  auto make_noise = [&](const std::string& env, NoiseSplit split, int count) {
    for (int i = 0; i < count; ++i) {
      NoiseClip clip;
      clip.environment = env;
      clip.split = split;
      std::string slug = env;
      std::replace(slug.begin(), slug.end(), ' ', '_');
      clip.id = "noise_" + slug + "_" + std::to_string(i);
      clip.samples = synth_noise_audio(env, catalog.group(env), config.noise_duration_s, tagged_seed(seed, clip.id));
      corpus.noise.push_back(std::move(clip));
    }
  };
  for (const auto& env : catalog.adapt_environments) make_noise(env, NoiseSplit::adapt, config.clips_per_adapt_environment);
  for (const auto& env : catalog.test_environments) make_noise(env, NoiseSplit::test, config.clips_per_test_environment);
  return corpus;
}

void write_corpus(const fs::path& dir, const SynthCorpus& corpus) {
  const fs::path wav_dir = dir / "wav";
  std::error_code ec;
  fs::create_directories(wav_dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory " + wav_dir.string() + ": " + ec.message());
  std::vector<ManifestEntry> utts, noise;
  for (const auto& u : corpus.utterances) {
    const fs::path wav = wav_dir / (u.id + ".wav");
    write_wav(wav, u.samples);
    utts.emplace_back(UtteranceRecord{u.id, wav, u.labels_raw, u.split});
  }
  for (const auto& n : corpus.noise) {
    const fs::path wav = wav_dir / (n.id + ".wav");
    write_wav(wav, n.samples);
    noise.emplace_back(NoiseRecord{n.id, wav, n.environment, n.split});
  }
  write_manifest(dir / "utterances.jsonl", utts);
  write_manifest(dir / "noise.jsonl", noise);
  write_catalog(dir / "catalog.json", corpus.catalog);
}

SynthCorpus read_corpus(const fs::path& dir) {
  SynthCorpus corpus;
  corpus.catalog = load_catalog(dir / "catalog.json");
  for (const auto& entry : load_manifest(dir / "utterances.jsonl")) {
    const auto* rec = std::get_if<UtteranceRecord>(&entry);
    if (!rec) fail(ErrorKind::validation, "noise record found in utterance manifest");
    normalize_labels(rec->labels_raw);  // range check
    corpus.utterances.push_back(load_utterance(*rec));
  }
  for (const auto& entry : load_manifest(dir / "noise.jsonl")) {
    const auto* rec = std::get_if<NoiseRecord>(&entry);
    if (!rec) fail(ErrorKind::validation, "utterance record found in noise manifest");
    auto clip = load_noise(*rec);
    if (!corpus.catalog.contains(clip.environment)) {
      fail(ErrorKind::validation, "noise clip " + clip.id + " uses unknown environment '" + clip.environment + "'");
    }
    const bool is_adapt = corpus.catalog.adapt_index(clip.environment).has_value();
    if (is_adapt != (clip.split == NoiseSplit::adapt)) {
      fail(ErrorKind::validation, "noise clip " + clip.id + " split does not match its environment set");
    }
    corpus.noise.push_back(std::move(clip));
  }
  return corpus;
}

std::vector<const Utterance*> select_split(const std::vector<Utterance>& utterances, Split split) {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances) {
    if (u.split == split) out.push_back(&u);
  }
  return out;
}

}  // namespace tgeat
