#include "helpers.hpp"

#include "tgeat/corpus.hpp"
#include "tgeat/error.hpp"

#include <doctest.h>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <fstream>
#include <numeric>

using namespace tgeat;

namespace {

double rms(const Samples& x) {
  double s = 0.0;
  for (float v : x) s += static_cast<double>(v) * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

double spectral_centroid(const Samples& x) {
  Eigen::FFT<double> fft;
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 1; k < in.size() / 2; ++k) {
    const double p = std::norm(spec[k]);
    num += p * static_cast<double>(k) * kSampleRate / static_cast<double>(in.size());
    den += p;
  }
  return num / den;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream os(path);
  for (const auto& l : lines) os << l << '\n';
}

}  // namespace

TEST_CASE("normalize_labels maps the 1-7 scale onto [0,1]") {
  CHECK(normalize_labels({1, 1, 1}) == LabelTriple{0, 0, 0});
  const auto a = normalize_labels({7, 4, 1});
  CHECK(a.arousal == doctest::Approx(1.0));
  CHECK(a.dominance == doctest::Approx(0.5));
  CHECK(a.valence == doctest::Approx(0.0));
  const auto b = normalize_labels({2.2, 5.8, 3.4});
  CHECK(b.arousal == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(b.dominance == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(b.valence == doctest::Approx(0.4).epsilon(1e-12));
  CHECK_THROWS_AS(normalize_labels({0.5, 4, 4}), Error);
  CHECK_THROWS_AS(normalize_labels({4, 4, 7.01}), Error);
}

TEST_CASE("label normalization round-trips") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(1.0, 7.0);
  for (int i = 0; i < 200; ++i) {
    const LabelTriple raw{u(rng), u(rng), u(rng)};
    const LabelTriple back = denormalize_labels(normalize_labels(raw));
    for (int k = 0; k < 3; ++k) CHECK(std::abs(back[k] - raw[k]) < 1e-12);
  }
}

TEST_CASE("compute_stats pools samples with the population std") {
  std::vector<Utterance> one{{"a", {1.0f, -1.0f}, {4, 4, 4}, Split::train}};
  auto s = compute_stats(one);
  CHECK(s.mean == doctest::Approx(0.0));
  CHECK(s.std == doctest::Approx(1.0));

  std::vector<Utterance> two{{"a", {0.0f, 0.0f}, {4, 4, 4}, Split::train}, {"b", {2.0f, 2.0f}, {4, 4, 4}, Split::train}};
  s = compute_stats(two);
  CHECK(s.mean == doctest::Approx(1.0));
  CHECK(s.std == doctest::Approx(1.0));

  CHECK_THROWS_AS(compute_stats(std::span<const Utterance>{}), Error);
}

TEST_CASE("z_normalize") {
  const Samples x{0.25f, -0.5f, 0.75f};
  CHECK(z_normalize(x, {0.0, 1.0}) == x);
  for (float v : z_normalize(Samples(5, 0.3f), {0.3f, 2.0})) CHECK(v == 0.0f);
  CHECK_THROWS_AS(z_normalize(x, {0.0, 0.0}), Error);

  Rng rng(11);
  std::normal_distribution<float> g(0.2f, 0.3f);
  Samples y(1000);
  for (auto& v : y) v = g(rng);
  std::vector<Utterance> u{{"r", y, {4, 4, 4}, Split::train}};
  const Samples z = z_normalize(y, compute_stats(u));
  double m = 0.0;
  for (float v : z) m += v;
  m /= static_cast<double>(z.size());
  double var = 0.0;
  for (float v : z) var += (v - m) * (v - m);
  var /= static_cast<double>(z.size());
  CHECK(std::abs(m) < 1e-6);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
}

TEST_CASE("default catalog shape") {
  const auto c = default_catalog();
  CHECK_NOTHROW(c.validate());
  CHECK(c.adapt_environments.size() == 20);
  CHECK(c.test_environments.size() == 6);
  for (const auto& t : c.test_environments) CHECK_FALSE(c.adapt_index(t).has_value());
  CHECK(c.adapt_index("mall") == 0);
  CHECK(c.group("plaza") == EnvironmentGroup::outdoor);
  CHECK(c.group("tram") == EnvironmentGroup::vehicle);

  auto bad = c;
  bad.test_environments.push_back("mall");
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("WAV round trip is lossless on the PCM16 grid") {
  testing::TempDir dir("wav");
  Samples x(321);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(static_cast<int>(i * 97 % 2001) - 1000) / 32768.0f;
  write_wav(dir / "a.wav", x);
  CHECK(read_wav(dir / "a.wav") == x);
  CHECK_THROWS_WITH_AS(read_wav(dir / "missing.wav"), doctest::Contains("missing.wav"), Error);
}

TEST_CASE("manifest parsing") {
  testing::TempDir dir("manifest");
  write_lines(dir / "m.jsonl",
              {R"({"id":"u1","wav":"wav/u1.wav","arousal":3,"dominance":4,"valence":5,"split":"train"})",
               R"({"id":"n1","wav":"wav/n1.wav","environment":"park","split":"adapt"})",
               R"({"id":"u2","wav":"wav/u2.wav","arousal":1,"dominance":7,"valence":2,"split":"test"})"});
  const auto entries = load_manifest(dir / "m.jsonl");
  REQUIRE(entries.size() == 3);
  CHECK(std::get<UtteranceRecord>(entries[0]).id == "u1");
  CHECK(std::get<NoiseRecord>(entries[1]).environment == "park");
  CHECK(std::get<UtteranceRecord>(entries[2]).split == Split::test);
  CHECK(std::get<UtteranceRecord>(entries[0]).wav == dir.path() / "wav/u1.wav");

  // Audio is fetched lazily and a missing file names its path.
  CHECK_THROWS_WITH_AS(load_utterance(std::get<UtteranceRecord>(entries[0])), doctest::Contains("u1.wav"), Error);

  write_lines(dir / "bad.jsonl",
              {R"({"id":"u1","wav":"a.wav","arousal":3,"dominance":4,"valence":5,"split":"train"})",
               R"({"id":"u2","wav":"b.wav","arousal":3,"dominance":4,"valence":5})"});
  CHECK_THROWS_WITH_AS(load_manifest(dir / "bad.jsonl"), doctest::Contains(":2:"), Error);

  write_lines(dir / "split.jsonl", {R"({"id":"u1","wav":"a.wav","arousal":3,"dominance":4,"valence":5,"split":"holdout"})"});
  CHECK_THROWS_WITH_AS(load_manifest(dir / "split.jsonl"), doctest::Contains("holdout"), Error);
}

TEST_CASE("synthetic speech: arousal raises energy") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Samples calm = synth_utterance_audio({0.0, 0.5, 0.5}, 0.5, seed);
    const Samples active = synth_utterance_audio({1.0, 0.5, 0.5}, 0.5, seed);
    CHECK(rms(active) > rms(calm));
  }
}

TEST_CASE("synthetic noise: same-group environments are spectrally closer") {
  const auto c = default_catalog();
  const double plaza = spectral_centroid(synth_noise_audio("plaza", c.group("plaza"), 1.0, 7));
  const double park = spectral_centroid(synth_noise_audio("park", c.group("park"), 1.0, 8));
  const double car = spectral_centroid(synth_noise_audio("car", c.group("car"), 1.0, 9));
  CHECK(std::abs(plaza - park) < std::abs(plaza - car));
}

TEST_CASE("synth_corpus is deterministic and survives a disk round trip") {
  const auto cfg = testing::tiny_synth();
  const auto a = synth_corpus(cfg, default_catalog(), 42);
  const auto b = synth_corpus(cfg, default_catalog(), 42);
  REQUIRE(a.utterances.size() == b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    CHECK(a.utterances[i].samples == b.utterances[i].samples);
    CHECK(a.utterances[i].labels_raw == b.utterances[i].labels_raw);
  }
  CHECK(select_split(a.utterances, Split::train).size() == static_cast<std::size_t>(cfg.train_count));
  CHECK(select_split(a.utterances, Split::dev).size() == static_cast<std::size_t>(cfg.dev_count));
  CHECK(a.noise.size() == 26u);

  testing::TempDir dir("corpus");
  write_corpus(dir.path(), a);
  const auto r = read_corpus(dir.path());
  REQUIRE(r.utterances.size() == a.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) CHECK(r.utterances[i].samples == a.utterances[i].samples);
  for (std::size_t i = 0; i < a.noise.size(); ++i) {
    CHECK(r.noise[i].samples == a.noise[i].samples);
    CHECK(r.noise[i].environment == a.noise[i].environment);
  }

  auto bad = cfg;
  bad.train_count = 0;
  CHECK_THROWS_AS(synth_corpus(bad, default_catalog(), 1), Error);
}
