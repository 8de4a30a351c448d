#include "helpers.hpp"

#include "tgeat/error.hpp"
#include "tgeat/mixer.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace tgeat;

namespace {

Samples random_signal(std::size_t n, double amp, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> g(0.0f, static_cast<float>(amp));
  Samples x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

double power_oracle(const Samples& x) {
  long double s = 0.0L;
  for (float v : x) s += static_cast<long double>(v) * v;
  return static_cast<double>(s / static_cast<long double>(x.size()));
}

}  // namespace

TEST_CASE("measure_power") {
  CHECK(measure_power(Samples{1.0f, -1.0f, 1.0f, -1.0f}) == doctest::Approx(1.0));
  CHECK(measure_power(Samples{3.0f, 4.0f}) == doctest::Approx(12.5));
  CHECK_THROWS_AS(measure_power(Samples{}), Error);
}

TEST_CASE("fit_noise tiles cyclically from the offset") {
  const Samples n{1, 2, 3};
  CHECK(fit_noise(n, 7, 0) == Samples{1, 2, 3, 1, 2, 3, 1});
  CHECK(fit_noise(n, 4, 2) == Samples{3, 1, 2, 3});
  CHECK(fit_noise(n, 2, 1) == Samples{2, 3});
  CHECK_THROWS_AS(fit_noise(Samples{}, 3, 0), Error);
}

TEST_CASE("fit_noise preserves power of a periodic clip") {
  const Samples n = random_signal(1000, 0.2, 5);
  const Samples f = fit_noise(n, 5000, 123);
  CHECK(measure_power(f) == doctest::Approx(measure_power(n)).epsilon(1e-6));
}

TEST_CASE("compute_scale hits the target") {
  for (double snr : {-5.0, 0.0, 5.0, 12.5}) {
    const double s = compute_scale(2.0, 0.5, snr);
    CHECK(10.0 * std::log10(2.0 / (s * s * 0.5)) == doctest::Approx(snr).epsilon(1e-12));
  }
  CHECK_THROWS_AS(compute_scale(0.0, 1.0, 0.0), Error);
  CHECK_THROWS_AS(compute_scale(1.0, 0.0, 0.0), Error);
}

TEST_CASE("mix achieves the requested SNR") {
  Utterance u{"u", random_signal(4000, 0.3, 1), {4, 4, 4}, Split::test};
  NoiseClip n{"n", "park", random_signal(1500, 0.05, 2), NoiseSplit::test};
  for (double snr : {-5.0, 0.0, 5.0, 2.5, 7.5, 12.5}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const MixedSample m = mix(u, n, snr, seed);
      REQUIRE(m.samples.size() == u.samples.size());
      CHECK(m.environment == "park");
      CHECK(std::abs(achieved_snr_db(u, n, m.spec) - snr) < 0.01);

      // Independent oracle: subtract clean speech and measure the residual.
      Samples resid(m.samples.size());
      for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = m.samples[i] - u.samples[i];
      CHECK(std::abs(10.0 * std::log10(power_oracle(u.samples) / power_oracle(resid)) - snr) < 0.01);
    }
  }
}

TEST_CASE("apply_spec reproduces mix bitwise") {
  Utterance u{"u", random_signal(800, 0.3, 3), {4, 4, 4}, Split::test};
  NoiseClip n{"n", "car", random_signal(300, 0.1, 4), NoiseSplit::test};
  const MixedSample m = mix(u, n, 0.0, 77);
  CHECK(apply_spec(u, n, m.spec).samples == m.samples);
  CHECK(mix(u, n, 0.0, 77).samples == m.samples);
  CHECK(mix(u, n, 0.0, 78).spec.noise_offset != m.spec.noise_offset);

  MixSpec wrong = m.spec;
  wrong.noise_id = "other";
  CHECK_THROWS_AS(apply_spec(u, n, wrong), Error);
  wrong = m.spec;
  wrong.scale = 0.0;
  CHECK_THROWS_AS(apply_spec(u, n, wrong), Error);
}

TEST_CASE("zero-power inputs are numeric errors") {
  Utterance u{"u", Samples(100, 0.0f), {4, 4, 4}, Split::test};
  NoiseClip n{"n", "car", random_signal(100, 0.1, 4), NoiseSplit::test};
  CHECK_THROWS_AS(mix(u, n, 0.0, 1), Error);
  try {
    mix(u, n, 0.0, 1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
  }
}

TEST_CASE("adaptation conditions cover the seen environments and SNRs") {
  const auto c = default_catalog();
  Rng rng(9);
  std::set<std::string> envs;
  std::set<double> snrs;
  for (int i = 0; i < 2000; ++i) {
    const auto a = sample_adapt_condition(c, rng);
    CHECK(c.adapt_index(a.environment).has_value());
    envs.insert(a.environment);
    snrs.insert(a.snr_db);
  }
  CHECK(envs.size() == 20);
  CHECK(snrs == std::set<double>{2.5, 7.5, 12.5});
}

TEST_CASE("choose_noise_clips is distinct until the pool is exhausted") {
  std::vector<NoiseClip> clips(4);
  std::vector<const NoiseClip*> pool;
  for (int i = 0; i < 4; ++i) {
    clips[static_cast<std::size_t>(i)].id = "c" + std::to_string(i);
    pool.push_back(&clips[static_cast<std::size_t>(i)]);
  }
  Rng rng(1);
  const auto three = choose_noise_clips(pool, 3, rng);
  CHECK(std::set<const NoiseClip*>(three.begin(), three.end()).size() == 3);
  const auto ten = choose_noise_clips(pool, 10, rng);
  CHECK(ten.size() == 10);
  CHECK(std::set<const NoiseClip*>(ten.begin(), ten.begin() + 4).size() == 4);
  CHECK_THROWS_AS(choose_noise_clips({}, 1, rng), Error);
}

TEST_CASE("evaluation sets") {
  const auto corpus = synth_corpus(testing::tiny_synth(), default_catalog(), 5);
  const auto test = select_split(corpus.utterances, Split::test);
  std::vector<const NoiseClip*> noise;
  for (const auto& n : corpus.noise)
    if (n.split == NoiseSplit::test) noise.push_back(&n);

  const auto sets = build_eval_sets(test, noise, 99);
  REQUIRE(sets.size() == 30);
  CHECK(build_eval_sets(test, noise, 99) == sets);
  CHECK_FALSE(build_eval_sets(test, noise, 100) == sets);

  std::set<std::string> names;
  for (const auto& s : sets) {
    names.insert(eval_set_filename(s));
    CHECK(s.specs.size() == test.size());
  }
  CHECK(names.size() == 30);

  auto find = [&](int rep, double snr) -> const EvalSetSpec& {
    for (const auto& s : sets)
      if (s.replication == rep && s.snr_db == snr) return s;
    FAIL("missing set");
    return sets.front();
  };

  SUBCASE("SNR variants of a replication share noise segments") {
    for (int rep = 0; rep < 10; ++rep) {
      const auto& a = find(rep, 5.0);
      const auto& b = find(rep, -5.0);
      for (std::size_t i = 0; i < a.specs.size(); ++i) {
        CHECK(a.specs[i].noise_id == b.specs[i].noise_id);
        CHECK(a.specs[i].noise_offset == b.specs[i].noise_offset);
        CHECK(a.specs[i].scale < b.specs[i].scale);
      }
    }
  }

  SUBCASE("replications draw different noise") {
    const auto& a = find(0, 0.0);
    const auto& b = find(1, 0.0);
    int same = 0;
    for (std::size_t i = 0; i < a.specs.size(); ++i)
      same += a.specs[i].noise_id == b.specs[i].noise_id && a.specs[i].noise_offset == b.specs[i].noise_offset;
    CHECK(same < static_cast<int>(a.specs.size()));
  }

  SUBCASE("every stored spec achieves its SNR") {
    std::map<std::string, const Utterance*> by_id;
    for (const auto* u : test) by_id[u->id] = u;
    std::map<std::string, const NoiseClip*> noise_by_id;
    for (const auto* n : noise) noise_by_id[n->id] = n;
    for (const auto& s : sets)
      for (const auto& m : s.specs)
        CHECK(std::abs(achieved_snr_db(*by_id.at(m.utterance_id), *noise_by_id.at(m.noise_id), m) - s.snr_db) < 0.01);
  }

  SUBCASE("serialization round trip") {
    testing::TempDir dir("evalset");
    for (const auto& s : sets) {
      const auto path = dir / eval_set_filename(s);
      write_eval_set(path, s);
      CHECK(read_eval_set(path) == s);
    }
    CHECK_THROWS_AS(read_eval_set(dir / "absent.jsonl"), Error);
  }
}
