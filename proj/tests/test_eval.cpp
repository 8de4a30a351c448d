#include "helpers.hpp"

#include "tgeat/eval.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace tgeat;
using testing::error_kind;

namespace {

// P(T <= t) by Simpson integration of the Student-t density from 0 to |t|.
double t_cdf_oracle(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int n = 20000;
  const double b = std::abs(t);
  const double h = b / n;
  double s = pdf(0) + pdf(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  const double half = s * h / 3;
  return t >= 0 ? 0.5 + half : 0.5 - half;
}

EvalReport report(const std::string& id, std::vector<double> aro_at_minus5) {
  EvalReport r;
  r.model_id = id;
  for (std::size_t i = 0; i < aro_at_minus5.size(); ++i) {
    for (double snr : {5.0, -5.0}) {
      SetResult s;
      s.snr_db = snr;
      s.replication = static_cast<int>(i);
      s.ccc = {snr < 0 ? aro_at_minus5[i] : 0.5, 0.25, 0.125};
      r.sets.push_back(s);
    }
  }
  return r;
}

std::vector<double> around(double centre, double spread) {
  std::vector<double> v;
  for (int i = 0; i < 10; ++i) v.push_back(centre + spread * (i - 4.5) / 4.5);
  return v;
}

}  // namespace

TEST_CASE("student t cdf") {
  for (double df : {1.0, 2.5, 8.0, 30.0})
    for (double t : {-3.0, -1.0, -0.2, 0.0, 0.7, 2.0, 5.0})
      CHECK(std::abs(student_t_cdf(t, df) - t_cdf_oracle(t, df)) < 1e-9);
  // df = 1 is the Cauchy distribution.
  CHECK(student_t_cdf(1.0, 1.0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(regularized_incomplete_beta(2, 3, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2, 3, 1.0) == 1.0);
  // I_x(1, b) = 1 - (1-x)^b
  CHECK(regularized_incomplete_beta(1, 4, 0.3) == doctest::Approx(1 - std::pow(0.7, 4)).epsilon(1e-12));
}

TEST_CASE("welch one-tailed test") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{0, 1, 2, 3, 4};
  const auto w = welch_one_tailed(a, b);
  CHECK(w.t == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.df == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(w.p_one_tailed == doctest::Approx(1 - t_cdf_oracle(1.0, 8.0)).epsilon(1e-8));
  CHECK(w.p_one_tailed == doctest::Approx(0.1733).epsilon(1e-3));
  CHECK_FALSE(w.significant);

  const auto swapped = welch_one_tailed(b, a);
  CHECK(swapped.t == doctest::Approx(-1.0));
  CHECK(swapped.p_one_tailed == doctest::Approx(1 - w.p_one_tailed).epsilon(1e-12));

  // Larger gaps give smaller p-values.
  double last = 1.0;
  for (double gap : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    std::vector<double> c(a);
    for (auto& v : c) v += gap;
    const double p = welch_one_tailed(c, a).p_one_tailed;
    CHECK(p < last + 1e-15);
    last = p;
  }
  CHECK(welch_one_tailed(around(0.6, 0.02), around(0.5, 0.02)).significant);

  const std::vector<double> k{2, 2, 2};
  CHECK(welch_one_tailed(k, k).p_one_tailed == 0.5);
  CHECK(error_kind([&] { welch_one_tailed(std::vector<double>{1}, a); }) == ErrorKind::validation);
}

TEST_CASE("report accessors and round trip") {
  const EvalReport r = report("RT", around(0.4, 0.1));
  CHECK(r.snrs() == std::vector<double>{5.0, -5.0});
  CHECK(r.values(-5.0, 0).size() == 10);
  CHECK(r.mean(-5.0, 0) == doctest::Approx(0.4));
  CHECK(r.mean(5.0, 2) == doctest::Approx(0.125));
  CHECK_NOTHROW(r.validate());
  CHECK(error_kind([&] { r.validate(9); }) == ErrorKind::validation);

  const EvalReport back = eval_report_from_json(to_json(r));
  CHECK(back.model_id == "RT");
  CHECK(back.values(-5.0, 0) == r.values(-5.0, 0));

  EvalReport ragged = r;
  ragged.sets.pop_back();
  CHECK(error_kind([&] { ragged.validate(); }) == ErrorKind::validation);
}

TEST_CASE("table markers") {
  const std::vector<EvalReport> reports{report("Original", around(0.2, 0.02)), report("RT", around(0.4, 0.02)),
                                        report("DAT", around(0.45, 0.02)), report("TG-EAT", around(0.5, 0.02))};
  const std::string table = render_table(reports);
  CHECK(table.find("0.500∗†★") != std::string::npos);
  CHECK(table.find("0.450∗†") != std::string::npos);
  CHECK(table.find("0.400∗") != std::string::npos);
  CHECK(table.find("+5.0") != std::string::npos);

  const std::string csv = render_csv(reports);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "snr_db,model,provider,attribute,mean_ccc,p_vs_original,p_vs_rt,p_vs_dat,markers");
  int rows = 0;
  bool tg_row = false;
  while (std::getline(in, line)) {
    ++rows;
    if (line.rfind("-5,TG-EAT,,arousal,", 0) == 0) tg_row = line.ends_with("∗†★");
  }
  CHECK(rows == 2 * 4 * 3);
  CHECK(tg_row);

  // Equal values: nothing is significant.
  const std::vector<EvalReport> flat{report("Original", around(0.4, 0.02)), report("TG-EAT", around(0.4, 0.02))};
  CHECK(render_table(flat).find("∗") == std::string::npos);
  CHECK(error_kind([] { render_table({}); }) == ErrorKind::validation);
}

TEST_CASE("evaluate matches a direct computation") {
  const SynthCorpus corpus = synth_corpus(testing::tiny_synth(), default_catalog(), 8);
  const TrainingData data = make_training_data(corpus);
  std::vector<const NoiseClip*> noise;
  for (const auto& n : corpus.noise)
    if (n.split == NoiseSplit::test) noise.push_back(&n);
  const auto test = select_split(corpus.utterances, Split::test);
  const std::vector<double> snrs{0.0, -5.0};
  const auto sets = build_eval_sets(test, noise, 3, snrs, 3);
  const nn::SerModel<float> m(testing::small_model(), 5);

  EvalOptions opt;
  opt.model_id = "m";
  const EvalReport r = evaluate(m, data, sets, nullptr, opt);
  REQUIRE(r.sets.size() == 6);
  CHECK_NOTHROW(r.validate(3));

  for (std::size_t s = 0; s < sets.size(); ++s) {
    std::vector<double> pred[3], truth[3];
    for (const auto& spec : sets[s].specs) {
      const Utterance* u = nullptr;
      for (const auto* t : test)
        if (t->id == spec.utterance_id) u = t;
      const NoiseClip* c = nullptr;
      for (const auto* n : noise)
        if (n->id == spec.noise_id) c = n;
      const Samples w = z_normalize(apply_spec(*u, *c, spec).samples, data.stats);
      const std::vector<nn::ModelInput<float>> in{{w}};
      const Matrix<float> p = m.predict(in);
      const LabelTriple y = normalize_labels(u->labels_raw);
      for (int a = 0; a < 3; ++a) {
        pred[a].push_back(p(0, a));
        truth[a].push_back(static_cast<float>(y[a]));
      }
    }
    for (int a = 0; a < 3; ++a)
      CHECK(r.sets[s].ccc[static_cast<std::size_t>(a)] == doctest::Approx(ccc(pred[a], truth[a])).epsilon(1e-4));
  }

  opt.jobs = 3;
  opt.chunk = 5;
  const EvalReport r2 = evaluate(m, data, sets, nullptr, opt);
  for (std::size_t s = 0; s < sets.size(); ++s)
    for (int a = 0; a < 3; ++a)
      CHECK(r2.sets[s].ccc[static_cast<std::size_t>(a)] ==
            doctest::Approx(r.sets[s].ccc[static_cast<std::size_t>(a)]).epsilon(1e-5));

  SUBCASE("a constant predictor scores zero") {
    nn::SerModel<float> k = m;
    k.find("head.out.weight")->value.setZero();
    const EvalReport rk = evaluate(k, data, sets, nullptr, opt);
    for (const auto& s : rk.sets)
      for (double v : s.ccc) CHECK(v == 0.0);
  }

  SUBCASE("a fused model needs a provider") {
    nn::SerModel<float> f = m;
    Rng rng(1);
    f.enable_text_fusion(16, rng);
    CHECK(error_kind([&] { evaluate(f, data, sets, nullptr, opt); }) == ErrorKind::config);
    const SemanticProvider p(corpus.catalog, 16, 2);
    CHECK(evaluate(f, data, sets, &p, opt).provider_id == "semantic");
  }
}

TEST_CASE("mean square difference") {
  Rng rng(3);
  std::normal_distribution<double> g;
  RowVector<double> a(16), d(16);
  for (auto& v : a) v = g(rng);
  for (auto& v : d) v = g(rng);
  const double base = mean_square_difference(a, a + d);
  CHECK(base == doctest::Approx(d.squaredNorm() / 16));
  for (double k : {0.5, 2.0, 3.0}) CHECK(mean_square_difference(a, a + k * d) == doctest::Approx(k * k * base));
  CHECK(mean_square_difference(a, a + d) == mean_square_difference(a + d, a));
  CHECK(mean_square_difference(a, a) == 0.0);
}

TEST_CASE("embedding differences") {
  const nn::SerModel<float> m(testing::small_model(), 1);
  const nn::SerModel<float> other(testing::small_model(), 2);
  Rng rng(4);
  std::normal_distribution<float> g;
  Samples clean(4000), noisy(4000);
  for (auto& v : clean) v = g(rng);
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] = clean[i] + 0.5f * g(rng);

  for (auto layer : {TraceLayer::first, TraceLayer::last}) {
    CHECK(embedding_difference(m, m, clean, clean, nullptr, layer, DiffMode::same_model).value == 0.0);
    CHECK(embedding_difference(m, m, clean, clean, nullptr, layer, DiffMode::vs_original).value == 0.0);
    CHECK(embedding_difference(m, other, clean, clean, nullptr, layer, DiffMode::vs_original).value > 0.0);
    CHECK(embedding_difference(m, m, clean, noisy, nullptr, layer, DiffMode::same_model).value > 0.0);
  }

  // The text slot is excluded from pooling.
  nn::SerModel<float> fused = m;
  Rng init(5);
  fused.enable_text_fusion(4, init);
  const Vector<float> t = Vector<float>::Ones(4);
  const auto trace = fused.trace({clean, &t});
  const RowVector<double> pooled = pool_acoustic(trace, layer_index(trace, TraceLayer::last));
  const RowVector<double> manual =
      trace.layers.back().topRows(trace.acoustic_frames).cast<double>().colwise().mean();
  CHECK((pooled - manual).norm() < 1e-12);
}

TEST_CASE("pca on rank-2 data preserves distances") {
  Rng rng(6);
  std::normal_distribution<double> g;
  Matrix<double> basis(2, 10), coeff(7, 2);
  for (auto& v : basis.reshaped()) v = g(rng);
  for (auto& v : coeff.reshaped()) v = g(rng);
  Eigen::HouseholderQR<Matrix<double>> qr(basis.transpose());
  const Matrix<double> q = qr.householderQ() * Matrix<double>::Identity(10, 2);
  Matrix<double> data = coeff * q.transpose();
  data.rowwise() += RowVector<double>::Constant(10, 3.0);
  const Matrix<double> y = pca_2d(data);
  REQUIRE(y.rows() == 7);
  REQUIRE(y.cols() == 2);
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = 0; j < 7; ++j)
      CHECK(std::abs((y.row(i) - y.row(j)).norm() - (data.row(i) - data.row(j)).norm()) < 1e-9);
  CHECK(y.col(0).squaredNorm() >= y.col(1).squaredNorm());
  CHECK(std::abs(y.col(0).mean()) < 1e-9);

  const SemanticProvider p(default_catalog(), 32, 1);
  const Embeddings2D e = export_embeddings_2d(p, default_catalog());
  CHECK(e.environments.size() == 26);
  CHECK(e.raw.cols() == 32);
  testing::TempDir dir("emb");
  write_embeddings_csv(dir / "e.csv", e);
  write_embeddings_jsonl(dir / "e.jsonl", e);
  CHECK(std::filesystem::file_size(dir / "e.csv") > 0);
}

TEST_CASE("per-layer embedding differences agree with first and last") {
  const SynthCorpus corpus = synth_corpus(testing::tiny_synth(), default_catalog(), 9);
  const TrainingData data = make_training_data(corpus);
  auto cfg = testing::small_model();
  cfg.n_layers = 3;
  const nn::SerModel<float> m(cfg, 1);
  const nn::SerModel<float> original(cfg, 2);

  const auto plain = embedding_differences(m, original, data, 3, 0.0, nullptr, "m");
  CHECK(plain.per_layer.empty());
  CHECK_FALSE(to_json(plain).contains("per_layer"));

  const auto full = embedding_differences(m, original, data, 3, 0.0, nullptr, "m", std::string(kDefaultTemplate),
                                          NoiseSplit::test, true);
  CHECK(full.per_layer.size() == 6);
  for (auto mode : {DiffMode::same_model, DiffMode::vs_original}) {
    CHECK(full.per_layer.at({mode, 0}) == doctest::Approx(plain.at(mode, TraceLayer::first)).epsilon(1e-12));
    CHECK(full.per_layer.at({mode, 2}) == doctest::Approx(plain.at(mode, TraceLayer::last)).epsilon(1e-12));
    CHECK(full.per_layer.at({mode, 1}) > 0.0);
  }
  CHECK(to_json(full).at("per_layer").size() == 6);
}
