#include "tgeat/eval.hpp"
#include "tgeat/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

namespace tgeat {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 3> kAttributes{"arousal", "dominance", "valence"};

class PromptEmbeddings {
 public:
  PromptEmbeddings(const EncoderProvider* provider, std::string prompt_template)
      : provider_(provider), template_(std::move(prompt_template)) {}

  const Vector<float>* get(const std::string& environment) {
    if (!provider_) return nullptr;
    auto it = cache_.find(environment);
    if (it == cache_.end()) {
      it = cache_.emplace(environment, encode_prompt(*provider_, render_prompt(environment, template_)).vector).first;
    }
    return &it->second;
  }

 private:
  const EncoderProvider* provider_;
  std::string template_;
  std::map<std::string, Vector<float>> cache_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Report

std::vector<double> EvalReport::snrs() const {
  std::set<double, std::greater<>> s;
  for (const auto& r : sets) s.insert(r.snr_db);
  return {s.begin(), s.end()};
}

std::vector<double> EvalReport::values(double snr_db, int attribute) const {
  if (attribute < 0 || attribute > 2) fail(ErrorKind::validation, "attribute index must be 0, 1 or 2");
  std::vector<const SetResult*> rows;
  for (const auto& r : sets) {
    if (r.snr_db == snr_db) rows.push_back(&r);
  }
  std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) { return a->replication < b->replication; });
  std::vector<double> out;
  for (const auto* r : rows) out.push_back(r->ccc[static_cast<std::size_t>(attribute)]);
  return out;
}

double EvalReport::mean(double snr_db, int attribute) const {
  const auto v = values(snr_db, attribute);
  if (v.empty()) fail(ErrorKind::validation, "report has no sets at " + std::to_string(snr_db) + " dB");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void EvalReport::validate(int expected_replications) const {
  for (double snr : snrs()) {
    std::set<int> reps;
    for (const auto& r : sets) {
      if (r.snr_db == snr && !reps.insert(r.replication).second) {
        fail(ErrorKind::validation, "duplicate replication " + std::to_string(r.replication) + " in report");
      }
    }
    if (static_cast<int>(reps.size()) != expected_replications) {
      fail(ErrorKind::validation, "report has " + std::to_string(reps.size()) + " replications at " +
                                      std::to_string(snr) + " dB, expected " + std::to_string(expected_replications));
    }
  }
}

json to_json(const EvalReport& report) {
  json sets = json::array();
  for (const auto& s : report.sets) {
    sets.push_back({{"snr_db", s.snr_db},
                    {"replication", s.replication},
                    {"ccc", {{"arousal", s.ccc[0]}, {"dominance", s.ccc[1]}, {"valence", s.ccc[2]}}}});
  }
  json means = json::array();
  for (double snr : report.snrs()) {
    json row{{"snr_db", snr}};
    for (int a = 0; a < 3; ++a) row[kAttributes[static_cast<std::size_t>(a)]] = report.mean(snr, a);
    means.push_back(row);
  }
  return {{"model_id", report.model_id}, {"provider_id", report.provider_id}, {"sets", sets}, {"means", means}};
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    r.model_id = j.at("model_id").get<std::string>();
    r.provider_id = j.value("provider_id", std::string());
    for (const auto& s : j.at("sets")) {
      SetResult row;
      row.snr_db = s.at("snr_db").get<double>();
      row.replication = s.at("replication").get<int>();
      for (std::size_t a = 0; a < 3; ++a) row.ccc[a] = s.at("ccc").at(kAttributes[a]).get<double>();
      r.sets.push_back(row);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, std::string("malformed eval report: ") + e.what());
  }
  return r;
}

EvalReport evaluate(const nn::SerModel<float>& model, const TrainingData& data, std::span<const EvalSetSpec> sets,
                    const EncoderProvider* provider, const EvalOptions& options) {
  if (!data.corpus) fail(ErrorKind::validation, "evaluation data has no corpus");
  const bool fused = model.config().fusion == nn::Fusion::text;
  if (fused && !provider) fail(ErrorKind::config, "text-fused model '" + options.model_id + "' needs an encoder provider");
  if (options.chunk < 1) fail(ErrorKind::config, "inference chunk must be >= 1");

  std::unordered_map<std::string, const Utterance*> utts;
  for (const auto& u : data.corpus->utterances) utts.emplace(u.id, &u);
  std::unordered_map<std::string, const NoiseClip*> clips;
  for (const auto& c : data.corpus->noise) clips.emplace(c.id, &c);

  EvalReport report;
  report.model_id = options.model_id;
  report.provider_id = fused ? provider->id() : "";
  report.sets.resize(sets.size());

  parallel_for(sets.size(), options.jobs, [&](std::size_t s) {
    const EvalSetSpec& set = sets[s];
    if (set.specs.size() < 2) fail(ErrorKind::validation, "evaluation set needs at least 2 samples");
    PromptEmbeddings embeddings(fused ? provider : nullptr, options.prompt_template);
    const auto n = static_cast<Eigen::Index>(set.specs.size());
    Matrix<float> pred(n, 3);
    Matrix<float> truth(n, 3);
    const auto chunk = static_cast<std::size_t>(options.chunk);
    for (std::size_t start = 0; start < set.specs.size(); start += chunk) {
      const std::size_t end = std::min(set.specs.size(), start + chunk);
      std::vector<Samples> waves;
      std::vector<const Vector<float>*> texts;
      for (std::size_t i = start; i < end; ++i) {
        const MixSpec& spec = set.specs[i];
        auto u = utts.find(spec.utterance_id);
        if (u == utts.end()) fail(ErrorKind::validation, "eval set references unknown utterance '" + spec.utterance_id + "'");
        auto c = clips.find(spec.noise_id);
        if (c == clips.end()) fail(ErrorKind::validation, "eval set references unknown noise clip '" + spec.noise_id + "'");
        waves.push_back(z_normalize(apply_spec(*u->second, *c->second, spec).samples, data.stats));
        texts.push_back(embeddings.get(c->second->environment));
        const LabelTriple y = normalize_labels(u->second->labels_raw);
        for (int a = 0; a < 3; ++a) truth(static_cast<Eigen::Index>(i), a) = static_cast<float>(y[a]);
      }
      std::vector<nn::ModelInput<float>> batch;
      for (std::size_t k = 0; k < waves.size(); ++k) batch.push_back({waves[k], texts[k]});
      pred.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = model.predict(batch);
    }
    SetResult& out = report.sets[s];
    out.snr_db = set.snr_db;
    out.replication = set.replication;
    for (int a = 0; a < 3; ++a) out.ccc[static_cast<std::size_t>(a)] = ccc(pred.col(a), truth.col(a));
  });
  return report;
}

// ---------------------------------------------------------------------------
// Significance

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  fail(ErrorKind::numeric, "incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) fail(ErrorKind::validation, "incomplete beta needs a, b > 0");
  if (x < 0.0 || x > 1.0 || std::isnan(x)) fail(ErrorKind::validation, "incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) fail(ErrorKind::validation, "degrees of freedom must be > 0");
  if (std::isnan(t)) fail(ErrorKind::numeric, "t statistic is NaN");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

WelchResult welch_one_tailed(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) fail(ErrorKind::validation, "Welch test needs at least 2 values per group");
  auto moments = [](std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, ss / static_cast<double>(v.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = va / na;
  const double sb = vb / nb;
  WelchResult r;
  if (sa + sb == 0.0) {
    r.df = na + nb - 2.0;
    if (ma == mb) {
      r.t = 0.0;
      r.p_one_tailed = 0.5;
    } else {
      r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p_one_tailed = ma > mb ? 0.0 : 1.0;
    }
  } else {
    r.t = (ma - mb) / std::sqrt(sa + sb);
    r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    r.p_one_tailed = student_t_cdf(-r.t, r.df);
  }
  r.significant = r.p_one_tailed < 0.05;
  return r;
}

// ---------------------------------------------------------------------------
// Embedding analysis

std::string to_string(TraceLayer layer) { return layer == TraceLayer::first ? "first" : "last"; }
std::string to_string(DiffMode mode) { return mode == DiffMode::same_model ? "same_model" : "vs_original"; }

int layer_index(const nn::LayerTrace<float>& trace, TraceLayer layer) {
  if (trace.layers.empty()) fail(ErrorKind::validation, "trace has no transformer layers");
  return layer == TraceLayer::first ? 0 : static_cast<int>(trace.layers.size()) - 1;
}

RowVector<double> pool_acoustic(const nn::LayerTrace<float>& trace, int index) {
  if (index < 0 || index >= static_cast<int>(trace.layers.size())) {
    fail(ErrorKind::validation, "layer index " + std::to_string(index) + " out of range");
  }
  const auto& m = trace.layers[static_cast<std::size_t>(index)];
  return m.topRows(trace.acoustic_frames).cast<double>().colwise().mean();
}

double mean_square_difference(const RowVector<double>& a, const RowVector<double>& b) {
  if (a.size() != b.size() || a.size() == 0) fail(ErrorKind::validation, "representation size mismatch");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

namespace {

double trace_difference(const nn::LayerTrace<float>& x, const nn::LayerTrace<float>& y, TraceLayer layer) {
  if (x.acoustic_frames != y.acoustic_frames) {
    fail(ErrorKind::validation, "trace length mismatch (" + std::to_string(x.acoustic_frames) + " vs " +
                                    std::to_string(y.acoustic_frames) + " frames)");
  }
  if (x.layers.size() != y.layers.size()) fail(ErrorKind::validation, "trace depth mismatch");
  return mean_square_difference(pool_acoustic(x, layer_index(x, layer)), pool_acoustic(y, layer_index(y, layer)));
}

const Vector<float>* text_for(const nn::SerModel<float>& m, const Vector<float>* text) {
  return m.config().fusion == nn::Fusion::text ? text : nullptr;
}

}  // namespace

EmbDiffRecord embedding_difference(const nn::SerModel<float>& model, const nn::SerModel<float>& original,
                                   std::span<const float> clean, std::span<const float> noisy,
                                   const Vector<float>* text, TraceLayer layer, DiffMode mode) {
  const auto noisy_trace = model.trace({noisy, text_for(model, text)});
  const auto& reference = mode == DiffMode::same_model ? model : original;
  const auto clean_trace = reference.trace({clean, text_for(reference, text)});
  return {layer, mode, trace_difference(clean_trace, noisy_trace, layer)};
}

double EmbDiffSummary::at(DiffMode mode, TraceLayer layer) const {
  auto it = means.find({mode, layer});
  if (it == means.end()) fail(ErrorKind::validation, "no embedding difference for " + to_string(mode) + "/" + to_string(layer));
  return it->second;
}

EmbDiffSummary embedding_differences(const nn::SerModel<float>& model, const nn::SerModel<float>& original,
                                     const TrainingData& data, std::uint64_t seed, double snr_db,
                                     const EncoderProvider* provider, const std::string& model_id,
                                     const std::string& prompt_template, NoiseSplit noise, bool all_layers) {
  const SynthCorpus& corpus = *data.corpus;
  const auto dev = select_split(corpus.utterances, Split::dev);
  if (dev.empty()) fail(ErrorKind::validation, "corpus has no dev utterances");
  const bool fused = model.config().fusion == nn::Fusion::text;
  if (fused && !provider) fail(ErrorKind::config, "text-fused model needs an encoder provider");
  std::vector<const NoiseClip*> pool;
  for (const auto& c : corpus.noise) {
    if (c.split == noise) pool.push_back(&c);
  }
  if (pool.empty()) fail(ErrorKind::validation, "no noise clips for the embedding analysis");
  PromptEmbeddings embeddings(fused ? provider : nullptr, prompt_template);

  EmbDiffSummary summary;
  summary.model_id = model_id;
  for (const auto* u : dev) {
    Rng rng(tagged_seed(seed, "embdiff:" + u->id));
    const NoiseClip& clip = *pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    const Samples clean = z_normalize(u->samples, data.stats);
    const Samples noisy = z_normalize(mix(*u, clip, snr_db, rng()).samples, data.stats);
    const Vector<float>* text = embeddings.get(clip.environment);
    const auto noisy_trace = model.trace({noisy, text});
    const auto clean_trace = model.trace({clean, text});
    const auto original_trace = original.trace({clean, text_for(original, text)});
    for (TraceLayer layer : {TraceLayer::first, TraceLayer::last}) {
      summary.means[{DiffMode::same_model, layer}] += trace_difference(clean_trace, noisy_trace, layer);
      summary.means[{DiffMode::vs_original, layer}] += trace_difference(original_trace, noisy_trace, layer);
    }
    if (!all_layers) continue;
    if (original_trace.layers.size() != noisy_trace.layers.size()) fail(ErrorKind::validation, "trace depth mismatch");
    for (int l = 0; l < static_cast<int>(noisy_trace.layers.size()); ++l) {
      const auto noisy_pooled = pool_acoustic(noisy_trace, l);
      summary.per_layer[{DiffMode::same_model, l}] += mean_square_difference(pool_acoustic(clean_trace, l), noisy_pooled);
      summary.per_layer[{DiffMode::vs_original, l}] += mean_square_difference(pool_acoustic(original_trace, l), noisy_pooled);
    }
  }
  summary.count = dev.size();
  for (auto& [key, value] : summary.means) value /= static_cast<double>(dev.size());
  for (auto& [key, value] : summary.per_layer) value /= static_cast<double>(dev.size());
  return summary;
}

json to_json(const EmbDiffSummary& s) {
  json rows = json::array();
  for (const auto& [key, value] : s.means) {
    rows.push_back({{"mode", to_string(key.first)}, {"layer", to_string(key.second)}, {"value", value}});
  }
  json out{{"model_id", s.model_id}, {"count", s.count}, {"differences", rows}};
  if (!s.per_layer.empty()) {
    json layers = json::array();
    for (const auto& [key, value] : s.per_layer) {
      layers.push_back({{"mode", to_string(key.first)}, {"layer", key.second}, {"value", value}});
    }
    out["per_layer"] = layers;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text-embedding export

Matrix<double> pca_2d(const Matrix<double>& data) {
  if (data.rows() < 2) fail(ErrorKind::validation, "PCA needs at least 2 rows");
  const Matrix<double> centered = data.rowwise() - data.colwise().mean();
  // Eigen-decomposition of the Gram matrix: cheaper than the covariance when dim > rows.
  const Matrix<double> gram = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix<double>> solver(gram);
  if (solver.info() != Eigen::Success) fail(ErrorKind::numeric, "PCA eigen-decomposition failed");
  const Eigen::Index n = data.rows();
  Matrix<double> coords = Matrix<double>::Zero(n, 2);
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, n); ++k) {
    const Eigen::Index col = n - 1 - k;
    const double lambda = std::max(0.0, solver.eigenvalues()(col));
    if (lambda <= 1e-12 * std::max(1.0, solver.eigenvalues()(n - 1))) continue;
    const Vector<double> u = solver.eigenvectors().col(col);
    const Vector<double> loading = centered.transpose() * u / std::sqrt(lambda);
    Eigen::Index arg = 0;
    loading.cwiseAbs().maxCoeff(&arg);
    const double sign = loading(arg) < 0.0 ? -1.0 : 1.0;
    coords.col(k) = sign * std::sqrt(lambda) * u;
  }
  return coords;
}

Embeddings2D export_embeddings_2d(const EncoderProvider& provider, const EnvironmentCatalog& catalog,
                                  const std::string& prompt_template) {
  Embeddings2D e;
  e.environments = catalog.all_environments();
  e.raw.resize(static_cast<Eigen::Index>(e.environments.size()), provider.dim());
  for (std::size_t i = 0; i < e.environments.size(); ++i) {
    const auto v = encode_prompt(provider, render_prompt(e.environments[i], prompt_template)).vector;
    e.raw.row(static_cast<Eigen::Index>(i)) = v.cast<double>().transpose();
  }
  e.coords = pca_2d(e.raw);
  return e;
}

void write_embeddings_csv(const std::filesystem::path& path, const Embeddings2D& e) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot write " + path.string());
  os << "environment,x,y\n" << std::setprecision(10);
  for (std::size_t i = 0; i < e.environments.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    os << e.environments[i] << ',' << e.coords(r, 0) << ',' << e.coords(r, 1) << '\n';
  }
}

void write_embeddings_jsonl(const std::filesystem::path& path, const Embeddings2D& e) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot write " + path.string());
  for (std::size_t i = 0; i < e.environments.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::vector<double> v(static_cast<std::size_t>(e.raw.cols()));
    for (Eigen::Index c = 0; c < e.raw.cols(); ++c) v[static_cast<std::size_t>(c)] = e.raw(r, c);
    os << json{{"environment", e.environments[i]}, {"vector", v}}.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Report tables

namespace {

struct Baselines {
  const EvalReport* original = nullptr;
  const EvalReport* rt = nullptr;
  const EvalReport* dat = nullptr;
};

Baselines find_baselines(std::span<const EvalReport> reports) {
  Baselines b;
  for (const auto& r : reports) {
    if (r.model_id == "Original") b.original = &r;
    if (r.model_id == "RT") b.rt = &r;
    if (r.model_id == "DAT") b.dat = &r;
  }
  return b;
}

std::string markers(const EvalReport& model, const Baselines& base, double snr, int attribute) {
  std::string m;
  auto check = [&](const EvalReport* ref, const char* symbol) {
    if (!ref || ref == &model) return;
    const auto a = model.values(snr, attribute);
    const auto b = ref->values(snr, attribute);
    if (a.size() >= 2 && b.size() >= 2 && welch_one_tailed(a, b).significant) m += symbol;
  };
  check(base.original, "∗");
  check(base.rt, "†");
  check(base.dat, "★");
  return m;
}

std::vector<double> union_snrs(std::span<const EvalReport> reports) {
  std::set<double, std::greater<>> s;
  for (const auto& r : reports) {
    for (double x : r.snrs()) s.insert(x);
  }
  return {s.begin(), s.end()};
}

// Display width for strings containing the multi-byte marker symbols.
std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++w;
  }
  return w;
}

std::string pad(const std::string& s, std::size_t width) {
  const std::size_t w = display_width(s);
  return w >= width ? s : std::string(width - w, ' ') + s;
}

}  // namespace

std::string render_table(std::span<const EvalReport> reports) {
  if (reports.empty()) fail(ErrorKind::validation, "no reports to render");
  const Baselines base = find_baselines(reports);
  const auto snrs = union_snrs(reports);
  constexpr std::size_t kCell = 9;
  std::ostringstream os;
  os << pad("SNR", 6);
  for (const auto& r : reports) {
    os << " |" << pad(r.model_id, 3 * kCell);
  }
  os << '\n' << pad("dB", 6);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    os << " |";
    for (const char* a : {"Aro", "Dom", "Val"}) os << ' ' << pad(a, kCell - 1);
  }
  os << '\n';
  for (double snr : snrs) {
    std::ostringstream label;
    label << std::showpos << std::fixed << std::setprecision(1) << snr;
    os << pad(label.str(), 6);
    for (const auto& r : reports) {
      os << " |";
      for (int a = 0; a < 3; ++a) {
        std::ostringstream cell;
        if (r.values(snr, a).empty()) {
          cell << "-";
        } else {
          cell << std::fixed << std::setprecision(3) << r.mean(snr, a) << markers(r, base, snr, a);
        }
        os << ' ' << pad(cell.str(), kCell - 1);
      }
    }
    os << '\n';
  }
  return os.str();
}

std::string render_csv(std::span<const EvalReport> reports) {
  const Baselines base = find_baselines(reports);
  std::ostringstream os;
  os << "snr_db,model,provider,attribute,mean_ccc,p_vs_original,p_vs_rt,p_vs_dat,markers\n" << std::setprecision(10);
  auto p_value = [](const EvalReport& m, const EvalReport* ref, double snr, int a) -> std::string {
    if (!ref || ref == &m) return "";
    const auto x = m.values(snr, a);
    const auto y = ref->values(snr, a);
    if (x.size() < 2 || y.size() < 2) return "";
    std::ostringstream s;
    s << std::setprecision(10) << welch_one_tailed(x, y).p_one_tailed;
    return s.str();
  };
  for (double snr : union_snrs(reports)) {
    for (const auto& r : reports) {
      for (int a = 0; a < 3; ++a) {
        if (r.values(snr, a).empty()) continue;
        os << snr << ',' << r.model_id << ',' << r.provider_id << ',' << kAttributes[static_cast<std::size_t>(a)] << ','
           << r.mean(snr, a) << ',' << p_value(r, base.original, snr, a) << ',' << p_value(r, base.rt, snr, a) << ','
           << p_value(r, base.dat, snr, a) << ',' << markers(r, base, snr, a) << '\n';
      }
    }
  }
  return os.str();
}

}  // namespace tgeat
