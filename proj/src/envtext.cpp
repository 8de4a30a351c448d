#include "tgeat/envtext.hpp"

#include "tgeat/error.hpp"

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <fstream>
#include <numbers>
#include <set>

namespace tgeat {

using nlohmann::json;

EnvironmentPrompt render_prompt(const std::string& environment, std::string_view template_text) {
  const auto first = template_text.find(kPlaceholder);
  if (first == std::string_view::npos) {
    fail(ErrorKind::config, "prompt template '" + std::string(template_text) + "' has no {environment} placeholder");
  }
  if (template_text.find(kPlaceholder, first + 1) != std::string_view::npos) {
    fail(ErrorKind::config,
         "prompt template '" + std::string(template_text) + "' has more than one {environment} placeholder");
  }
  std::string rendered(template_text.substr(0, first));
  rendered += environment;
  rendered += template_text.substr(first + kPlaceholder.size());
  return {environment, std::string(template_text), rendered};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (!std::ispunct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

double cosine(const Vector<float>& a, const Vector<float>& b) {
  const double na = a.cast<double>().norm();
  const double nb = b.cast<double>().norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.cast<double>().dot(b.cast<double>()) / (na * nb);
}

// ---------------------------------------------------------------------------
// Provider base

void EncoderProvider::set_trainable(bool flag) {
  if (flag && parameters().empty()) fail(ErrorKind::unsupported, "provider '" + id() + "' has no trainable parameters");
  trainable_ = flag;
}

std::vector<const nn::Param<float>*> EncoderProvider::parameters() const {
  auto params = const_cast<EncoderProvider*>(this)->parameters();
  return {params.begin(), params.end()};
}

void EncoderProvider::encode_backward(const EnvironmentPrompt&, const Vector<float>&) {}

TextEmbedding encode_prompt(const EncoderProvider& provider, const EnvironmentPrompt& prompt) {
  return provider.encode(prompt);
}

EncoderProvider& set_trainable(EncoderProvider& provider, bool flag) {
  provider.set_trainable(flag);
  return provider;
}

namespace {

Vector<float> random_unit(int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector<double> v(dim);
  for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
  return (v / v.norm()).cast<float>();
}

Vector<float> normalized(const Vector<float>& v) { return (v.cast<double>() / v.cast<double>().norm()).cast<float>(); }

std::vector<std::string> template_words(std::string_view template_text) {
  std::string t(template_text);
  const auto at = t.find(kPlaceholder);
  if (at != std::string::npos) t.erase(at, kPlaceholder.size());
  return tokenize(t);
}

void check_dim(int dim) {
  if (dim < 8) fail(ErrorKind::config, "provider dimension must be >= 8, got " + std::to_string(dim));
}

std::vector<std::string> nonempty_tokens(const EnvironmentPrompt& prompt) {
  auto tokens = tokenize(prompt.rendered);
  if (tokens.empty()) fail(ErrorKind::validation, "cannot encode an empty prompt");
  return tokens;
}

}  // namespace

TokenTableProvider::TokenTableProvider(std::vector<std::string> vocab, Matrix<float> table, std::uint64_t seed)
    : vocab_(std::move(vocab)), table_("provider.tokens", nn::Group::provider, std::move(table)), seed_(seed) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);
}

int TokenTableProvider::row_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

Vector<float> TokenTableProvider::fallback_vector(const std::string& token) const {
  return random_unit(dim(), tagged_seed(seed_, "oov:" + token));
}

Vector<float> TokenTableProvider::token_vector(const std::string& token) const {
  const int row = row_of(token);
  return row >= 0 ? Vector<float>(table_.value.row(row).transpose()) : fallback_vector(token);
}

// ---------------------------------------------------------------------------
// Semantic

SemanticProvider::SemanticProvider(const EnvironmentCatalog& catalog, int dim, std::uint64_t seed, bool grouped)
    : TokenTableProvider({}, Matrix<float>(), seed), grouped_(grouped) {
  check_dim(dim);
  catalog.validate();

  // Orthonormal group centroids.
  Matrix<double> centroids(dim, 3);
  {
    Rng rng(tagged_seed(seed, "centroids"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < centroids.size(); ++i) centroids.data()[i] = gauss(rng);
    Eigen::HouseholderQR<Matrix<double>> qr(centroids);
    centroids = qr.householderQ() * Matrix<double>::Identity(dim, 3);
  }

  std::vector<std::pair<std::string, EnvironmentGroup>> content;
  std::set<std::string> seen;
  for (const auto& env : catalog.all_environments()) {
    for (const auto& word : tokenize(env)) {
      if (seen.insert(word).second) content.emplace_back(word, catalog.group(env));
    }
  }
  std::vector<std::string> filler;
  for (const auto& word : template_words(kDefaultTemplate)) {
    if (seen.insert(word).second) filler.push_back(word);
  }

  constexpr double kSpread = 0.5;
  Matrix<float> table(static_cast<Eigen::Index>(content.size() + filler.size()), dim);
  Eigen::Index row = 0;
  for (const auto& [word, group] : content) {
    const Vector<float> offset = random_unit(dim, tagged_seed(seed, "word:" + word));
    Vector<float> v = offset;
    if (grouped_) {
      v = normalized((centroids.col(static_cast<int>(group)) + kSpread * offset.cast<double>()).cast<float>());
    }
    table.row(row++) = v.transpose();
    vocab_.push_back(word);
    is_content_.push_back(true);
  }
  for (const auto& word : filler) {
    table.row(row++) = random_unit(dim, tagged_seed(seed, "word:" + word)).transpose();
    vocab_.push_back(word);
    is_content_.push_back(false);
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);
  table_ = nn::Param<float>("provider.tokens", nn::Group::provider, std::move(table));
}

std::vector<Vector<float>> SemanticProvider::contextual_tokens(const EnvironmentPrompt& prompt) const {
  const auto tokens = nonempty_tokens(prompt);
  std::vector<Vector<double>> statics;
  Vector<double> context = Vector<double>::Zero(dim());
  int content_count = 0;
  for (const auto& tok : tokens) {
    statics.push_back(token_vector(tok).cast<double>());
    const int row = row_of(tok);
    if (row >= 0 && is_content_[row]) {
      context += statics.back();
      ++content_count;
    }
  }
  if (content_count > 0) context /= content_count;
  std::vector<Vector<float>> out;
  for (const auto& s : statics) {
    const Vector<double> u = s + kContextWeight * context;
    out.push_back((u / u.norm()).cast<float>());
  }
  return out;
}

TextEmbedding SemanticProvider::encode(const EnvironmentPrompt& prompt) const {
  const auto tokens = contextual_tokens(prompt);
  Vector<double> pooled = Vector<double>::Zero(dim());
  for (const auto& h : tokens) pooled += h.cast<double>();
  pooled /= static_cast<double>(tokens.size());
  return {pooled.cast<float>(), dim(), id()};
}

void SemanticProvider::encode_backward(const EnvironmentPrompt& prompt, const Vector<float>& grad_embedding) {
  if (!trainable_) return;
  const auto tokens = nonempty_tokens(prompt);
  const auto n = static_cast<double>(tokens.size());
  std::vector<int> rows;
  Vector<double> context = Vector<double>::Zero(dim());
  int content_count = 0;
  for (const auto& tok : tokens) {
    const int row = row_of(tok);
    rows.push_back(row);
    if (row >= 0 && is_content_[row]) {
      context += table_.value.row(row).transpose().cast<double>();
      ++content_count;
    }
  }
  if (content_count > 0) context /= content_count;

  const Vector<double> dh = grad_embedding.cast<double>() / n;
  Vector<double> dcontext = Vector<double>::Zero(dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Vector<double> s = token_vector(tokens[i]).cast<double>();
    const Vector<double> u = s + kContextWeight * context;
    const double r = u.norm();
    const Vector<double> h = u / r;
    const Vector<double> du = (dh - h * h.dot(dh)) / r;
    if (rows[i] >= 0) table_.grad.row(rows[i]) += du.transpose().cast<float>();
    dcontext += kContextWeight * du;
  }
  if (content_count > 0) {
    for (int row : rows) {
      if (row >= 0 && is_content_[row]) table_.grad.row(row) += (dcontext / content_count).transpose().cast<float>();
    }
  }
}

// ---------------------------------------------------------------------------
// Audio-grounded

Vector<double> average_log_spectrum(std::span<const NoiseClip* const> clips, int bands) {
  constexpr int kFrame = 512;
  constexpr int kHop = 256;
  Eigen::FFT<double> fft;
  std::vector<double> window(kFrame);
  for (int i = 0; i < kFrame; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kFrame);

  Vector<double> power = Vector<double>::Zero(kFrame / 2 + 1);
  std::size_t frames = 0;
  std::vector<double> buf(kFrame);
  std::vector<std::complex<double>> spec;
  for (const NoiseClip* clip : clips) {
    const auto& x = clip->samples;
    for (std::size_t start = 0; start + kFrame <= x.size(); start += kHop) {
      for (int i = 0; i < kFrame; ++i) buf[i] = x[start + i] * window[i];
      fft.fwd(spec, buf);
      for (int k = 0; k <= kFrame / 2; ++k) power(k) += std::norm(spec[k]);
      ++frames;
    }
  }
  if (frames == 0) fail(ErrorKind::validation, "noise clips are shorter than one analysis frame");
  power /= static_cast<double>(frames);

  const double lo = std::log(50.0), hi = std::log(kSampleRate / 2.0);
  const double bin_hz = static_cast<double>(kSampleRate) / kFrame;
  Vector<double> out(bands);
  for (int b = 0; b < bands; ++b) {
    const double f0 = std::exp(lo + (hi - lo) * b / bands);
    const double f1 = std::exp(lo + (hi - lo) * (b + 1) / bands);
    int k0 = static_cast<int>(std::floor(f0 / bin_hz));
    int k1 = std::max(k0 + 1, static_cast<int>(std::ceil(f1 / bin_hz)));
    k1 = std::min(k1, kFrame / 2 + 1);
    k0 = std::min(k0, k1 - 1);
    out(b) = std::log10(power.segment(k0, k1 - k0).mean() + 1e-12);
  }
  out.array() -= out.mean();
  return out;
}

AudioGroundedProvider::AudioGroundedProvider(std::span<const NoiseClip> clips,
                                             const std::vector<std::string>& environments, int dim,
                                             std::uint64_t seed)
    : TokenTableProvider({}, Matrix<float>(), seed) {
  check_dim(dim);
  constexpr int kBands = 32;
  Matrix<double> projection(dim, kBands);
  {
    Rng rng(tagged_seed(seed, "projection"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < projection.size(); ++i) projection.data()[i] = gauss(rng);
  }

  std::map<std::string, Vector<double>> word_sum;
  std::map<std::string, int> word_count;
  std::vector<std::string> order;
  for (const auto& env : environments) {
    std::vector<const NoiseClip*> mine;
    for (const auto& c : clips) {
      if (c.environment == env) mine.push_back(&c);
    }
    if (mine.empty()) fail(ErrorKind::validation, "no noise audio for environment '" + env + "'");
    const Vector<double> v = projection * average_log_spectrum(mine, kBands);
    for (const auto& word : tokenize(env)) {
      if (!word_sum.contains(word)) {
        word_sum[word] = Vector<double>::Zero(dim);
        order.push_back(word);
      }
      word_sum[word] += v / v.norm();
      word_count[word] += 1;
    }
  }
  std::vector<std::string> filler;
  for (const auto& word : template_words(kDefaultTemplate)) {
    if (!word_sum.contains(word) && std::find(filler.begin(), filler.end(), word) == filler.end()) filler.push_back(word);
  }

  Matrix<float> table(static_cast<Eigen::Index>(order.size() + filler.size()), dim);
  Eigen::Index row = 0;
  for (const auto& word : order) {
    const Vector<double> v = word_sum[word] / word_count[word];
    table.row(row++) = (v / v.norm()).transpose().cast<float>();
    vocab_.push_back(word);
  }
  for (const auto& word : filler) {
    table.row(row++) = random_unit(dim, tagged_seed(seed, "word:" + word)).transpose();
    vocab_.push_back(word);
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);
  table_ = nn::Param<float>("provider.tokens", nn::Group::provider, std::move(table));
}

TextEmbedding AudioGroundedProvider::encode(const EnvironmentPrompt& prompt) const {
  const auto tokens = nonempty_tokens(prompt);
  Vector<double> pooled = Vector<double>::Zero(dim());
  for (const auto& tok : tokens) pooled += token_vector(tok).cast<double>();
  pooled /= static_cast<double>(tokens.size());
  return {pooled.cast<float>(), dim(), id()};
}

void AudioGroundedProvider::encode_backward(const EnvironmentPrompt& prompt, const Vector<float>& grad_embedding) {
  if (!trainable_) return;
  const auto tokens = nonempty_tokens(prompt);
  const float inv = 1.0f / static_cast<float>(tokens.size());
  for (const auto& tok : tokens) {
    const int row = row_of(tok);
    if (row >= 0) table_.grad.row(row) += inv * grad_embedding.transpose();
  }
}

// ---------------------------------------------------------------------------
// One-hot

OneHotProvider::OneHotProvider(const EnvironmentCatalog& catalog) : environments_(catalog.adapt_environments) {}

TextEmbedding OneHotProvider::encode(const EnvironmentPrompt& prompt) const {
  auto it = std::find(environments_.begin(), environments_.end(), prompt.environment);
  if (it == environments_.end()) {
    fail(ErrorKind::unseen_environment, "one-hot encoding cannot represent unseen environment '" + prompt.environment +
                                            "'; it only covers the " + std::to_string(environments_.size()) +
                                            " adaptation environments");
  }
  Vector<float> v = Vector<float>::Zero(dim());
  v(it - environments_.begin()) = 1.0f;
  return {v, dim(), id()};
}

void OneHotProvider::set_trainable(bool flag) {
  if (flag) fail(ErrorKind::unsupported, "one-hot provider has no trainable parameters");
  trainable_ = false;
}

// ---------------------------------------------------------------------------
// Table

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open embedding table " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto values = j.at("vector").get<std::vector<float>>();
      if (table.dim == 0) table.dim = static_cast<int>(values.size());
      if (static_cast<int>(values.size()) != table.dim || table.dim == 0) {
        fail(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": vector dimension " +
                                        std::to_string(values.size()) + " != " + std::to_string(table.dim));
      }
      table.vectors[j.at("key").get<std::string>()] = Eigen::Map<const Vector<float>>(values.data(), table.dim);
    } catch (const json::exception& e) {
      fail(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (table.vectors.empty()) fail(ErrorKind::validation, "embedding table " + path.string() + " is empty");
  return table;
}

void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot write embedding table " + path.string());
  // Shortest round-trip float text keeps the file small and loads bit-exactly.
  char buf[32];
  for (const auto& [key, v] : table.vectors) {
    os << "{\"key\":" << json(key).dump() << ",\"vector\":[";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const auto r = std::to_chars(buf, buf + sizeof buf, v(i));
      if (i) os << ',';
      os.write(buf, r.ptr - buf);
    }
    os << "]}\n";
  }
}

EmbeddingTable make_word_vector_fixture(const EnvironmentCatalog& catalog, int dim, std::uint64_t seed) {
  EmbeddingTable table;
  table.dim = dim;
  std::vector<Vector<float>> centroids;
  for (int g = 0; g < 3; ++g) centroids.push_back(random_unit(dim, tagged_seed(seed, "group", g)));
  for (const auto& env : catalog.all_environments()) {
    for (const auto& word : tokenize(env)) {
      const Vector<float> noise = random_unit(dim, tagged_seed(seed, "word:" + word));
      Vector<float> v = normalized(0.5f * centroids[static_cast<int>(catalog.group(env))] + noise);
      // Six decimals, as in distributed text-format vector files.
      v = (v.array() * 1e6f).round() / 1e6f;
      table.vectors[word] = v;
    }
  }
  for (const auto& word : template_words(kDefaultTemplate)) {
    Vector<float> v = random_unit(dim, tagged_seed(seed, "word:" + word));
    table.vectors[word] = (v.array() * 1e6f).round() / 1e6f;
  }
  return table;
}

TableProvider::TableProvider(const EmbeddingTable& table) : TokenTableProvider({}, Matrix<float>(), 0) {
  if (table.vectors.empty() || table.dim <= 0) fail(ErrorKind::validation, "embedding table is empty");
  Matrix<float> m(static_cast<Eigen::Index>(table.vectors.size()), table.dim);
  Eigen::Index row = 0;
  for (const auto& [key, v] : table.vectors) {
    if (v.size() != table.dim) fail(ErrorKind::validation, "embedding table entry '" + key + "' has the wrong dimension");
    m.row(row++) = v.transpose();
    vocab_.push_back(key);
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);
  table_ = nn::Param<float>("provider.tokens", nn::Group::provider, std::move(m));
}

std::vector<int> TableProvider::rows_for(const std::string& environment) const {
  if (const int row = row_of(environment); row >= 0) return {row};
  std::vector<int> rows;
  for (const auto& word : tokenize(environment)) {
    const int row = row_of(word);
    if (row < 0) fail(ErrorKind::validation, "embedding table has no entry for '" + word + "' (from '" + environment + "')");
    rows.push_back(row);
  }
  if (rows.empty()) fail(ErrorKind::validation, "cannot look up an empty environment name");
  return rows;
}

TextEmbedding TableProvider::encode(const EnvironmentPrompt& prompt) const {
  const auto rows = rows_for(prompt.environment);
  Vector<double> v = Vector<double>::Zero(dim());
  for (int row : rows) v += table_.value.row(row).transpose().cast<double>();
  v /= static_cast<double>(rows.size());
  return {v.cast<float>(), dim(), id()};
}

void TableProvider::encode_backward(const EnvironmentPrompt& prompt, const Vector<float>& grad_embedding) {
  if (!trainable_) return;
  const auto rows = rows_for(prompt.environment);
  const float inv = 1.0f / static_cast<float>(rows.size());
  for (int row : rows) table_.grad.row(row) += inv * grad_embedding.transpose();
}

// ---------------------------------------------------------------------------
// Precomputed

PrecomputedProvider::PrecomputedProvider(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open precomputed embeddings " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto values = j.at("vector").get<std::vector<float>>();
      const int dim = j.at("dim").get<int>();
      if (dim != static_cast<int>(values.size())) {
        fail(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": dim field disagrees with vector");
      }
      if (dim_ == 0) {
        dim_ = dim;
        id_ = j.at("provider_id").get<std::string>();
      } else if (dim != dim_) {
        fail(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": inconsistent dimension");
      }
      by_rendered_[j.at("rendered").get<std::string>()] = Eigen::Map<const Vector<float>>(values.data(), dim);
    } catch (const json::exception& e) {
      fail(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (by_rendered_.empty()) fail(ErrorKind::validation, "precomputed embedding file " + path.string() + " is empty");
}

TextEmbedding PrecomputedProvider::encode(const EnvironmentPrompt& prompt) const {
  auto it = by_rendered_.find(prompt.rendered);
  if (it == by_rendered_.end()) {
    fail(ErrorKind::validation, "no precomputed embedding for prompt \"" + prompt.rendered + "\"");
  }
  return {it->second, dim_, id_};
}

void PrecomputedProvider::set_trainable(bool flag) {
  if (flag) fail(ErrorKind::unsupported, "precomputed embeddings cannot be fine-tuned");
  trainable_ = false;
}

void write_precomputed(const std::filesystem::path& path, const EncoderProvider& provider,
                       const std::vector<std::string>& environments, std::string_view template_text) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot write precomputed embeddings " + path.string());
  for (const auto& env : environments) {
    const auto prompt = render_prompt(env, template_text);
    const auto e = provider.encode(prompt);
    os << json{{"environment", env},
               {"rendered", prompt.rendered},
               {"vector", std::vector<float>(e.vector.data(), e.vector.data() + e.vector.size())},
               {"provider_id", provider.id()},
               {"dim", e.dim}}
              .dump()
       << '\n';
  }
}

}  // namespace tgeat
