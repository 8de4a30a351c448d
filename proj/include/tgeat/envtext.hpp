#pragma once

#include "tgeat/corpus.hpp"
#include "tgeat/nn/param.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tgeat {

inline constexpr std::string_view kPlaceholder = "{environment}";
inline constexpr std::string_view kDefaultTemplate = "This speech is recorded in {environment}.";

struct EnvironmentPrompt {
  std::string environment;
  std::string template_text;
  std::string rendered;
};

EnvironmentPrompt render_prompt(const std::string& environment, std::string_view template_text = kDefaultTemplate);

// Lowercases, splits on whitespace and strips punctuation.
std::vector<std::string> tokenize(std::string_view text);

struct TextEmbedding {
  Vector<float> vector;
  int dim = 0;
  std::string provider;
};

// Maps an environment prompt to a fixed-dimension vector. Providers with
// parameters can be made trainable; the gradient of a loss with respect to an
// encoded vector is pushed back through encode_backward.
class EncoderProvider {
 public:
  virtual ~EncoderProvider() = default;

  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual TextEmbedding encode(const EnvironmentPrompt& prompt) const = 0;

  bool trainable() const { return trainable_; }
  virtual void set_trainable(bool flag);

  // Empty for providers without parameters.
  virtual std::vector<nn::Param<float>*> parameters() { return {}; }
  std::vector<const nn::Param<float>*> parameters() const;

  // Accumulates d(loss)/d(parameters) given d(loss)/d(encode(prompt)).
  virtual void encode_backward(const EnvironmentPrompt& prompt, const Vector<float>& grad_embedding);

  virtual std::unique_ptr<EncoderProvider> clone() const = 0;

 protected:
  bool trainable_ = false;
};

TextEmbedding encode_prompt(const EncoderProvider& provider, const EnvironmentPrompt& prompt);

// Token-table providers: every token owns one row of a (vocab x dim) table.
class TokenTableProvider : public EncoderProvider {
 public:
  int dim() const override { return static_cast<int>(table_.value.cols()); }
  std::vector<nn::Param<float>*> parameters() override { return {&table_}; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  Vector<float> token_vector(const std::string& token) const;

 protected:
  TokenTableProvider(std::vector<std::string> vocab, Matrix<float> table, std::uint64_t seed);

  // Row index or -1 for out-of-vocabulary tokens.
  int row_of(const std::string& token) const;
  // Fixed vector for tokens outside the vocabulary, derived from the token text.
  Vector<float> fallback_vector(const std::string& token) const;

  std::vector<std::string> vocab_;
  std::map<std::string, int> index_;
  nn::Param<float> table_;
  std::uint64_t seed_ = 0;
};

// LLM-like provider. Environment words are placed around a per-group centroid
// so semantically related environments cluster. Token vectors are
// contextualized: every token is mixed with the mean of the prompt's
// environment words before pooling.
class SemanticProvider final : public TokenTableProvider {
 public:
  static constexpr double kContextWeight = 3.0;

  SemanticProvider(const EnvironmentCatalog& catalog, int dim, std::uint64_t seed, bool grouped = true);

  std::string id() const override { return grouped_ ? "semantic" : "semantic-ungrouped"; }
  TextEmbedding encode(const EnvironmentPrompt& prompt) const override;
  void encode_backward(const EnvironmentPrompt& prompt, const Vector<float>& grad_embedding) override;
  std::unique_ptr<EncoderProvider> clone() const override { return std::make_unique<SemanticProvider>(*this); }

  // Contextual vectors of every token of the prompt, in order.
  std::vector<Vector<float>> contextual_tokens(const EnvironmentPrompt& prompt) const;

 private:
  std::vector<bool> is_content_;
  bool grouped_ = true;
};

// CLAP-like provider: each environment word is keyed to a random projection of
// that environment's average noise log-spectrum.
class AudioGroundedProvider final : public TokenTableProvider {
 public:
  AudioGroundedProvider(std::span<const NoiseClip> clips, const std::vector<std::string>& environments, int dim,
                        std::uint64_t seed);

  std::string id() const override { return "audio"; }
  TextEmbedding encode(const EnvironmentPrompt& prompt) const override;
  void encode_backward(const EnvironmentPrompt& prompt, const Vector<float>& grad_embedding) override;
  std::unique_ptr<EncoderProvider> clone() const override { return std::make_unique<AudioGroundedProvider>(*this); }
};

// Average log-power spectrum in `bands` log-spaced bands, mean-removed.
Vector<double> average_log_spectrum(std::span<const NoiseClip* const> clips, int bands = 32);

class OneHotProvider final : public EncoderProvider {
 public:
  explicit OneHotProvider(const EnvironmentCatalog& catalog);

  std::string id() const override { return "onehot"; }
  int dim() const override { return static_cast<int>(environments_.size()); }
  TextEmbedding encode(const EnvironmentPrompt& prompt) const override;
  void set_trainable(bool flag) override;
  std::unique_ptr<EncoderProvider> clone() const override { return std::make_unique<OneHotProvider>(*this); }

 private:
  std::vector<std::string> environments_;
};

struct EmbeddingTable {
  std::map<std::string, Vector<float>> vectors;
  int dim = 0;
};

EmbeddingTable load_embedding_table(const std::filesystem::path& path);
void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table);

// Word-vector table with weak group structure, standing in for a GloVe subset.
EmbeddingTable make_word_vector_fixture(const EnvironmentCatalog& catalog, int dim, std::uint64_t seed);

// GloVe-style provider: looks up the environment name (not the prompt). A
// name missing from the table is the mean of its word vectors.
class TableProvider final : public TokenTableProvider {
 public:
  explicit TableProvider(const EmbeddingTable& table);

  std::string id() const override { return "table"; }
  TextEmbedding encode(const EnvironmentPrompt& prompt) const override;
  void encode_backward(const EnvironmentPrompt& prompt, const Vector<float>& grad_embedding) override;
  std::unique_ptr<EncoderProvider> clone() const override { return std::make_unique<TableProvider>(*this); }

 private:
  std::vector<int> rows_for(const std::string& environment) const;
};

// Vectors produced by an external encoder, keyed by rendered prompt.
class PrecomputedProvider final : public EncoderProvider {
 public:
  explicit PrecomputedProvider(const std::filesystem::path& path);

  std::string id() const override { return id_; }
  int dim() const override { return dim_; }
  TextEmbedding encode(const EnvironmentPrompt& prompt) const override;
  void set_trainable(bool flag) override;
  std::unique_ptr<EncoderProvider> clone() const override { return std::make_unique<PrecomputedProvider>(*this); }

 private:
  std::string id_;
  int dim_ = 0;
  std::map<std::string, Vector<float>> by_rendered_;
};

void write_precomputed(const std::filesystem::path& path, const EncoderProvider& provider,
                       const std::vector<std::string>& environments, std::string_view template_text = kDefaultTemplate);

// Fluent form of EncoderProvider::set_trainable.
EncoderProvider& set_trainable(EncoderProvider& provider, bool flag);

double cosine(const Vector<float>& a, const Vector<float>& b);

}  // namespace tgeat
