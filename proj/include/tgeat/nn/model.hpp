#pragma once

// Toy-scale SER network: conv feature encoder -> optional text slot appended
// on the time axis -> pre-norm transformer encoder -> average pooling ->
// regression head, plus an optional environment classifier that reads the
// pooled vector through a gradient reversal junction.

#include "tgeat/error.hpp"
#include "tgeat/nn/config.hpp"
#include "tgeat/nn/layers.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tgeat::nn {

template <typename Scalar>
struct ModelInput {
  std::span<const float> waveform;  // z-normalized
  const Vector<Scalar>* text = nullptr;
};

// Per-layer outputs of the transformer stack for one sequence.
template <typename Scalar>
struct LayerTrace {
  std::vector<Matrix<Scalar>> layers;
  Eigen::Index acoustic_frames = 0;
  bool has_text_slot = false;
};

template <typename Scalar>
class SerModel {
 public:
  struct ConvCache {
    std::vector<typename Conv1d<Scalar>::Cache> layers;
  };

  struct SampleCache {
    std::optional<ConvCache> conv;
    Vector<Scalar> text;
    bool has_text = false;
    Eigen::Index acoustic_frames = 0;
    std::vector<typename EncoderBlock<Scalar>::Cache> blocks;
  };

  struct BatchCache {
    std::vector<SampleCache> samples;
    typename MlpHead<Scalar>::Cache head;
    typename MlpHead<Scalar>::Cache env_head;
    bool has_env = false;
  };

  struct BatchOutput {
    Matrix<Scalar> predictions;  // B x n_outputs
    Matrix<Scalar> env_logits;   // B x n_environments, empty without the classifier
    Matrix<Scalar> pooled;       // B x d_model
  };

  SerModel() = default;

  SerModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    int in_ch = 1;
    for (std::size_t i = 0; i < config_.conv.size(); ++i) {
      const auto& spec = config_.conv[i];
      conv_.emplace_back("conv" + std::to_string(i), in_ch, spec.channels, spec.kernel, spec.stride, rng);
      in_ch = spec.channels;
    }
    for (int i = 0; i < config_.n_layers; ++i) {
      blocks_.emplace_back("encoder" + std::to_string(i), config_.d_model, config_.n_heads, config_.ffn_dim, rng);
    }
    head_ = MlpHead<Scalar>("head", Group::head, config_.d_model, config_.head_hidden, config_.n_outputs,
                            config_.head_dropout, rng);
    if (config_.fusion == Fusion::text) {
      const int text_dim = config_.text_dim;
      config_.fusion = Fusion::none;
      enable_text_fusion(text_dim, rng);
    }
    if (config_.env_classifier) {
      config_.env_classifier = false;
      enable_env_classifier(config_.n_environments, config_.grl_lambda, rng);
    }
  }

  const ModelConfig& config() const { return config_; }

  // Adds the trainable text projection (adaptation stage of TG-EAT).
  void enable_text_fusion(int text_dim, Rng& rng) {
    if (text_dim < 1) fail(ErrorKind::config, "text_dim must be >= 1");
    config_.fusion = Fusion::text;
    config_.text_dim = text_dim;
    text_proj_ = Linear<Scalar>("text_projection", Group::text_projection, text_dim, config_.d_model, rng,
                                config_.text_projection_gain);
  }

  void enable_env_classifier(int n_environments, double lambda, Rng& rng) {
    config_.env_classifier = true;
    config_.n_environments = n_environments;
    config_.grl_lambda = lambda;
    config_.validate();
    env_head_ = MlpHead<Scalar>("env_classifier", Group::env_classifier, config_.d_model, config_.head_hidden,
                                n_environments, config_.head_dropout, rng);
    grl_.lambda = lambda;
  }

  GradientReversal<Scalar>& grl() { return grl_; }

  std::vector<Param<Scalar>*> parameters() {
    std::vector<Param<Scalar>*> out;
    for (auto& c : conv_) c.collect(out);
    if (config_.fusion == Fusion::text) text_proj_.collect(out);
    for (auto& b : blocks_) b.collect(out);
    head_.collect(out);
    if (config_.env_classifier) env_head_.collect(out);
    return out;
  }

  std::vector<const Param<Scalar>*> parameters() const {
    auto params = const_cast<SerModel*>(this)->parameters();
    return {params.begin(), params.end()};
  }

  Param<Scalar>* find(const std::string& name) {
    for (auto* p : parameters()) {
      if (p->name == name) return p;
    }
    return nullptr;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

  // ---- Individual stages ----

  Matrix<Scalar> conv_encode(std::span<const float> waveform, ConvCache* cache = nullptr) const {
    const long min_len = config_.min_input_length();
    if (static_cast<long>(waveform.size()) < min_len) {
      fail(ErrorKind::validation, "waveform of " + std::to_string(waveform.size()) +
                                      " samples is shorter than the conv encoder minimum of " + std::to_string(min_len));
    }
    Matrix<Scalar> x = Eigen::Map<const Vector<float>>(waveform.data(), static_cast<Eigen::Index>(waveform.size()))
                           .template cast<Scalar>();
    if (cache) cache->layers.resize(conv_.size());
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      Matrix<Scalar> pre = conv_[i].forward(x, cache ? &cache->layers[i] : nullptr);
      if (cache) cache->layers[i].pre = pre;
      x = (i + 1 < conv_.size()) ? gelu<Scalar>(pre) : std::move(pre);
    }
    return x;
  }

  RowVector<Scalar> project_text(const Vector<Scalar>& embedding) const {
    if (config_.fusion != Fusion::text) fail(ErrorKind::unsupported, "model has no text fusion");
    if (embedding.size() != config_.text_dim) {
      fail(ErrorKind::validation, "text embedding has dimension " + std::to_string(embedding.size()) +
                                      ", model expects " + std::to_string(config_.text_dim));
    }
    return text_proj_.forward(embedding.transpose());
  }

  // Appends the projected text vector after the last acoustic frame.
  static Matrix<Scalar> fuse(const Matrix<Scalar>& frames, const RowVector<Scalar>& projected) {
    Matrix<Scalar> out(frames.rows() + 1, frames.cols());
    out.topRows(frames.rows()) = frames;
    out.row(frames.rows()) = projected;
    return out;
  }

  // Adds positions 0..N-1 (the text slot, when present, is last) and runs the
  // stack. Zero layers return the sequence unchanged.
  Matrix<Scalar> transformer_forward(const Matrix<Scalar>& sequence, LayerTrace<Scalar>* trace = nullptr,
                                     std::vector<typename EncoderBlock<Scalar>::Cache>* caches = nullptr) const {
    if (sequence.rows() == 0) fail(ErrorKind::validation, "empty sequence");
    if (blocks_.empty()) return sequence;
    Matrix<Scalar> x = sequence + sinusoidal_positions<Scalar>(sequence.rows(), config_.d_model);
    std::vector<typename EncoderBlock<Scalar>::Cache> local;
    auto& cache = caches ? *caches : local;
    cache.resize(blocks_.size());
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      x = blocks_[i].forward(x, cache[i]);
      if (!x.allFinite()) fail(ErrorKind::numeric, "non-finite activations at transformer layer " + std::to_string(i + 1));
      if (trace) trace->layers.push_back(x);
    }
    return x;
  }

  // Row mean over all slots, or over acoustic slots only.
  RowVector<Scalar> pool(const Matrix<Scalar>& representation, Eigen::Index acoustic_frames, bool include_text) const {
    const Eigen::Index n = include_text ? representation.rows() : acoustic_frames;
    return representation.topRows(n).colwise().mean();
  }

  // ---- Batched forward / backward ----

  // `dropout_rng` enables training-mode dropout. With a cache, everything the
  // backward pass needs is kept; `cache_conv` also keeps conv activations.
  BatchOutput forward(std::span<const ModelInput<Scalar>> batch, Rng* dropout_rng = nullptr,
                      BatchCache* cache = nullptr, bool cache_conv = false) const {
    const auto n = static_cast<Eigen::Index>(batch.size());
    BatchOutput out;
    out.pooled.resize(n, config_.d_model);
    if (cache) cache->samples.assign(batch.size(), SampleCache{});
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& input = batch[static_cast<std::size_t>(i)];
      SampleCache local;
      SampleCache& sc = cache ? cache->samples[static_cast<std::size_t>(i)] : local;
      if (cache && cache_conv) sc.conv.emplace();
      Matrix<Scalar> seq = conv_encode(input.waveform, sc.conv ? &*sc.conv : nullptr);
      sc.acoustic_frames = seq.rows();
      if (config_.fusion == Fusion::text) {
        if (!input.text) fail(ErrorKind::validation, "text-fused model requires an environment embedding");
        sc.has_text = true;
        sc.text = *input.text;
        seq = fuse(seq, project_text(*input.text));
      }
      const Matrix<Scalar> rep = transformer_forward(seq, nullptr, &sc.blocks);
      out.pooled.row(i) = pool(rep, sc.acoustic_frames, config_.pool_text_slot);
    }
    typename MlpHead<Scalar>::Cache head_local, env_local;
    out.predictions = head_.forward(out.pooled, cache ? cache->head : head_local, dropout_rng);
    if (config_.env_classifier) {
      out.env_logits = env_head_.forward(out.pooled, cache ? cache->env_head : env_local, dropout_rng);
      if (cache) cache->has_env = true;
    }
    return out;
  }

  Matrix<Scalar> predict(std::span<const ModelInput<Scalar>> batch) const { return forward(batch).predictions; }

  // Accumulates gradients of a loss with d(loss)/d(predictions) = dpred and,
  // optionally, d(loss)/d(env_logits) = dlogits. Conv gradients are computed
  // only when `conv_trainable` (and conv activations were cached). Returns
  // d(loss)/d(text embedding) per sample (empty vectors without fusion).
  std::vector<Vector<Scalar>> backward(BatchCache& cache, const Matrix<Scalar>& dpred,
                                       const Matrix<Scalar>* dlogits = nullptr, bool conv_trainable = false) {
    Matrix<Scalar> dpooled = head_.backward(cache.head, dpred);
    if (dlogits) {
      if (!cache.has_env) fail(ErrorKind::unsupported, "model has no environment classifier");
      dpooled += grl_.backward(env_head_.backward(cache.env_head, *dlogits));
    }
    std::vector<Vector<Scalar>> text_grads(cache.samples.size());
    for (std::size_t i = 0; i < cache.samples.size(); ++i) {
      auto& sc = cache.samples[i];
      const Eigen::Index slots = sc.acoustic_frames + (sc.has_text ? 1 : 0);
      const Eigen::Index pooled_rows = config_.pool_text_slot ? slots : sc.acoustic_frames;
      Matrix<Scalar> d = Matrix<Scalar>::Zero(slots, config_.d_model);
      d.topRows(pooled_rows).rowwise() = dpooled.row(static_cast<Eigen::Index>(i)) / static_cast<Scalar>(pooled_rows);
      for (std::size_t b = blocks_.size(); b-- > 0;) d = blocks_[b].backward(sc.blocks[b], d);
      if (sc.has_text) {
        const Matrix<Scalar> dtext = text_proj_.backward(sc.text.transpose(), d.bottomRows(1));
        text_grads[i] = dtext.transpose();
      }
      if (conv_trainable) {
        if (!sc.conv) fail(ErrorKind::validation, "conv activations were not cached for the backward pass");
        Matrix<Scalar> dx = d.topRows(sc.acoustic_frames);
        for (std::size_t l = conv_.size(); l-- > 0;) {
          const auto& lc = sc.conv->layers[l];
          if (l + 1 < conv_.size()) dx = gelu_backward<Scalar>(lc.pre, dx);
          dx = conv_[l].backward(lc, dx, l > 0);
        }
      }
    }
    return text_grads;
  }

  // Layer outputs for one input (evaluation mode).
  LayerTrace<Scalar> trace(const ModelInput<Scalar>& input) const {
    LayerTrace<Scalar> t;
    Matrix<Scalar> seq = conv_encode(input.waveform);
    t.acoustic_frames = seq.rows();
    if (config_.fusion == Fusion::text) {
      if (!input.text) fail(ErrorKind::validation, "text-fused model requires an environment embedding");
      seq = fuse(seq, project_text(*input.text));
      t.has_text_slot = true;
    }
    transformer_forward(seq, &t);
    return t;
  }

  // Converts parameters to another scalar type (e.g. float -> double for checks).
  template <typename Other>
  SerModel<Other> cast() const {
    SerModel<Other> m(config_, 0);
    auto dst = m.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value.template cast<Other>();
    m.grl().lambda = grl_.lambda;
    m.grl().active = grl_.active;
    return m;
  }

 private:
  ModelConfig config_;
  std::vector<Conv1d<Scalar>> conv_;
  Linear<Scalar> text_proj_;
  std::vector<EncoderBlock<Scalar>> blocks_;
  MlpHead<Scalar> head_;
  MlpHead<Scalar> env_head_;
  GradientReversal<Scalar> grl_;
};

}  // namespace tgeat::nn
