#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ahl/structured_mask.hpp"
#include "ahl/tensor.hpp"

namespace ahl {

// Padding id shared with the bundled vocabularies. Trailing padding is
// stripped before encoding, so N counts only real tokens.
inline constexpr int kPadToken = 0;

enum class Activation { relu, gelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct ModelConfig {
  int num_layers = 4;
  int num_heads = 4;
  int d_model = 32;
  int d_ff = 64;
  int vocab_size = 200;
  int max_seq_len = 32;
  int num_classes = 2;
  Activation activation = Activation::relu;

  int head_dim() const { return d_model / num_heads; }
  // Throws ContractError on an inconsistent configuration.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Per-head output gate; 0 zeroes the head's contribution.
class HeadGate {
 public:
  HeadGate() = default;
  HeadGate(int layers, int heads) : layers_(layers), heads_(heads), open_(std::size_t(layers) * heads, 1) {}

  static HeadGate all_open(int layers, int heads) { return HeadGate(layers, heads); }

  bool open(int layer, int head) const { return open_[std::size_t(layer) * heads_ + head]; }
  void set(int layer, int head, bool open) { open_[std::size_t(layer) * heads_ + head] = open; }
  void close_layer(int layer) {
    for (int j = 0; j < heads_; ++j) set(layer, j, false);
  }
  int layers() const { return layers_; }
  int heads() const { return heads_; }

 private:
  int layers_ = 0;
  int heads_ = 0;
  std::vector<std::uint8_t> open_;
};

struct NamedParameter {
  std::string name;
  Tensor value;
};

// Pre-LN transformer encoder with a classifier on the first (CLS) position.
//
// Parameter names, in canonical order:
//   tok_emb [V,d], pos_emb [S,d], emb_ln.gain [d], emb_ln.bias [d],
//   per layer i: layer.i.attn.{wq,wk,wv,wo} [d,d], layer.i.attn.{bq,bk,bv,bo} [d],
//                layer.i.ln1.{gain,bias} [d], layer.i.ffn.w1 [d,f], layer.i.ffn.b1 [f],
//                layer.i.ffn.w2 [f,d], layer.i.ffn.b2 [d], layer.i.ln2.{gain,bias} [d],
//   cls.w [d,C], cls.b [C].
// ln1 normalizes the attention input and ln2 the feed-forward input.
class TransformerModel {
 public:
  // Random initialisation; the classifier head starts at zero.
  TransformerModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<NamedParameter>& parameters() { return params_; }
  std::vector<Tensor> parameter_tensors();

  const Tensor& param(const std::string& name) const;
  Tensor& param(const std::string& name);

  // Expected parameter names and shapes for a config, in canonical order.
  static std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config);

 private:
  ModelConfig config_;
  std::vector<NamedParameter> params_;
};

// Number of tokens before trailing padding. Throws if padding is interior.
std::size_t effective_length(std::span<const int> tokens);

struct EncodeOptions {
  const StructuredMask* mask = nullptr;  // nullptr = attend everywhere
  const HeadGate* gate = nullptr;        // nullptr = all heads open
  bool mask_grads = false;               // make every head's additive mask a grad leaf
  bool capture = false;                  // keep per-head attention logits and probs
  // Optional real-valued offsets [L, H, N, N] added to the additive mask;
  // used to probe the loss surface between "attend" and "masked".
  const std::vector<double>* mask_offsets = nullptr;
};

struct EncoderGraph {
  std::size_t seq = 0;
  Tensor logits;                        // [1, C]
  std::vector<Tensor> mask_leaves;      // per head, layer-major, when mask_grads
  std::vector<Tensor> attention_logits; // per head, pre-mask, when capture
  std::vector<Tensor> attention_probs;  // per head, when capture
};

// Builds the forward graph with parameters detached from the model.
EncoderGraph encode(Tape& tape, const TransformerModel& model, std::span<const int> tokens,
                    const EncodeOptions& opts = {});
// Same graph with live parameters: backward accumulates into parameter grads.
EncoderGraph encode_trainable(Tape& tape, TransformerModel& model, std::span<const int> tokens,
                              const EncodeOptions& opts = {});

struct ForwardTrace {
  int layers = 0;
  int heads = 0;
  int seq = 0;
  std::vector<double> attention_logits;        // [L, H, N, N]
  std::vector<double> attention_probs;         // [L, H, N, N]
  std::optional<std::vector<double>> mask_grad;  // d loss / d additive mask, [L, H, N, N]
  std::vector<double> logits;
  std::vector<double> class_probs;
  int predicted_class = 0;
  std::optional<double> loss;

  std::size_t offset(int layer, int head) const {
    return (std::size_t(layer) * heads + head) * std::size_t(seq) * seq;
  }
  std::span<const double> head_logits(int layer, int head) const;
  std::span<const double> head_probs(int layer, int head) const;
  std::span<const double> head_grad(int layer, int head) const;
};

struct Prediction {
  std::vector<double> logits;
  std::vector<double> class_probs;
  int predicted_class = 0;
  std::optional<double> gold_prob;
};

// One forward pass. With want_grads, one backward pass from the gold label's
// cross entropy fills mask_grad.
ForwardTrace forward(const TransformerModel& model, std::span<const int> tokens, const StructuredMask* mask,
                     const HeadGate* gate, bool want_grads, std::optional<int> gold_label = std::nullopt);

Prediction predict(const TransformerModel& model, std::span<const int> tokens, const StructuredMask* mask = nullptr,
                   const HeadGate* gate = nullptr, std::optional<int> gold_label = std::nullopt);

double predict_gold_prob(const TransformerModel& model, std::span<const int> tokens, const StructuredMask* mask,
                         const HeadGate* gate, int gold_label);

// Cross entropy of one example on live parameters, for training.
Tensor example_loss(Tape& tape, TransformerModel& model, std::span<const int> tokens, int label,
                    const StructuredMask* mask = nullptr);

}  // namespace ahl
