#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfsum/data.hpp"
#include "cfsum/params.hpp"
#include "cfsum/prefilter.hpp"
#include "cfsum/tensor.hpp"

namespace cfsum {

struct ModelConfig {
  int layers = 12;
  int hidden = 64;
  int heads = 4;
  int ffn = 256;  // feed-forward width, 4H by default
  int vocab_size = 0;
  int image_dim = 16;
  int max_encode_len = 60;
  int min_decode_len = 8;
  int max_decode_len = 24;
  int beam_size = 4;
  int lf = 3, lw = 6, lp = 9;  // module starting layers, 1-based
  double alpha = 0.65;
  double dropout = 0.1;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Per-layer features and head-averaged bi-modal attention.
struct EncoderTrace {
  std::vector<Tensor> m;  // bi-modal features, C x H per layer
  std::vector<Tensor> u;  // uni-modal features, T x H per layer
  std::vector<Tensor> a;  // corrected attention, C x C per layer
  int text_len = 0;       // T
  int total_len = 0;      // C = T + R
  FilterDecision filter;
  bool has_uni = false;
};

struct DecodeStep {
  Tensor probs;      // 1 x V distribution
  Tensor state;      // 1 x H
  Tensor attention;  // 1 x C over context positions
};

// Run-time switches for a forward pass.
struct RunOptions {
  bool training = false;
  bool filter_enabled = true;
  bool need_uni = true;  // the uni-modal stream can be skipped for speed
  int force_keep = -1;   // 0 or 1 overrides the filter decision (diagnostics)
  Rng* dropout_rng = nullptr;
};

// Single-stream multimodal transformer encoder with a shared-weight
// uni-modal pass, plus a recurrent attention decoder.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Text rows of the bi-modal input are the uni-modal input (same graph).
  std::pair<Tensor, Tensor> embed(const MultimodalSample& sample) const;

  EncoderTrace encode(const MultimodalSample& sample, const RunOptions& opts) const;

  // Apply encoder layers [first_layer, last_layer) to arbitrary features with
  // no attention masking — the text-only oracle for the degeneration
  // property. last_layer = -1 means through the final layer.
  Tensor forward_layers(const Tensor& x, int first_layer, const RunOptions& opts,
                        int last_layer = -1) const;

  Tensor decode_init(const Tensor& context) const;
  DecodeStep decode_step(const Tensor& state, int prev_token, const Tensor& context,
                         bool image_masked, int text_len) const;

  // Teacher-forced mean NLL over the reference tokens plus EOS.
  Tensor generation_loss(const Tensor& context, const std::vector<int>& summary,
                         bool image_masked, int text_len) const;

  std::vector<int> beam_search(const Tensor& context, bool image_masked,
                               int text_len, int beam_size) const;

  // Auxiliary heads (shared across streams).
  Tensor copy_head_probs(const Tensor& token_features) const;  // per-row sigmoid
  Tensor phrase_scores(const Tensor& token_features,
                       const std::vector<Span>& spans) const;  // per-phrase sigmoid

 private:
  Tensor encoder_layer(const Tensor& x, int layer, int keep, int text_len,
                       const RunOptions& opts, Tensor* attention_out) const;

  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace cfsum
