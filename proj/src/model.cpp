#include "cfsum/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace cfsum {

namespace {
constexpr double kNegInf = -1e30;
}

void ModelConfig::validate() const {
  if (hidden % heads != 0)
    throw std::invalid_argument("config: hidden must be divisible by heads");
  if (!(1 <= lf && lf < lw && lw < lp && lp <= layers - 3))
    throw std::invalid_argument(
        "config: module placements must satisfy 1 <= L_f < L_w < L_p <= L-3");
  if (vocab_size <= 4) throw std::invalid_argument("config: vocab_size not set");
  if (min_decode_len < 1 || max_decode_len < min_decode_len)
    throw std::invalid_argument("config: bad decode length bounds");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j{{"layers", layers},       {"hidden", hidden},
                   {"heads", heads},         {"ffn", ffn},
                   {"vocab_size", vocab_size}, {"image_dim", image_dim},
                   {"max_encode_len", max_encode_len}, {"min_decode_len", min_decode_len},
                   {"max_decode_len", max_decode_len}, {"beam_size", beam_size},
                   {"lf", lf},               {"lw", lw},
                   {"lp", lp},               {"alpha", alpha},
                   {"dropout", dropout}};
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  ModelConfig c;
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.heads = j.value("heads", c.heads);
  c.ffn = j.value("ffn", c.ffn);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.image_dim = j.value("image_dim", c.image_dim);
  c.max_encode_len = j.value("max_encode_len", c.max_encode_len);
  c.min_decode_len = j.value("min_decode_len", c.min_decode_len);
  c.max_decode_len = j.value("max_decode_len", c.max_decode_len);
  c.beam_size = j.value("beam_size", c.beam_size);
  c.lf = j.value("lf", c.lf);
  c.lw = j.value("lw", c.lw);
  c.lp = j.value("lp", c.lp);
  c.alpha = j.value("alpha", c.alpha);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

Model::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(init_seed);
  const int h = cfg_.hidden;
  auto uni = [&](const std::string& name, std::vector<int> shape, double bound) -> void {
    params_.add(name, Tensor::rand_uniform(std::move(shape), bound, rng, true));
  };
  const double eb = 1.0 / std::sqrt(static_cast<double>(h));

  uni("embed.token", {cfg_.vocab_size, h}, eb);
  uni("embed.position", {cfg_.max_encode_len, h}, eb);
  uni("embed.image_proj", {cfg_.image_dim, h}, 1.0 / std::sqrt(static_cast<double>(cfg_.image_dim)));
  uni("embed.image_bias", {h}, 0.01);
  uni("embed.image_segment", {h}, eb);

  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "enc." + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) uni(p + w, {h, h}, eb);
    for (const char* b : {"bq", "bk", "bv", "bo"}) uni(p + b, {h}, 0.01);
    uni(p + "ffn.w1", {h, cfg_.ffn}, eb);
    uni(p + "ffn.b1", {cfg_.ffn}, 0.01);
    uni(p + "ffn.w2", {cfg_.ffn, h}, 1.0 / std::sqrt(static_cast<double>(cfg_.ffn)));
    uni(p + "ffn.b2", {h}, 0.01);
    params_.add(p + "ln1.g", Tensor::full({h}, 1.0, true));
    params_.add(p + "ln1.b", Tensor::zeros({h}, true));
    params_.add(p + "ln2.g", Tensor::full({h}, 1.0, true));
    params_.add(p + "ln2.b", Tensor::zeros({h}, true));
  }

  // GRU decoder with additive attention; input is [token embed ; context].
  uni("dec.init.w", {h, h}, eb);
  uni("dec.init.b", {h}, 0.01);
  uni("dec.attn.wh", {h, h}, eb);
  uni("dec.attn.um", {h, h}, eb);
  uni("dec.attn.b", {h}, 0.01);
  uni("dec.attn.v", {h, 1}, eb);
  for (const char* g : {"z", "r", "h"}) {
    uni(std::string("dec.gru.w") + g, {2 * h, h}, eb / std::sqrt(2.0));
    uni(std::string("dec.gru.u") + g, {h, h}, eb);
    uni(std::string("dec.gru.b") + g, {h}, 0.01);
  }
  uni("dec.out.w", {2 * h, cfg_.vocab_size}, eb / std::sqrt(2.0));
  uni("dec.out.b", {cfg_.vocab_size}, 0.01);

  // Shared auxiliary heads: copy classifier and phrase copy scorer.
  uni("copy.w", {h, 1}, eb);
  uni("copy.b", {1}, 0.01);
  uni("scorer.w1", {h, h}, eb);
  uni("scorer.b1", {h}, 0.01);
  uni("scorer.w2", {h, 1}, eb);
  uni("scorer.b2", {1}, 0.01);
}

std::pair<Tensor, Tensor> Model::embed(const MultimodalSample& sample) const {
  const int t = sample.text_len();
  const int r = sample.region_count();
  if (t > cfg_.max_encode_len)
    throw std::invalid_argument("embed: text longer than max encode length");
  if (r < 1) throw std::invalid_argument("embed: sample has no image regions");
  if (static_cast<int>(sample.image_regions[0].size()) != cfg_.image_dim)
    throw std::invalid_argument("embed: image feature dim mismatch, got " +
                                std::to_string(sample.image_regions[0].size()) +
                                " expected " + std::to_string(cfg_.image_dim));

  std::vector<int> positions(t);
  for (int i = 0; i < t; ++i) positions[i] = i;
  auto text = add(embedding_rows(params_.get("embed.token"), sample.text_tokens),
                  embedding_rows(params_.get("embed.position"), positions));

  std::vector<double> feat;
  for (const auto& region : sample.image_regions)
    feat.insert(feat.end(), region.begin(), region.end());
  auto raw = Tensor::from(std::move(feat), {r, cfg_.image_dim});
  auto image = add_rowvec(add_rowvec(matmul(raw, params_.get("embed.image_proj")),
                                     params_.get("embed.image_bias")),
                          params_.get("embed.image_segment"));

  return {concat_rows({text, image}), text};
}

Tensor Model::encoder_layer(const Tensor& x, int layer, int keep, int text_len,
                            const RunOptions& opts, Tensor* attention_out) const {
  const std::string p = "enc." + std::to_string(layer) + ".";
  const int h = cfg_.hidden;
  const int nh = cfg_.heads;
  const int dh = h / nh;

  auto q = add_rowvec(matmul(x, params_.get(p + "wq")), params_.get(p + "bq"));
  auto k = add_rowvec(matmul(x, params_.get(p + "wk")), params_.get(p + "bk"));
  auto v = add_rowvec(matmul(x, params_.get(p + "wv")), params_.get(p + "bv"));

  std::vector<Tensor> head_outs;
  Tensor attn_sum;
  for (int head = 0; head < nh; ++head) {
    auto qh = slice_cols(q, head * dh, (head + 1) * dh);
    auto kh = slice_cols(k, head * dh, (head + 1) * dh);
    auto vh = slice_cols(v, head * dh, (head + 1) * dh);
    auto scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    auto attn = softmax_rows(scores);
    attn = apply_mask(attn, keep, text_len);  // per-head, identity when kept
    head_outs.push_back(matmul(attn, vh));
    attn_sum = head == 0 ? attn : add(attn_sum, attn);
  }
  if (attention_out) *attention_out = scale(attn_sum, 1.0 / nh);

  auto attn_proj = add_rowvec(matmul(concat_cols(head_outs), params_.get(p + "wo")),
                              params_.get(p + "bo"));
  if (opts.training && cfg_.dropout > 0.0)
    attn_proj = dropout(attn_proj, cfg_.dropout, *opts.dropout_rng, true);
  auto x1 = layer_norm_rows(add(x, attn_proj), params_.get(p + "ln1.g"),
                            params_.get(p + "ln1.b"));

  auto ffn = add_rowvec(
      matmul(relu_op(add_rowvec(matmul(x1, params_.get(p + "ffn.w1")),
                                params_.get(p + "ffn.b1"))),
             params_.get(p + "ffn.w2")),
      params_.get(p + "ffn.b2"));
  if (opts.training && cfg_.dropout > 0.0)
    ffn = dropout(ffn, cfg_.dropout, *opts.dropout_rng, true);
  return layer_norm_rows(add(x1, ffn), params_.get(p + "ln2.g"), params_.get(p + "ln2.b"));
}

Tensor Model::forward_layers(const Tensor& x, int first_layer, const RunOptions& opts,
                             int last_layer) const {
  if (last_layer < 0) last_layer = cfg_.layers;
  Tensor h = x;
  for (int l = first_layer; l < last_layer; ++l)
    h = encoder_layer(h, l, 1, h.rows(), opts, nullptr);
  return h;
}

EncoderTrace Model::encode(const MultimodalSample& sample, const RunOptions& opts) const {
  auto [bi, uni] = embed(sample);
  EncoderTrace trace;
  trace.text_len = sample.text_len();
  trace.total_len = bi.rows();
  trace.has_uni = opts.need_uni || opts.filter_enabled;
  trace.filter.alpha = cfg_.alpha;
  trace.filter.keep = 1;

  Tensor m = bi, u = uni;
  int keep = 1;
  for (int layer = 0; layer < cfg_.layers; ++layer) {
    Tensor attn;
    m = encoder_layer(m, layer, keep, trace.text_len, opts, &attn);
    trace.m.push_back(m);
    trace.a.push_back(attn);
    // The uni-modal stream past L_f is only needed by the complement
    // modules; a filter-only pass can stop it early.
    if (trace.has_uni && (opts.need_uni || layer + 1 <= cfg_.lf)) {
      u = encoder_layer(u, layer, 1, trace.text_len, opts, nullptr);
      trace.u.push_back(u);
    }
    if (layer + 1 == cfg_.lf) {
      if (opts.filter_enabled) {
        trace.filter = consistency(u, m, cfg_.alpha);
        keep = trace.filter.keep;
      }
      if (opts.force_keep >= 0) {
        keep = opts.force_keep;
        trace.filter.keep = keep;
      }
    }
  }
  return trace;
}

Tensor Model::decode_init(const Tensor& context) const {
  auto pooled = reshape(mean_pool_rows(context), {1, cfg_.hidden});
  return tanh_op(add_rowvec(matmul(pooled, params_.get("dec.init.w")),
                            params_.get("dec.init.b")));
}

DecodeStep Model::decode_step(const Tensor& state, int prev_token, const Tensor& context,
                              bool image_masked, int text_len) const {
  const int h = cfg_.hidden;
  const int c = context.rows();

  auto x = embedding_rows(params_.get("embed.token"), {prev_token});
  auto proj_h = add_rowvec(matmul(state, params_.get("dec.attn.wh")),
                           params_.get("dec.attn.b"));
  // broadcast the 1 x H projected state over the C context rows
  std::vector<Tensor> rows(c, proj_h);
  auto scores = matmul(tanh_op(add(matmul(context, params_.get("dec.attn.um")),
                                   concat_rows(rows))),
                       params_.get("dec.attn.v"));
  auto logits = transpose(scores);  // 1 x C
  if (image_masked && text_len < c) {
    std::vector<double> mask(c, 0.0);
    for (int i = text_len; i < c; ++i) mask[i] = 1.0;
    logits = masked_fill(logits, mask, kNegInf);
  }
  auto attn = softmax_rows(logits);
  auto ctxvec = matmul(attn, context);  // 1 x H

  auto u = concat_cols({x, ctxvec});  // 1 x 2H
  auto gate = [&](const char* g) {
    return add_rowvec(add(matmul(u, params_.get(std::string("dec.gru.w") + g)),
                          matmul(state, params_.get(std::string("dec.gru.u") + g))),
                      params_.get(std::string("dec.gru.b") + g));
  };
  auto z = sigmoid_op(gate("z"));
  auto r = sigmoid_op(gate("r"));
  auto hc = tanh_op(add_rowvec(add(matmul(u, params_.get("dec.gru.wh")),
                                   matmul(mul(r, state), params_.get("dec.gru.uh"))),
                               params_.get("dec.gru.bh")));
  auto ones = Tensor::full({1, h}, 1.0);
  auto new_state = add(mul(sub(ones, z), state), mul(z, hc));

  auto out = add_rowvec(matmul(concat_cols({new_state, ctxvec}), params_.get("dec.out.w")),
                        params_.get("dec.out.b"));
  DecodeStep step;
  step.probs = softmax_rows(out);
  step.state = new_state;
  step.attention = attn;
  return step;
}

Tensor Model::generation_loss(const Tensor& context, const std::vector<int>& summary,
                              bool image_masked, int text_len) const {
  if (summary.empty()) throw std::invalid_argument("generation_loss: empty reference");
  Tensor state = decode_init(context);
  std::vector<Tensor> prob_rows;
  std::vector<int> targets;
  int prev = kBos;
  for (std::size_t t = 0; t <= summary.size(); ++t) {
    auto step = decode_step(state, prev, context, image_masked, text_len);
    const int target = t < summary.size() ? summary[t] : kEos;
    prob_rows.push_back(step.probs);
    targets.push_back(target);
    state = step.state;
    prev = target;
  }
  return nll_loss(concat_rows(prob_rows), targets);
}

std::vector<int> Model::beam_search(const Tensor& context, bool image_masked,
                                    int text_len, int beam_size) const {
  NoGradGuard ng;
  struct Beam {
    std::vector<int> tokens;
    double logprob = 0.0;
    Tensor state;
    bool finished = false;
  };
  auto norm_score = [](const Beam& b) {
    return b.logprob / std::max<std::size_t>(1, b.tokens.size() + 1);
  };

  std::vector<Beam> beams{{{}, 0.0, decode_init(context), false}};
  std::vector<Beam> finished;
  for (int step_idx = 0; step_idx < cfg_.max_decode_len; ++step_idx) {
    struct Cand {
      int beam;
      int token;
      double logprob;
    };
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const int prev = beams[b].tokens.empty() ? kBos : beams[b].tokens.back();
      auto step = decode_step(beams[b].state, prev, context, image_masked, text_len);
      beams[b].state = step.state;
      const bool allow_eos =
          static_cast<int>(beams[b].tokens.size()) >= cfg_.min_decode_len;
      for (int tok = 0; tok < cfg_.vocab_size; ++tok) {
        if (tok == kPad || tok == kBos) continue;
        if (tok == kEos && !allow_eos) continue;
        cands.push_back({static_cast<int>(b), tok,
                         beams[b].logprob + std::log(std::max(step.probs.value(tok), kProbEps))});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.token != b.token) return a.token < b.token;  // ties: lower token id
      return a.beam < b.beam;
    });
    std::vector<Beam> next;
    for (const auto& cand : cands) {
      if (static_cast<int>(next.size()) >= beam_size) break;
      Beam nb = beams[cand.beam];
      nb.logprob = cand.logprob;
      if (cand.token == kEos) {
        nb.finished = true;
        finished.push_back(nb);
        continue;
      }
      nb.tokens.push_back(cand.token);
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
    if (beams.empty()) break;
  }
  for (auto& b : beams) finished.push_back(b);  // length-capped beams compete too
  if (finished.empty()) return {};
  std::stable_sort(finished.begin(), finished.end(), [&](const Beam& a, const Beam& b) {
    return norm_score(a) > norm_score(b);
  });
  return finished.front().tokens;
}

Tensor Model::copy_head_probs(const Tensor& token_features) const {
  return sigmoid_op(add_rowvec(matmul(token_features, params_.get("copy.w")),
                               params_.get("copy.b")));
}

Tensor Model::phrase_scores(const Tensor& token_features,
                            const std::vector<Span>& spans) const {
  std::vector<Tensor> rows;
  for (const auto& [b, e] : spans)
    rows.push_back(reshape(mean_pool_rows(slice_rows(token_features, b, e)),
                           {1, cfg_.hidden}));
  auto feats = concat_rows(rows);
  auto hidden = tanh_op(add_rowvec(matmul(feats, params_.get("scorer.w1")),
                                   params_.get("scorer.b1")));
  return sigmoid_op(add_rowvec(matmul(hidden, params_.get("scorer.w2")),
                               params_.get("scorer.b2")));
}

}  // namespace cfsum
