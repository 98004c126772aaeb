#include "cfsum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace cfsum {

namespace {

std::map<std::vector<int>, int> ngram_counts(const TokenSeq& seq, int n) {
  std::map<std::vector<int>, int> counts;
  if (static_cast<int>(seq.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    ++counts[std::vector<int>(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

double f1(double match, double hyp_total, double ref_total) {
  if (match == 0.0) return 0.0;
  const double p = match / hyp_total;
  const double r = match / ref_total;
  return 100.0 * 2.0 * p * r / (p + r);
}

}  // namespace

double rouge_n(const TokenSeq& hyp, const TokenSeq& ref, int n) {
  if (n < 1 || n > 2) throw std::invalid_argument("rouge_n: n must be 1 or 2");
  if (ref.empty()) throw std::invalid_argument("rouge_n: empty reference");
  const auto hc = ngram_counts(hyp, n);
  const auto rc = ngram_counts(ref, n);
  if (hc.empty() || rc.empty()) return 0.0;
  double match = 0, htot = 0, rtot = 0;
  for (const auto& [g, c] : hc) htot += c;
  for (const auto& [g, c] : rc) rtot += c;
  for (const auto& [g, c] : hc) {
    auto it = rc.find(g);
    if (it != rc.end()) match += std::min(c, it->second);
  }
  return f1(match, htot, rtot);
}

int lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[n];
}

double rouge_l(const TokenSeq& hyp, const TokenSeq& ref) {
  if (ref.empty()) throw std::invalid_argument("rouge_l: empty reference");
  if (hyp.empty()) return 0.0;
  return f1(lcs_length(hyp, ref), static_cast<double>(hyp.size()),
            static_cast<double>(ref.size()));
}

double bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  if (hyps.empty() || hyps.size() != refs.size())
    throw std::invalid_argument("bleu: empty or misaligned corpora");
  double hyp_len = 0, ref_len = 0;
  double match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    hyp_len += static_cast<double>(hyps[s].size());
    ref_len += static_cast<double>(refs[s].size());
    for (int n = 1; n <= 4; ++n) {
      const auto hc = ngram_counts(hyps[s], n);
      const auto rc = ngram_counts(refs[s], n);
      for (const auto& [g, c] : hc) {
        total[n - 1] += c;
        auto it = rc.find(g);
        if (it != rc.end()) match[n - 1] += std::min(c, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_prec = 0.0;
  for (int n = 0; n < 4; ++n) {
    double p = total[n] > 0 ? match[n] / total[n] : 0.0;
    if (p == 0.0) p = 1.0 / (2.0 * hyp_len);  // smoothing floor
    log_prec += std::log(p);
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return 100.0 * bp * std::exp(log_prec / 4.0);
}

ScoreReport score_corpus(const std::vector<TokenSeq>& hyps,
                         const std::vector<TokenSeq>& refs,
                         const std::vector<std::string>& ids) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("score_corpus: misaligned corpora");
  ScoreReport rep;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    SampleScores s;
    s.id = i < ids.size() ? ids[i] : std::to_string(i);
    s.rouge1 = rouge_n(hyps[i], refs[i], 1);
    s.rouge2 = rouge_n(hyps[i], refs[i], 2);
    s.rougeL = rouge_l(hyps[i], refs[i]);
    rep.rouge1 += s.rouge1;
    rep.rouge2 += s.rouge2;
    rep.rougeL += s.rougeL;
    rep.per_sample.push_back(std::move(s));
  }
  const double n = static_cast<double>(hyps.size());
  rep.rouge1 /= n;
  rep.rouge2 /= n;
  rep.rougeL /= n;
  rep.bleu = bleu(hyps, refs);
  return rep;
}

std::string ScoreReport::to_json() const {
  nlohmann::json j;
  j["rouge1"] = rouge1;
  j["rouge2"] = rouge2;
  j["rougeL"] = rougeL;
  j["bleu"] = bleu;
  auto arr = nlohmann::json::array();
  for (const auto& s : per_sample)
    arr.push_back({{"id", s.id}, {"rouge1", s.rouge1}, {"rouge2", s.rouge2},
                   {"rougeL", s.rougeL}});
  j["per_sample"] = std::move(arr);
  return j.dump(2);
}

}  // namespace cfsum
