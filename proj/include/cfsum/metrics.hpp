#pragma once

#include <string>
#include <vector>

namespace cfsum {

using TokenSeq = std::vector<int>;

// F1 scores in [0, 100].
double rouge_n(const TokenSeq& hyp, const TokenSeq& ref, int n);
double rouge_l(const TokenSeq& hyp, const TokenSeq& ref);
int lcs_length(const TokenSeq& a, const TokenSeq& b);

// Corpus BLEU, max order 4, brevity penalty, zero precisions floored at
// 1/(2 * hyp length).
double bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs);

struct SampleScores {
  std::string id;
  double rouge1 = 0, rouge2 = 0, rougeL = 0;
};

struct ScoreReport {
  double rouge1 = 0, rouge2 = 0, rougeL = 0, bleu = 0;
  std::vector<SampleScores> per_sample;

  std::string to_json() const;
};

ScoreReport score_corpus(const std::vector<TokenSeq>& hyps,
                         const std::vector<TokenSeq>& refs,
                         const std::vector<std::string>& ids = {});

}  // namespace cfsum
