#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfsum/tensor.hpp"

namespace cfsum {

// Reserved token ids.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;

class Vocabulary {
 public:
  Vocabulary();

  // Frequency order, ties broken lexicographically. Reserved ids 0..3.
  static Vocabulary build(const std::vector<std::string>& texts);

  int id(const std::string& token) const;  // kUnk for unknown tokens
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load_file(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::pair<std::string, int>> index_;  // sorted token -> id
};

using Span = std::pair<int, int>;  // half-open [start, end)

struct MultimodalSample {
  std::string id;
  std::vector<int> text_tokens;
  std::vector<std::vector<double>> image_regions;  // R x D
  std::vector<int> summary_tokens;
  std::vector<Span> phrase_spans;
  bool image_present = true;

  int text_len() const { return static_cast<int>(text_tokens.size()); }
  int region_count() const { return static_cast<int>(image_regions.size()); }
  // Generator class encoded in synthetic ids ("..._c<k>..."), -1 otherwise.
  int generator_class() const;
};

// Throws std::invalid_argument describing the violated invariant.
void validate_sample(const MultimodalSample& s, int vocab_size);

// Consecutive windows of length k; the last window may be shorter.
std::vector<Span> chunk_phrases(int token_count, int window = 3);

struct Corpus {
  Vocabulary vocab;
  std::vector<MultimodalSample> samples;
};

// JSON Lines: {"id", "text", "summary", "image_features", "phrases"?}.
// Builds the vocabulary from the file's texts and summaries.
Corpus load_corpus(const std::string& path, int max_encode_len = 60);
// Same file format, but encode with a fixed vocabulary (evaluation path).
std::vector<MultimodalSample> load_corpus_with_vocab(const std::string& path,
                                                     const Vocabulary& vocab,
                                                     int max_encode_len = 60);
void save_corpus_jsonl(const std::string& path,
                       const std::vector<MultimodalSample>& samples,
                       const Vocabulary& vocab);

struct SynthConfig {
  int n = 2000;
  std::uint64_t seed = 1;
  int classes = 4;        // K
  int scenes = 6;
  int regions = 4;        // R
  int feature_dim = 16;   // D, must be >= classes + scenes
  int filler_pool = 40;
  double rho_noise = 0.2;     // images drawn independently of the class
  double scene_in_text = 0.5; // probability the scene word appears in the text
  double noise_sigma = 0.1;
};

// Deterministic template corpus: each text carries an ambiguous block of K
// candidate class words; the image encodes which candidate the summary uses.
Corpus synth_generate(const SynthConfig& cfg);

// The synthetic word pools (class words first, then scene words, fillers).
std::vector<std::string> synth_class_words(int k);

// Zero the region features of a seeded rho-fraction of samples.
std::vector<MultimodalSample> mask_images(std::vector<MultimodalSample> samples,
                                          double rho, std::uint64_t seed);

// Exchange image regions between seeded disjoint pairs of differing
// generator classes. Involution on the chosen pairs.
std::vector<MultimodalSample> unpair_swap(std::vector<MultimodalSample> samples,
                                          int pair_count, std::uint64_t seed);

}  // namespace cfsum
