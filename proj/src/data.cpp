#include "cfsum/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cfsum {

namespace {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(tok);
  }
  return out;
}

const char* kReserved[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* t : kReserved) tokens_.emplace_back(t);
  for (int i = 0; i < 4; ++i) index_.emplace_back(tokens_[i], i);
  std::sort(index_.begin(), index_.end());
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  if (texts.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, int> freq;
  bool any = false;
  for (const auto& t : texts)
    for (const auto& tok : tokenize(t)) {
      ++freq[tok];
      any = true;
    }
  if (!any) throw std::invalid_argument("build_vocab: empty corpus");
  std::vector<std::pair<std::string, int>> order(freq.begin(), freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, f] : order) {
    v.index_.emplace_back(tok, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  std::sort(v.index_.begin(), v.index_.end());
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), token,
                             [](const auto& p, const std::string& t) { return p.first < t; });
  if (it != index_.end() && it->first == token) return it->second;
  return kUnk;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::invalid_argument("vocab: id out of range");
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& tok : tokenize(text)) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  json j = json::array();
  for (const auto& t : tokens_) j.push_back(t);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("vocab: cannot write " + path);
  os << j.dump() << "\n";
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("vocab: cannot open " + path);
  json j;
  is >> j;
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  for (const auto& t : j) {
    v.index_.emplace_back(t.get<std::string>(), static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(t.get<std::string>());
  }
  std::sort(v.index_.begin(), v.index_.end());
  for (int i = 0; i < 4; ++i)
    if (v.tokens_.size() <= static_cast<std::size_t>(i) || v.tokens_[i] != kReserved[i])
      throw std::runtime_error("vocab: reserved tokens missing in " + path);
  return v;
}

int MultimodalSample::generator_class() const {
  auto pos = id.find("_c");
  if (pos == std::string::npos) return -1;
  pos += 2;
  if (pos >= id.size() || !std::isdigit(static_cast<unsigned char>(id[pos]))) return -1;
  return std::stoi(id.substr(pos));
}

void validate_sample(const MultimodalSample& s, int vocab_size) {
  auto fail = [&s](const std::string& msg) {
    throw std::invalid_argument("sample " + s.id + ": " + msg);
  };
  if (s.text_tokens.empty()) fail("empty text");
  if (s.image_regions.empty()) fail("empty image region list");
  const std::size_t d = s.image_regions[0].size();
  for (const auto& r : s.image_regions)
    if (r.size() != d) fail("ragged image region features");
  for (int t : s.text_tokens)
    if (t < 0 || t >= vocab_size) fail("text token id out of vocabulary");
  for (int t : s.summary_tokens)
    if (t < 0 || t >= vocab_size) fail("summary token id out of vocabulary");
  // phrase spans must partition [0, |text|)
  int expect = 0;
  for (const auto& [b, e] : s.phrase_spans) {
    if (b != expect || e <= b)
      fail("phrase spans must be a sorted gap-free partition, offending span [" +
           std::to_string(b) + "," + std::to_string(e) + ") expected start " +
           std::to_string(expect));
    expect = e;
  }
  if (expect != s.text_len()) fail("phrase spans do not cover the text");
}

std::vector<Span> chunk_phrases(int token_count, int window) {
  if (token_count < 1) throw std::invalid_argument("chunk_phrases: empty token sequence");
  if (window < 1) throw std::invalid_argument("chunk_phrases: window must be >= 1");
  std::vector<Span> out;
  for (int b = 0; b < token_count; b += window)
    out.emplace_back(b, std::min(b + window, token_count));
  return out;
}

namespace {

MultimodalSample sample_from_json(const json& j, const Vocabulary& vocab,
                                  int max_encode_len, int line_no) {
  auto require = [&](const char* key) {
    if (!j.contains(key))
      throw std::invalid_argument("corpus line " + std::to_string(line_no) +
                                  ": missing field '" + key + "'");
  };
  require("id");
  require("text");
  require("summary");
  require("image_features");
  MultimodalSample s;
  s.id = j.at("id").get<std::string>();
  s.text_tokens = vocab.encode(j.at("text").get<std::string>());
  if (static_cast<int>(s.text_tokens.size()) > max_encode_len)
    s.text_tokens.resize(max_encode_len);
  s.summary_tokens = vocab.encode(j.at("summary").get<std::string>());
  for (const auto& region : j.at("image_features"))
    s.image_regions.push_back(region.get<std::vector<double>>());
  if (j.contains("phrases")) {
    for (const auto& p : j.at("phrases")) {
      int b = p.at(0).get<int>(), e = p.at(1).get<int>();
      if (b >= s.text_len()) continue;  // dropped by truncation
      s.phrase_spans.emplace_back(b, std::min(e, s.text_len()));
    }
  } else {
    s.phrase_spans = chunk_phrases(s.text_len());
  }
  bool all_zero = true;
  for (const auto& r : s.image_regions)
    for (double v : r) all_zero = all_zero && v == 0.0;
  s.image_present = !all_zero;
  try {
    validate_sample(s, vocab.size());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("corpus line " + std::to_string(line_no) + ": " + e.what());
  }
  return s;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("corpus: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

json parse_line(const std::string& line, int line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded())
    throw std::invalid_argument("corpus line " + std::to_string(line_no) +
                                ": malformed JSON");
  return j;
}

}  // namespace

Corpus load_corpus(const std::string& path, int max_encode_len) {
  const auto lines = read_lines(path);
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json j = parse_line(lines[i], static_cast<int>(i + 1));
    if (j.contains("text")) texts.push_back(j.at("text").get<std::string>());
    if (j.contains("summary")) texts.push_back(j.at("summary").get<std::string>());
  }
  Corpus c;
  c.vocab = Vocabulary::build(texts);
  for (std::size_t i = 0; i < lines.size(); ++i)
    c.samples.push_back(sample_from_json(parse_line(lines[i], static_cast<int>(i + 1)),
                                         c.vocab, max_encode_len, static_cast<int>(i + 1)));
  return c;
}

std::vector<MultimodalSample> load_corpus_with_vocab(const std::string& path,
                                                     const Vocabulary& vocab,
                                                     int max_encode_len) {
  const auto lines = read_lines(path);
  std::vector<MultimodalSample> out;
  for (std::size_t i = 0; i < lines.size(); ++i)
    out.push_back(sample_from_json(parse_line(lines[i], static_cast<int>(i + 1)), vocab,
                                   max_encode_len, static_cast<int>(i + 1)));
  return out;
}

void save_corpus_jsonl(const std::string& path,
                       const std::vector<MultimodalSample>& samples,
                       const Vocabulary& vocab) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("corpus: cannot write " + path);
  for (const auto& s : samples) {
    json j;
    j["id"] = s.id;
    j["text"] = vocab.decode(s.text_tokens);
    j["summary"] = vocab.decode(s.summary_tokens);
    json feats = json::array();
    for (const auto& r : s.image_regions) feats.push_back(r);
    j["image_features"] = std::move(feats);
    json spans = json::array();
    for (const auto& [b, e] : s.phrase_spans) spans.push_back(json::array({b, e}));
    j["phrases"] = std::move(spans);
    os << j.dump() << "\n";
  }
}

// ---- synthetic corpus -------------------------------------------------

namespace {

const std::vector<std::string> kClassWords = {"crimson", "azure",  "emerald", "amber",
                                              "violet",  "coral",  "ivory",   "onyx"};
const std::vector<std::string> kSceneWords = {"harbor", "market", "stadium", "forest",
                                              "museum", "airport", "bridge", "canyon"};

}  // namespace

std::vector<std::string> synth_class_words(int k) {
  if (k < 2 || k > static_cast<int>(kClassWords.size()))
    throw std::invalid_argument("synth: class count must be in [2, " +
                                std::to_string(kClassWords.size()) + "]");
  return {kClassWords.begin(), kClassWords.begin() + k};
}

Corpus synth_generate(const SynthConfig& cfg) {
  if (cfg.n < 1) throw std::invalid_argument("synth: n must be >= 1");
  if (cfg.classes < 2) throw std::invalid_argument("synth: need at least 2 classes");
  if (cfg.classes > static_cast<int>(kClassWords.size()) ||
      cfg.scenes > static_cast<int>(kSceneWords.size()))
    throw std::invalid_argument("synth: class/scene count exceeds word pool capacity");
  if (cfg.feature_dim < cfg.classes + cfg.scenes)
    throw std::invalid_argument("synth: feature_dim must be >= classes + scenes");

  // Canonical vocabulary over the full pool so that corpora of any size
  // generated with the same config share one token mapping.
  std::vector<std::string> pool_line;
  {
    std::string line;
    for (int k = 0; k < cfg.classes; ++k) line += kClassWords[k] + " ";
    for (int s = 0; s < cfg.scenes; ++s) line += kSceneWords[s] + " ";
    for (int f = 0; f < cfg.filler_pool; ++f) line += "w" + std::to_string(f) + " ";
    pool_line.push_back(line);
  }
  Corpus corpus;
  corpus.vocab = Vocabulary::build(pool_line);

  Rng rng(cfg.seed);
  std::uniform_int_distribution<int> class_dist(0, cfg.classes - 1);
  std::uniform_int_distribution<int> scene_dist(0, cfg.scenes - 1);
  std::bernoulli_distribution noise_dist(cfg.rho_noise);
  std::bernoulli_distribution scene_text_dist(cfg.scene_in_text);
  std::normal_distribution<double> gauss(0.0, cfg.noise_sigma);

  for (int i = 0; i < cfg.n; ++i) {
    const int cls = class_dist(rng);
    const int scene = scene_dist(rng);
    const bool noisy = noise_dist(rng);
    const bool scene_in_text = scene_text_dist(rng);
    const int img_cls = noisy ? class_dist(rng) : cls;
    const int img_scene = noisy ? scene_dist(rng) : scene;

    // 7 distinct fillers: 5 prefix + 2 suffix.
    std::vector<int> fill(cfg.filler_pool);
    for (int f = 0; f < cfg.filler_pool; ++f) fill[f] = f;
    std::shuffle(fill.begin(), fill.end(), rng);

    std::string text, summary;
    std::vector<Span> spans;
    auto filler = [&](int k) { return "w" + std::to_string(fill[k]); };
    for (int k = 0; k < 5; ++k) text += filler(k) + " ";
    int cursor = 5;
    if (scene_in_text) {
      text += kSceneWords[scene] + " ";
      ++cursor;
    }
    spans.emplace_back(0, 3);
    spans.emplace_back(3, cursor);
    for (int k = 0; k < cfg.classes; ++k) {
      text += kClassWords[k] + " ";
      spans.emplace_back(cursor + k, cursor + k + 1);
    }
    cursor += cfg.classes;
    text += filler(5) + " " + filler(6);
    spans.emplace_back(cursor, cursor + 2);

    summary = kClassWords[cls] + " " + kSceneWords[scene];
    for (int k = 0; k < 5; ++k) summary += " " + filler(k);
    summary += " " + filler(5);

    MultimodalSample s;
    s.id = "syn" + std::to_string(i) + "_c" + std::to_string(img_cls) + "_s" +
           std::to_string(img_scene) + (noisy ? "_noise" : "");
    s.text_tokens = corpus.vocab.encode(text);
    s.summary_tokens = corpus.vocab.encode(summary);
    s.phrase_spans = std::move(spans);
    for (int r = 0; r < cfg.regions; ++r) {
      std::vector<double> feat(cfg.feature_dim);
      for (auto& v : feat) v = gauss(rng);
      feat[img_cls] += 1.0;
      feat[cfg.classes + img_scene] += 1.0;
      s.image_regions.push_back(std::move(feat));
    }
    validate_sample(s, corpus.vocab.size());
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

std::vector<MultimodalSample> mask_images(std::vector<MultimodalSample> samples,
                                          double rho, std::uint64_t seed) {
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("mask_images: rho out of [0,1]");
  const int n = static_cast<int>(samples.size());
  const int k = static_cast<int>(std::lround(rho * n));
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int i = 0; i < k; ++i) {
    auto& s = samples[idx[i]];
    for (auto& r : s.image_regions) std::fill(r.begin(), r.end(), 0.0);
    s.image_present = false;
  }
  return samples;
}

std::vector<MultimodalSample> unpair_swap(std::vector<MultimodalSample> samples,
                                          int pair_count, std::uint64_t seed) {
  const int n = static_cast<int>(samples.size());
  if (pair_count < 0 || 2 * pair_count > n)
    throw std::invalid_argument("unpair_swap: pair count exceeds n/2");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<bool> used(n, false);
  int made = 0;
  for (int a = 0; a < n && made < pair_count; ++a) {
    if (used[idx[a]]) continue;
    for (int b = a + 1; b < n; ++b) {
      if (used[idx[b]]) continue;
      const int ca = samples[idx[a]].generator_class();
      const int cb = samples[idx[b]].generator_class();
      if (ca < 0 || cb < 0 || ca == cb) continue;
      std::swap(samples[idx[a]].image_regions, samples[idx[b]].image_regions);
      used[idx[a]] = used[idx[b]] = true;
      ++made;
      break;
    }
  }
  if (made < pair_count)
    throw std::invalid_argument("unpair_swap: only " + std::to_string(made) + " of " +
                                std::to_string(pair_count) +
                                " cross-class pairs available");
  return samples;
}

}  // namespace cfsum
