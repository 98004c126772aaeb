// Command-line front end: data generation, training, evaluation and the
// masking / unpairing / layer-placement experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfsum/data.hpp"
#include "cfsum/experiments.hpp"
#include "cfsum/train.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CLI::ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw CLI::ValidationError("cannot write " + path);
  os << text;
}

cfsum::ModuleSwitches parse_modules(const std::string& spec) {
  cfsum::ModuleSwitches m = cfsum::ModuleSwitches::none();
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "f" || item == "filter") m.filter = true;
    else if (item == "w" || item == "word") m.word = true;
    else if (item == "p" || item == "phrase") m.phrase = true;
    else if (item == "none" || item.empty()) continue;
    else throw CLI::ValidationError("--modules expects a comma list of f,w,p (got '" + item + "')");
  }
  return m;
}

struct TrainArgs {
  std::string data, out = "run", config;
  std::string modules = "f,w,p";
  std::uint64_t seed = 1;
  int lf = -1, lw = -1, lp = -1;
  double alpha = -1, lr = -1;
  int phase1 = -1, phase2 = -1, hidden = -1, layers = -1, heads = -1, ffn = -1;
};

cfsum::TrainConfig build_train_config(const TrainArgs& a, int vocab_size, int image_dim) {
  cfsum::TrainConfig cfg;
  if (!a.config.empty()) cfg = cfsum::TrainConfig::from_json(read_file(a.config));
  cfg.model.vocab_size = vocab_size;
  cfg.model.image_dim = image_dim;
  cfg.modules = parse_modules(a.modules);
  cfg.seed = a.seed;
  if (a.lf > 0) cfg.model.lf = a.lf;
  if (a.lw > 0) cfg.model.lw = a.lw;
  if (a.lp > 0) cfg.model.lp = a.lp;
  if (a.alpha >= 0) cfg.model.alpha = a.alpha;
  if (a.lr > 0) cfg.learning_rate = a.lr;
  if (a.phase1 >= 0) cfg.phase1_epochs = a.phase1;
  if (a.phase2 >= 0) cfg.phase2_epochs = a.phase2;
  if (a.hidden > 0) cfg.model.hidden = a.hidden;
  if (a.layers > 0) cfg.model.layers = a.layers;
  if (a.heads > 0) cfg.model.heads = a.heads;
  if (a.ffn > 0) cfg.model.ffn = a.ffn;
  cfg.model.validate();
  return cfg;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--data", a.data, "training corpus (JSON Lines)")->required();
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--config", a.config, "training config JSON file");
  cmd->add_option("--seed", a.seed, "initialization / shuffle seed");
  cmd->add_option("--modules", a.modules, "enabled modules, comma list of f,w,p or 'none'");
  cmd->add_option("--lf", a.lf, "filter layer");
  cmd->add_option("--lw", a.lw, "word complement layer");
  cmd->add_option("--lp", a.lp, "phrase complement layer");
  cmd->add_option("--alpha", a.alpha, "consistency threshold");
  cmd->add_option("--lr", a.lr, "learning rate");
  cmd->add_option("--phase1-epochs", a.phase1, "generation-only epochs");
  cmd->add_option("--phase2-epochs", a.phase2, "full-objective epochs");
  cmd->add_option("--hidden", a.hidden, "hidden width");
  cmd->add_option("--layers", a.layers, "encoder layers");
  cmd->add_option("--heads", a.heads, "attention heads");
  cmd->add_option("--ffn", a.ffn, "feed-forward width");
}

int image_dim_of(const std::vector<cfsum::MultimodalSample>& samples) {
  for (const auto& s : samples)
    if (!s.image_regions.empty()) return static_cast<int>(s.image_regions[0].size());
  return 16;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coarse-to-fine multimodal summarization toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  cfsum::SynthConfig sc;
  std::string gen_out = "corpus.jsonl";
  gen->add_option("--n", sc.n, "sample count");
  gen->add_option("--seed", sc.seed, "generator seed");
  gen->add_option("--classes", sc.classes, "class-word pool size K");
  gen->add_option("--scenes", sc.scenes, "scene-word pool size");
  gen->add_option("--regions", sc.regions, "image regions per sample");
  gen->add_option("--feature-dim", sc.feature_dim, "image feature dimension");
  gen->add_option("--rho-noise", sc.rho_noise, "fraction of noise images");
  gen->add_option("--scene-in-text", sc.scene_in_text, "P(scene word appears in text)");
  gen->add_option("--noise-sigma", sc.noise_sigma, "feature noise sigma");
  gen->add_option("--out", gen_out, "output JSONL path");

  // train
  auto* tr = app.add_subcommand("train", "two-phase training");
  TrainArgs ta;
  add_train_flags(tr, ta);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "decode and score a corpus");
  std::string ev_model, ev_data, ev_out, ev_ckpt = "model.ckpt";
  bool ev_filter_off = false;
  ev->add_option("--model", ev_model, "trained model directory")->required();
  ev->add_option("--data", ev_data, "evaluation corpus (JSON Lines)")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file name");
  ev->add_flag("--filter-off", ev_filter_off, "disable the consistency filter");
  ev->add_option("--out", ev_out, "write the JSON report here (default stdout)");

  // mask-exp
  auto* mk = app.add_subcommand("mask-exp", "image masking-rate sweep");
  std::string mk_unig, mk_cfsum, mk_data, mk_out;
  std::vector<double> mk_rates{0.0, 0.25, 0.5, 0.75, 1.0};
  std::uint64_t mk_seed = 7;
  mk->add_option("--unig", mk_unig, "uni-modal baseline model directory")->required();
  mk->add_option("--cfsum", mk_cfsum, "full model directory")->required();
  mk->add_option("--data", mk_data, "evaluation corpus")->required();
  mk->add_option("--rates", mk_rates, "masking rates");
  mk->add_option("--seed", mk_seed, "mask selection seed");
  mk->add_option("--out", mk_out, "write the CSV here (default stdout)");

  // unpair-exp
  auto* up = app.add_subcommand("unpair-exp", "image-text unpairing experiment");
  std::string up_unig, up_cfsum, up_data, up_out;
  int up_pairs = 20, up_population = 100, up_samplings = 3;
  std::uint64_t up_seed = 7;
  up->add_option("--unig", up_unig, "uni-modal baseline model directory")->required();
  up->add_option("--cfsum", up_cfsum, "full model directory")->required();
  up->add_option("--data", up_data, "evaluation corpus")->required();
  up->add_option("--pairs", up_pairs, "pairs to exchange");
  up->add_option("--population", up_population, "subset size the pairs are drawn from");
  up->add_option("--samplings", up_samplings, "seeded repetitions");
  up->add_option("--seed", up_seed, "pair sampling seed");
  up->add_option("--out", up_out, "write the CSV here (default stdout)");

  // ablate
  auto* ab = app.add_subcommand("ablate", "module layer-placement sweep");
  TrainArgs aa;
  add_train_flags(ab, aa);
  std::string ab_eval, ab_out;
  std::vector<int> ab_lf_grid{2, 3, 4, 5, 6}, ab_windows{2, 3};
  ab->add_option("--eval-data", ab_eval, "held-out corpus (defaults to --data)");
  ab->add_option("--lf-grid", ab_lf_grid, "filter layers to try");
  ab->add_option("--windows", ab_windows, "gaps between module layers");
  ab->add_option("--csv", ab_out, "write the CSV here (default stdout)");

  // diag
  auto* dg = app.add_subcommand("diag", "per-sample diagnostics export");
  std::string dg_model, dg_data, dg_out, dg_ckpt = "model.ckpt";
  int dg_limit = 16;
  dg->add_option("--model", dg_model, "trained model directory")->required();
  dg->add_option("--data", dg_data, "corpus to diagnose")->required();
  dg->add_option("--checkpoint", dg_ckpt, "checkpoint file name");
  dg->add_option("--limit", dg_limit, "max samples to export");
  dg->add_option("--out", dg_out, "write the JSON here (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto corpus = cfsum::synth_generate(sc);
      cfsum::save_corpus_jsonl(gen_out, corpus.samples, corpus.vocab);
      std::cout << "wrote " << corpus.samples.size() << " samples to " << gen_out
                << " (vocab " << corpus.vocab.size() << ")\n";
    } else if (tr->parsed()) {
      auto corpus = cfsum::load_corpus(ta.data);
      auto cfg = build_train_config(ta, corpus.vocab.size(), image_dim_of(corpus.samples));
      auto result = cfsum::train(cfg, corpus, ta.out);
      std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
    } else if (ev->parsed()) {
      auto lm = cfsum::load_model_dir(ev_model, ev_ckpt);
      auto samples = cfsum::load_corpus_with_vocab(ev_data, lm.vocab,
                                                   lm.model.config().max_encode_len);
      auto report = cfsum::evaluate(lm.model, samples, !ev_filter_off);
      if (ev_out.empty()) std::cout << report.to_json() << "\n";
      else write_file(ev_out, report.to_json() + "\n");
      std::cerr << "rouge1 " << report.rouge1 << " rouge2 " << report.rouge2
                << " rougeL " << report.rougeL << " bleu " << report.bleu << "\n";
    } else if (mk->parsed()) {
      auto cf = cfsum::load_model_dir(mk_cfsum);
      auto un = cfsum::load_model_dir(mk_unig);
      auto samples = cfsum::load_corpus_with_vocab(mk_data, cf.vocab,
                                                   cf.model.config().max_encode_len);
      auto rows = cfsum::mask_experiment(un.model, cf.model, samples, mk_rates, mk_seed);
      auto csv = cfsum::mask_experiment_csv(rows);
      if (mk_out.empty()) std::cout << csv;
      else write_file(mk_out, csv);
    } else if (up->parsed()) {
      auto cf = cfsum::load_model_dir(up_cfsum);
      auto un = cfsum::load_model_dir(up_unig);
      auto samples = cfsum::load_corpus_with_vocab(up_data, cf.vocab,
                                                   cf.model.config().max_encode_len);
      auto rows = cfsum::unpair_experiment(un.model, cf.model, samples, up_pairs,
                                           up_population, up_samplings, up_seed);
      auto csv = cfsum::unpair_experiment_csv(rows);
      if (up_out.empty()) std::cout << csv;
      else write_file(up_out, csv);
    } else if (ab->parsed()) {
      auto corpus = cfsum::load_corpus(aa.data);
      auto cfg = build_train_config(aa, corpus.vocab.size(), image_dim_of(corpus.samples));
      auto eval_samples =
          ab_eval.empty() ? corpus.samples
                          : cfsum::load_corpus_with_vocab(ab_eval, corpus.vocab,
                                                          cfg.model.max_encode_len);
      auto rows = cfsum::layer_ablation(cfg, corpus, eval_samples, ab_lf_grid,
                                        ab_windows, aa.out);
      auto csv = cfsum::layer_ablation_csv(rows);
      if (ab_out.empty()) std::cout << csv;
      else write_file(ab_out, csv);
    } else if (dg->parsed()) {
      auto lm = cfsum::load_model_dir(dg_model, dg_ckpt);
      auto samples = cfsum::load_corpus_with_vocab(dg_data, lm.vocab,
                                                   lm.model.config().max_encode_len);
      if (static_cast<int>(samples.size()) > dg_limit) samples.resize(dg_limit);
      auto json = cfsum::export_diagnostics(lm.model, lm.vocab, samples);
      if (dg_out.empty()) std::cout << json << "\n";
      else write_file(dg_out, json + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
