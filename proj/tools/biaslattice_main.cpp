// tools/biaslattice_main.cpp
//
// Operator CLI: data generation, training, decoding, evaluation and
// experiment sweeps. Every command writes a manifest next to its artifacts;
// BIASLATTICE_SEED overrides config seeds.
//
// Exit codes:
//   0 success
//   2 usage error (unknown command or flags)
//   3 missing input file or directory
//   4 incompatible or corrupt checkpoint
//   5 invalid data or configuration
//   6 internal error

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "biaslattice/checkpoint.hpp"
#include "biaslattice/data.hpp"
#include "biaslattice/decode.hpp"
#include "biaslattice/eval.hpp"
#include "biaslattice/experiments.hpp"
#include "biaslattice/train.hpp"
#include "biaslattice/transducer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace biaslattice;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitBadCheckpoint = 4;
constexpr int kExitDataError = 5;
constexpr int kExitInternal = 6;

std::optional<uint64_t> env_seed_override() {
  const char* v = std::getenv("BIASLATTICE_SEED");
  if (!v || !*v) return std::nullopt;
  return std::strtoull(v, nullptr, 10);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError(strcat_all("cannot open ", path));
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void require_exists(const std::string& path) {
  if (!fs::exists(path)) {
    std::cerr << "missing input: " << path << "\n";
    std::exit(kExitMissingFile);
  }
}

// Manifest for single-file outputs.
void write_file_manifest(const std::string& out_file, const std::string& command,
                         const std::string& config_json, uint64_t seed) {
  json j;
  j["command"] = command;
  j["config"] = json::parse(config_json);
  std::string canon = j["config"].dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : canon) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  j["config_hash"] = checksum_hex(h);
  j["seed"] = seed;
  std::ofstream f(out_file + ".manifest.json", std::ios::trunc);
  f << j.dump(2) << "\n";
}

const std::vector<Utterance>& pick_split(const Corpus& corpus, const std::string& split) {
  if (split == "pretrain") return corpus.pretrain;
  if (split == "mixed") return corpus.mixed;
  if (split == "dev") return corpus.dev;
  if (split == "test-general") return corpus.test_general;
  if (split == "test-specific") return corpus.test_specific;
  throw DataError(strcat_all("unknown split '", split, "'"));
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  SynthConfig cfg = config_path.empty() ? SynthConfig{} : SynthConfig::from_json(slurp(config_path));
  if (auto seed = env_seed_override()) cfg.seed = *seed;
  Corpus corpus = gen_corpus(cfg);
  save_corpus(out_dir, corpus);
  write_run_manifest(out_dir, "gen-data", cfg.to_json(), cfg.seed);
  std::cout << "wrote corpus to " << out_dir << " (vocab " << corpus.vocab.size() << ", pretrain "
            << corpus.pretrain.size() << ", mixed " << corpus.mixed.size() << ")\n";
  return 0;
}

int cmd_pretrain(const std::string& train_config_path, const std::string& model_config_path,
                 const std::string& data_dir, const std::string& out_ckpt) {
  require_exists(data_dir);
  Corpus corpus = load_corpus(data_dir);

  TrainConfig cfg = train_config_path.empty() ? TrainConfig{}
                                              : TrainConfig::from_json(slurp(train_config_path));
  cfg.mode = TrainMode::kPretrain;
  if (auto seed = env_seed_override()) cfg.seed = *seed;

  TransducerConfig mcfg;
  if (!model_config_path.empty()) {
    mcfg = TransducerConfig::from_json(slurp(model_config_path));
  }
  mcfg.feature_dim = corpus.cfg.feature_dim;
  mcfg.vocab_size = static_cast<int64_t>(corpus.vocab.size());

  TransducerModel model = TransducerModel::init(mcfg, cfg.seed);
  std::vector<Utterance> dev_general;
  for (const Utterance& u : corpus.dev)
    if (!u.is_specific()) dev_general.push_back(u);

  std::ofstream log_out(out_ckpt + ".train.jsonl", std::ios::trunc);
  auto on_epoch = [&](const EpochLog& log) {
    json j;
    j["epoch"] = log.epoch;
    j["train_loss"] = log.train_loss;
    j["dev_loss"] = log.dev_loss;
    j["lr"] = log.lr;
    j["frozen_checksum"] = nullptr;
    log_out << j.dump() << "\n";
    std::cout << "epoch " << log.epoch << " train " << log.train_loss << " dev " << log.dev_loss
              << "\n";
  };
  TrainResult result = pretrain(cfg, model, corpus.pretrain, dev_general, on_epoch);
  save_transducer(out_ckpt, model);
  write_run_manifest(out_ckpt, "pretrain", cfg.to_json(), cfg.seed);
  std::cout << "saved " << out_ckpt << " (best dev " << result.best_dev_loss << " at epoch "
            << result.best_epoch << ")\n";
  return 0;
}

int cmd_train_adapters(const std::string& base_ckpt, const std::string& variant_name,
                       const std::string& mode_name, const std::string& data_dir,
                       const std::string& train_config_path, const std::string& adapter_config_path,
                       const std::string& out_ckpt) {
  require_exists(base_ckpt);
  require_exists(data_dir);
  Corpus corpus = load_corpus(data_dir);
  TransducerModel model = load_transducer(base_ckpt);

  auto variant = query_variant_from_name(variant_name);
  if (!variant) throw DataError(strcat_all("unknown variant '", variant_name, "'"));
  auto mode = train_mode_from_name(mode_name);
  if (!mode || *mode == TrainMode::kPretrain)
    throw DataError(strcat_all("mode must be adapter or full-finetune, got '", mode_name, "'"));

  TrainConfig cfg = train_config_path.empty() ? TrainConfig{}
                                              : TrainConfig::from_json(slurp(train_config_path));
  cfg.mode = *mode;
  if (auto seed = env_seed_override()) cfg.seed = *seed;

  AdapterConfig acfg;
  if (!adapter_config_path.empty()) acfg = AdapterConfig::from_json(slurp(adapter_config_path));
  acfg.variant = *variant;
  acfg.site_dim = model.cfg.joint_dim;
  acfg.vocab_size = model.cfg.vocab_size;

  ContextualAdapters adapters = ContextualAdapters::init(acfg, cfg.seed);
  std::ofstream log_out(out_ckpt + ".train.jsonl", std::ios::trunc);
  auto on_epoch = [&](const EpochLog& log) {
    json j;
    j["epoch"] = log.epoch;
    j["train_loss"] = log.train_loss;
    j["dev_loss"] = log.dev_loss;
    j["lr"] = log.lr;
    j["frozen_checksum"] = log.frozen_checksum;
    log_out << j.dump() << "\n";
    std::cout << "epoch " << log.epoch << " train " << log.train_loss << " dev " << log.dev_loss
              << "\n";
  };

  TrainResult result;
  if (cfg.mode == TrainMode::kAdapter) {
    result = train_adapters(cfg, model, adapters, corpus, on_epoch);
  } else {
    result = full_finetune(cfg, model, adapters, corpus, on_epoch);
    save_transducer(out_ckpt + ".base", model);  // the updated base
  }
  save_adapters(out_ckpt, adapters);
  write_run_manifest(out_ckpt, "train-adapters", cfg.to_json(), cfg.seed);

  ParameterCensus census = parameter_census(adapters, model);
  std::cout << "saved " << out_ckpt << " (best dev " << result.best_dev_loss << " at epoch "
            << result.best_epoch << "; adapter params " << census.adapter_params << ", "
            << 100.0 * census.fraction << "% of total)\n";
  return 0;
}

int cmd_decode(const std::string& base_ckpt, const std::string& adapters_ckpt,
               const std::string& catalog_path, double sf_lambda, bool sf_on, int beam,
               const std::string& data_dir, const std::string& split, int sampled_k,
               bool random_catalogs, uint64_t catalog_seed, const std::string& out_path) {
  require_exists(base_ckpt);
  require_exists(data_dir);
  Corpus corpus = load_corpus(data_dir);
  TransducerModel model = load_transducer(base_ckpt);
  std::optional<ContextualAdapters> adapters;
  if (!adapters_ckpt.empty()) {
    require_exists(adapters_ckpt);
    adapters = load_adapters(adapters_ckpt);
  }

  DecodeRun run;
  run.model = &model;
  run.adapters = adapters ? &*adapters : nullptr;
  run.vocab = &corpus.vocab;
  run.lexicons = &corpus.lexicons;
  run.beam = beam;
  if (sf_on) run.sf_lambda = sf_lambda;

  uint64_t seed = env_seed_override().value_or(catalog_seed);
  if (!catalog_path.empty()) {
    require_exists(catalog_path);
    run.catalogs = CatalogPolicy::fixed_catalog(read_catalog_jsonl(catalog_path));
  } else if (random_catalogs) {
    run.catalogs = CatalogPolicy::random(sampled_k, seed);
  } else if (sampled_k > 0) {
    run.catalogs = CatalogPolicy::sampled(sampled_k, seed);
  }

  const std::vector<Utterance>& set = pick_split(corpus, split);
  std::vector<DecodedUtterance> decodes = decode_set(run, set);
  write_nbest_jsonl(out_path, decodes, corpus.vocab);

  json cfg;
  cfg["base"] = base_ckpt;
  cfg["adapters"] = adapters_ckpt;
  cfg["catalog"] = catalog_path;
  cfg["sf_lambda"] = sf_on ? json(sf_lambda) : json(nullptr);
  cfg["beam"] = beam;
  cfg["split"] = split;
  cfg["sampled_k"] = sampled_k;
  cfg["random_catalogs"] = random_catalogs;
  write_file_manifest(out_path, "decode", cfg.dump(), seed);
  std::cout << "decoded " << set.size() << " utterances -> " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& refs_dir, const std::string& split, const std::string& hyps_path,
             const std::string& baseline_path, const std::string& out_path) {
  require_exists(refs_dir);
  require_exists(hyps_path);
  Corpus corpus = load_corpus(refs_dir);
  const std::vector<Utterance>& refs = pick_split(corpus, split);
  std::vector<DecodedUtterance> decodes = read_nbest_jsonl(hyps_path);

  std::map<std::string, const DecodedUtterance*> by_id;
  for (const DecodedUtterance& d : decodes) by_id[d.utt_id] = &d;
  std::vector<std::string> hyps;
  for (const Utterance& u : refs) {
    auto it = by_id.find(u.utt_id);
    if (it == by_id.end()) throw DataError(strcat_all("no hypothesis for ", u.utt_id));
    hyps.push_back(it->second->top_text);
  }

  EvalReport report = evaluate(refs, hyps);
  json out = json::parse(report.to_json());
  if (!baseline_path.empty()) {
    require_exists(baseline_path);
    EvalReport baseline = EvalReport::from_json(slurp(baseline_path));
    WerrReport rel = werr(baseline, report);
    json jw;
    jw["werr"] = rel.werr;
    jw["ne_werr"] = rel.ne_werr;
    for (const auto& [type, v] : rel.ne_werr_by_type) jw["ne_werr_by_type"][entity_type_name(type)] = v;
    out["vs_baseline"] = std::move(jw);
  }
  std::ofstream f(out_path, std::ios::trunc);
  f << out.dump(2) << "\n";

  json cfg;
  cfg["refs"] = refs_dir;
  cfg["split"] = split;
  cfg["hyps"] = hyps_path;
  cfg["baseline"] = baseline_path;
  write_file_manifest(out_path, "eval", cfg.dump(), 0);
  std::cout << "WER " << report.wer << " over " << report.utterances << " utterances -> " << out_path
            << "\n";
  return 0;
}

int cmd_sweep(const std::string& spec_path) {
  require_exists(spec_path);
  ExperimentSpec spec = ExperimentSpec::from_json_file(spec_path);
  if (auto seed = env_seed_override()) spec.seed = *seed;
  require_exists(spec.base_ckpt);
  require_exists(spec.dataset_dir);
  SweepResult result = run_sweep(spec);
  std::cout << "sweep '" << spec.name << "' done (sf lambda " << result.sf_lambda << "); artifacts in "
            << spec.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"biaslattice: contextual-adapter biasing for a toy neural transducer"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  std::string gen_config, gen_out;
  gen->add_option("--config", gen_config, "SynthConfig JSON file");
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "pretrain the base transducer");
  std::string pre_config, pre_model_config, pre_data, pre_out;
  pre->add_option("--config", pre_config, "TrainConfig JSON file");
  pre->add_option("--model-config", pre_model_config, "TransducerConfig JSON file");
  pre->add_option("--data", pre_data, "dataset directory")->required();
  pre->add_option("--out", pre_out, "output checkpoint directory")->required();

  // train-adapters
  auto* tad = app.add_subcommand("train-adapters", "train adapters on the mixed set");
  std::string tad_base, tad_variant, tad_mode = "adapter", tad_data, tad_config, tad_acfg, tad_out;
  tad->add_option("--base", tad_base, "base checkpoint directory")->required();
  tad->add_option("--variant", tad_variant, "enc | pred | enc-pred | joint")->required();
  tad->add_option("--mode", tad_mode, "adapter | full-finetune");
  tad->add_option("--data", tad_data, "dataset directory")->required();
  tad->add_option("--config", tad_config, "TrainConfig JSON file");
  tad->add_option("--adapter-config", tad_acfg, "AdapterConfig JSON file");
  tad->add_option("--out", tad_out, "output adapter checkpoint directory")->required();

  // decode
  auto* dec = app.add_subcommand("decode", "beam-decode a dataset split");
  std::string dec_base, dec_adapters, dec_catalog, dec_in, dec_split = "test-specific", dec_out;
  double dec_lambda = 0.0;
  int dec_beam = 4;
  int dec_k = 0;
  bool dec_random = false;
  uint64_t dec_seed = 1;
  dec->add_option("--base", dec_base, "base checkpoint directory")->required();
  dec->add_option("--adapters", dec_adapters, "adapter checkpoint directory");
  dec->add_option("--catalog", dec_catalog, "fixed catalog JSONL file");
  auto* lambda_opt = dec->add_option("--sf-lambda", dec_lambda, "shallow fusion boost weight");
  dec->add_option("--beam", dec_beam, "beam width");
  dec->add_option("--in", dec_in, "dataset directory")->required();
  dec->add_option("--split", dec_split, "pretrain | mixed | dev | test-general | test-specific");
  dec->add_option("--sampled-catalogs", dec_k, "per-utterance catalogs with this many distractors");
  dec->add_flag("--random-catalogs", dec_random, "per-utterance distractor-only catalogs (ablation)");
  dec->add_option("--catalog-seed", dec_seed, "seed for per-utterance catalog sampling");
  dec->add_option("--out", dec_out, "output n-best JSONL path")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "score hypotheses against references");
  std::string ev_refs, ev_split = "test-specific", ev_hyps, ev_baseline, ev_out;
  ev->add_option("--refs", ev_refs, "dataset directory with references")->required();
  ev->add_option("--split", ev_split, "which split the hypotheses decode");
  ev->add_option("--hyps", ev_hyps, "n-best JSONL from decode")->required();
  ev->add_option("--baseline", ev_baseline, "baseline report.json for WERR");
  ev->add_option("--out", ev_out, "output report.json path")->required();

  // sweep
  auto* sw = app.add_subcommand("sweep", "catalog-size sweep from an experiment spec");
  std::string sw_spec;
  sw->add_option("--spec", sw_spec, "ExperimentSpec JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_config, gen_out);
    if (pre->parsed()) return cmd_pretrain(pre_config, pre_model_config, pre_data, pre_out);
    if (tad->parsed())
      return cmd_train_adapters(tad_base, tad_variant, tad_mode, tad_data, tad_config, tad_acfg,
                                tad_out);
    if (dec->parsed())
      return cmd_decode(dec_base, dec_adapters, dec_catalog, dec_lambda, lambda_opt->count() > 0,
                        dec_beam, dec_in, dec_split, dec_k, dec_random, dec_seed, dec_out);
    if (ev->parsed()) return cmd_eval(ev_refs, ev_split, ev_hyps, ev_baseline, ev_out);
    if (sw->parsed()) return cmd_sweep(sw_spec);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitBadCheckpoint;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
