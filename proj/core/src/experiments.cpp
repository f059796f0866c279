// core/src/experiments.cpp

#include "biaslattice/experiments.hpp"

#include <algorithm>
#include <limits>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace biaslattice {

namespace fs = std::filesystem;
using nlohmann::json;

CatalogPolicy CatalogPolicy::sampled(int k, uint64_t seed) {
  CatalogPolicy p;
  p.kind = Kind::kSampled;
  p.k = k;
  p.seed = seed;
  return p;
}

CatalogPolicy CatalogPolicy::random(int k, uint64_t seed) {
  CatalogPolicy p;
  p.kind = Kind::kRandom;
  p.k = k;
  p.seed = seed;
  return p;
}

CatalogPolicy CatalogPolicy::fixed_catalog(Catalog c) {
  CatalogPolicy p;
  p.kind = Kind::kFixed;
  p.fixed = std::move(c);
  return p;
}

Catalog catalog_for(const DecodeRun& run, const Utterance& utt, size_t index) {
  switch (run.catalogs.kind) {
    case CatalogPolicy::Kind::kNone:
      return {};
    case CatalogPolicy::Kind::kFixed:
      return run.catalogs.fixed;
    case CatalogPolicy::Kind::kSampled: {
      if (!run.lexicons) throw DataError("decode: sampled catalogs need lexicons");
      // True entities plus distractors; k counts the distractors so the
      // catalog grows as k + (true entities).
      int total = run.catalogs.k + static_cast<int>(utt.spans.size());
      return sample_catalog(utt, *run.lexicons, std::min(total, kMaxCatalogSize),
                            mix_seed(run.catalogs.seed, 0x706f6cULL, index));
    }
    case CatalogPolicy::Kind::kRandom:
      if (!run.lexicons) throw DataError("decode: random catalogs need lexicons");
      return sample_random_catalog(utt, *run.lexicons, run.catalogs.k,
                                   mix_seed(run.catalogs.seed, 0x726e64ULL, index));
  }
  return {};
}

std::vector<DecodedUtterance> decode_set(const DecodeRun& run, const std::vector<Utterance>& set) {
  if (!run.model) throw DataError("decode: no model");
  std::vector<DecodedUtterance> out;
  out.reserve(set.size());

  DecodeOptions opts;
  opts.beam = run.beam;
  opts.sf_lambda = run.sf_lambda.value_or(0.0);

  for (size_t i = 0; i < set.size(); ++i) {
    const Utterance& utt = set[i];
    Catalog catalog = catalog_for(run, utt, i);

    std::optional<BoostTrie> trie;
    if (run.sf_lambda) {
      if (!run.vocab) throw DataError("decode: shallow fusion needs a vocab");
      trie = build_boost_trie(catalog, *run.vocab, *run.sf_lambda);
    }
    const Catalog* cat_ptr =
        (run.catalogs.kind == CatalogPolicy::Kind::kNone) ? nullptr : &catalog;

    Nbest nbest = beam_decode(*run.model, run.adapters, cat_ptr, run.vocab,
                              trie ? &*trie : nullptr, utt.features, opts);
    DecodedUtterance d;
    d.utt_id = utt.utt_id;
    d.nbest = std::move(nbest);
    if (!d.nbest.hyps.empty() && run.vocab) d.top_text = run.vocab->decode(d.nbest.hyps[0].tokens);
    out.push_back(std::move(d));
  }
  return out;
}

EvalReport evaluate_decodes(const std::vector<Utterance>& refs,
                            const std::vector<DecodedUtterance>& decodes) {
  if (refs.size() != decodes.size()) throw DataError("evaluate_decodes: size mismatch");
  std::vector<std::string> hyps;
  hyps.reserve(decodes.size());
  for (const DecodedUtterance& d : decodes) hyps.push_back(d.top_text);
  return evaluate(refs, hyps);
}

void write_nbest_jsonl(const std::string& path, const std::vector<DecodedUtterance>& decodes,
                       const Vocab& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(strcat_all("cannot write nbest ", path));
  for (const DecodedUtterance& d : decodes) {
    json j;
    j["utt_id"] = d.utt_id;
    json hyps = json::array();
    for (const Nbest::Hyp& h : d.nbest.hyps) {
      json jh;
      jh["text"] = vocab.decode(h.tokens);
      jh["score"] = h.score;
      hyps.push_back(std::move(jh));
    }
    j["hyps"] = std::move(hyps);
    out << j.dump() << "\n";
  }
}

std::vector<DecodedUtterance> read_nbest_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(strcat_all("cannot open nbest ", path));
  std::vector<DecodedUtterance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    DecodedUtterance d;
    d.utt_id = j.at("utt_id").get<std::string>();
    for (const json& jh : j.at("hyps")) {
      Nbest::Hyp h;
      h.score = jh.at("score").get<double>();
      d.nbest.hyps.push_back(std::move(h));
      if (d.nbest.hyps.size() == 1) d.top_text = jh.at("text").get<std::string>();
    }
    out.push_back(std::move(d));
  }
  return out;
}

double pick_sf_lambda(const DecodeRun& base_run, const std::vector<Utterance>& dev_specific,
                      const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw DataError("pick_sf_lambda: empty sweep");
  double best_lambda = lambdas[0];
  double best_wer = std::numeric_limits<double>::infinity();
  for (double lambda : lambdas) {
    DecodeRun run = base_run;
    run.sf_lambda = lambda;
    EvalReport rep = evaluate_decodes(dev_specific, decode_set(run, dev_specific));
    if (rep.wer < best_wer) {
      best_wer = rep.wer;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(strcat_all("cannot open experiment spec ", path));
  json j = json::parse(in);
  ExperimentSpec s;
  s.name = j.value("name", "sweep");
  s.base_ckpt = j.at("base_ckpt").get<std::string>();
  s.adapters_ckpt = j.value("adapters_ckpt", "");
  if (j.contains("catalog_sizes")) s.catalog_sizes = j["catalog_sizes"].get<std::vector<int>>();
  if (j.contains("sf_lambdas")) s.sf_lambdas = j["sf_lambdas"].get<std::vector<double>>();
  s.dataset_dir = j.at("dataset_dir").get<std::string>();
  s.out_dir = j.at("out_dir").get<std::string>();
  s.beam = j.value("beam", 4);
  s.seed = j.value("seed", static_cast<uint64_t>(1));
  return s;
}

void write_svg_line_plot(const std::string& path, const std::string& title,
                         const std::vector<double>& xs,
                         const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const int w = 640, h = 420, ml = 60, mr = 160, mt = 40, mb = 50;
  double xmin = xs.front(), xmax = xs.back();
  double ymin = 0.0, ymax = 0.0;
  for (const auto& [name, ys] : series)
    for (double y : ys) {
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (ymax == ymin) ymax = ymin + 1.0;
  double pad = 0.08 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
  };
  auto py = [&](double y) {
    return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
  };

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(strcat_all("cannot write svg ", path));
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
  // Axes.
  out << "<line x1='" << ml << "' y1='" << py(ymin) << "' x2='" << ml << "' y2='" << py(ymax)
      << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  if (ymin < 0 && ymax > 0)
    out << "<line x1='" << ml << "' y1='" << py(0) << "' x2='" << w - mr << "' y2='" << py(0)
        << "' stroke='#cccccc' stroke-dasharray='4'/>\n";
  for (double x : xs) {
    out << "<text x='" << px(x) << "' y='" << h - mb + 18 << "' text-anchor='middle' font-size='11'>"
        << x << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    double y = ymin + (ymax - ymin) * i / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", y);
    out << "<text x='" << ml - 6 << "' y='" << py(y) + 4 << "' text-anchor='end' font-size='11'>"
        << buf << "</text>\n";
  }
  size_t si = 0;
  for (const auto& [name, ys] : series) {
    const char* color = colors[si % 6];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (size_t i = 0; i < xs.size() && i < ys.size(); ++i)
      out << px(xs[i]) << "," << py(ys[i]) << " ";
    out << "'/>\n";
    for (size_t i = 0; i < xs.size() && i < ys.size(); ++i)
      out << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i]) << "' r='3' fill='" << color
          << "'/>\n";
    out << "<text x='" << w - mr + 10 << "' y='" << mt + 16 * (si + 1) << "' font-size='12' fill='"
        << color << "'>" << name << "</text>\n";
    ++si;
  }
  out << "</svg>\n";
}

void write_run_manifest(const std::string& dir, const std::string& command,
                        const std::string& config_json, uint64_t seed) {
  fs::create_directories(dir);
  json j;
  j["command"] = command;
  json cfg = json::parse(config_json);
  j["config"] = cfg;
  // Config hash: FNV-1a over the canonical dump.
  std::string canon = cfg.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : canon) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  j["config_hash"] = checksum_hex(h);
  j["seed"] = seed;
  std::ofstream out(fs::path(dir) / "run_manifest.json", std::ios::trunc);
  out << j.dump(2) << "\n";
}

SweepResult run_sweep(const ExperimentSpec& spec) {
  Corpus corpus = load_corpus(spec.dataset_dir);
  TransducerModel model = load_transducer(spec.base_ckpt);
  std::optional<ContextualAdapters> adapters;
  if (!spec.adapters_ckpt.empty()) adapters = load_adapters(spec.adapters_ckpt);

  fs::create_directories(spec.out_dir);

  DecodeRun base_run;
  base_run.model = &model;
  base_run.vocab = &corpus.vocab;
  base_run.lexicons = &corpus.lexicons;
  base_run.beam = spec.beam;
  base_run.catalogs = CatalogPolicy::none();

  // Baseline reports (no adapters, no SF).
  EvalReport base_spec = evaluate_decodes(corpus.test_specific, decode_set(base_run, corpus.test_specific));
  EvalReport base_gen = evaluate_decodes(corpus.test_general, decode_set(base_run, corpus.test_general));

  // SF weight from the dev specific subset at the default catalog size.
  std::vector<Utterance> dev_specific;
  for (const Utterance& u : corpus.dev)
    if (u.is_specific()) dev_specific.push_back(u);
  DecodeRun sf_probe = base_run;
  sf_probe.catalogs = CatalogPolicy::sampled(16, spec.seed);
  SweepResult result;
  result.sf_lambda = pick_sf_lambda(sf_probe, dev_specific, spec.sf_lambdas);

  for (int size : spec.catalog_sizes) {
    SweepPoint point;
    point.catalog_size = size;

    if (adapters) {
      DecodeRun run = base_run;
      run.adapters = &*adapters;
      run.catalogs = CatalogPolicy::sampled(size, spec.seed);
      EvalReport rs = evaluate_decodes(corpus.test_specific, decode_set(run, corpus.test_specific));
      EvalReport rg = evaluate_decodes(corpus.test_general, decode_set(run, corpus.test_general));
      point.adapter_werr_specific = werr_value(base_spec.wer, rs.wer);
      point.adapter_werr_general = werr_value(base_gen.wer, rg.wer);
    }
    {
      DecodeRun run = base_run;
      run.catalogs = CatalogPolicy::sampled(size, spec.seed);
      run.sf_lambda = result.sf_lambda;
      EvalReport rs = evaluate_decodes(corpus.test_specific, decode_set(run, corpus.test_specific));
      EvalReport rg = evaluate_decodes(corpus.test_general, decode_set(run, corpus.test_general));
      point.sf_werr_specific = werr_value(base_spec.wer, rs.wer);
      point.sf_werr_general = werr_value(base_gen.wer, rg.wer);
    }
    result.points.push_back(point);
  }

  // CSV mirroring the WERR-vs-catalog-size figure axes.
  {
    std::ofstream csv(fs::path(spec.out_dir) / "sweep.csv", std::ios::trunc);
    csv << "catalog_size,adapter_werr_specific,adapter_werr_general,sf_werr_specific,sf_werr_general\n";
    for (const SweepPoint& p : result.points)
      csv << p.catalog_size << "," << p.adapter_werr_specific << "," << p.adapter_werr_general << ","
          << p.sf_werr_specific << "," << p.sf_werr_general << "\n";
  }
  {
    std::vector<double> xs;
    std::vector<double> a_spec, a_gen, s_spec, s_gen;
    for (const SweepPoint& p : result.points) {
      xs.push_back(p.catalog_size);
      a_spec.push_back(p.adapter_werr_specific);
      a_gen.push_back(p.adapter_werr_general);
      s_spec.push_back(p.sf_werr_specific);
      s_gen.push_back(p.sf_werr_general);
    }
    std::vector<std::pair<std::string, std::vector<double>>> series;
    if (adapters) {
      series.emplace_back("adapters specific", a_spec);
      series.emplace_back("adapters general", a_gen);
    }
    series.emplace_back("SF specific", s_spec);
    series.emplace_back("SF general", s_gen);
    write_svg_line_plot((fs::path(spec.out_dir) / "sweep.svg").string(), "WERR vs catalog size", xs,
                        series);
  }
  {
    std::vector<std::pair<std::string, std::vector<std::string>>> rows;
    auto fmt = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%+.2f", 100.0 * v);
      return std::string(buf);
    };
    for (const SweepPoint& p : result.points) {
      rows.emplace_back(strcat_all("K=", p.catalog_size),
                        std::vector<std::string>{fmt(p.adapter_werr_specific),
                                                 fmt(p.adapter_werr_general), fmt(p.sf_werr_specific),
                                                 fmt(p.sf_werr_general)});
    }
    std::ofstream tables(fs::path(spec.out_dir) / "tables.txt", std::ios::trunc);
    tables << render_table(strcat_all("Sweep '", spec.name, "' (WERR %, SF lambda=", result.sf_lambda, ")"),
                           {"adapters spec", "adapters gen", "SF spec", "SF gen"}, rows);
  }

  json cfg;
  cfg["name"] = spec.name;
  cfg["base_ckpt"] = spec.base_ckpt;
  cfg["adapters_ckpt"] = spec.adapters_ckpt;
  cfg["catalog_sizes"] = spec.catalog_sizes;
  cfg["sf_lambdas"] = spec.sf_lambdas;
  cfg["dataset_dir"] = spec.dataset_dir;
  cfg["beam"] = spec.beam;
  write_run_manifest(spec.out_dir, "sweep", cfg.dump(), spec.seed);
  return result;
}

}  // namespace biaslattice
