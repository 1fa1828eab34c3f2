// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfr/config.hpp"
#include "mfr/errors.hpp"
#include "mfr/evaluation.hpp"
#include "mfr/matching.hpp"
#include "mfr/storage.hpp"
#include "mfr/synthgen.hpp"
#include "mfr/trainer.hpp"

namespace mfr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Held-out streams for `gen --samples`, disjoint from training batches.
constexpr std::uint64_t kSampleBatchBase = 1ULL << 38;
constexpr std::size_t kSampleChunk = 8192;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
      return kExitIo;
    case ErrorKind::kNumeric:
    case ErrorKind::kCalibration:
    case ErrorKind::kEmptyWindow:
    case ErrorKind::kCorrelation:
      return kExitNumeric;
    case ErrorKind::kConfig:
    case ErrorKind::kDimension:
    case ErrorKind::kCheckpoint:
      return kExitConfig;
  }
  return kExitIo;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

bool known_key(const std::string& key) {
  const auto keys = config_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
}

// Sets a dotted key ("data.lambda") inside doc.
void set_key(json& doc, const std::string& key, json value) {
  if (!known_key(key)) throw ConfigError("unknown config key '" + key + "'");
  json* node = &doc;
  std::size_t start = 0;
  for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
    json& child = (*node)[key.substr(start, dot - start)];
    if (child.is_null()) child = json::object();
    node = &child;
  }
  (*node)[key.substr(start)] = std::move(value);
}

// "key=value"; value is JSON when it parses as JSON, a string otherwise.
void apply_assignment(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  set_key(doc, key, std::move(value));
}

std::string keys_footer() {
  std::ostringstream os;
  os << "Presets:";
  for (auto name : kPresetNames) os << ' ' << name;
  os << "\n\nConfig keys (JSON file via --config; override any with --set key=value):\n";
  for (const auto& k : config_keys()) {
    os << "  " << k.name;
    for (std::size_t pad = k.name.size(); pad < 24; ++pad) os << ' ';
    os << ' ' << k.description << '\n';
  }
  return os.str();
}

/// Options shared by gen and train that map onto config keys.
struct ConfigFlags {
  std::string preset, config;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::size_t> groups_per_sample;
  std::vector<std::string> assignments;

  void add_to(CLI::App* app) {
    app->add_option("--preset", preset, "base preset")
        ->check(CLI::IsMember(std::vector<std::string>(std::begin(kPresetNames),
                                                       std::end(kPresetNames))));
    app->add_option("--config", config, "JSON config file");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--lambda", lambda, "synthetic decay rate in (0,1)");
    app->add_option("--groups-per-sample", groups_per_sample, "synthetic groups per sample");
    app->add_option("--set", assignments, "override a config key, e.g. --set reinit.threshold=1.2");
  }

  json document(const fs::path& fallback_config = {}) const {
    json doc = json::object();
    if (!config.empty())
      doc = read_json_file(config);
    else if (!fallback_config.empty())
      doc = read_json_file(fallback_config);
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (!preset.empty()) doc["preset"] = preset;
    if (seed) set_key(doc, "seed", *seed);
    if (lambda) set_key(doc, "data.lambda", *lambda);
    if (groups_per_sample) set_key(doc, "data.groups_per_sample", *groups_per_sample);
    for (const auto& a : assignments) apply_assignment(doc, a);
    return doc;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// ---- gen --------------------------------------------------------------------------

struct GenArgs {
  ConfigFlags flags;
  std::string out;
  std::optional<std::size_t> dim, n_features, groups, per_group;
  std::uint64_t samples = 0;
};

int run_gen(const GenArgs& a, std::ostream& out) {
  json doc = a.flags.document();
  set_key(doc, "data.source", "synthetic");
  if (a.dim) set_key(doc, "data.d", *a.dim);
  if (a.n_features) set_key(doc, "data.G", *a.n_features);
  if (a.groups) set_key(doc, "data.E", *a.groups);
  if (a.per_group) set_key(doc, "data.K", *a.per_group);
  const TrainConfig cfg = parse_config(doc);
  const GenConfig& g = cfg.data.gen;

  const fs::path dir(a.out);
  ensure_dir(dir);
  const FeatureMatrix fm = sample_feature_matrix(g);
  write_features(dir / "features.mfrf", fm);
  out << "features: d=" << g.d << " G=" << g.G << " E=" << g.E << " K=" << g.K
      << " lambda=" << fmt(g.lambda) << " groups_per_sample=" << g.groups_per_sample
      << " seed=" << g.seed << " -> " << (dir / "features.mfrf").string() << '\n';
  if (a.samples > 0) {
    ActivationWriter w(dir / "samples.mfra", g.d);
    for (std::uint64_t done = 0, chunk = 0; done < a.samples; ++chunk) {
      const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(kSampleChunk, a.samples - done));
      w.append(sample_batch_at(fm, n, kSampleBatchBase + chunk).X);
      done += n;
    }
    w.finish();
    out << "samples: " << a.samples << " rows -> " << (dir / "samples.mfra").string() << '\n';
  }
  return kExitOk;
}

// ---- train ------------------------------------------------------------------------

struct TrainArgs {
  ConfigFlags flags;
  std::string out, mode, alpha, activations, resume, precision;
  std::optional<std::size_t> n_saes, hidden, k, batch_size, workers, warmup, log_every,
      checkpoint_every;
  std::optional<std::uint64_t> max_steps, total_examples, resume_step;
  std::optional<double> lr;
  bool quiet = false;
};

std::string step_suffix(std::optional<std::uint64_t> step) {
  if (!step) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "_step_%08llu", static_cast<unsigned long long>(*step));
  return buf;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  const fs::path resume_dir(a.resume);
  json doc = a.flags.document(a.resume.empty() ? fs::path{} : resume_dir / "config.json");
  if (!a.mode.empty()) set_key(doc, "mode", a.mode);
  if (a.n_saes) {
    set_key(doc, "n_saes", *a.n_saes);
    // per-SAE arrays from a preset or file no longer fit; broadcast the first entry
    for (const char* key : {"hidden", "k", "init_seeds"})
      if (doc.contains(key) && doc[key].is_array() && doc[key].size() != *a.n_saes) {
        if (doc[key].empty())
          doc.erase(key);
        else
          doc[key] = doc[key][0];
      }
  }
  if (a.hidden) set_key(doc, "hidden", *a.hidden);
  if (a.k) set_key(doc, "k", *a.k);
  if (a.batch_size) set_key(doc, "batch_size", *a.batch_size);
  if (a.max_steps) set_key(doc, "max_steps", *a.max_steps);
  if (a.total_examples) set_key(doc, "total_examples", *a.total_examples);
  if (a.lr) set_key(doc, "learning_rate", *a.lr);
  if (a.warmup) set_key(doc, "penalty.warmup_steps", *a.warmup);
  if (a.log_every) set_key(doc, "log_every", *a.log_every);
  if (a.checkpoint_every) set_key(doc, "checkpoint_every", *a.checkpoint_every);
  if (!a.precision.empty()) set_key(doc, "checkpoint_precision", a.precision);
  if (!a.alpha.empty()) {
    if (a.alpha == "calibrated") {
      set_key(doc, "penalty.alpha", "calibrated");
    } else {
      char* end = nullptr;
      const double v = std::strtod(a.alpha.c_str(), &end);
      if (end == a.alpha.c_str() || *end != '\0')
        throw ConfigError("--alpha must be a number or 'calibrated', got '" + a.alpha + "'");
      set_key(doc, "penalty.alpha", v);
    }
  }
  if (!a.activations.empty()) {
    set_key(doc, "data.source", "activations");
    set_key(doc, "data.path", a.activations);
  }
  if (a.workers) {
    set_key(doc, "workers", *a.workers);
  } else if (const char* env = std::getenv("MFR_WORKERS"); env && *env) {
    char* end = nullptr;
    const long long w = std::strtoll(env, &end, 10);
    if (*end != '\0' || w < 1) throw ConfigError("MFR_WORKERS must be a positive integer");
    set_key(doc, "workers", w);
  }
  const TrainConfig cfg = parse_config(doc);

  const fs::path dir(a.out);
  ensure_dir(dir);
  TrainOptions opts{dir, !a.quiet, false};
  std::optional<Trainer> trainer;
  if (a.resume.empty()) {
    std::error_code ec;
    fs::remove(dir / "metrics.csv", ec);  // a fresh run starts a fresh log
    trainer.emplace(cfg, opts);
  } else {
    const std::string suffix = step_suffix(a.resume_step);
    std::vector<fs::path> ckpts;
    for (std::size_t i = 0; i < cfg.n_saes(); ++i)
      ckpts.push_back(resume_dir / ("sae_" + std::to_string(i) + suffix + ".mfrc"));
    trainer.emplace(Trainer::resume(cfg, ckpts, resume_dir / ("state" + suffix + ".json"), opts));
  }
  out << "training " << cfg.n_saes() << " SAE(s), mode=" << to_string(cfg.mode)
      << ", steps=" << cfg.total_steps() << ", batch=" << cfg.batch_size << '\n';
  trainer->run();
  const auto& st = trainer->state();
  if (st.alpha) out << "alpha: " << fmt(*st.alpha) << '\n';
  out << "final recon_loss:";
  for (std::size_t i = 0; i < st.saes.size(); ++i)
    out << " sae" << i << '=' << fmt(trainer->last_losses()[i]);
  out << '\n';
  out << "outputs: " << dir.string() << " (metrics.csv, sae_*.mfrc, state.json)\n";
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> ckpts;
  std::string features, activations, out;
  bool no_ground_truth = false;
  std::size_t samples = 10000;
  std::size_t groups_per_sample = 1;
  double tau_hi = 0.8, tau_lo = 0.4;
};

std::vector<SaeParams> load_params(const std::vector<std::string>& paths) {
  std::vector<SaeParams> out;
  for (const auto& p : paths) out.push_back(read_checkpoint(p).params);
  return out;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  if (a.features.empty() && !a.no_ground_truth)
    throw ConfigError(
        "ground-truth metrics need the feature file: pass --features <file.mfrf>, or "
        "--no-ground-truth to skip them");
  const auto params = load_params(a.ckpts);
  std::optional<FeatureMatrix> fm;
  if (!a.features.empty()) {
    fm = read_features(a.features);
    fm->config.groups_per_sample = a.groups_per_sample;
    fm->config.validate();
  }
  std::vector<Matrix> dicts;
  for (const auto& p : params) dicts.push_back(p.W);

  std::vector<std::vector<double>> freqs;
  std::optional<Matrix> X;
  if (!a.activations.empty()) {
    ActivationReader r(a.activations);
    X = r.read_rows(0, std::min(a.samples, r.rows()));
  } else if (fm) {
    X = sample_batch_at(*fm, a.samples, kEvalBatchIndex).X;
  }
  if (X)
    for (const auto& p : params) freqs.push_back(count_activations(p, *X).frequencies());

  const EvalReport rep =
      evaluate(dicts, fm ? &*fm : nullptr, freqs, EvalOptions{a.tau_hi, a.tau_lo});
  const fs::path dir(a.out);
  emit_report(rep, dir);

  if (!rep.gt_mmcs.empty()) {
    out << "gt_mmcs:";
    for (std::size_t i = 0; i < rep.gt_mmcs.size(); ++i) out << " sae" << i << '=' << fmt(rep.gt_mmcs[i]);
    out << '\n';
  }
  if (dicts.size() >= 2) {
    out << "pairwise_mmcs(0,1): " << fmt(rep.pairwise_mmcs(0, 1)) << '\n';
    out << "l2_aligned(0,1): " << fmt(rep.l2_aligned(0, 1)) << "  l2_raw(0,1): "
        << fmt(rep.l2_raw(0, 1)) << '\n';
  }
  if (rep.pearson_r) out << "pearson_r: " << fmt(*rep.pearson_r) << '\n';
  if (!rep.cluster_count.empty()) {
    out << "cluster_count:";
    for (std::size_t i = 0; i < rep.cluster_count.size(); ++i)
      out << " sae" << i << '=' << rep.cluster_count[i];
    out << '\n';
  }
  out << "wrote " << (dir / "report.json").string() << " and " << (dir / "scatter.csv").string()
      << '\n';
  return kExitOk;
}

// ---- match ------------------------------------------------------------------------

struct MatchArgs {
  std::vector<std::string> ckpts;
  std::string out;
};

int run_match(const MatchArgs& a, std::ostream& out) {
  if (a.ckpts.size() != 2) throw ConfigError("match needs exactly two --ckpt files");
  const auto params = load_params(a.ckpts);
  if (params[0].input_dim() != params[1].input_dim())
    throw DimensionError("match: checkpoints have different input dimensions");
  const Matrix table = cosine_table(params[0].W, params[1].W);
  const Assignment asg = hungarian(table);
  const auto best = row_maxima(table);

  const fs::path dir(a.out);
  ensure_dir(dir);
  const fs::path path = dir / "assignment.csv";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << "feature_a,feature_b,similarity,argmax_b,argmax_similarity\n";
  char buf[128];
  for (const Pair& p : asg.pairs) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%zu,%.17g\n", p.row, p.col, p.similarity,
                  best[p.row].index, best[p.row].similarity);
    f << buf;
  }
  f.flush();
  if (!f) throw IoError("failed writing " + path.string());
  const double mean_sim = asg.pairs.empty() ? 0.0 : asg.total() / static_cast<double>(asg.pairs.size());
  out << "pairs: " << asg.pairs.size() << "  mean assigned similarity: " << fmt(mean_sim)
      << "  mmcs: " << fmt(mmcs(params[0].W, params[1].W)) << '\n';
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

// ---- report -----------------------------------------------------------------------

struct ReportArgs {
  std::string in, metrics, out;
};

int run_report(const ReportArgs& a, std::ostream& out) {
  std::ostringstream os;
  if (!a.in.empty()) {
    const EvalReport rep = read_report(a.in);
    const std::size_t n = rep.pairwise_mmcs.rows();
    os << "SAEs: " << n << '\n';
    if (!rep.gt_mmcs.empty()) {
      os << "ground-truth MMCS:";
      for (double v : rep.gt_mmcs) os << ' ' << fmt(v);
      os << '\n';
    }
    auto table = [&](const char* title, const Matrix& m) {
      os << title << ":\n";
      for (std::size_t i = 0; i < m.rows(); ++i) {
        os << ' ';
        for (double v : m.row(i)) os << ' ' << fmt(v);
        os << '\n';
      }
    };
    table("pairwise MMCS", rep.pairwise_mmcs);
    table("decoder L2 (aligned)", rep.l2_aligned);
    table("decoder L2 (raw)", rep.l2_raw);
    os << "pearson r (cross-SAE vs ground truth): "
       << (rep.pearson_r ? fmt(*rep.pearson_r) : std::string("undefined")) << '\n';
    if (!rep.cluster_count.empty()) {
      os << "cluster count (cross >= " << fmt(rep.tau_hi) << ", ground truth <= " << fmt(rep.tau_lo)
         << "):";
      for (auto c : rep.cluster_count) os << ' ' << c;
      os << '\n';
    }
    // binned scatter: mean ground-truth similarity per cross-SAE similarity decile
    constexpr int kBins = 10;
    double sum[kBins] = {};
    std::size_t cnt[kBins] = {};
    for (const auto& r : rep.scatter) {
      if (std::isnan(r.cross_sae_sim) || std::isnan(r.ground_truth_sim)) continue;
      const int b = std::clamp(static_cast<int>(std::floor(r.cross_sae_sim * kBins)), 0, kBins - 1);
      sum[b] += r.ground_truth_sim;
      cnt[b] += 1;
    }
    os << "scatter rows: " << rep.scatter.size() << "\ncross-SAE bin  count  mean ground-truth sim\n";
    for (int b = 0; b < kBins; ++b) {
      if (cnt[b] == 0) continue;
      char buf[96];
      std::snprintf(buf, sizeof buf, "[%.1f,%.1f)  %6zu  %.4f\n", b / 10.0, (b + 1) / 10.0, cnt[b],
                    sum[b] / static_cast<double>(cnt[b]));
      os << buf;
    }
  }
  if (!a.metrics.empty()) {
    const auto rows = read_metrics(a.metrics);
    std::vector<MetricsRecord> last;
    std::vector<std::size_t> reinits;
    for (const auto& r : rows) {
      if (r.sae_id >= last.size()) {
        last.resize(r.sae_id + 1);
        reinits.resize(r.sae_id + 1, 0);
      }
      last[r.sae_id] = r;
      reinits[r.sae_id] += r.reinit_event;
    }
    os << "metrics (last row per SAE):\n  sae  step  recon_loss  mmcs_mean  inactivity  reinits\n";
    for (std::size_t i = 0; i < last.size(); ++i)
      os << "  " << i << "  " << last[i].step << "  " << fmt(last[i].recon_loss) << "  "
         << fmt(last[i].mmcs_mean) << "  " << fmt(last[i].inactivity) << "  " << reinits[i] << '\n';
  }
  if (a.in.empty() && a.metrics.empty())
    throw ConfigError("report needs --in <eval output dir> and/or --metrics <metrics.csv>");
  out << os.str();
  if (!a.out.empty()) {
    ensure_dir(a.out);
    const fs::path path = fs::path(a.out) / "summary.txt";
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << os.str();
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train and evaluate TopK sparse autoencoder ensembles with mutual feature "
               "regularization.",
               "mfr"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "sample a ground-truth feature matrix (and optional samples)");
  gen.flags.add_to(g);
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--samples", gen.samples, "also write this many samples to samples.mfra");
  g->add_option("--dim", gen.dim, "ambient dimension d");
  g->add_option("--n-features", gen.n_features, "feature count G");
  g->add_option("--groups", gen.groups, "group count E");
  g->add_option("--per-group", gen.per_group, "active features per selected group K");
  g->footer(keys_footer());

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train an SAE ensemble");
  tr.flags.add_to(t);
  t->add_option("--out", tr.out, "output directory")->required();
  t->add_option("--mode", tr.mode, "baseline | mfr")->check(CLI::IsMember({"baseline", "mfr"}));
  t->add_option("--n-saes", tr.n_saes, "number of SAEs");
  t->add_option("--hidden", tr.hidden, "hidden size for every SAE");
  t->add_option("--k", tr.k, "TopK active units for every SAE");
  t->add_option("--max-steps", tr.max_steps, "stop after this many steps");
  t->add_option("--total-examples", tr.total_examples, "training examples");
  t->add_option("--batch-size", tr.batch_size, "samples per step");
  t->add_option("--lr", tr.lr, "AdamW learning rate");
  t->add_option("--alpha", tr.alpha, "penalty weight: a number or 'calibrated'");
  t->add_option("--warmup", tr.warmup, "penalty warmup steps");
  t->add_option("--activations", tr.activations, "train on an MFRA activation file");
  t->add_option("--workers", tr.workers, "worker threads (default: $MFR_WORKERS, else config)");
  t->add_option("--log-every", tr.log_every, "metrics interval in steps");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "checkpoint interval in steps");
  t->add_option("--checkpoint-precision", tr.precision, "f32 | f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  t->add_option("--resume", tr.resume, "continue from the checkpoints in this run directory");
  t->add_option("--resume-step", tr.resume_step, "resume from periodic checkpoints of this step");
  t->add_flag("--quiet", tr.quiet, "no progress lines on stderr");
  t->footer(keys_footer());

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate checkpoints: MMCS, scatter table, decoder distances");
  e->add_option("--ckpt", ev.ckpts, "checkpoint file (repeat per SAE)")->required();
  e->add_option("--features", ev.features, "ground-truth feature file (MFRF)");
  e->add_flag("--no-ground-truth", ev.no_ground_truth, "skip ground-truth metrics");
  e->add_option("--activations", ev.activations, "MFRA file for activation frequencies");
  e->add_option("--samples", ev.samples, "samples for activation frequencies");
  e->add_option("--groups-per-sample", ev.groups_per_sample,
                "groups per synthetic sample when drawing frequency samples");
  e->add_option("--tau-hi", ev.tau_hi, "cluster threshold on cross-SAE similarity");
  e->add_option("--tau-lo", ev.tau_lo, "cluster threshold on ground-truth similarity");
  e->add_option("--out", ev.out, "output directory")->required();

  MatchArgs ma;
  auto* m = app.add_subcommand("match", "Hungarian assignment between two checkpoints");
  m->add_option("--ckpt", ma.ckpts, "checkpoint file (exactly two)")->required();
  m->add_option("--out", ma.out, "output directory")->required();

  ReportArgs re;
  auto* r = app.add_subcommand("report", "summarize an eval directory and/or a metrics log");
  r->add_option("--in", re.in, "directory written by eval");
  r->add_option("--metrics", re.metrics, "metrics.csv of a training run");
  r->add_option("--out", re.out, "also write summary.txt here");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfig;
  }

  try {
    if (g->parsed()) return run_gen(gen, out);
    if (t->parsed()) return run_train(tr, out);
    if (e->parsed()) return run_eval(ev, out);
    if (m->parsed()) return run_match(ma, out);
    if (r->parsed()) return run_report(re, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return exit_code(ex.kind());
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kExitIo;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitIo;
  }
  return kExitConfig;
}

}  // namespace mfr::cli
