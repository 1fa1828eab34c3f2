// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "mfr/errors.hpp"
#include "mfr/matching.hpp"

namespace mfr {

using nlohmann::json;

// ---- data sources -----------------------------------------------------------

Matrix SyntheticSource::batch(std::uint64_t index, std::size_t size) {
  return sample_batch_at(fm_, size, index).X;
}

ActivationFileSource::ActivationFileSource(const std::filesystem::path& path, bool wrap)
    : reader_(path), wrap_(wrap) {
  if (reader_.rows() == 0) throw ConfigError("activation file " + path.string() + " holds no rows");
}

Matrix ActivationFileSource::batch(std::uint64_t index, std::size_t size) {
  const std::uint64_t n = reader_.rows();
  const std::uint64_t first = index * size;
  if (!wrap_ && first + size > n) {
    std::ostringstream os;
    os << "activation data exhausted: step " << index << " needs rows [" << first << ", "
       << first + size << ") but the file holds " << n << " (set data.on_exhaustion=wrap to cycle)";
    throw ConfigError(os.str());
  }
  Matrix out(size, reader_.dim());
  std::size_t filled = 0;
  std::uint64_t pos = first % n;
  while (filled < size) {
    const std::size_t take = static_cast<std::size_t>(std::min<std::uint64_t>(size - filled, n - pos));
    Matrix part = reader_.read_rows(static_cast<std::size_t>(pos), take);
    std::copy(part.values().begin(), part.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(filled * reader_.dim()));
    filled += take;
    pos = 0;
  }
  return out;
}

std::unique_ptr<BatchSource> make_source(const TrainConfig& cfg) {
  if (cfg.data.kind == DataSourceKind::kSynthetic) {
    GenConfig gen = cfg.data.gen;
    gen.seed = cfg.seed;
    return std::make_unique<SyntheticSource>(sample_feature_matrix(gen));
  }
  return std::make_unique<ActivationFileSource>(cfg.data.path, cfg.data.wrap);
}

std::vector<Matrix> EnsembleState::dictionaries() const {
  std::vector<Matrix> out;
  out.reserve(saes.size());
  for (const auto& s : saes) out.push_back(s.params.W);
  return out;
}

ActivationCounter count_activations(const SaeParams& p, const Matrix& X) {
  ActivationCounter c(p.hidden());
  c.record(forward(p, X));
  return c;
}

// ---- trainer ------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, TrainOptions opts)
    : Trainer(cfg, nullptr, std::move(opts)) {}

Trainer::Trainer(TrainConfig cfg, std::unique_ptr<BatchSource> source, TrainOptions opts)
    : cfg_(std::move(cfg)), opts_(std::move(opts)), source_(std::move(source)) {
  cfg_.validate();
  if (!source_) source_ = make_source(cfg_);
  init_slots();
  if (!opts_.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opts_.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + opts_.out_dir.string());
    std::ofstream cfg_out(opts_.out_dir / "config.json");
    if (!cfg_out) throw IoError("cannot write " + (opts_.out_dir / "config.json").string());
    cfg_out << to_json(cfg_).dump(2) << '\n';
    writer_ = std::make_unique<MetricsWriter>(opts_.out_dir / "metrics.csv");
  }
}

void Trainer::init_slots() {
  const std::size_t d = source_->dim();
  state_.saes.clear();
  state_.saes.resize(cfg_.n_saes());
  for (std::size_t i = 0; i < cfg_.n_saes(); ++i) {
    auto& slot = state_.saes[i];
    slot.params = SaeParams{Matrix(cfg_.saes[i].hidden, d),
                            std::vector<double>(cfg_.saes[i].hidden, 0.0), cfg_.saes[i].k};
    reinit_slot(i, 0);
    slot.init_step = 0;
  }
  if (cfg_.mode == TrainMode::kMfr && !cfg_.penalty.calibrated) state_.alpha = cfg_.penalty.alpha;
  last_losses_.assign(cfg_.n_saes(), std::numeric_limits<double>::quiet_NaN());
}

void Trainer::reinit_slot(std::size_t i, std::size_t attempt) {
  auto& slot = state_.saes[i];
  RngStream rng(cfg_.sae_init_seed(i), init_stream(attempt));
  slot.params = init_sae(slot.params.hidden(), slot.params.input_dim(), slot.params.k, rng);
  slot.opt_W = AdamWState(slot.params.hidden(), slot.params.input_dim(), cfg_.optim);
  slot.opt_b = AdamWState(1, slot.params.hidden(), cfg_.optim);
  slot.window = ActivationCounter(slot.params.hidden());
  slot.current_attempt = attempt;
  slot.init_step = state_.step;
}

template <class Fn>
void Trainer::for_each_sae(Fn&& fn) {
  const std::size_t n = state_.saes.size();
  const std::size_t workers = std::min(cfg_.workers, n);
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += workers) run(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void Trainer::step_once() {
  if (finished()) return;
  const std::uint64_t s = state_.step;
  const std::size_t n = state_.saes.size();
  const Matrix X = source_->batch(s, cfg_.batch_size);

  std::vector<SaeGradients> grads(n);
  for_each_sae([&](std::size_t i) {
    auto& slot = state_.saes[i];
    ForwardTrace trace = forward(slot.params, X);
    const double loss = reconstruction_loss(X, trace.reconstruction);
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "numeric divergence: SAE " << i << " at step " << s << " has loss " << loss;
      throw NumericError(os.str());
    }
    last_losses_[i] = loss;
    grads[i] = backward(slot.params, trace, X);
    slot.window.record(trace);
  });

  // barrier: the penalty needs every dictionary at the same step
  const bool log_step = s % cfg_.log_every == 0 || s + 1 == cfg_.total_steps();
  const PenaltyOptions popts{cfg_.penalty.symmetrize};
  double alpha_eff = 0.0;
  if (cfg_.mode == TrainMode::kMfr) {
    const auto dicts = state_.dictionaries();
    if (!state_.alpha) {
      double mean_loss = 0.0;
      for (double l : last_losses_) mean_loss += l;
      mean_loss /= static_cast<double>(n);
      const double raw0 = raw_penalty(dicts, popts);
      state_.alpha = calibrate_alpha(mean_loss, raw0);
      state_.calibration_recon_loss = mean_loss;
      state_.calibration_raw_penalty = raw0;
    }
    alpha_eff = warmup_coefficient(static_cast<std::size_t>(s), cfg_.penalty.warmup_steps,
                                   *state_.alpha);
    if (alpha_eff > 0.0) {
      const auto pg = penalty_gradient(dicts, alpha_eff, popts);
      for (std::size_t i = 0; i < n; ++i) {
        auto dst = grads[i].dW.values();
        auto src = pg[i].values();
        for (std::size_t t = 0; t < dst.size(); ++t) dst[t] += src[t];
      }
    }
  }

  double penalty_raw = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> mmcs_mean(n, std::numeric_limits<double>::quiet_NaN());
  if (log_step && n >= 2) {
    const auto dicts = state_.dictionaries();
    penalty_raw = raw_penalty(dicts, popts);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        acc += popts.symmetrize ? mmcs_symmetric(dicts[i], dicts[j]) : mmcs(dicts[i], dicts[j]);
      }
      mmcs_mean[i] = acc / static_cast<double>(n - 1);
    }
  }

  for_each_sae([&](std::size_t i) {
    auto& slot = state_.saes[i];
    try {
      adamw_step(slot.params.W, grads[i].dW, slot.opt_W);
      Matrix b(1, slot.params.hidden());
      Matrix db(1, slot.params.hidden());
      std::copy(slot.params.b.begin(), slot.params.b.end(), b.values().begin());
      std::copy(grads[i].db.begin(), grads[i].db.end(), db.values().begin());
      adamw_step(b, db, slot.opt_b);
      std::copy(b.values().begin(), b.values().end(), slot.params.b.begin());
    } catch (const NumericError& e) {
      std::ostringstream os;
      os << "SAE " << i << " at step " << s << ": " << e.what();
      throw NumericError(os.str());
    }
  });
  state_.step = s + 1;

  // probe windows and reinitialization
  std::vector<double> inactivity(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> reinit_event(n, 0);
  const auto& pol = cfg_.reinit;
  for (std::size_t i = 0; i < n; ++i) {
    auto& slot = state_.saes[i];
    const std::uint64_t since = state_.step - slot.init_step;
    const bool window_done = since % pol.probe_steps == 0;
    if (slot.window.samples_seen() > 0)
      inactivity[i] = inactivity_metric(slot.window, slot.params.k);
    if (!window_done) continue;

    ProbeRecord rec{s, i, since, inactivity[i], false, ReinitDecision::kKeep};
    slot.window.reset();
    if (pol.enabled && !slot.probing_done && since == pol.probe_steps) {
      rec.decided = true;
      if (rec.metric < slot.best_metric) {
        slot.best_metric = rec.metric;
        slot.best_attempt = slot.current_attempt;
      }
      rec.decision = should_reinitialize(rec.metric, pol, since, slot.attempts);
      switch (rec.decision) {
        case ReinitDecision::kKeep:
          slot.probing_done = true;
          break;
        case ReinitDecision::kReinitialize:
          slot.attempts += 1;
          reinit_slot(i, slot.attempts);
          reinit_event[i] = 1;
          if (!pol.reprobe) slot.probing_done = true;
          break;
        case ReinitDecision::kExhausted: {
          std::ostringstream os;
          os << "SAE " << i << ": inactivity " << rec.metric << " still >= threshold after "
             << slot.attempts << " reinitializations; falling back to init attempt "
             << slot.best_attempt << " (metric " << slot.best_metric << ")";
          warnings_.push_back(os.str());
          std::cerr << "warning: " << os.str() << '\n';
          if (slot.best_attempt != slot.current_attempt) {
            reinit_slot(i, slot.best_attempt);
            reinit_event[i] = 1;
          }
          slot.probing_done = true;
          break;
        }
      }
    }
    state_.probes.push_back(rec);
  }

  const bool any_reinit = std::any_of(reinit_event.begin(), reinit_event.end(), [](char c) { return c; });
  if (log_step || any_reinit) {
    for (std::size_t i = 0; i < n; ++i) {
      MetricsRecord r{s, i, last_losses_[i], penalty_raw, alpha_eff, mmcs_mean[i], inactivity[i],
                      reinit_event[i] != 0};
      if (writer_) writer_->append(r);
      if (opts_.keep_log) log_.push_back(r);
    }
    if (opts_.progress) {
      std::ostringstream os;
      os << "step " << s + 1 << "/" << cfg_.total_steps();
      for (std::size_t i = 0; i < n; ++i) os << "  loss[" << i << "]=" << last_losses_[i];
      if (cfg_.mode == TrainMode::kMfr) os << "  alpha_eff=" << alpha_eff;
      std::cerr << os.str() << '\n';
    }
  }

  if (!opts_.out_dir.empty() && cfg_.checkpoint_every > 0 &&
      state_.step % cfg_.checkpoint_every == 0 && !finished()) {
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "_step_%08llu", static_cast<unsigned long long>(state_.step));
    write_checkpoints(opts_.out_dir, suffix);
  }
}

void Trainer::run_steps(std::uint64_t count) {
  for (std::uint64_t t = 0; t < count && !finished(); ++t) step_once();
}

void Trainer::run() {
  while (!finished()) step_once();
  if (!opts_.out_dir.empty()) write_checkpoints(opts_.out_dir, "");
}

void Trainer::write_checkpoints(const std::filesystem::path& dir, const std::string& suffix) const {
  for (std::size_t i = 0; i < state_.saes.size(); ++i) {
    const auto& slot = state_.saes[i];
    Checkpoint c{slot.params, state_.step, std::nullopt};
    if (cfg_.checkpoint_moments) {
      OptimizerMoments m;
      m.step = slot.opt_W.step;
      m.m_W = slot.opt_W.m;
      m.v_W = slot.opt_W.v;
      m.m_b.assign(slot.opt_b.m.values().begin(), slot.opt_b.m.values().end());
      m.v_b.assign(slot.opt_b.v.values().begin(), slot.opt_b.v.values().end());
      c.moments = std::move(m);
    }
    write_checkpoint(dir / ("sae_" + std::to_string(i) + suffix + ".mfrc"), c,
                     cfg_.checkpoint_precision);
  }
  const auto path = dir / ("state" + suffix + ".json");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << state_json().dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

json Trainer::state_json() const {
  json saes = json::array();
  for (const auto& slot : state_.saes) {
    json counts(std::vector<std::uint64_t>(slot.window.counts().begin(), slot.window.counts().end()));
    saes.push_back({{"init_step", slot.init_step},
                    {"attempts", slot.attempts},
                    {"current_attempt", slot.current_attempt},
                    {"best_attempt", slot.best_attempt},
                    {"best_metric", std::isfinite(slot.best_metric) ? json(slot.best_metric) : json()},
                    {"probing_done", slot.probing_done},
                    {"window_counts", counts},
                    {"window_samples", slot.window.samples_seen()}});
  }
  return {{"step", state_.step},
          {"alpha", state_.alpha ? json(*state_.alpha) : json()},
          {"calibration_recon_loss", state_.calibration_recon_loss},
          {"calibration_raw_penalty", state_.calibration_raw_penalty},
          {"saes", saes}};
}

void Trainer::apply_state_json(const json& doc) {
  try {
    if (doc.at("step").get<std::uint64_t>() != state_.step)
      throw CheckpointError("run state step differs from checkpoint step");
    if (!doc.at("alpha").is_null()) state_.alpha = doc.at("alpha").get<double>();
    state_.calibration_recon_loss = doc.at("calibration_recon_loss").get<double>();
    state_.calibration_raw_penalty = doc.at("calibration_raw_penalty").get<double>();
    const auto& saes = doc.at("saes");
    if (saes.size() != state_.saes.size()) throw CheckpointError("run state SAE count differs");
    for (std::size_t i = 0; i < saes.size(); ++i) {
      const auto& j = saes[i];
      auto& slot = state_.saes[i];
      slot.init_step = j.at("init_step").get<std::uint64_t>();
      slot.attempts = j.at("attempts").get<std::size_t>();
      slot.current_attempt = j.at("current_attempt").get<std::size_t>();
      slot.best_attempt = j.at("best_attempt").get<std::size_t>();
      slot.best_metric = j.at("best_metric").is_null() ? std::numeric_limits<double>::infinity()
                                                       : j.at("best_metric").get<double>();
      slot.probing_done = j.at("probing_done").get<bool>();
      auto counts = j.at("window_counts").get<std::vector<std::uint64_t>>();
      if (counts.size() != slot.params.hidden())
        throw CheckpointError("run state activation counts do not match hidden size");
      slot.window = ActivationCounter::from_counts(std::move(counts),
                                                   j.at("window_samples").get<std::uint64_t>());
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed run state: ") + e.what());
  }
}

Trainer Trainer::resume(TrainConfig cfg, const std::vector<std::filesystem::path>& checkpoints,
                        const std::filesystem::path& state_path, TrainOptions opts) {
  if (checkpoints.size() != cfg.n_saes())
    throw CheckpointError("resume needs one checkpoint per SAE (" + std::to_string(cfg.n_saes()) +
                          "), got " + std::to_string(checkpoints.size()));
  std::vector<Checkpoint> loaded;
  for (const auto& p : checkpoints) loaded.push_back(read_checkpoint(p));
  auto source = make_source(cfg);
  const std::size_t d = source->dim();
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& c = loaded[i];
    if (c.params.input_dim() != d)
      throw CheckpointError("checkpoint " + checkpoints[i].string() + " has d=" +
                            std::to_string(c.params.input_dim()) + ", data has d=" +
                            std::to_string(d));
    if (c.params.hidden() != cfg.saes[i].hidden || c.params.k != cfg.saes[i].k)
      throw CheckpointError("checkpoint " + checkpoints[i].string() +
                            " does not match the configured hidden size / k");
    if (c.step != loaded.front().step)
      throw CheckpointError("checkpoints were written at different steps");
  }
  Trainer t(std::move(cfg), std::move(source), std::move(opts));
  t.state_.step = loaded.front().step;
  bool degraded = false;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    auto& slot = t.state_.saes[i];
    slot.params = loaded[i].params;
    slot.opt_W = AdamWState(slot.params.hidden(), slot.params.input_dim(), t.cfg_.optim);
    slot.opt_b = AdamWState(1, slot.params.hidden(), t.cfg_.optim);
    slot.init_step = 0;
    slot.probing_done = true;
    if (loaded[i].moments) {
      const auto& m = *loaded[i].moments;
      slot.opt_W.m = m.m_W;
      slot.opt_W.v = m.v_W;
      slot.opt_W.step = m.step;
      std::copy(m.m_b.begin(), m.m_b.end(), slot.opt_b.m.values().begin());
      std::copy(m.v_b.begin(), m.v_b.end(), slot.opt_b.v.values().begin());
      slot.opt_b.step = m.step;
    } else {
      degraded = true;
    }
  }
  std::error_code ec;
  if (!state_path.empty() && std::filesystem::exists(state_path, ec)) {
    std::ifstream in(state_path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw CheckpointError("run state " + state_path.string() + " is not valid JSON");
    }
    t.apply_state_json(doc);
  } else {
    degraded = true;
  }
  if (degraded) {
    const std::string msg =
        "resuming without optimizer moments or run state; the continuation will not be "
        "bit-identical to an uninterrupted run";
    t.warnings_.push_back(msg);
    std::cerr << "warning: " << msg << '\n';
  }
  return t;
}

PairAnalysis train_baseline_pair_for_analysis(const TrainConfig& cfg, std::size_t eval_samples) {
  if (cfg.n_saes() != 2 || cfg.mode != TrainMode::kBaseline)
    throw ConfigError("pair analysis needs exactly two SAEs in baseline mode");
  if (cfg.data.kind != DataSourceKind::kSynthetic)
    throw ConfigError("pair analysis needs synthetic data with known features");
  Trainer t(cfg, TrainOptions{{}, false, true});
  t.run();
  auto& src = dynamic_cast<SyntheticSource&>(t.source());
  PairAnalysis out;
  out.features = src.features();
  const Matrix Xeval = sample_batch_at(out.features, eval_samples, kEvalBatchIndex).X;
  out.W1 = t.state().saes[0].params.W;
  out.W2 = t.state().saes[1].params.W;
  out.freq1 = count_activations(t.state().saes[0].params, Xeval);
  out.freq2 = count_activations(t.state().saes[1].params, Xeval);
  out.log = t.log();
  return out;
}

}  // namespace mfr
