// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mfr/errors.hpp"

namespace mfr {

using nlohmann::json;

std::uint64_t TrainConfig::total_steps() const noexcept {
  if (batch_size == 0) return 0;
  const std::uint64_t steps = total_examples / batch_size;
  return max_steps > 0 ? std::min(steps, max_steps) : steps;
}

std::uint64_t TrainConfig::sae_init_seed(std::size_t index) const {
  const auto& s = saes.at(index);
  return s.init_seed ? *s.init_seed : mix_seed(seed, index);
}

namespace {

void validate_into(const TrainConfig& c, std::vector<std::string>& problems) {
  if (c.saes.empty()) problems.emplace_back("n_saes must be >= 1");
  if (c.mode == TrainMode::kMfr && c.saes.size() < 2)
    problems.emplace_back("mode=mfr needs n_saes >= 2 (the penalty couples pairs of SAEs)");
  for (std::size_t i = 0; i < c.saes.size(); ++i) {
    const auto& s = c.saes[i];
    if (s.hidden == 0) problems.push_back("hidden[" + std::to_string(i) + "] must be >= 1");
    if (s.k < 1 || s.k > s.hidden)
      problems.push_back("k[" + std::to_string(i) + "] must lie in [1, hidden]");
  }
  if (c.batch_size < 1) problems.emplace_back("batch_size must be >= 1");
  if (c.total_examples < c.batch_size) problems.emplace_back("total_examples must be >= batch_size");
  if (!(c.optim.learning_rate > 0.0)) problems.emplace_back("learning_rate must be > 0");
  if (!(c.optim.beta1 >= 0.0 && c.optim.beta1 < 1.0)) problems.emplace_back("beta1 must lie in [0,1)");
  if (!(c.optim.beta2 >= 0.0 && c.optim.beta2 < 1.0)) problems.emplace_back("beta2 must lie in [0,1)");
  if (!(c.optim.eps > 0.0)) problems.emplace_back("eps must be > 0");
  if (!(c.optim.weight_decay >= 0.0)) problems.emplace_back("weight_decay must be >= 0");
  if (c.log_every < 1) problems.emplace_back("log_every must be >= 1");
  if (c.workers < 1) problems.emplace_back("workers must be >= 1");
  if (c.reinit.probe_steps < 1) problems.emplace_back("reinit.probe_steps must be >= 1");
  if (!(c.reinit.threshold > 0.0)) problems.emplace_back("reinit.threshold must be > 0");
  if (!c.penalty.calibrated && !(c.penalty.alpha >= 0.0)) problems.emplace_back("penalty.alpha must be >= 0");
  if (c.data.kind == DataSourceKind::kSynthetic) {
    try {
      c.data.gen.validate();
    } catch (const ConfigError& e) {
      std::stringstream ss(e.what());
      std::string line;
      std::getline(ss, line);  // heading
      while (std::getline(ss, line)) problems.push_back(line.substr(line.find("- ") + 2));
    }
  } else if (c.data.path.empty()) {
    problems.emplace_back("data.path is required when data.source=activations");
  }
}

[[noreturn]] void throw_problems(const std::vector<std::string>& problems) {
  std::ostringstream os;
  os << "invalid training config (" << problems.size() << " problem"
     << (problems.size() == 1 ? "" : "s") << "):";
  for (const auto& p : problems) os << "\n  - " << p;
  throw ConfigError(os.str());
}

}  // namespace

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  validate_into(*this, problems);
  if (!problems.empty()) throw_problems(problems);
}

std::string_view to_string(TrainMode m) { return m == TrainMode::kMfr ? "mfr" : "baseline"; }

void set_mode(TrainConfig& cfg, TrainMode mode) {
  cfg.mode = mode;
  cfg.reinit.enabled = mode == TrainMode::kMfr;
}

TrainConfig preset(std::string_view name) {
  TrainConfig c;
  c.reinit = ReinitPolicy{};
  c.reinit.enabled = false;
  if (name == "paper-synthetic") {
    c.saes = {{512, 36, {}}, {512, 36, {}}};
    c.optim.learning_rate = 0.01;
    c.batch_size = 10000;
    c.total_examples = 100'000'000;
    c.data.kind = DataSourceKind::kSynthetic;
    c.data.gen = GenConfig{256, 512, 12, 3, 0.99, 12, 0};
    c.penalty = PenaltyConfig{false, 3.0, 100, false};
  } else if (name == "paper-lm") {
    for (std::size_t k : {6, 12, 18, 24, 30}) c.saes.push_back({3072, k, {}});
    c.optim.learning_rate = 0.001;
    c.batch_size = 500;
    c.total_examples = 2'000'000;
    c.data.kind = DataSourceKind::kActivations;
    c.penalty = PenaltyConfig{true, 0.0, 100, false};
  } else if (name == "paper-eeg") {
    for (std::size_t k : {12, 24, 36, 48, 60}) c.saes.push_back({4096, k, {}});
    c.optim.learning_rate = 0.001;
    c.batch_size = 1024;
    c.total_examples = 3'500'000;
    c.data.kind = DataSourceKind::kActivations;
    c.penalty = PenaltyConfig{true, 0.0, 100, false};
  } else {
    std::string msg = "unknown preset '" + std::string(name) + "' (known:";
    for (auto p : kPresetNames) msg += " " + std::string(p);
    throw ConfigError(msg + ")");
  }
  return c;
}

namespace {

constexpr ConfigKey kKeys[] = {
    {"preset", "base preset: paper-synthetic | paper-lm | paper-eeg (default paper-synthetic)"},
    {"mode", "baseline | mfr"},
    {"n_saes", "number of SAEs trained in lockstep"},
    {"hidden", "hidden size, one integer or one per SAE"},
    {"k", "TopK active units, one integer or one per SAE"},
    {"init_seeds", "optional per-SAE initialization seeds"},
    {"learning_rate", "AdamW learning rate"},
    {"beta1", "AdamW first-moment decay"},
    {"beta2", "AdamW second-moment decay"},
    {"eps", "AdamW epsilon"},
    {"weight_decay", "AdamW decoupled weight decay"},
    {"batch_size", "samples per step"},
    {"total_examples", "training examples; steps = total_examples / batch_size"},
    {"max_steps", "stop after this many steps (0 = no cap)"},
    {"seed", "master seed for data and initialization"},
    {"workers", "worker threads for per-SAE phases (results do not depend on it)"},
    {"log_every", "metrics row interval in steps"},
    {"checkpoint_every", "checkpoint interval in steps (0 = final only)"},
    {"checkpoint_precision", "f32 | f64 (f64 gives bit-exact resume)"},
    {"checkpoint_moments", "store AdamW moments in checkpoints"},
    {"data.source", "synthetic | activations"},
    {"data.d", "synthetic ambient dimension"},
    {"data.G", "synthetic feature count"},
    {"data.E", "synthetic group count"},
    {"data.K", "synthetic active features per selected group"},
    {"data.lambda", "synthetic decay rate in (0,1)"},
    {"data.groups_per_sample", "synthetic groups activated per sample"},
    {"data.path", "MFRA activation file"},
    {"data.on_exhaustion", "wrap | error when an activation file runs out"},
    {"reinit.enabled", "conditional reinitialization (default on for mfr)"},
    {"reinit.probe_steps", "steps after init at which the inactivity metric is probed"},
    {"reinit.threshold", "inactivity metric at or above which the SAE is reinitialized"},
    {"reinit.max_attempts", "reinitialization budget per SAE"},
    {"reinit.reprobe", "probe again after each reinitialization"},
    {"penalty.alpha", "penalty weight: a number or \"calibrated\""},
    {"penalty.warmup_steps", "cosine warmup length for the penalty weight"},
    {"penalty.symmetrize", "average MMCS over both directions in the penalty"},
};

// Collects type errors instead of throwing on the first one.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, std::vector<std::string>& problems)
      : obj_(obj), prefix_(std::move(prefix)), problems_(problems) {}

  void check_keys(std::initializer_list<std::string_view> known) {
    if (!obj_.is_object()) {
      problems_.push_back((prefix_.empty() ? std::string("config") : prefix_) + " must be a JSON object");
      return;
    }
    for (const auto& [key, _] : obj_.items()) {
      bool ok = false;
      for (auto k : known) ok = ok || key == k;
      if (!ok) problems_.push_back("unknown key '" + prefix_ + key + "'");
    }
  }

  bool has(const char* key) const { return obj_.is_object() && obj_.contains(key); }
  const json& at(const char* key) const { return obj_.at(key); }
  std::string name(const char* key) const { return prefix_ + key; }

  template <class T>
  void get_uint(const char* key, T& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)))
      problems_.push_back(name(key) + " must be a non-negative integer");
    else
      out = static_cast<T>(v.get<std::uint64_t>());
  }
  void get_double(const char* key, double& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number())
      problems_.push_back(name(key) + " must be a number");
    else
      out = v.get<double>();
  }
  void get_bool(const char* key, bool& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_boolean())
      problems_.push_back(name(key) + " must be true or false");
    else
      out = v.get<bool>();
  }
  bool get_string(const char* key, std::string& out) {
    if (!has(key)) return false;
    const auto& v = obj_.at(key);
    if (!v.is_string()) {
      problems_.push_back(name(key) + " must be a string");
      return false;
    }
    out = v.get<std::string>();
    return true;
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& problems_;
};

// hidden / k / init_seeds: a scalar broadcast to every SAE or a per-SAE array.
std::optional<std::vector<std::uint64_t>> per_sae(const json& doc, const char* key,
                                                  std::vector<std::string>& problems) {
  if (!doc.contains(key)) return std::nullopt;
  const auto& v = doc.at(key);
  auto bad = [&] {
    problems.push_back(std::string(key) + " must be a non-negative integer or an array of them");
    return std::nullopt;
  };
  std::vector<std::uint64_t> out;
  if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    out.push_back(v.get<std::uint64_t>());
    return out;
  }
  if (!v.is_array()) return bad();
  for (const auto& e : v) {
    if (!(e.is_number_unsigned() || (e.is_number_integer() && e.get<std::int64_t>() >= 0)))
      return bad();
    out.push_back(e.get<std::uint64_t>());
  }
  return out;
}

}  // namespace

std::span<const ConfigKey> config_keys() { return kKeys; }

TrainConfig parse_config(const json& doc) {
  std::vector<std::string> problems;
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  std::string preset_name = "paper-synthetic";
  Reader top(doc, "", problems);
  top.check_keys({"preset", "mode", "n_saes", "hidden", "k", "init_seeds", "learning_rate",
                  "beta1", "beta2", "eps", "weight_decay", "batch_size", "total_examples",
                  "max_steps", "seed", "workers", "log_every", "checkpoint_every",
                  "checkpoint_precision", "checkpoint_moments", "data", "reinit", "penalty"});
  top.get_string("preset", preset_name);
  TrainConfig c;
  try {
    c = preset(preset_name);
  } catch (const ConfigError& e) {
    problems.emplace_back(e.what());
    c = preset("paper-synthetic");
  }

  std::string mode;
  if (top.get_string("mode", mode)) {
    if (mode == "baseline")
      set_mode(c, TrainMode::kBaseline);
    else if (mode == "mfr")
      set_mode(c, TrainMode::kMfr);
    else
      problems.push_back("mode must be 'baseline' or 'mfr', got '" + mode + "'");
  }

  std::size_t n = c.saes.size();
  top.get_uint("n_saes", n);
  auto hidden = per_sae(doc, "hidden", problems);
  auto ks = per_sae(doc, "k", problems);
  auto seeds = per_sae(doc, "init_seeds", problems);
  if (!doc.contains("n_saes")) {
    for (const auto* arr : {&hidden, &ks, &seeds})
      if (*arr && (*arr)->size() > 1) n = (*arr)->size();
  }
  auto broadcast = [&](const std::optional<std::vector<std::uint64_t>>& vals, const char* key,
                       auto apply) {
    if (!vals) return;
    if (vals->size() != 1 && vals->size() != n) {
      problems.push_back(std::string(key) + " has " + std::to_string(vals->size()) +
                         " entries but n_saes is " + std::to_string(n));
      return;
    }
    for (std::size_t i = 0; i < n; ++i) apply(c.saes[i], (*vals)[vals->size() == 1 ? 0 : i]);
  };
  const SaeSpec tmpl = c.saes.empty() ? SaeSpec{} : c.saes.front();
  c.saes.resize(n, tmpl);
  broadcast(hidden, "hidden", [](SaeSpec& s, std::uint64_t v) { s.hidden = v; });
  broadcast(ks, "k", [](SaeSpec& s, std::uint64_t v) { s.k = v; });
  broadcast(seeds, "init_seeds", [](SaeSpec& s, std::uint64_t v) { s.init_seed = v; });

  top.get_double("learning_rate", c.optim.learning_rate);
  top.get_double("beta1", c.optim.beta1);
  top.get_double("beta2", c.optim.beta2);
  top.get_double("eps", c.optim.eps);
  top.get_double("weight_decay", c.optim.weight_decay);
  top.get_uint("batch_size", c.batch_size);
  top.get_uint("total_examples", c.total_examples);
  top.get_uint("max_steps", c.max_steps);
  top.get_uint("seed", c.seed);
  top.get_uint("workers", c.workers);
  top.get_uint("log_every", c.log_every);
  top.get_uint("checkpoint_every", c.checkpoint_every);
  top.get_bool("checkpoint_moments", c.checkpoint_moments);
  std::string precision;
  if (top.get_string("checkpoint_precision", precision)) {
    if (precision == "f32")
      c.checkpoint_precision = FloatWidth::kF32;
    else if (precision == "f64")
      c.checkpoint_precision = FloatWidth::kF64;
    else
      problems.push_back("checkpoint_precision must be 'f32' or 'f64'");
  }

  if (doc.contains("data")) {
    Reader data(doc.at("data"), "data.", problems);
    data.check_keys({"source", "d", "G", "E", "K", "lambda", "groups_per_sample", "path",
                     "on_exhaustion"});
    if (doc.at("data").is_object()) {
      std::string source;
      if (data.get_string("source", source)) {
        if (source == "synthetic")
          c.data.kind = DataSourceKind::kSynthetic;
        else if (source == "activations")
          c.data.kind = DataSourceKind::kActivations;
        else
          problems.push_back("data.source must be 'synthetic' or 'activations'");
      }
      data.get_uint("d", c.data.gen.d);
      data.get_uint("G", c.data.gen.G);
      data.get_uint("E", c.data.gen.E);
      data.get_uint("K", c.data.gen.K);
      data.get_double("lambda", c.data.gen.lambda);
      data.get_uint("groups_per_sample", c.data.gen.groups_per_sample);
      std::string path;
      if (data.get_string("path", path)) c.data.path = path;
      std::string exhaustion;
      if (data.get_string("on_exhaustion", exhaustion)) {
        if (exhaustion == "wrap")
          c.data.wrap = true;
        else if (exhaustion == "error")
          c.data.wrap = false;
        else
          problems.push_back("data.on_exhaustion must be 'wrap' or 'error'");
      }
    }
  }
  if (doc.contains("reinit")) {
    Reader r(doc.at("reinit"), "reinit.", problems);
    r.check_keys({"enabled", "probe_steps", "threshold", "max_attempts", "reprobe"});
    r.get_bool("enabled", c.reinit.enabled);
    r.get_uint("probe_steps", c.reinit.probe_steps);
    r.get_double("threshold", c.reinit.threshold);
    r.get_uint("max_attempts", c.reinit.max_attempts);
    r.get_bool("reprobe", c.reinit.reprobe);
  }
  if (doc.contains("penalty")) {
    Reader p(doc.at("penalty"), "penalty.", problems);
    p.check_keys({"alpha", "warmup_steps", "symmetrize"});
    if (p.has("alpha")) {
      const auto& a = p.at("alpha");
      if (a.is_string() && a.get<std::string>() == "calibrated") {
        c.penalty.calibrated = true;
      } else if (a.is_number()) {
        c.penalty.calibrated = false;
        c.penalty.alpha = a.get<double>();
      } else {
        problems.emplace_back("penalty.alpha must be a number or \"calibrated\"");
      }
    }
    p.get_uint("warmup_steps", c.penalty.warmup_steps);
    p.get_bool("symmetrize", c.penalty.symmetrize);
  }
  c.data.gen.seed = c.seed;

  validate_into(c, problems);
  if (!problems.empty()) throw_problems(problems);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const TrainConfig& c) {
  json hidden = json::array(), ks = json::array(), seeds = json::array();
  for (std::size_t i = 0; i < c.saes.size(); ++i) {
    hidden.push_back(c.saes[i].hidden);
    ks.push_back(c.saes[i].k);
    seeds.push_back(c.sae_init_seed(i));
  }
  json doc = {
      {"mode", std::string(to_string(c.mode))},
      {"n_saes", c.saes.size()},
      {"hidden", hidden},
      {"k", ks},
      {"init_seeds", seeds},
      {"learning_rate", c.optim.learning_rate},
      {"beta1", c.optim.beta1},
      {"beta2", c.optim.beta2},
      {"eps", c.optim.eps},
      {"weight_decay", c.optim.weight_decay},
      {"batch_size", c.batch_size},
      {"total_examples", c.total_examples},
      {"max_steps", c.max_steps},
      {"seed", c.seed},
      {"workers", c.workers},
      {"log_every", c.log_every},
      {"checkpoint_every", c.checkpoint_every},
      {"checkpoint_precision", c.checkpoint_precision == FloatWidth::kF64 ? "f64" : "f32"},
      {"checkpoint_moments", c.checkpoint_moments},
      {"reinit",
       {{"enabled", c.reinit.enabled},
        {"probe_steps", c.reinit.probe_steps},
        {"threshold", c.reinit.threshold},
        {"max_attempts", c.reinit.max_attempts},
        {"reprobe", c.reinit.reprobe}}},
      {"penalty",
       {{"warmup_steps", c.penalty.warmup_steps}, {"symmetrize", c.penalty.symmetrize}}},
  };
  if (c.penalty.calibrated)
    doc["penalty"]["alpha"] = "calibrated";
  else
    doc["penalty"]["alpha"] = c.penalty.alpha;
  if (c.data.kind == DataSourceKind::kSynthetic) {
    const auto& g = c.data.gen;
    doc["data"] = {{"source", "synthetic"}, {"d", g.d},          {"G", g.G},
                   {"E", g.E},              {"K", g.K},          {"lambda", g.lambda},
                   {"groups_per_sample", g.groups_per_sample}};
  } else {
    doc["data"] = {{"source", "activations"},
                   {"path", c.data.path.string()},
                   {"on_exhaustion", c.data.wrap ? "wrap" : "error"}};
  }
  return doc;
}

}  // namespace mfr
