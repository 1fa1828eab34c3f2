// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfr/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mfr/errors.hpp"

namespace mfr {

void GenConfig::validate() const {
  std::vector<std::string> problems;
  if (d == 0) problems.emplace_back("d must be positive");
  if (G <= d) problems.emplace_back("G must exceed d (superposition requires more features than dimensions)");
  if (E == 0) problems.emplace_back("E must be positive");
  if (E > G) problems.emplace_back("E must not exceed G");
  if (!(lambda > 0.0 && lambda < 1.0)) problems.emplace_back("lambda must lie in (0,1)");
  if (K == 0) problems.emplace_back("K must be positive");
  if (E > 0 && E <= G && K > G / E) problems.emplace_back("K must not exceed the smallest group size");
  if (groups_per_sample == 0 || groups_per_sample > E)
    problems.emplace_back("groups_per_sample must lie in [1, E]");
  if (problems.empty()) return;
  std::ostringstream os;
  os << "invalid generator config:";
  for (const auto& p : problems) os << "\n  - " << p;
  throw ConfigError(os.str());
}

std::vector<double> feature_probabilities(std::size_t G, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in (0,1)");
  if (G == 0) throw ConfigError("feature count must be positive");
  std::vector<double> p(G);
  double power = 1.0;
  for (std::size_t j = 0; j < G; ++j) {
    power *= lambda;
    p[j] = power;
  }
  double total = 0.0;
  for (double v : p) total += v;
  for (double& v : p) v /= total;
  return p;
}

std::vector<GroupRange> partition_groups(std::size_t G, std::size_t E) {
  if (E == 0 || E > G) throw ConfigError("group count must lie in [1, G]");
  std::vector<GroupRange> out(E);
  const std::size_t base = G / E, extra = G % E;
  std::size_t begin = 0;
  for (std::size_t e = 0; e < E; ++e) {
    const std::size_t len = base + (e < extra ? 1 : 0);
    out[e] = {begin, begin + len};
    begin += len;
  }
  return out;
}

FeatureMatrix sample_feature_matrix(const GenConfig& cfg) {
  cfg.validate();
  FeatureMatrix fm;
  fm.config = cfg;
  fm.F = Matrix(cfg.d, cfg.G);
  RngStream rng(cfg.seed, kFeatureStream);
  for (double& v : fm.F.values()) v = rng.gaussian();
  fm.probs = feature_probabilities(cfg.G, cfg.lambda);
  fm.groups = partition_groups(cfg.G, cfg.E);
  return fm;
}

DataBatch sample_batch(const FeatureMatrix& fm, std::size_t n, RngStream& rng) {
  const auto& cfg = fm.config;
  const std::size_t d = fm.d(), G = fm.feature_count();
  DataBatch batch{Matrix(n, d), Matrix(n, G)};

  std::vector<std::size_t> group_order(fm.groups.size());
  std::vector<double> weights;
  std::vector<std::size_t> active;
  active.reserve(cfg.K * cfg.groups_per_sample);

  for (std::size_t s = 0; s < n; ++s) {
    // partial Fisher-Yates: the first groups_per_sample entries are the draw
    std::iota(group_order.begin(), group_order.end(), std::size_t{0});
    for (std::size_t t = 0; t < cfg.groups_per_sample; ++t) {
      const std::size_t pick = t + rng.below(group_order.size() - t);
      std::swap(group_order[t], group_order[pick]);
    }
    active.clear();
    for (std::size_t t = 0; t < cfg.groups_per_sample; ++t) {
      const GroupRange g = fm.groups[group_order[t]];
      weights.assign(fm.probs.begin() + g.begin, fm.probs.begin() + g.end);
      // K sequential weighted draws without replacement
      for (std::size_t draw = 0; draw < cfg.K; ++draw) {
        double total = 0.0;
        for (double w : weights) total += w;
        const double target = rng.uniform() * total;
        double acc = 0.0;
        std::size_t chosen = weights.size();
        std::size_t last_live = weights.size();
        for (std::size_t i = 0; i < weights.size(); ++i) {
          if (weights[i] == 0.0) continue;
          last_live = i;
          acc += weights[i];
          if (target < acc) {
            chosen = i;
            break;
          }
        }
        if (chosen == weights.size()) chosen = last_live;  // rounding at the upper edge
        weights[chosen] = 0.0;
        active.push_back(g.begin + chosen);
      }
    }
    std::sort(active.begin(), active.end());
    auto xrow = batch.X.row(s);
    for (std::size_t j : active) {
      const double u = rng.uniform_open();
      batch.A(s, j) = u;
    }
    // x = Σ_j a_j f_j, accumulated over features in increasing index order
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j : active) acc += batch.A(s, j) * fm.F(i, j);
      xrow[i] = acc;
    }
  }
  return batch;
}

DataBatch sample_batch_at(const FeatureMatrix& fm, std::size_t n, std::uint64_t index) {
  RngStream rng(fm.config.seed, batch_stream(index));
  return sample_batch(fm, n, rng);
}

}  // namespace mfr
