// Copyright 2026 The mfr-sae Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mfr/errors.hpp"
#include "mfr/evaluation.hpp"
#include "mfr/matching.hpp"
#include "support.hpp"

using namespace mfr;
using mfr::test::random_matrix;

namespace {

FeatureMatrix features(std::size_t d, std::size_t G, std::uint64_t seed) {
  GenConfig c;
  c.d = d;
  c.G = G;
  c.E = 4;
  c.K = 3;
  c.lambda = 0.99;
  c.groups_per_sample = 1;
  c.seed = seed;
  return sample_feature_matrix(c);
}

Matrix permuted_rows(const Matrix& W, const std::vector<std::size_t>& perm) {
  Matrix out(W.rows(), W.cols());
  for (std::size_t r = 0; r < W.rows(); ++r)
    std::copy(W.row(perm[r]).begin(), W.row(perm[r]).end(), out.row(r).begin());
  return out;
}

// Best Frobenius distance over every row permutation.
double brute_l2(const Matrix& a, const Matrix& b) {
  std::vector<std::size_t> perm(b.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r)
      for (std::size_t c = 0; c < a.cols(); ++c) {
        const double diff = a(r, c) - b(perm[r], c);
        s += diff * diff;
      }
    best = std::min(best, std::sqrt(s));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("ground_truth_mmcs: exact recovery and invariances") {
  const auto fm = features(16, 40, 1);
  const Matrix Ft = fm.F.transposed();
  CHECK(ground_truth_mmcs(Ft, fm) == doctest::Approx(1.0).epsilon(1e-12));

  const Matrix W = random_matrix(30, 16, 2);
  const double base = ground_truth_mmcs(W, fm);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  Matrix scaled = permuted_rows(W, perm);
  for (std::size_t r = 0; r < 30; ++r)
    for (double& v : scaled.row(r)) v *= 0.5 + static_cast<double>(r);
  CHECK(ground_truth_mmcs(scaled, fm) == doctest::Approx(base).epsilon(1e-12));
  CHECK_THROWS_AS(ground_truth_mmcs(random_matrix(3, 15, 4), fm), DimensionError);
}

TEST_CASE("ground_truth_mmcs of random dictionaries matches a Monte-Carlo estimate") {
  // expected max of 128 cosines between independent Gaussian vectors in 64 dims
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  double mc = 0.0;
  const int trials = 10000;
  std::vector<double> x(64), y(64);
  for (int t = 0; t < trials; ++t) {
    for (double& v : x) v = nd(gen);
    double best = -1.0;
    for (int j = 0; j < 128; ++j) {
      for (double& v : y) v = nd(gen);
      best = std::max(best, mfr::test::naive_cos(x, y));
    }
    mc += best / trials;
  }
  CHECK(mc > 0.3);
  CHECK(mc < 0.4);
  double got = 0.0;
  for (std::uint64_t s = 0; s < 4; ++s)
    got += ground_truth_mmcs(random_matrix(512, 64, 60 + s), features(64, 128, 70 + s)) / 4;
  CHECK(std::abs(got - mc) < 0.01);
}

TEST_CASE("similarity_scatter: identical dictionaries and row count") {
  const auto fm = features(16, 40, 7);
  const Matrix Ft = fm.F.transposed();
  std::vector<double> freq(40, 0.25);
  const auto rows = similarity_scatter(Ft, Ft, &fm, freq, 3);
  REQUIRE(rows.size() == 40);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].sae_id == 3);
    CHECK(rows[i].feature_id == i);
    CHECK(rows[i].cross_sae_sim == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rows[i].ground_truth_sim == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rows[i].activation_freq == 0.25);
  }
  CHECK(cluster_count(rows) == 0);

  const auto uneven = similarity_scatter(random_matrix(9, 16, 8), random_matrix(6, 16, 9), nullptr, {}, 0);
  CHECK(uneven.size() == 6);
  for (const auto& r : uneven) {
    CHECK(std::isnan(r.ground_truth_sim));
    CHECK(std::isnan(r.activation_freq));
    CHECK(std::abs(r.cross_sae_sim) <= 1.0);
  }
}

TEST_CASE("similarity_scatter pairs features by Hungarian assignment") {
  const Matrix W1 = random_matrix(5, 4, 10), W2 = random_matrix(5, 4, 11);
  const auto rows = similarity_scatter(W1, W2, nullptr, {}, 0);
  const Matrix cos = cosine_table(W1, W2);
  const auto brute = mfr::test::brute_force_assignment(cos);
  double total = 0.0;
  for (const auto& r : rows) total += r.cross_sae_sim;
  CHECK(total == doctest::Approx(brute.total).epsilon(1e-12));
}

TEST_CASE("cluster_count thresholds") {
  std::vector<ScatterRow> rows{{0, 0, 0.9, 0.1, 0.0}, {0, 1, 0.8, 0.4, 0.0}, {0, 2, 0.79, 0.1, 0.0},
                               {0, 3, 0.95, 0.41, 0.0}, {0, 4, 1.0, 1.0, 0.0}};
  CHECK(cluster_count(rows) == 2);
  CHECK(cluster_count(rows, 0.5, 0.5) == 4);
  CHECK(cluster_count({}) == 0);
}

TEST_CASE("decoder_l2_distance: alignment, brute force and pseudometric axioms") {
  const Matrix W = random_matrix(6, 4, 20);
  CHECK(decoder_l2_distance(W, W) == 0.0);
  Matrix swapped = permuted_rows(W, {1, 0, 2, 3, 5, 4});
  CHECK(decoder_l2_distance(W, swapped) == doctest::Approx(0.0));
  CHECK(decoder_l2_distance(W, swapped) < 1e-12);
  CHECK(decoder_l2_raw(W, swapped) > 0.1);
  CHECK_THROWS_AS(decoder_l2_distance(W, random_matrix(6, 5, 1)), DimensionError);
  CHECK_THROWS_AS(decoder_l2_distance(W, random_matrix(5, 4, 1)), DimensionError);

  for (std::uint64_t s = 0; s < 50; ++s) {
    const Matrix a = random_matrix(4, 3, 100 + s), b = random_matrix(4, 3, 200 + s),
                 c = random_matrix(4, 3, 300 + s);
    const double ab = decoder_l2_distance(a, b);
    CHECK(ab == doctest::Approx(brute_l2(a, b)).epsilon(1e-12));
    CHECK(ab == doctest::Approx(decoder_l2_distance(b, a)).epsilon(1e-12));
    CHECK(ab <= decoder_l2_distance(a, c) + decoder_l2_distance(c, b) + 1e-9);
    CHECK(ab <= decoder_l2_raw(a, b) + 1e-12);
  }
}

TEST_CASE("evaluate: report contents") {
  const auto fm = features(16, 40, 30);
  const std::vector<Matrix> dicts{random_matrix(20, 16, 31), random_matrix(20, 16, 32),
                                  random_matrix(24, 16, 33)};
  const std::vector<std::vector<double>> freqs{std::vector<double>(20, 0.1),
                                               std::vector<double>(20, 0.2),
                                               std::vector<double>(24, 0.3)};
  const auto r = evaluate(dicts, &fm, freqs);
  REQUIRE(r.gt_mmcs.size() == 3);
  CHECK(r.gt_mmcs[1] == ground_truth_mmcs(dicts[1], fm));
  CHECK(r.pairwise_mmcs(0, 2) == mmcs(dicts[0], dicts[2]));
  CHECK(r.pairwise_mmcs(1, 1) == doctest::Approx(1.0));
  CHECK(r.scatter.size() == 20 + 20 + 20);
  CHECK(r.cluster_count.size() == 3);
  CHECK(r.pearson_r.has_value());
  CHECK(r.l2_aligned(0, 0) == 0.0);
  CHECK(r.l2_aligned(0, 1) == doctest::Approx(r.l2_aligned(1, 0)).epsilon(1e-12));
  CHECK(std::isnan(r.l2_aligned(0, 2)));
  CHECK(std::isnan(r.l2_raw(2, 1)));

  const auto no_gt = evaluate(dicts, nullptr, {});
  CHECK(no_gt.gt_mmcs.empty());
  CHECK(no_gt.cluster_count.empty());
  CHECK_FALSE(no_gt.pearson_r.has_value());
  CHECK_THROWS_AS(evaluate(std::vector<Matrix>{}, nullptr, {}), ConfigError);
}

TEST_CASE("emit_report / read_report round trip and CSV header") {
  mfr::test::TempDir dir;
  const auto fm = features(16, 40, 40);
  const std::vector<Matrix> dicts{random_matrix(12, 16, 41), random_matrix(12, 16, 42)};
  const auto r = evaluate(dicts, &fm, {});
  emit_report(r, dir.path());
  const std::string csv = mfr::test::read_text(dir / "scatter.csv");
  CHECK(csv.substr(0, csv.find('\n')) == kScatterHeader);
  const auto back = read_report(dir.path());
  CHECK(report_json(back) == report_json(r));
  REQUIRE(back.scatter.size() == r.scatter.size());
  for (std::size_t i = 0; i < r.scatter.size(); ++i) {
    CHECK(back.scatter[i].cross_sae_sim == r.scatter[i].cross_sae_sim);
    CHECK(back.scatter[i].ground_truth_sim == r.scatter[i].ground_truth_sim);
    CHECK(std::isnan(back.scatter[i].activation_freq));
  }
  const auto json = report_json(r);
  for (const char* key : {"gt_mmcs", "pairwise_mmcs", "pearson_r", "cluster_count", "l2_aligned",
                          "l2_raw", "schema_version"})
    CHECK(json.contains(key));
  CHECK(json["schema_version"] == 1);

  mfr::test::write_bytes(dir / "scatter.csv", {'a', ',', 'b', '\n'});
  CHECK_THROWS_AS(read_scatter_csv(dir / "scatter.csv"), FormatError);
  mfr::test::write_bytes(dir / "blocker", {'x'});
  CHECK_THROWS_AS(emit_report(r, dir / "blocker" / "sub"), IoError);
}
