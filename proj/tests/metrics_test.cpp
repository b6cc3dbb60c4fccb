#include <gtest/gtest.h>

#include <cmath>

#include "pishguve/metrics.hpp"
#include "pishguve/rng.hpp"

using namespace pv;

namespace {

PredictionPair make_pair(std::size_t n, std::size_t h, double fps = 5.0) {
  PredictionPair p;
  p.n = n;
  p.h = h;
  p.fps = fps;
  p.pred.assign(n * h * 2, 0.0);
  p.truth.assign(n * h * 2, 0.0);
  return p;
}

PredictionPair random_pair(std::size_t n, std::size_t h, RngStream& rng) {
  PredictionPair p = make_pair(n, h);
  for (auto& v : p.pred) v = rng.uniform(-100, 100);
  for (auto& v : p.truth) v = rng.uniform(-100, 100);
  return p;
}

// Independent straightforward-loop re-implementation used as the oracle.
struct Brute {
  double ade = 0, fde = 0;
  std::vector<double> rmse;
};

Brute brute_metrics(const PredictionPair& p, const std::vector<double>& marks) {
  Brute b;
  for (std::size_t i = 0; i < p.n; ++i)
    for (std::size_t t = 0; t < p.h; ++t) {
      std::size_t k = (i * p.h + t) * 2;
      double e = std::sqrt(std::pow(p.truth[k] - p.pred[k], 2) +
                           std::pow(p.truth[k + 1] - p.pred[k + 1], 2));
      b.ade += e;
      if (t == p.h - 1) b.fde += e;
    }
  b.ade /= static_cast<double>(p.n * p.h);
  b.fde /= static_cast<double>(p.n);
  for (double m : marks) {
    std::size_t t = static_cast<std::size_t>(m * p.fps) - 1;
    double acc = 0;
    for (std::size_t i = 0; i < p.n; ++i) {
      std::size_t k = (i * p.h + t) * 2;
      acc += std::pow(p.truth[k] - p.pred[k], 2) + std::pow(p.truth[k + 1] - p.pred[k + 1], 2);
    }
    b.rmse.push_back(std::sqrt(acc / static_cast<double>(p.n)));
  }
  return b;
}

}  // namespace

TEST(Displacement, PerfectPredictionIsZero) {
  RngStream rng(1, 0);
  PredictionPair p = random_pair(3, 4, rng);
  p.pred = p.truth;
  for (double d : displacement(p)) EXPECT_DOUBLE_EQ(d, 0.0);
}

TEST(Displacement, ThreeFourFive) {
  PredictionPair p = make_pair(1, 1);
  p.truth = {3, 4};
  EXPECT_DOUBLE_EQ(displacement(p)[0], 5.0);
}

TEST(Displacement, TranslationInvariance) {
  RngStream rng(2, 0);
  PredictionPair p = random_pair(2, 3, rng);
  auto d0 = displacement(p);
  for (auto& v : p.pred) v += 17.5;
  for (auto& v : p.truth) v += 17.5;
  auto d1 = displacement(p);
  for (std::size_t i = 0; i < d0.size(); ++i) EXPECT_NEAR(d0[i], d1[i], 1e-12);
}

TEST(Displacement, ShapeMismatchThrows) {
  PredictionPair p = make_pair(2, 3);
  p.pred.pop_back();
  EXPECT_THROW(displacement(p), ShapeError);
}

TEST(Ade, HandCases) {
  PredictionPair p = make_pair(1, 2);
  p.truth = {0, 0, 0, 5};  // errors 0 and 5
  EXPECT_DOUBLE_EQ(ade(p), 2.5);
  EXPECT_DOUBLE_EQ(fde(p), 5.0);
}

TEST(Ade, BoundedByMinMaxDisplacement) {
  RngStream rng(3, 0);
  for (int rep = 0; rep < 20; ++rep) {
    PredictionPair p = random_pair(3, 5, rng);
    auto d = displacement(p);
    double lo = *std::min_element(d.begin(), d.end());
    double hi = *std::max_element(d.begin(), d.end());
    double a = ade(p);
    EXPECT_GE(a, lo - 1e-12);
    EXPECT_LE(a, hi + 1e-12);
  }
}

TEST(Fde, TwoVehicleFinalErrors) {
  PredictionPair p = make_pair(2, 1);
  p.truth = {3, 0, 0, 4};
  EXPECT_DOUBLE_EQ(fde(p), 3.5);
}

TEST(Fde, SingleVehicleEqualsFinalDisplacement) {
  RngStream rng(4, 0);
  PredictionPair p = random_pair(1, 6, rng);
  EXPECT_DOUBLE_EQ(fde(p), displacement(p)[5]);
}

TEST(Rmse, HandCase) {
  PredictionPair p = make_pair(2, 5);
  // final step (1s at 5 fps) errors 3 and 4
  p.truth[(0 * 5 + 4) * 2] = 3;
  p.truth[(1 * 5 + 4) * 2 + 1] = 4;
  auto r = rmse_curve(p, {1.0});
  EXPECT_DOUBLE_EQ(r[1.0], std::sqrt(12.5));
}

TEST(Rmse, ZeroErrorAtEveryMark) {
  PredictionPair p = make_pair(3, 25);
  for (auto& [_, v] : rmse_curve(p, {1, 2, 3, 4, 5})) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Rmse, SingleVehicleEqualsDisplacement) {
  RngStream rng(5, 0);
  PredictionPair p = random_pair(1, 10, rng);
  auto d = displacement(p);
  auto r = rmse_curve(p, {1.0, 2.0});
  EXPECT_NEAR(r[1.0], d[4], 1e-12);
  EXPECT_NEAR(r[2.0], d[9], 1e-12);
}

TEST(Rmse, MarkBeyondHorizonThrows) {
  PredictionPair p = make_pair(1, 5);
  EXPECT_THROW(rmse_curve(p, {2.0}), DataError);
}

TEST(Rmse, SingleVehicleFinalMarkEqualsFde) {
  RngStream rng(6, 0);
  PredictionPair p = random_pair(1, 5, rng);
  EXPECT_NEAR(rmse_curve(p, {1.0})[1.0], fde(p), 1e-12);
}

TEST(Oracle, HundredRandomPairsAgree) {
  RngStream rng(2023, 0);
  for (int rep = 0; rep < 100; ++rep) {
    std::size_t n = 1 + rng.next_u64() % 6;
    PredictionPair p = random_pair(n, 25, rng);
    std::vector<double> marks = {1, 2, 3, 4, 5};
    Brute b = brute_metrics(p, marks);
    EXPECT_NEAR(ade(p), b.ade, 1e-12);
    EXPECT_NEAR(fde(p), b.fde, 1e-12);
    auto r = rmse_curve(p, marks);
    for (std::size_t mi = 0; mi < marks.size(); ++mi) EXPECT_NEAR(r[marks[mi]], b.rmse[mi], 1e-12);
  }
}

TEST(Oracle, PermutationInvariance) {
  RngStream rng(7, 0);
  PredictionPair p = random_pair(4, 5, rng);
  PredictionPair q = p;
  // swap vehicles 0 and 3
  for (std::size_t t = 0; t < 5 * 2; ++t) {
    std::swap(q.pred[t], q.pred[3 * 10 + t]);
    std::swap(q.truth[t], q.truth[3 * 10 + t]);
  }
  EXPECT_NEAR(ade(p), ade(q), 1e-12);
  EXPECT_NEAR(fde(p), fde(q), 1e-12);
}

TEST(Report, CsvAndJsonCarryUnits) {
  PredictionPair p = make_pair(2, 5);
  p.unit = Unit::meter;
  MetricsReport r = metrics_report(p, {1.0});
  EXPECT_NE(r.csv().find("ade,fde,rmse@1s"), std::string::npos);
  auto j = r.json();
  EXPECT_EQ(j["unit"], "meter");
  EXPECT_DOUBLE_EQ(j["ade"].get<double>(), 0.0);
  EXPECT_TRUE(j["rmse"].contains("1s"));
}
