#include "essvi_mm/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "essvi_mm/errors.hpp"
#include "oracles.hpp"

namespace essvi_mm {
namespace {

Eigen::VectorXd random_vec(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

MlpParams random_net(std::mt19937_64& rng) {
  MlpParams p = make_mlp({15, 64, 64, 5}, rng);
  std::normal_distribution<double> d(0.0, 0.1);
  for (auto& l : p.layers) {
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = d(rng);
  }
  return p;
}

std::vector<double> flat(const MlpParams& p) {
  std::vector<double> out;
  p.flatten_into(out);
  return out;
}

TEST(MlpForward, ZeroNetGivesZero) {
  std::mt19937_64 rng(1);
  const MlpParams z = make_mlp({15, 64, 64, 5}, rng).zeros_like();
  EXPECT_EQ(mlp_forward(z, random_vec(15, rng)), Eigen::VectorXd::Zero(5));
}

TEST(MlpForward, SingleTanhUnit) {
  MlpParams p;
  p.layers.push_back({Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1)});
  p.layers.push_back({Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1)});
  for (double x : {-3.0, -0.2, 0.0, 0.7, 5.0}) {
    EXPECT_EQ(mlp_forward(p, Eigen::VectorXd::Constant(1, x))(0), std::tanh(x));
  }
}

TEST(MlpForward, MatchesPlainLoopOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpParams p = random_net(rng);
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
    for (const auto& l : p.layers) {
      w.push_back(l.weight);
      b.push_back(l.bias);
    }
    const Eigen::VectorXd x = random_vec(15, rng);
    const Eigen::VectorXd y = mlp_forward(p, x);
    const Eigen::VectorXd ref = oracle::mlp(w, b, x);
    for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y(i), ref(i), 1e-12);
  }
}

TEST(MlpForward, RejectsWrongInputSize) {
  std::mt19937_64 rng(3);
  const MlpParams p = make_mlp({15, 8, 5}, rng);
  EXPECT_THROW(mlp_forward(p, Eigen::VectorXd::Zero(14)), ShapeMismatch);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const MlpParams p = random_net(rng);
  const Eigen::VectorXd x = random_vec(15, rng);
  const Eigen::VectorXd dy = random_vec(5, rng);
  MlpCache cache;
  mlp_forward(p, x, &cache);
  MlpParams g = p.zeros_like();
  const Eigen::VectorXd dx = mlp_backward(p, cache, dy, &g);

  // Long-double oracle of dy . f(x): dy is folded into the output layer so the
  // oracle's summed output equals the weighted one.
  std::vector<std::pair<int, int>> shapes;
  for (const auto& l : p.layers) {
    shapes.emplace_back(static_cast<int>(l.weight.rows()), static_cast<int>(l.weight.cols()));
  }
  const std::vector<double> theta = flat(p);
  const std::vector<double> grad = flat(g);
  const std::size_t last = theta.size() - static_cast<std::size_t>(p.layers.back().weight.size() +
                                                                   p.layers.back().bias.size());
  const auto weighted = [&](std::vector<oracle::Ld> v) {
    const Eigen::Index rows = p.layers.back().weight.rows();
    for (std::size_t i = last; i < v.size(); ++i) {
      const auto within = static_cast<Eigen::Index>(i - last);
      const Eigen::Index r = within < p.layers.back().weight.size() ? within % rows
                                                                    : within - p.layers.back().weight.size();
      v[i] *= dy(r);
    }
    return oracle::mlp_ld(shapes, v, std::vector<oracle::Ld>(x.data(), x.data() + x.size()));
  };
  std::vector<oracle::Ld> v(theta.begin(), theta.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const oracle::Ld h = 1e-6L;
    v[i] = theta[i] + h;
    const oracle::Ld up = weighted(v);
    v[i] = theta[i] - h;
    const oracle::Ld dn = weighted(v);
    v[i] = theta[i];
    const double fd = static_cast<double>((up - dn) / (2 * h));
    worst = std::max(worst, std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-8}));
  }
  EXPECT_LT(worst, 1e-5);

  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6;
    Eigen::VectorXd up = x;
    Eigen::VectorXd dn = x;
    up(i) += h;
    dn(i) -= h;
    const double fd = (dy.dot(mlp_forward(p, up)) - dy.dot(mlp_forward(p, dn))) / (2 * h);
    EXPECT_NEAR(dx(i), fd, 1e-5 * std::max(std::abs(fd), 1e-6));
  }
}

TEST(MlpBackward, ZeroOutputGradientGivesZero) {
  std::mt19937_64 rng(5);
  const MlpParams p = random_net(rng);
  MlpCache cache;
  mlp_forward(p, random_vec(15, rng), &cache);
  MlpParams g = p.zeros_like();
  const Eigen::VectorXd dx = mlp_backward(p, cache, Eigen::VectorXd::Zero(5), &g);
  for (double v : flat(g)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(dx, Eigen::VectorXd::Zero(15));
}

TEST(MlpBackward, LinearInOutputGradient) {
  std::mt19937_64 rng(6);
  const MlpParams p = random_net(rng);
  MlpCache cache;
  mlp_forward(p, random_vec(15, rng), &cache);
  const Eigen::VectorXd dy = random_vec(5, rng);
  MlpParams g1 = p.zeros_like();
  MlpParams g2 = p.zeros_like();
  const Eigen::VectorXd dx1 = mlp_backward(p, cache, dy, &g1);
  const Eigen::VectorXd dx2 = mlp_backward(p, cache, 2.0 * dy, &g2);
  const auto a = flat(g1);
  const auto b = flat(g2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], 2.0 * a[i]);
  EXPECT_EQ(dx2, 2.0 * dx1);
}

TEST(MlpBackward, RejectsMismatchedCache) {
  std::mt19937_64 rng(7);
  const MlpParams p = random_net(rng);
  EXPECT_THROW(mlp_backward(p, MlpCache{}, Eigen::VectorXd::Zero(5), nullptr), ShapeMismatch);
}

TEST(MlpParams, FlattenRoundTrip) {
  std::mt19937_64 rng(8);
  const MlpParams p = random_net(rng);
  const auto v = flat(p);
  EXPECT_EQ(static_cast<Eigen::Index>(v.size()), p.num_params());
  MlpParams q = p.zeros_like();
  std::size_t off = 0;
  q.unflatten_from(v, &off);
  EXPECT_EQ(off, v.size());
  EXPECT_EQ(flat(q), v);
}

}  // namespace
}  // namespace essvi_mm
