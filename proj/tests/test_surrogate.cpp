#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mlipgen/errors.hpp"
#include "mlipgen/surrogate.hpp"

using namespace mlipgen;

namespace {

BasisSpec small_spec() {
  BasisSpec s;
  s.order = 3;
  s.radial_size = 4;
  s.max_m = 3;
  s.max_degree = 10;
  s.cutoff = 2.5;
  s.r0 = 0.96;
  s.inner_radius = 0.6;
  return s;
}

std::vector<Vec2> random_env(std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> rad(0.7, 2.4);
  std::uniform_real_distribution<double> ang(0.0, 2 * std::numbers::pi);
  std::vector<Vec2> env;
  for (int j = 0; j < count; ++j) {
    const double r = rad(rng), t = ang(rng);
    env.emplace_back(r * std::cos(t), r * std::sin(t));
  }
  return env;
}

Eigen::VectorXd row(const Basis& b, const std::vector<Vec2>& env) {
  Eigen::VectorXd v(b.size());
  b.design_row(env, std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
  return v;
}

}  // namespace

TEST_CASE("basis counts") {
  BasisSpec s;
  s.order = 1;
  s.radial_size = 3;
  s.max_m = 0;
  s.max_degree = 100;
  CHECK(Basis(s).size() == 3);

  s.order = 2;
  s.radial_size = 2;
  s.max_m = 1;
  const Basis b(s);
  int pairs = 0;
  for (const auto& f : b.functions()) pairs += f.factors.size() == 2;
  CHECK(pairs == 6);
  CHECK(b.size() == 8);

  const Basis big(small_spec());
  for (const auto& f : big.functions()) {
    CHECK(f.degree() <= small_spec().max_degree);
    int msum = 0;
    for (const auto& o : f.factors) msum += o.m;
    CHECK(msum == 0);
  }
  // lower degree bounds give nested bases
  BasisSpec lo = small_spec();
  lo.max_degree = 7;
  CHECK(Basis(lo).size() < big.size());
}

TEST_CASE("invariance under rotations, reflections and permutations") {
  const Basis b(small_spec());
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ang(0.0, 2 * std::numbers::pi);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto env = random_env(rng, 12);
    const Eigen::VectorXd ref = row(b, env);
    const double scale = ref.cwiseAbs().maxCoeff();
    Mat2 q;
    const double t = ang(rng);
    q << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    if (trial % 2) q.col(1) *= -1.0;  // reflection
    std::vector<Vec2> moved;
    for (const auto& g : env) moved.push_back(q * g);
    std::shuffle(moved.begin(), moved.end(), rng);
    worst = std::max(worst, (row(b, moved) - ref).cwiseAbs().maxCoeff() / scale);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("values and linear evaluation") {
  const auto b = build_basis(small_spec());
  std::mt19937_64 rng(19);
  const auto env = random_env(rng, 10);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(b->size());
  SurrogatePotential zero(b, c);
  CHECK(zero.energy(env) == 0.0);
  std::vector<Vec2> g(env.size());
  zero.energy_gradient(env, g);
  for (const auto& v : g) CHECK(v.norm() == 0.0);

  std::normal_distribution<double> normal;
  for (int i = 0; i < c.size(); ++i) c[i] = normal(rng);
  SurrogatePotential model(b, c);
  CHECK(std::abs(row(*b, env).dot(c) - model.energy(env)) < 1e-14 * std::max(1.0, std::abs(model.energy(env))) * 100);

  const Eigen::VectorXd empty = row(*b, {});
  CHECK(empty.cwiseAbs().maxCoeff() == 0.0);

  // permuted environments give bitwise-identical values when summation order
  // is not changed by the permutation of equal vectors
  std::vector<Vec2> rev(env.rbegin(), env.rend());
  CHECK(model.energy(rev) == doctest::Approx(model.energy(env)).epsilon(1e-13));
}

TEST_CASE("radial functions vanish at the cutoff") {
  const Basis b(small_spec());
  for (int k = 0; k < small_spec().radial_size; ++k) {
    double v, dv, d2v;
    b.radial(k, small_spec().cutoff, v, dv, d2v);
    CHECK(std::abs(v) < 1e-14);
    CHECK(std::abs(dv) < 1e-12);
    const double h = 1e-5;
    double vp, vm, t1, t2;
    b.radial(k, 1.3 + h, vp, t1, t2);
    b.radial(k, 1.3 - h, vm, t1, t2);
    b.radial(k, 1.3, v, dv, d2v);
    CHECK(dv == doctest::Approx((vp - vm) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("gradients and Hessians against finite differences") {
  const auto b = build_basis(small_spec());
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal;
  Eigen::VectorXd c(b->size());
  for (int i = 0; i < c.size(); ++i) c[i] = normal(rng);
  SurrogatePotential model(b, c);
  const double h = 1e-6;
  double worst_g = 0.0, worst_h = 0.0, worst_rows = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    auto env = random_env(rng, 9);
    const int n = static_cast<int>(env.size());
    std::vector<Vec2> g(env.size());
    model.energy_gradient(env, g);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    model.hessian(env, hess);
    Eigen::MatrixXd rows(2 * n, b->size());
    b->design_gradient(env, rows);
    Eigen::VectorXd gf(2 * n);
    Eigen::MatrixXd hf(2 * n, 2 * n), rf(2 * n, b->size());
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < 2; ++a) {
        auto ep = env, em = env;
        ep[static_cast<std::size_t>(j)][a] += h;
        em[static_cast<std::size_t>(j)][a] -= h;
        gf[2 * j + a] = (model.energy(ep) - model.energy(em)) / (2 * h);
        std::vector<Vec2> gp(env.size()), gm(env.size());
        model.energy_gradient(ep, gp);
        model.energy_gradient(em, gm);
        for (int k = 0; k < n; ++k)
          for (int c2 = 0; c2 < 2; ++c2)
            hf(2 * k + c2, 2 * j + a) = (gp[static_cast<std::size_t>(k)][c2] - gm[static_cast<std::size_t>(k)][c2]) / (2 * h);
        rf.row(2 * j + a) = (row(*b, ep) - row(*b, em)).transpose() / (2 * h);
      }
    Eigen::VectorXd ga(2 * n);
    for (int j = 0; j < n; ++j) ga.segment<2>(2 * j) = g[static_cast<std::size_t>(j)];
    worst_g = std::max(worst_g, (ga - gf).cwiseAbs().maxCoeff() / gf.cwiseAbs().maxCoeff());
    worst_h = std::max(worst_h, (hess - hf).cwiseAbs().maxCoeff() / hf.cwiseAbs().maxCoeff());
    worst_rows = std::max(worst_rows, (rows - rf).cwiseAbs().maxCoeff() / rf.cwiseAbs().maxCoeff());
  }
  CHECK(worst_g < 1e-6);
  CHECK(worst_h < 1e-5);
  CHECK(worst_rows < 1e-6);
}

TEST_CASE("gradient is rotation covariant") {
  const auto b = build_basis(small_spec());
  std::mt19937_64 rng(29);
  std::normal_distribution<double> normal;
  Eigen::VectorXd c(b->size());
  for (int i = 0; i < c.size(); ++i) c[i] = normal(rng);
  SurrogatePotential model(b, c);
  const auto env = random_env(rng, 8);
  Mat2 q;
  q << std::cos(0.7), -std::sin(0.7), std::sin(0.7), std::cos(0.7);
  std::vector<Vec2> rot;
  for (const auto& g : env) rot.push_back(q * g);
  std::vector<Vec2> g0(env.size()), g1(env.size());
  model.energy_gradient(env, g0);
  model.energy_gradient(rot, g1);
  double scale = 0.0, err = 0.0;
  for (std::size_t j = 0; j < env.size(); ++j) {
    scale = std::max(scale, g0[j].norm());
    err = std::max(err, (g1[j] - q * g0[j]).norm());
  }
  CHECK(err < 1e-10 * scale);
}

TEST_CASE("model serialisation round trip") {
  const auto b = build_basis(small_spec());
  Eigen::VectorXd c = Eigen::VectorXd::LinSpaced(b->size(), -1.0, 2.0);
  SurrogatePotential model(b, c);
  const SurrogatePotential back = model_from_json(model_to_json(model));
  CHECK(back.basis().spec() == model.basis().spec());
  CHECK(back.coefficients() == c);
  CHECK_THROWS_AS(model_from_json("{\"format_version\": 99}"), Error);
}

TEST_CASE("spec validation") {
  BasisSpec s = small_spec();
  s.order = 0;
  CHECK_THROWS_AS(Basis{s}, Error);
  s = small_spec();
  s.inner_radius = 3.0;
  CHECK_THROWS_AS(Basis{s}, Error);
}
