#include "mlipgen/surrogate.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "mlipgen/errors.hpp"

namespace mlipgen {

using cplx = std::complex<double>;

void BasisSpec::validate() const {
  if (order < 1 || order > 3) throw Error(ErrorKind::InvalidArgument, "basis order must be 1, 2 or 3");
  if (radial_size < 1) throw Error(ErrorKind::InvalidArgument, "radial_size must be positive");
  if (max_m < 0) throw Error(ErrorKind::InvalidArgument, "max_m must be nonnegative");
  if (!(cutoff > 0) || !(r0 > 0)) throw Error(ErrorKind::InvalidArgument, "cutoff and r0 must be positive");
  if (!(inner_radius >= 0) || !(inner_radius < cutoff))
    throw Error(ErrorKind::InvalidArgument, "inner_radius must lie in [0, cutoff)");
}

bool operator==(const BasisSpec& a, const BasisSpec& b) {
  return a.order == b.order && a.max_degree == b.max_degree && a.radial_size == b.radial_size &&
         a.max_m == b.max_m && a.cutoff == b.cutoff && a.r0 == b.r0 &&
         a.inner_radius == b.inner_radius;
}

int BasisFunction::degree() const {
  int d = 0;
  for (const auto& f : factors) d += f.k + 1 + std::abs(f.m);
  return d;
}

namespace {

void enumerate(const BasisSpec& spec, std::vector<OneParticleIndex>& current, int first,
               const std::vector<OneParticleIndex>& singles, std::vector<BasisFunction>& out) {
  if (!current.empty()) {
    int msum = 0;
    int degree = 0;
    for (const auto& f : current) {
      msum += f.m;
      degree += f.k + 1 + std::abs(f.m);
    }
    if (degree > spec.max_degree) return;
    if (msum == 0) {
      std::vector<OneParticleIndex> mirror = current;
      for (auto& f : mirror) f.m = -f.m;
      std::sort(mirror.begin(), mirror.end());
      // Re(prod A) is shared by a tuple and its conjugate; keep the smaller.
      if (!(mirror < current)) out.push_back(BasisFunction{current});
    }
  }
  if (static_cast<int>(current.size()) == spec.order) return;
  for (int i = first; i < static_cast<int>(singles.size()); ++i) {
    current.push_back(singles[static_cast<std::size_t>(i)]);
    enumerate(spec, current, i, singles, out);
    current.pop_back();
  }
}

double transform(double r0, double r) {
  const double q = (1.0 + r0) / (1.0 + r);
  return q * q;
}

}  // namespace

Basis::Basis(const BasisSpec& spec) : spec_(spec) {
  spec_.validate();
  std::vector<OneParticleIndex> singles;
  for (int k = 0; k < spec_.radial_size; ++k)
    for (int m = -spec_.max_m; m <= spec_.max_m; ++m) singles.push_back({k, m});
  std::vector<OneParticleIndex> current;
  enumerate(spec_, current, 0, singles, functions_);
  std::stable_sort(functions_.begin(), functions_.end(), [](const auto& a, const auto& b) {
    if (a.factors.size() != b.factors.size()) return a.factors.size() < b.factors.size();
    return a.factors < b.factors;
  });
  if (functions_.empty()) throw Error(ErrorKind::EmptyBasis, "degree and order bounds exclude every basis function");
  for (const auto& f : functions_) {
    std::array<int, 4> s{-1, -1, -1, -1};
    for (std::size_t a = 0; a < f.factors.size(); ++a) s[a] = slot(f.factors[a].k, f.factors[a].m);
    slots_.push_back(s);
  }
  u_in_ = transform(spec_.r0, spec_.inner_radius);
  u_cut_ = transform(spec_.r0, spec_.cutoff);
}

void Basis::radial(int k, double r, double& v, double& dv, double& d2v) const {
  const double rc = spec_.cutoff;
  if (r >= rc) {
    v = dv = d2v = 0.0;
    return;
  }
  const double span = u_in_ - u_cut_;
  const double u = transform(spec_.r0, r);
  const double du = -2.0 * u / (1.0 + r);
  const double d2u = 6.0 * u / ((1.0 + r) * (1.0 + r));
  const double x = -1.0 + 2.0 * (u - u_cut_) / span;
  const double dx = 2.0 * du / span;
  const double d2x = 2.0 * d2u / span;

  const double h = rc - spec_.inner_radius;
  const double t = (rc - r) / h;
  const double e = t * t * t;
  const double de = -3.0 * t * t / h;
  const double d2e = 6.0 * t / (h * h);

  // Legendre recurrence for P_k and its derivatives.
  double p0 = 1.0, dp0 = 0.0, d2p0 = 0.0;
  double p1 = x, dp1 = 1.0, d2p1 = 0.0;
  double p = p0, dp = dp0, d2p = d2p0;
  if (k >= 1) {
    p = p1;
    dp = dp1;
    d2p = d2p1;
  }
  for (int n = 1; n < k; ++n) {
    const double p2 = ((2 * n + 1) * x * p1 - n * p0) / (n + 1);
    const double dp2 = dp0 + (2 * n + 1) * p1;
    const double d2p2 = d2p0 + (2 * n + 1) * dp1;
    p0 = p1;
    dp0 = dp1;
    d2p0 = d2p1;
    p1 = p2;
    dp1 = dp2;
    d2p1 = d2p2;
    p = p2;
    dp = dp2;
    d2p = d2p2;
  }
  v = p * e;
  dv = dp * dx * e + p * de;
  d2v = d2p * dx * dx * e + dp * d2x * e + 2.0 * dp * dx * de + p * d2e;
}

struct Basis::Workspace {
  int j = 0;
  int s = 0;
  std::vector<cplx> a;                     // densities, per slot
  std::vector<cplx> dx, dy;                // gradients, j * s + slot
  std::vector<cplx> hxx, hxy, hyy;         // second derivatives
};

namespace {

thread_local std::vector<double> radial_scratch;

}  // namespace

// derivs: 0 values only, 1 with gradients, 2 with second derivatives.
void Basis::one_particle(std::span<const Vec2> env, Workspace& ws, int derivs) const {
  const int S = one_particle_count();
  const int J = static_cast<int>(env.size());
  const int K = spec_.radial_size;
  const int M = spec_.max_m;
  ws.j = J;
  ws.s = S;
  ws.a.assign(static_cast<std::size_t>(S), cplx(0.0, 0.0));
  if (derivs >= 1) {
    ws.dx.assign(static_cast<std::size_t>(J * S), cplx());
    ws.dy.assign(static_cast<std::size_t>(J * S), cplx());
  }
  if (derivs >= 2) {
    ws.hxx.assign(static_cast<std::size_t>(J * S), cplx());
    ws.hxy.assign(static_cast<std::size_t>(J * S), cplx());
    ws.hyy.assign(static_cast<std::size_t>(J * S), cplx());
  }
  radial_scratch.resize(static_cast<std::size_t>(3 * K));
  std::vector<cplx> wp(static_cast<std::size_t>(M + 3));
  for (int j = 0; j < J; ++j) {
    const Vec2& g = env[static_cast<std::size_t>(j)];
    const double r = g.norm();
    if (r == 0.0) throw Error(ErrorKind::NeighborAtZeroDistance, "neighbour at zero distance");
    if (r >= spec_.cutoff) continue;
    const cplx w(g.x(), g.y());
    const Vec2 n = g / r;
    // wp[m] = w^m
    wp[0] = 1.0;
    for (int m = 1; m <= M; ++m) wp[static_cast<std::size_t>(m)] = wp[static_cast<std::size_t>(m - 1)] * w;
    for (int k = 0; k < K; ++k) {
      double R, dR, d2R;
      radial(k, r, R, dR, d2R);
      for (int m = 0; m <= M; ++m) {
        // phi = f(r) w^m with f = R r^{-m}
        const double rm = std::pow(r, -m);
        const double f = R * rm;
        const cplx wm = wp[static_cast<std::size_t>(m)];
        const cplx phi = f * wm;
        const int sp = slot(k, m);
        const int sn = slot(k, -m);
        ws.a[static_cast<std::size_t>(sp)] += phi;
        if (m > 0) ws.a[static_cast<std::size_t>(sn)] += std::conj(phi);
        if (derivs < 1) continue;
        const double df = dR * rm - m * R * rm / r;
        const cplx wm1 = m >= 1 ? wp[static_cast<std::size_t>(m - 1)] : cplx(0.0);
        const cplx ex(1.0, 0.0);
        const cplx ey(0.0, 1.0);
        const cplx gx = df * n.x() * wm + f * double(m) * wm1 * ex;
        const cplx gy = df * n.y() * wm + f * double(m) * wm1 * ey;
        const std::size_t ip = static_cast<std::size_t>(j * S + sp);
        const std::size_t in = static_cast<std::size_t>(j * S + sn);
        ws.dx[ip] = gx;
        ws.dy[ip] = gy;
        if (m > 0) {
          ws.dx[in] = std::conj(gx);
          ws.dy[in] = std::conj(gy);
        }
        if (derivs < 2) continue;
        const double d2f = d2R * rm - 2.0 * m * dR * rm / r + m * (m + 1.0) * R * rm / (r * r);
        const cplx wm2 = m >= 2 ? wp[static_cast<std::size_t>(m - 2)] : cplx(0.0);
        const double nn_xx = n.x() * n.x(), nn_xy = n.x() * n.y(), nn_yy = n.y() * n.y();
        const double t = df / r;
        const cplx c1 = df * double(m) * wm1;
        const cplx c2 = f * double(m) * (m - 1.0) * wm2;
        // (n e^T + e n^T) and e e^T with e = (1, i)
        const cplx hxx = (d2f * nn_xx + t * (1.0 - nn_xx)) * wm + c1 * (2.0 * n.x()) + c2;
        const cplx hxy = (d2f * nn_xy - t * nn_xy) * wm + c1 * (n.x() * ey + n.y() * ex) + c2 * ey;
        const cplx hyy = (d2f * nn_yy + t * (1.0 - nn_yy)) * wm + c1 * (2.0 * n.y() * ey) + c2 * ey * ey;
        ws.hxx[ip] = hxx;
        ws.hxy[ip] = hxy;
        ws.hyy[ip] = hyy;
        if (m > 0) {
          ws.hxx[in] = std::conj(hxx);
          ws.hxy[in] = std::conj(hxy);
          ws.hyy[in] = std::conj(hyy);
        }
      }
    }
  }
}

void Basis::design_row(std::span<const Vec2> env, std::span<double> row) const {
  Workspace ws;
  one_particle(env, ws, 0);
  for (int b = 0; b < size(); ++b) {
    const auto& s = slots_[static_cast<std::size_t>(b)];
    cplx p = ws.a[static_cast<std::size_t>(s[0])];
    for (int a = 1; a < 4 && s[static_cast<std::size_t>(a)] >= 0; ++a) p *= ws.a[static_cast<std::size_t>(s[static_cast<std::size_t>(a)])];
    row[static_cast<std::size_t>(b)] = p.real();
  }
}

void Basis::design_gradient(std::span<const Vec2> env, Eigen::Ref<Eigen::MatrixXd> grad) const {
  Workspace ws;
  one_particle(env, ws, 1);
  const int J = ws.j;
  const int S = ws.s;
  grad.setZero();
  for (int b = 0; b < size(); ++b) {
    const auto& s = slots_[static_cast<std::size_t>(b)];
    const int order = static_cast<int>(functions_[static_cast<std::size_t>(b)].factors.size());
    for (int a = 0; a < order; ++a) {
      cplx others(1.0, 0.0);
      for (int c = 0; c < order; ++c)
        if (c != a) others *= ws.a[static_cast<std::size_t>(s[static_cast<std::size_t>(c)])];
      const int sa = s[static_cast<std::size_t>(a)];
      for (int j = 0; j < J; ++j) {
        const std::size_t idx = static_cast<std::size_t>(j * S + sa);
        grad(2 * j, b) += (others * ws.dx[idx]).real();
        grad(2 * j + 1, b) += (others * ws.dy[idx]).real();
      }
    }
  }
}

// w1[s]: coefficient-weighted derivative of sum_B c_B prod A with respect to A_s.
// w2[s * S + t]: the same for the second derivative.
void Basis::product_weights(const Workspace& ws, const Eigen::VectorXd& c, std::vector<cplx>& w1,
                            std::vector<cplx>* w2) const {
  const int S = ws.s;
  w1.assign(static_cast<std::size_t>(S), cplx());
  if (w2) w2->assign(static_cast<std::size_t>(S * S), cplx());
  for (int b = 0; b < size(); ++b) {
    const double cb = c[b];
    if (cb == 0.0) continue;
    const auto& s = slots_[static_cast<std::size_t>(b)];
    const int order = static_cast<int>(functions_[static_cast<std::size_t>(b)].factors.size());
    for (int a = 0; a < order; ++a) {
      cplx others(cb, 0.0);
      for (int q = 0; q < order; ++q)
        if (q != a) others *= ws.a[static_cast<std::size_t>(s[static_cast<std::size_t>(q)])];
      w1[static_cast<std::size_t>(s[static_cast<std::size_t>(a)])] += others;
      if (!w2) continue;
      for (int q = 0; q < order; ++q) {
        if (q == a) continue;
        cplx rest(cb, 0.0);
        for (int p = 0; p < order; ++p)
          if (p != a && p != q) rest *= ws.a[static_cast<std::size_t>(s[static_cast<std::size_t>(p)])];
        (*w2)[static_cast<std::size_t>(s[static_cast<std::size_t>(a)] * S + s[static_cast<std::size_t>(q)])] += rest;
      }
    }
  }
}

double Basis::energy(std::span<const Vec2> env, const Eigen::VectorXd& c) const {
  if (c.size() != size()) throw Error(ErrorKind::DimensionMismatch, "coefficient count does not match basis");
  Workspace ws;
  one_particle(env, ws, 0);
  double e = 0.0;
  for (int b = 0; b < size(); ++b) {
    const auto& s = slots_[static_cast<std::size_t>(b)];
    cplx p = ws.a[static_cast<std::size_t>(s[0])];
    for (int a = 1; a < 4 && s[static_cast<std::size_t>(a)] >= 0; ++a) p *= ws.a[static_cast<std::size_t>(s[static_cast<std::size_t>(a)])];
    e += c[b] * p.real();
  }
  return e;
}

double Basis::energy_gradient(std::span<const Vec2> env, const Eigen::VectorXd& c,
                              std::span<Vec2> grad) const {
  if (c.size() != size()) throw Error(ErrorKind::DimensionMismatch, "coefficient count does not match basis");
  Workspace ws;
  one_particle(env, ws, 1);
  double e = 0.0;
  for (int b = 0; b < size(); ++b) {
    const auto& s = slots_[static_cast<std::size_t>(b)];
    cplx p = ws.a[static_cast<std::size_t>(s[0])];
    for (int a = 1; a < 4 && s[static_cast<std::size_t>(a)] >= 0; ++a) p *= ws.a[static_cast<std::size_t>(s[static_cast<std::size_t>(a)])];
    e += c[b] * p.real();
  }
  std::vector<cplx> w1;
  product_weights(ws, c, w1, nullptr);
  const int S = ws.s;
  for (int j = 0; j < ws.j; ++j) {
    cplx gx, gy;
    for (int s = 0; s < S; ++s) {
      const std::size_t idx = static_cast<std::size_t>(j * S + s);
      gx += w1[static_cast<std::size_t>(s)] * ws.dx[idx];
      gy += w1[static_cast<std::size_t>(s)] * ws.dy[idx];
    }
    grad[static_cast<std::size_t>(j)] = Vec2(gx.real(), gy.real());
  }
  return e;
}

void Basis::hessian(std::span<const Vec2> env, const Eigen::VectorXd& c,
                    Eigen::Ref<Eigen::MatrixXd> h) const {
  if (c.size() != size()) throw Error(ErrorKind::DimensionMismatch, "coefficient count does not match basis");
  Workspace ws;
  one_particle(env, ws, 2);
  std::vector<cplx> w1, w2;
  product_weights(ws, c, w1, &w2);
  const int S = ws.s;
  const int J = ws.j;
  // G_j[s] = sum_t w2[s, t] grad phi_t(g_j)
  std::vector<cplx> gx(static_cast<std::size_t>(J * S)), gy(static_cast<std::size_t>(J * S));
  for (int j = 0; j < J; ++j)
    for (int s = 0; s < S; ++s) {
      cplx ax, ay;
      for (int t = 0; t < S; ++t) {
        const cplx w = w2[static_cast<std::size_t>(s * S + t)];
        if (w == cplx()) continue;
        ax += w * ws.dx[static_cast<std::size_t>(j * S + t)];
        ay += w * ws.dy[static_cast<std::size_t>(j * S + t)];
      }
      gx[static_cast<std::size_t>(j * S + s)] = ax;
      gy[static_cast<std::size_t>(j * S + s)] = ay;
    }
  h.setZero();
  for (int i = 0; i < J; ++i)
    for (int j = 0; j < J; ++j) {
      cplx xx, xy, yx, yy;
      for (int s = 0; s < S; ++s) {
        const std::size_t is = static_cast<std::size_t>(i * S + s);
        const std::size_t js = static_cast<std::size_t>(j * S + s);
        xx += ws.dx[is] * gx[js];
        xy += ws.dx[is] * gy[js];
        yx += ws.dy[is] * gx[js];
        yy += ws.dy[is] * gy[js];
      }
      h(2 * i, 2 * j) = xx.real();
      h(2 * i, 2 * j + 1) = xy.real();
      h(2 * i + 1, 2 * j) = yx.real();
      h(2 * i + 1, 2 * j + 1) = yy.real();
    }
  for (int i = 0; i < J; ++i) {
    cplx xx, xy, yy;
    for (int s = 0; s < S; ++s) {
      const std::size_t is = static_cast<std::size_t>(i * S + s);
      xx += w1[static_cast<std::size_t>(s)] * ws.hxx[is];
      xy += w1[static_cast<std::size_t>(s)] * ws.hxy[is];
      yy += w1[static_cast<std::size_t>(s)] * ws.hyy[is];
    }
    h(2 * i, 2 * i) += xx.real();
    h(2 * i, 2 * i + 1) += xy.real();
    h(2 * i + 1, 2 * i) += xy.real();
    h(2 * i + 1, 2 * i + 1) += yy.real();
  }
}

SurrogatePotential::SurrogatePotential(std::shared_ptr<const Basis> basis, Eigen::VectorXd coefficients)
    : basis_(std::move(basis)), c_(std::move(coefficients)) {
  if (!basis_) throw Error(ErrorKind::InvalidArgument, "null basis");
  if (c_.size() != basis_->size())
    throw Error(ErrorKind::DimensionMismatch, "coefficient count does not match basis");
}

double SurrogatePotential::energy(std::span<const Vec2> env) const { return basis_->energy(env, c_); }

double SurrogatePotential::energy_gradient(std::span<const Vec2> env, std::span<Vec2> grad) const {
  return basis_->energy_gradient(env, c_, grad);
}

void SurrogatePotential::hessian(std::span<const Vec2> env, Eigen::Ref<Eigen::MatrixXd> h) const {
  basis_->hessian(env, c_, h);
}

std::shared_ptr<const Basis> build_basis(const BasisSpec& spec) {
  return std::make_shared<const Basis>(spec);
}

namespace {
constexpr int kModelFormat = 1;
}

std::string model_to_json(const SurrogatePotential& model) {
  const BasisSpec& s = model.basis().spec();
  nlohmann::json j;
  j["format_version"] = kModelFormat;
  j["spec"] = {{"order", s.order},         {"max_degree", s.max_degree}, {"radial_size", s.radial_size},
               {"max_m", s.max_m},         {"cutoff", s.cutoff},         {"r0", s.r0},
               {"inner_radius", s.inner_radius}};
  j["basis_size"] = model.basis().size();
  j["coefficients"] = std::vector<double>(model.coefficients().data(),
                                          model.coefficients().data() + model.coefficients().size());
  return j.dump(2);
}

SurrogatePotential model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigParse, std::string("model JSON: ") + e.what());
  }
  if (j.value("format_version", 0) != kModelFormat)
    throw Error(ErrorKind::ConfigParse, "unsupported model format_version");
  BasisSpec s;
  try {
    const auto& js = j.at("spec");
    s.order = js.at("order").get<int>();
    s.max_degree = js.at("max_degree").get<int>();
    s.radial_size = js.at("radial_size").get<int>();
    s.max_m = js.at("max_m").get<int>();
    s.cutoff = js.at("cutoff").get<double>();
    s.r0 = js.at("r0").get<double>();
    s.inner_radius = js.at("inner_radius").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigParse, std::string("model spec: ") + e.what());
  }
  const auto c = j.at("coefficients").get<std::vector<double>>();
  return SurrogatePotential(build_basis(s), Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())));
}

}  // namespace mlipgen
