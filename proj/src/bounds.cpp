#include "rssa/bounds.hpp"

#include <cmath>
#include <limits>

namespace rssa {
namespace {

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, del = 1.0 / a, sum = del;
    for (int i = 0; i < 10000; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-17) break;
    }
    return sum * std::exp(log_prefactor);
  }
  // Continued fraction for Q(a, x), modified Lentz.
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-17) break;
  }
  return 1.0 - std::exp(log_prefactor) * h;
}

void require_samples(const std::vector<DynamicsSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("bound construction needs at least one sample");
}

Matrix stack_f(const std::vector<DynamicsSample>& samples) {
  Matrix F(samples.front().n(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) F.col(static_cast<Eigen::Index>(k)) = samples[k].f();
  return F;
}

Matrix stack_g(const std::vector<DynamicsSample>& samples) {
  Matrix G(samples.front().g_flat().size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) G.col(static_cast<Eigen::Index>(k)) = samples[k].g_flat();
  return G;
}

Matrix sample_covariance(const Matrix& X, const Vector& mean) {
  const Eigen::Index N = X.cols();
  if (N < 2) return Matrix::Zero(X.rows(), X.rows());
  const Matrix centered = X.colwise() - mean;
  return (centered * centered.transpose()) / static_cast<double>(N - 1);
}

// T with T * g_flat = grad' g, i.e. T(j, i*m + j) = grad(i).
Matrix lie_map(const Vector& grad, int m) {
  const Eigen::Index n = grad.size();
  Matrix T = Matrix::Zero(m, n * m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) T(j, i * m + j) = grad(i);
  }
  return T;
}

}  // namespace

std::string to_string(BoundKind k) {
  switch (k) {
    case BoundKind::Polytope:
      return "polytope";
    case BoundKind::Ellipsoid:
      return "ellipsoid";
    case BoundKind::Constant:
      return "constant";
  }
  return "unknown";
}

double chi_square_cdf(double x, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("chi_square_cdf: k must be positive");
  return gamma_p(0.5 * k, 0.5 * x);
}

double chi_square_quantile(double p, double k) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi_square_quantile: p must be in (0, 1)");
  double lo = 0.0, hi = std::max(1.0, k);
  while (chi_square_cdf(hi, k) < p) hi *= 2.0;
  for (int i = 0; i < 400 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi_square_cdf(mid, k) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

DynamicsSample mean_model(const std::vector<DynamicsSample>& samples) {
  require_samples(samples);
  Vector f = Vector::Zero(samples.front().n());
  Matrix g = Matrix::Zero(samples.front().n(), samples.front().m());
  for (const auto& s : samples) {
    f += s.f();
    g += s.g();
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  return DynamicsSample(f * inv, g * inv);
}

UncertaintyBound build_polytope_bound(const std::vector<DynamicsSample>& samples) {
  require_samples(samples);
  UncertaintyBound b;
  b.kind = BoundKind::Polytope;
  b.n = samples.front().n();
  b.m = samples.front().m();
  b.sigma_f = PolytopeSet(stack_f(samples));
  b.sigma_g = PolytopeSet(stack_g(samples));
  b.mean_model = mean_model(samples);
  return b;
}

UncertaintyBound build_ellipsoid_bound(const std::vector<DynamicsSample>& samples, double confidence) {
  require_samples(samples);
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("build_ellipsoid_bound: confidence must be in (0, 1)");
  }
  UncertaintyBound b;
  b.kind = BoundKind::Ellipsoid;
  b.n = samples.front().n();
  b.m = samples.front().m();
  const Matrix F = stack_f(samples);
  const Matrix G = stack_g(samples);
  const Vector mu_f = F.rowwise().mean();
  const Vector mu_g = G.rowwise().mean();
  b.sigma_f = EllipsoidSet(mu_f, sample_covariance(F, mu_f), chi_square_quantile(confidence, b.n));
  b.sigma_g = EllipsoidSet(mu_g, sample_covariance(G, mu_g),
                           chi_square_quantile(confidence, static_cast<double>(b.n) * b.m));
  b.mean_model = mean_model(samples);
  return b;
}

UncertaintyBound build_constant_bound(const std::vector<DynamicsSample>& samples, double d_res) {
  require_samples(samples);
  if (!(d_res >= 0.0)) throw std::invalid_argument("build_constant_bound: d_res must be >= 0");
  UncertaintyBound b;
  b.kind = BoundKind::Constant;
  b.mean_model = mean_model(samples);
  b.n = b.mean_model.n();
  b.m = b.mean_model.m();
  b.d_res = d_res;
  return b;
}

UncertaintyBound analytic_segway_ellipsoid(const SegwayModel& model, const StateVector& x,
                                           double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("analytic_segway_ellipsoid: confidence must be in (0, 1)");
  }
  Vector f0, f1;
  Matrix g1;
  model.affine_parts(x, &f0, &f1, &g1);
  const TruncatedGaussian& km = model.parameter_distribution();
  const double var = km.degenerate() ? 0.0 : km.sd * km.sd;
  const Vector g1_flat = flatten_g(g1);
  const double dof = chi_square_quantile(confidence, 1.0);

  UncertaintyBound b;
  b.kind = BoundKind::Ellipsoid;
  b.n = model.n();
  b.m = model.m();
  b.sigma_f = EllipsoidSet(f0 + km.mean * f1, var * f1 * f1.transpose(), dof);
  b.sigma_g = EllipsoidSet(km.mean * g1_flat, var * g1_flat * g1_flat.transpose(), dof);
  b.mean_model = DynamicsSample(f0 + km.mean * f1, km.mean * g1);
  return b;
}

LieDerivativeBounds project_to_lie(const UncertaintyBound& bound, const Vector& grad) {
  if (grad.size() != bound.n) throw std::invalid_argument("project_to_lie: gradient length != n");
  const Matrix T = lie_map(grad, bound.m);
  LieDerivativeBounds lie;
  switch (bound.kind) {
    case BoundKind::Polytope: {
      const auto& pf = std::get<PolytopeSet>(bound.sigma_f);
      const auto& pg = std::get<PolytopeSet>(bound.sigma_g);
      lie.v_f = PolytopeSet(Matrix(grad.transpose() * pf.vertices()));
      lie.v_g = PolytopeSet(Matrix(T * pg.vertices()));
      break;
    }
    case BoundKind::Ellipsoid: {
      const auto& ef = std::get<EllipsoidSet>(bound.sigma_f);
      const auto& eg = std::get<EllipsoidSet>(bound.sigma_g);
      lie.v_f = EllipsoidSet(Vector::Constant(1, grad.dot(ef.mu())),
                             Matrix::Constant(1, 1, grad.dot(ef.Q() * grad)), ef.dof());
      const Matrix Qv = T * eg.Q() * T.transpose();
      lie.v_g = EllipsoidSet(T * eg.mu(), 0.5 * (Qv + Qv.transpose()), eg.dof());
      break;
    }
    case BoundKind::Constant: {
      const double lf = grad.dot(bound.mean_model.f()) + bound.d_res;
      lie.v_f = PolytopeSet(Matrix::Constant(1, 1, lf));
      lie.v_g = PolytopeSet(Matrix(bound.mean_model.g().transpose() * grad));
      break;
    }
  }
  return lie;
}

double compute_c(const LieDerivativeBounds& lie, double phi_value, const SafetyIndexParams& params) {
  return -gamma(params, phi_value) - lie.max_lf();
}

LieDerivativeBounds lie_bounds_at(const UncertaintyBound& bound, const SafetyIndexParams& params,
                                  const RobotModel& model, const StateVector& x) {
  const PhiEvaluation ev = evaluate_phi(params, model, x);
  LieDerivativeBounds lie = project_to_lie(bound, ev.grad);
  lie.c = compute_c(lie, ev.value, params);
  return lie;
}

LieDerivativeBounds filter_lie_bounds(const UncertaintyBound& bound, const SafetyIndexParams& params,
                                      const RobotModel& model, const StateVector& x, double band) {
  PhiEvaluation ev = evaluate_phi(params, model, x);
  if (!ev.branch_active && band > 0.0) {
    const PhiEvaluation br = evaluate_branch(params, model, x);
    const Matrix& g = bound.mean_model.g();
    const bool no_authority = (g.transpose() * ev.grad).norm() <= 1e-12 * ev.grad.norm() * std::max(1.0, g.norm());
    if (no_authority && br.value >= -band) ev = br;
  }
  LieDerivativeBounds lie = project_to_lie(bound, ev.grad);
  lie.c = compute_c(lie, ev.value, params);
  return lie;
}

double estimate_constant_residual_bound(const RobotModel& model, const SafetyIndexParams& params,
                                        const std::vector<double>& parameter_samples,
                                        const std::vector<StateVector>& states, const Box& control_box) {
  if (states.empty()) throw std::invalid_argument("estimate_constant_residual_bound: empty state grid");
  const std::vector<Vector> corners = control_box.corners();
  double d_res = 0.0;
  for (const auto& x : states) {
    const Vector grad = evaluate_phi(params, model, x).grad;
    const auto samples = dynamics_at(model, x, parameter_samples);
    const DynamicsSample mean = mean_model(samples);
    const Vector gf_mean = mean.g().transpose() * grad;
    const double lf_mean = grad.dot(mean.f());
    for (const auto& s : samples) {
      const double dlf = grad.dot(s.f()) - lf_mean;
      const Vector dlg = s.g().transpose() * grad - gf_mean;
      for (const auto& u : corners) d_res = std::max(d_res, std::abs(dlf + dlg.dot(u)));
    }
  }
  return d_res;
}

BoundBuilder::BoundBuilder(const RobotModel& model, Options opt) : model_(&model), opt_(opt) {
  if (opt_.samples < 1) throw std::invalid_argument("BoundBuilder: samples must be >= 1");
  params_ = sample_parameter(model.parameter_distribution(), opt_.seed, opt_.samples);
}

UncertaintyBound BoundBuilder::build(const StateVector& x) const {
  if (opt_.kind == BoundKind::Ellipsoid && opt_.analytic_segway) {
    if (const auto* seg = dynamic_cast<const SegwayModel*>(model_)) {
      return analytic_segway_ellipsoid(*seg, x, opt_.confidence);
    }
    throw std::invalid_argument("BoundBuilder: analytic ellipsoid requires the segway model");
  }
  const auto samples = dynamics_at(*model_, x, params_);
  switch (opt_.kind) {
    case BoundKind::Polytope:
      return build_polytope_bound(samples);
    case BoundKind::Ellipsoid:
      return build_ellipsoid_bound(samples, opt_.confidence);
    case BoundKind::Constant:
      return build_constant_bound(samples, opt_.d_res);
  }
  throw std::logic_error("unreachable");
}

}  // namespace rssa
