#include "rssa/synthesis.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rssa/rssa.hpp"

namespace rssa {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Vector uniform_in(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(box.dim());
  for (int i = 0; i < box.dim(); ++i) x(i) = box.lower(i) + u(rng) * (box.upper(i) - box.lower(i));
  return x;
}

Vector unit_direction(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector d(n);
  do {
    for (int i = 0; i < n; ++i) d(i) = g(rng);
  } while (d.norm() < 1e-12);
  return d.normalized();
}

// Symmetric Hausdorff distance between two column sets.
double hausdorff(const Matrix& a, const Matrix& b) {
  auto one_sided = [](const Matrix& p, const Matrix& q) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < q.cols(); ++j) best = std::min(best, (p.col(i) - q.col(j)).squaredNorm());
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(one_sided(a, b), one_sided(b, a));
}

void stack_samples(const std::vector<DynamicsSample>& s, Matrix* F, Matrix* G) {
  const int k = static_cast<int>(s.size());
  *F = Matrix(s[0].n(), k);
  *G = Matrix(s[0].g_flat().size(), k);
  for (int i = 0; i < k; ++i) {
    F->col(i) = s[i].f();
    G->col(i) = s[i].g_flat();
  }
}

// Probe pairs are drawn from the same stream for every estimator, so a run
// with more probes extends the pairs of a shorter one.
template <class F>
void for_each_pair(const RobotModel& model, const LipschitzOptions& opt, F&& fn) {
  if (opt.probes < 1) throw std::invalid_argument("estimate_lipschitz: probes must be >= 1");
  if (!(opt.step > 0.0)) throw std::invalid_argument("estimate_lipschitz: step must be > 0");
  std::mt19937_64 rng(opt.seed);
  for (int i = 0; i < opt.probes; ++i) {
    const Vector x = uniform_in(model.state_box(), rng);
    const Vector y = x + opt.step * unit_direction(model.n(), rng);
    fn(x, y);
  }
}

}  // namespace

StateGrid sample_state_grid(const RobotModel& model, const std::vector<int>& counts,
                            bool admissible_only) {
  const int n = model.n();
  if (static_cast<int>(counts.size()) != n) {
    throw std::invalid_argument("sample_state_grid: need one count per state dimension");
  }
  for (int c : counts) {
    if (c < 2) throw std::invalid_argument("sample_state_grid: counts must be >= 2");
  }
  const Box& box = model.state_box();
  StateGrid grid;
  grid.counts = counts;
  Vector cell(n);
  for (int i = 0; i < n; ++i) cell(i) = box.width()(i) / (counts[i] - 1);
  grid.delta = 0.5 * cell.norm();

  std::vector<int> idx(n, 0);
  while (true) {
    Vector x(n);
    for (int i = 0; i < n; ++i) x(i) = box.lower(i) + idx[i] * cell(i);
    if (!admissible_only || model.admissible(x)) {
      grid.states.push_back(std::move(x));
    } else {
      ++grid.dropped;
    }
    int d = n - 1;
    while (d >= 0 && ++idx[d] == counts[d]) idx[d--] = 0;
    if (d < 0) break;
  }
  return grid;
}

std::size_t nearest_grid_index(const RobotModel& model, const StateGrid& grid, const StateVector& x) {
  const Box& box = model.state_box();
  std::size_t lin = 0;
  for (int i = 0; i < model.n(); ++i) {
    const int c = grid.counts[i];
    const double cell = box.width()(i) / (c - 1);
    const long k = std::lround((x(i) - box.lower(i)) / cell);
    lin = lin * c + static_cast<std::size_t>(std::clamp<long>(k, 0, c - 1));
  }
  return lin;
}

double margin_epsilon(const LipschitzConstants& k, double delta) {
  return k.k_phi * (k.k_sigma_f + k.k_sigma_g * k.m_u) * delta + k.k_grad_phi * delta * k.m_xdot +
         k.k_gamma * k.k_phi * delta;
}

LipschitzConstants estimate_model_constants(const RobotModel& model,
                                            const std::vector<double>& parameter_samples,
                                            const LipschitzOptions& opt) {
  if (parameter_samples.empty()) throw std::invalid_argument("estimate_lipschitz: no parameter samples");
  LipschitzConstants k;
  const auto corners = model.control_box().corners();
  for (const auto& u : corners) k.m_u = std::max(k.m_u, u.norm());

  Matrix Fx, Gx, Fy, Gy;
  for_each_pair(model, opt, [&](const Vector& x, const Vector& y) {
    const auto sx = dynamics_at(model, x, parameter_samples);
    const auto sy = dynamics_at(model, y, parameter_samples);
    stack_samples(sx, &Fx, &Gx);
    stack_samples(sy, &Fy, &Gy);
    k.k_sigma_f = std::max(k.k_sigma_f, hausdorff(Fx, Fy) / opt.step);
    k.k_sigma_g = std::max(k.k_sigma_g, hausdorff(Gx, Gy) / opt.step);
    for (const auto& s : sx) {
      for (const auto& u : corners) k.m_xdot = std::max(k.m_xdot, s.xdot(u).norm());
    }
  });
  k.k_sigma_f *= opt.safety_factor;
  k.k_sigma_g *= opt.safety_factor;
  k.m_xdot *= opt.safety_factor;
  return k;
}

LipschitzConstants estimate_index_constants(const RobotModel& model, const SafetyIndexParams& params,
                                            LipschitzConstants base, const LipschitzOptions& opt) {
  double kp = 0.0, kg = 0.0;
  for_each_pair(model, opt, [&](const Vector& x, const Vector& y) {
    const PhiEvaluation px = evaluate_phi(params, model, x);
    const PhiEvaluation py = evaluate_phi(params, model, y);
    kp = std::max(kp, std::abs(px.value - py.value) / opt.step);
    kg = std::max(kg, (px.grad - py.grad).norm() / opt.step);
  });
  base.k_gamma = params.gamma_slope;
  base.k_phi = opt.safety_factor * kp;
  base.k_grad_phi = opt.safety_factor * kg;
  return base;
}

LipschitzConstants estimate_lipschitz(const RobotModel& model, const SafetyIndexParams& params,
                                      const std::vector<double>& parameter_samples,
                                      const LipschitzOptions& opt) {
  return estimate_index_constants(model, params, estimate_model_constants(model, parameter_samples, opt),
                                  opt);
}

FeasibilityEvaluator::FeasibilityEvaluator(const RobotModel& model, const BoundBuilder& builder,
                                           std::vector<StateVector> states, Box control_box)
    : model_(&model), states_(std::move(states)), box_(std::move(control_box)) {
  if (states_.empty()) throw std::invalid_argument("feasible_rate: empty state set");
  bounds_.reserve(states_.size());
  for (const auto& x : states_) bounds_.push_back(builder.build(x));
}

std::vector<char> FeasibilityEvaluator::feasible_mask(const SafetyIndexParams& params, double eps) const {
  std::vector<char> mask(states_.size(), 0);
  for (std::size_t i = 0; i < states_.size(); ++i) {
    mask[i] = is_feasible(*model_, states_[i], params, bounds_[i], box_, eps) ? 1 : 0;
  }
  return mask;
}

double FeasibilityEvaluator::rate(const SafetyIndexParams& params, double eps) const {
  const auto mask = feasible_mask(params, eps);
  const auto ok = std::count(mask.begin(), mask.end(), 1);
  return static_cast<double>(ok) / static_cast<double>(mask.size());
}

double feasible_rate(const SafetyIndexParams& params, const RobotModel& model,
                     const BoundBuilder& builder, const std::vector<StateVector>& grid, double eps,
                     const Box& control_box) {
  if (grid.empty()) throw std::invalid_argument("feasible_rate: empty state set");
  std::size_t ok = 0;
  for (const auto& x : grid) {
    if (is_feasible(model, x, params, builder.build(x), control_box, eps)) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(grid.size());
}

// ---------------------------------------------------------------------------
// CMA-ES on the unit cube; the search box is mapped affinely onto it.

namespace {

struct Candidate {
  double rate = 0.0;
  double eps = 0.0;
  LipschitzConstants k;
};

class Cma {
 public:
  Cma(const Vector& mean, double sigma, int lambda)
      : n_(static_cast<int>(mean.size())), lambda_(lambda), mean_(mean), sigma_(sigma) {
    mu_ = lambda_ / 2;
    w_.resize(mu_);
    for (int i = 0; i < mu_; ++i) w_(i) = std::log(mu_ + 0.5) - std::log(i + 1.0);
    w_ /= w_.sum();
    mueff_ = 1.0 / w_.squaredNorm();
    const double n = n_;
    cs_ = (mueff_ + 2.0) / (n + mueff_ + 5.0);
    ds_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (n + 1.0)) - 1.0) + cs_;
    cc_ = (4.0 + mueff_ / n) / (n + 4.0 + 2.0 * mueff_ / n);
    c1_ = 2.0 / ((n + 1.3) * (n + 1.3) + mueff_);
    cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((n + 2.0) * (n + 2.0) + mueff_));
    chin_ = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
    C_ = Matrix::Identity(n_, n_);
    B_ = Matrix::Identity(n_, n_);
    D_ = Vector::Ones(n_);
    ps_ = Vector::Zero(n_);
    pc_ = Vector::Zero(n_);
  }

  // One draw from N(mean, sigma^2 C); redrawn up to 100 times until inside
  // the unit cube, then clipped.
  Vector sample(std::mt19937_64& rng) const {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector x;
    for (int attempt = 0; attempt < 100; ++attempt) {
      Vector z(n_);
      for (int i = 0; i < n_; ++i) z(i) = g(rng);
      x = mean_ + sigma_ * (B_ * D_.cwiseProduct(z));
      if ((x.array() >= 0.0).all() && (x.array() <= 1.0).all()) return x;
    }
    return x.cwiseMax(0.0).cwiseMin(1.0);
  }

  // `sorted` is best first.
  void update(const std::vector<Vector>& sorted, int generation) {
    const Vector old = mean_;
    mean_ = Vector::Zero(n_);
    for (int i = 0; i < mu_; ++i) mean_ += w_(i) * sorted[i];
    const Vector step = (mean_ - old) / sigma_;
    const Matrix inv_sqrt = B_ * D_.cwiseInverse().asDiagonal() * B_.transpose();
    ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * (inv_sqrt * step);
    const double n = n_;
    const bool hsig = ps_.norm() / std::sqrt(1.0 - std::pow(1.0 - cs_, 2.0 * (generation + 1))) / chin_ <
                      1.4 + 2.0 / (n + 1.0);
    pc_ = (1.0 - cc_) * pc_ + (hsig ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * step;
    Matrix rank_mu = Matrix::Zero(n_, n_);
    for (int i = 0; i < mu_; ++i) {
      const Vector y = (sorted[i] - old) / sigma_;
      rank_mu += w_(i) * y * y.transpose();
    }
    C_ = (1.0 - c1_ - cmu_) * C_ +
         c1_ * (pc_ * pc_.transpose() + (hsig ? 0.0 : cc_ * (2.0 - cc_)) * C_) + cmu_ * rank_mu;
    C_ = 0.5 * (C_ + C_.transpose());
    sigma_ *= std::exp((cs_ / ds_) * (ps_.norm() / chin_ - 1.0));
    Eigen::SelfAdjointEigenSolver<Matrix> es(C_);
    B_ = es.eigenvectors();
    D_ = es.eigenvalues().cwiseMax(1e-20).cwiseSqrt();
  }

  double sigma() const { return sigma_; }

 private:
  int n_, lambda_, mu_;
  Vector mean_;
  double sigma_;
  Vector w_;
  double mueff_, cs_, ds_, cc_, c1_, cmu_, chin_;
  Matrix C_, B_;
  Vector D_, ps_, pc_;
};

}  // namespace

SynthesisResult synthesize(const SynthesisConfig& cfg, const RobotModel& model,
                           const BoundBuilder& builder) {
  const Box& sb = cfg.search_box;
  if (sb.dim() != 3 || !(sb.width().array() > 0.0).all()) {
    throw std::invalid_argument("synthesize: search box must be 3-dimensional with positive width");
  }
  if (cfg.population < 4) throw std::invalid_argument("synthesize: population must be >= 4");

  const StateGrid grid = sample_state_grid(model, cfg.grid_counts);
  LipschitzOptions lip = cfg.lipschitz;
  if (lip.step <= 0.0) lip.step = grid.delta;
  const LipschitzConstants base = estimate_model_constants(model, builder.parameter_samples(), lip);
  const FeasibilityEvaluator eval(model, builder, grid.states, model.control_box());
  spdlog::info("synthesis: {} grid states ({} inadmissible dropped), delta = {:.4g}", grid.states.size(),
               grid.dropped, grid.delta);

  // Interior points only: the box bounds are strict.
  const Vector lo = sb.lower + 1e-9 * sb.width();
  const Vector hi = sb.upper - 1e-9 * sb.width();
  auto to_params = [&](const Vector& z) {
    const Vector t = (sb.lower + z.cwiseProduct(sb.width())).cwiseMax(lo).cwiseMin(hi);
    return SafetyIndexParams{t(0), t(1), t(2), cfg.gamma_slope};
  };
  auto evaluate = [&](const SafetyIndexParams& p) {
    Candidate c;
    c.k = estimate_index_constants(model, p, base, lip);
    c.eps = cfg.epsilon_override >= 0.0 ? cfg.epsilon_override : margin_epsilon(c.k, grid.delta);
    c.rate = eval.rate(p, c.eps);
    return c;
  };

  SynthesisResult out;
  out.delta = grid.delta;
  out.grid_states = grid.states.size();

  Vector mean = cfg.initial_mean.size() == 3 ? Vector((cfg.initial_mean - sb.lower).cwiseQuotient(sb.width()))
                                             : Vector::Constant(3, 0.5);
  mean = mean.cwiseMax(0.0).cwiseMin(1.0);
  out.params = to_params(mean);
  Candidate best = evaluate(out.params);
  out.evaluations = 1;
  out.history.push_back(best.rate);

  std::mt19937_64 rng(cfg.seed);
  Cma cma(mean, cfg.sigma0, cfg.population);
  for (int gen = 0; gen < cfg.max_generations && best.rate < 1.0; ++gen) {
    std::vector<Vector> xs(cfg.population);
    std::vector<double> rates(cfg.population);
    for (int i = 0; i < cfg.population; ++i) {
      xs[i] = cma.sample(rng);
      const SafetyIndexParams p = to_params(xs[i]);
      const Candidate c = evaluate(p);
      ++out.evaluations;
      rates[i] = c.rate;
      if (c.rate > best.rate) {
        best = c;
        out.params = p;
      }
    }
    std::vector<int> order(cfg.population);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rates[a] > rates[b]; });
    std::vector<Vector> sorted;
    sorted.reserve(order.size());
    for (int i : order) sorted.push_back(xs[i]);
    cma.update(sorted, gen);
    out.history.push_back(best.rate);
    out.generations = gen + 1;
    spdlog::debug("synthesis: generation {} best rate {:.6f} sigma {:.4g}", gen + 1, best.rate, cma.sigma());
  }
  out.rate = best.rate;
  out.epsilon = best.eps;
  out.constants = best.k;
  return out;
}

std::string synthesis_report(const SynthesisResult& r, const SynthesisConfig& cfg, const std::string& robot) {
  std::ostringstream o;
  o << "# robust safety index synthesis\n";
  o << "robot = " << robot << "\n";
  o << "certified = " << (r.certified() ? "true" : "false") << "\n";
  o << "feasible_rate = " << num(r.rate) << "\n";
  o << "alpha = " << num(r.params.alpha) << "\n";
  o << "k_v = " << num(r.params.k_v) << "\n";
  o << "beta = " << num(r.params.beta) << "\n";
  o << "gamma_slope = " << num(r.params.gamma_slope) << "\n";
  o << "epsilon = " << num(r.epsilon) << "\n";
  o << "epsilon_source = " << (cfg.epsilon_override >= 0.0 ? "override" : "lipschitz") << "\n";
  o << "delta = " << num(r.delta) << "\n";
  o << "grid_counts = ";
  for (std::size_t i = 0; i < cfg.grid_counts.size(); ++i) o << (i ? "," : "") << cfg.grid_counts[i];
  o << "\n";
  o << "grid_states = " << r.grid_states << "\n";
  o << "k_gamma = " << num(r.constants.k_gamma) << "\n";
  o << "k_phi = " << num(r.constants.k_phi) << "\n";
  o << "k_grad_phi = " << num(r.constants.k_grad_phi) << "\n";
  o << "k_sigma_f = " << num(r.constants.k_sigma_f) << "\n";
  o << "k_sigma_g = " << num(r.constants.k_sigma_g) << "\n";
  o << "m_u = " << num(r.constants.m_u) << "\n";
  o << "m_xdot = " << num(r.constants.m_xdot) << "\n";
  o << "lipschitz_probes = " << cfg.lipschitz.probes << "\n";
  o << "lipschitz_step = " << num(cfg.lipschitz.step > 0.0 ? cfg.lipschitz.step : r.delta) << "\n";
  o << "safety_factor = " << num(cfg.lipschitz.safety_factor) << "\n";
  o << "population = " << cfg.population << "\n";
  o << "seed = " << cfg.seed << "\n";
  o << "generations = " << r.generations << "\n";
  o << "evaluations = " << r.evaluations << "\n";
  o << "rate_history = ";
  for (std::size_t i = 0; i < r.history.size(); ++i) o << (i ? "," : "") << num(r.history[i]);
  o << "\n";
  return o.str();
}

std::string parameter_file(const SafetyIndexParams& p) {
  std::ostringstream o;
  o << "alpha = " << num(p.alpha) << "\n";
  o << "k_v = " << num(p.k_v) << "\n";
  o << "beta = " << num(p.beta) << "\n";
  o << "gamma_slope = " << num(p.gamma_slope) << "\n";
  return o.str();
}

}  // namespace rssa
