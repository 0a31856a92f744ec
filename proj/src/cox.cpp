#include "survloco/cox.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "survloco/error.hpp"
#include "survloco/eval.hpp"
#include "survloco/rng.hpp"

namespace survloco {

const char* to_string(Penalty p) { return p == Penalty::lasso ? "lasso" : "ridge"; }

Penalty penalty_from_string(const std::string& s) {
  if (s == "ridge") return Penalty::ridge;
  if (s == "lasso") return Penalty::lasso;
  throw ValidationError("unknown penalty '" + s + "' (expected ridge or lasso)");
}

nlohmann::json CoxParams::to_json() const {
  return {{"penalty", to_string(penalty)}, {"lambda", lambda}, {"max_iter", max_iter}, {"tol", tol}};
}

CoxParams CoxParams::from_json(const nlohmann::json& j) {
  CoxParams p;
  if (j.contains("penalty")) p.penalty = penalty_from_string(j.at("penalty").get<std::string>());
  p.lambda = j.value("lambda", p.lambda);
  p.max_iter = j.value("max_iter", p.max_iter);
  p.tol = j.value("tol", p.tol);
  return p;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Standardized {
  MatrixXd z;                       // active (non-constant) columns only
  std::vector<std::size_t> active;  // original column of each z column
  std::vector<double> means, scales;
};

Standardized standardize(const SurvivalDataset& ds) {
  Standardized s;
  const auto& x = ds.features();
  const double n = static_cast<double>(ds.rows());
  s.means.resize(ds.cols());
  s.scales.resize(ds.cols());
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    const auto col = x.col(Eigen::Index(j));
    const double mean = col.sum() / n;
    const double sd = std::sqrt((col.array() - mean).square().sum() / n);
    s.means[j] = mean;
    s.scales[j] = sd > 0.0 ? sd : 1.0;
    if (sd > 0.0) s.active.push_back(j);
  }
  s.z.resize(x.rows(), Eigen::Index(s.active.size()));
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    const auto j = s.active[k];
    s.z.col(Eigen::Index(k)) = (x.col(Eigen::Index(j)).array() - s.means[j]) / s.scales[j];
  }
  return s;
}

// Rows grouped by tied time, groups in descending time order.
struct RiskSetOrder {
  std::vector<std::size_t> order;
  std::vector<std::size_t> group_start;  // size groups + 1
};

RiskSetOrder risk_set_order(const std::vector<double>& times) {
  RiskSetOrder r;
  r.order.resize(times.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });
  for (std::size_t k = 0; k < r.order.size(); ++k)
    if (k == 0 || times[r.order[k]] != times[r.order[k - 1]]) r.group_start.push_back(k);
  r.group_start.push_back(r.order.size());
  return r;
}

struct PartialLikelihood {
  double loglik = 0.0;
  VectorXd gradient;    // d logPL / d b
  MatrixXd hessian;     // d2 logPL / d b2 (only if requested)
  VectorXd eta_grad;    // d logPL / d eta_i
  VectorXd eta_curv;    // -d2 logPL / d eta_i^2 (diagonal)
};

PartialLikelihood partial_likelihood(const MatrixXd& z, const std::vector<std::uint8_t>& events,
                                     const RiskSetOrder& rs, const VectorXd& beta, bool hessian, bool per_eta) {
  const Eigen::Index n = z.rows(), p = z.cols();
  const VectorXd eta = p > 0 ? VectorXd(z * beta) : VectorXd::Zero(n);
  const double offset = n > 0 ? eta.maxCoeff() : 0.0;
  const VectorXd w = (eta.array() - offset).exp();

  PartialLikelihood out;
  out.gradient = VectorXd::Zero(p);
  if (hessian) out.hessian = MatrixXd::Zero(p, p);
  double s0 = 0.0;
  VectorXd s1 = VectorXd::Zero(p);
  MatrixXd s2;
  if (hessian) s2 = MatrixXd::Zero(p, p);

  const std::size_t groups = rs.group_start.size() - 1;
  std::vector<double> group_s0(groups, 0.0), group_deaths(groups, 0.0);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t k = rs.group_start[g]; k < rs.group_start[g + 1]; ++k) {
      const auto i = Eigen::Index(rs.order[k]);
      s0 += w(i);
      if (p > 0) s1.noalias() += w(i) * z.row(i).transpose();
      if (hessian) s2.noalias() += w(i) * z.row(i).transpose() * z.row(i);
    }
    group_s0[g] = s0;
    const double log_s0 = std::log(s0) + offset;
    VectorXd mean;
    if (p > 0) mean = s1 / s0;
    for (std::size_t k = rs.group_start[g]; k < rs.group_start[g + 1]; ++k) {
      const auto i = Eigen::Index(rs.order[k]);
      if (!events[std::size_t(i)]) continue;
      group_deaths[g] += 1.0;
      out.loglik += eta(i) - log_s0;
      if (p > 0) out.gradient.noalias() += z.row(i).transpose() - mean;
      if (hessian) out.hessian.noalias() -= s2 / s0 - mean * mean.transpose();
    }
  }

  if (per_eta) {
    out.eta_grad.resize(n);
    out.eta_curv.resize(n);
    double cum_a = 0.0, cum_b = 0.0;
    for (std::size_t g = groups; g-- > 0;) {  // ascending time
      if (group_deaths[g] > 0.0) {
        cum_a += group_deaths[g] / group_s0[g];
        cum_b += group_deaths[g] / (group_s0[g] * group_s0[g]);
      }
      for (std::size_t k = rs.group_start[g]; k < rs.group_start[g + 1]; ++k) {
        const auto i = Eigen::Index(rs.order[k]);
        out.eta_grad(i) = double(events[std::size_t(i)]) - w(i) * cum_a;
        out.eta_curv(i) = w(i) * cum_a - w(i) * w(i) * cum_b;
      }
    }
  }
  return out;
}

double penalty_value(Penalty kind, const VectorXd& b) {
  return kind == Penalty::ridge ? 0.5 * b.squaredNorm() : b.lpNorm<1>();
}

double soft_threshold(double v, double lambda) {
  if (v > lambda) return v - lambda;
  if (v < -lambda) return v + lambda;
  return 0.0;
}

struct Solver {
  const MatrixXd& z;
  const std::vector<std::uint8_t>& events;
  RiskSetOrder rs;
  CoxParams params;
  double n;

  double objective(const VectorXd& b) const {
    return partial_likelihood(z, events, rs, b, false, false).loglik / n - params.lambda * penalty_value(params.penalty, b);
  }

  // Backtracks from `from` toward `to` until the objective does not decrease.
  VectorXd ascend(const VectorXd& from, double f_from, const VectorXd& to, double& f_new) const {
    VectorXd step = to - from;
    for (int halvings = 0; halvings < 60; ++halvings) {
      VectorXd cand = from + step;
      const double f = objective(cand);
      if (std::isfinite(f) && f >= f_from) {
        f_new = f;
        return cand;
      }
      step *= 0.5;
    }
    f_new = f_from;
    return from;
  }

  VectorXd ridge(std::vector<double>& trace, int& iterations) const {
    const Eigen::Index p = z.cols();
    VectorXd b = VectorXd::Zero(p);
    double f = objective(b);
    trace.push_back(f);
    double grad_norm = 0.0;
    for (int it = 1; it <= params.max_iter; ++it) {
      const auto pl = partial_likelihood(z, events, rs, b, true, false);
      const VectorXd g = pl.gradient / n - params.lambda * b;
      const MatrixXd neg_h = -pl.hessian / n + params.lambda * MatrixXd::Identity(p, p);
      grad_norm = g.norm();
      Eigen::LDLT<MatrixXd> ldlt(neg_h);
      VectorXd delta = ldlt.solve(g);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) delta = g;  // fall back to gradient ascent
      double f_new;
      const VectorXd next = ascend(b, f, b + delta, f_new);
      const double change = (next - b).cwiseAbs().maxCoeff();
      b = next;
      f = f_new;
      trace.push_back(f);
      iterations = it;
      if (change < params.tol) return b;
    }
    throw ConvergenceError("cox ridge: no convergence after " + std::to_string(params.max_iter) +
                               " iterations (gradient norm " + std::to_string(grad_norm) + ")",
                           grad_norm);
  }

  VectorXd lasso(std::vector<double>& trace, int& iterations) const {
    const Eigen::Index p = z.cols();
    const Eigen::Index rows = z.rows();
    VectorXd b = VectorXd::Zero(p);
    double f = objective(b);
    trace.push_back(f);
    double sub_norm = 0.0;
    for (int it = 1; it <= params.max_iter; ++it) {
      const auto pl = partial_likelihood(z, events, rs, b, false, true);
      const VectorXd& w = pl.eta_curv;
      // r_i = g_i - w_i (eta'_i - eta_i): gradient of the quadratic surrogate in eta.
      VectorXd r = pl.eta_grad;
      VectorXd curv(p);
      for (Eigen::Index j = 0; j < p; ++j) curv(j) = (w.array() * z.col(j).array().square()).sum() / n;

      VectorXd cand = b;
      for (int sweep = 0; sweep < 10000; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (!(curv(j) > 0.0)) continue;
          double score = 0.0;
          for (Eigen::Index i = 0; i < rows; ++i) score += z(i, j) * r(i);
          const double updated = soft_threshold(curv(j) * cand(j) + score / n, params.lambda) / curv(j);
          const double delta = updated - cand(j);
          if (delta != 0.0) {
            r.noalias() -= delta * (w.array() * z.col(j).array()).matrix();
            cand(j) = updated;
            max_change = std::max(max_change, std::abs(delta));
          }
        }
        if (max_change < 0.1 * params.tol) break;
      }

      double f_new;
      const VectorXd next = ascend(b, f, cand, f_new);
      const double change = p > 0 ? (next - b).cwiseAbs().maxCoeff() : 0.0;
      b = next;
      f = f_new;
      trace.push_back(f);
      iterations = it;

      // Norm of the minimum-norm subgradient, for diagnostics.
      const VectorXd g = partial_likelihood(z, events, rs, b, false, false).gradient / n;
      sub_norm = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const double v = b(j) != 0.0 ? g(j) - params.lambda * (b(j) > 0 ? 1.0 : -1.0)
                                     : std::max(0.0, std::abs(g(j)) - params.lambda);
        sub_norm += v * v;
      }
      sub_norm = std::sqrt(sub_norm);
      if (change < params.tol) {
        for (Eigen::Index j = 0; j < p; ++j)
          if (std::abs(b(j)) < params.tol) b(j) = 0.0;
        return b;
      }
    }
    throw ConvergenceError("cox lasso: no convergence after " + std::to_string(params.max_iter) +
                               " iterations (subgradient norm " + std::to_string(sub_norm) + ")",
                           sub_norm);
  }
};

void validate(const SurvivalDataset& ds, const CoxParams& params) {
  if (!(params.lambda >= 0.0)) throw ValidationError("cox: lambda must be >= 0");
  if (params.max_iter < 1) throw ValidationError("cox: max_iter must be >= 1");
  if (!(params.tol > 0.0)) throw ValidationError("cox: tol must be > 0");
  if (ds.event_count() == 0) throw ValidationError("cox: dataset has no events");
}

// sum_i z_ij * g_i, shared by lambda_max and the first coordinate-descent pass.
double score_sum(const MatrixXd& z, const VectorXd& g, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) s += z(i, j) * g(i);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

void CoxModel::check_arity(std::size_t n) const {
  if (n != beta_.size())
    throw ValidationError("cox model expects " + std::to_string(beta_.size()) + " features, got " + std::to_string(n));
}

double CoxModel::risk(std::span<const double> x) const {
  check_arity(x.size());
  double r = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) r += x[j] * beta_[j];
  return r;
}

void CoxModel::compute_baseline(const SurvivalDataset& train) {
  const std::size_t n = train.rows();
  std::vector<double> eta(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < beta_.size(); ++j)
      if (beta_[j] != 0.0) eta[i] += (train.value(i, j) - means_[j]) * beta_[j];
  const auto rs = risk_set_order(train.times());
  baseline_times_.clear();
  baseline_increments_.clear();
  double s0 = 0.0;
  for (std::size_t g = 0; g + 1 < rs.group_start.size(); ++g) {
    double deaths = 0.0;
    for (std::size_t k = rs.group_start[g]; k < rs.group_start[g + 1]; ++k) {
      s0 += std::exp(eta[rs.order[k]]);
      deaths += train.events()[rs.order[k]];
    }
    if (deaths > 0.0) {
      baseline_times_.push_back(train.times()[rs.order[rs.group_start[g]]]);
      baseline_increments_.push_back(deaths / s0);
    }
  }
  std::reverse(baseline_times_.begin(), baseline_times_.end());
  std::reverse(baseline_increments_.begin(), baseline_increments_.end());
}

void CoxModel::predict_hazard(std::span<const double> x, const TimeGrid& grid, std::span<double> out) const {
  check_arity(x.size());
  if (out.size() != std::size_t(grid.intervals())) throw ValidationError("cox predict_hazard: output length mismatch");
  if (!baseline_times_.empty() && baseline_times_.back() > grid.end())
    throw ValidationError("cox predict_hazard: grid ends before the last baseline step");
  double eta = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j)
    if (beta_[j] != 0.0) eta += (x[j] - means_[j]) * beta_[j];
  const double rel = std::exp(eta);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t u = 0; u < baseline_times_.size(); ++u)
    out[std::size_t(grid.interval_of(baseline_times_[u]))] += baseline_increments_[u];
  for (auto& h : out) h = -std::expm1(-rel * h);
}

HazardCurve CoxModel::predict_hazard(std::span<const double> x, const TimeGrid& grid) const {
  HazardCurve c(std::size_t(grid.intervals()));
  predict_hazard(x, grid, c.values());
  return c;
}

nlohmann::json CoxModel::to_json() const {
  return {{"model", "penalized_cox"},
          {"params", params_.to_json()},
          {"beta", beta_},
          {"means", means_},
          {"scales", scales_},
          {"baseline", {{"times", baseline_times_}, {"increments", baseline_increments_}}},
          {"iterations", iterations_}};
}

CoxModel CoxModel::from_json(const nlohmann::json& j) {
  CoxModel m;
  m.params_ = CoxParams::from_json(j.at("params"));
  m.beta_ = j.at("beta").get<std::vector<double>>();
  m.means_ = j.at("means").get<std::vector<double>>();
  m.scales_ = j.at("scales").get<std::vector<double>>();
  m.baseline_times_ = j.at("baseline").at("times").get<std::vector<double>>();
  m.baseline_increments_ = j.at("baseline").at("increments").get<std::vector<double>>();
  m.iterations_ = j.value("iterations", 0);
  return m;
}

CoxModel CoxModel::from_coefficients(std::vector<double> beta, const SurvivalDataset& train, CoxParams params) {
  if (beta.size() != train.cols()) throw ValidationError("from_coefficients: arity mismatch");
  const auto s = standardize(train);
  CoxModel m;
  m.beta_ = std::move(beta);
  m.params_ = params;
  m.means_ = s.means;
  m.scales_ = s.scales;
  m.compute_baseline(train);
  return m;
}

CoxModel fit_cox(const SurvivalDataset& ds, const CoxParams& params) {
  validate(ds, params);
  const auto s = standardize(ds);
  Solver solver{s.z, ds.events(), risk_set_order(ds.times()), params, static_cast<double>(ds.rows())};
  CoxModel m;
  m.params_ = params;
  m.means_ = s.means;
  m.scales_ = s.scales;
  VectorXd b = params.penalty == Penalty::ridge ? solver.ridge(m.objective_trace_, m.iterations_)
                                                : solver.lasso(m.objective_trace_, m.iterations_);
  m.beta_.assign(ds.cols(), 0.0);
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    const auto j = s.active[k];
    m.beta_[j] = b(Eigen::Index(k)) / s.scales[j];
  }
  m.compute_baseline(ds);
  return m;
}

namespace cox {

double lambda_max(const SurvivalDataset& ds) {
  if (ds.event_count() == 0) throw ValidationError("cox: dataset has no events");
  const auto s = standardize(ds);
  const auto rs = risk_set_order(ds.times());
  const auto pl = partial_likelihood(s.z, ds.events(), rs, VectorXd::Zero(s.z.cols()), false, true);
  const double n = static_cast<double>(ds.rows());
  double best = 0.0;
  for (Eigen::Index j = 0; j < s.z.cols(); ++j) best = std::max(best, std::abs(score_sum(s.z, pl.eta_grad, j) / n));
  return best;
}

double penalized_objective(const SurvivalDataset& ds, std::span<const double> standardized_beta,
                           const CoxParams& params) {
  const auto s = standardize(ds);
  VectorXd b(Eigen::Index(s.active.size()));
  for (std::size_t k = 0; k < s.active.size(); ++k) b(Eigen::Index(k)) = standardized_beta[s.active[k]];
  Solver solver{s.z, ds.events(), risk_set_order(ds.times()), params, static_cast<double>(ds.rows())};
  return solver.objective(b);
}

std::vector<double> lambda_path(const SurvivalDataset& ds, Penalty penalty, const LambdaSearch& search) {
  if (search.grid_size < 2) throw ValidationError("lambda path needs at least two points");
  double top = lambda_max(ds);
  if (!(top > 0.0)) top = 1.0;
  if (penalty == Penalty::ridge) top *= 1000.0;
  std::vector<double> path(std::size_t(search.grid_size));
  for (int g = 0; g < search.grid_size; ++g)
    path[std::size_t(g)] = top * std::pow(10.0, -search.decades * g / (search.grid_size - 1));
  return path;
}

double select_lambda(const SurvivalDataset& ds, const CoxParams& params, const LambdaSearch& search) {
  const auto path = lambda_path(ds, params.penalty, search);
  Rng rng = make_rng(search.seed, {0x1a3bdaULL});
  const auto fold_of = eval::stratified_folds(ds.events(), search.folds, rng);

  std::vector<SurvivalDataset> train, test;
  for (int f = 0; f < search.folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < ds.rows(); ++i) (fold_of[i] == f ? te : tr).push_back(i);
    train.push_back(ds.select_rows(tr));
    test.push_back(ds.select_rows(te));
  }

  double best_lambda = path.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (double lambda : path) {
    CoxParams p = params;
    p.lambda = lambda;
    double total = 0.0;
    int used = 0;
    for (int f = 0; f < search.folds; ++f) {
      const auto& tr = train[std::size_t(f)];
      const auto& te = test[std::size_t(f)];
      if (tr.event_count() == 0) continue;
      try {
        const auto model = fit_cox(tr, p);
        std::vector<double> risks(te.rows());
        for (std::size_t i = 0; i < te.rows(); ++i) risks[i] = model.risk(te.row(i));
        const auto c = eval::try_c_index(risks, te.times(), te.events());
        if (c) {
          total += *c;
          ++used;
        }
      } catch (const ConvergenceError&) {
      }
    }
    if (used == 0) continue;
    const double score = total / used;
    if (score > best_score) {
      best_score = score;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace cox
}  // namespace survloco
