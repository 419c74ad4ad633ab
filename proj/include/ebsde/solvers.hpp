#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ebsde/drivers.hpp"
#include "ebsde/error.hpp"
#include "ebsde/nn.hpp"
#include "ebsde/oracles.hpp"
#include "ebsde/parallel.hpp"
#include "ebsde/rng.hpp"
#include "ebsde/sde.hpp"

namespace ebsde {

enum class SolverKind { GeBSDE, LAeBSDE, Regression, Oracle };

inline std::string solver_name(SolverKind k) {
  switch (k) {
    case SolverKind::GeBSDE: return "gebsde";
    case SolverKind::LAeBSDE: return "laebsde";
    case SolverKind::Regression: return "regression";
    case SolverKind::Oracle: return "oracle";
  }
  return "?";
}

struct SolverConfig {
  SolverKind kind = SolverKind::GeBSDE;
  FactorModel model;
  TimeGrid grid;
  Driver driver;
  std::size_t batch = 64;
  std::size_t steps = 1000;
  AdamConfig adam;
  std::uint64_t seed = 1;
  double y0 = 0.0;
  double K = 1.0;
  bool resample = false;
  std::size_t eval_batch = 0;  // 0 selects 100 * batch
  std::size_t eval_every = 0;  // 0 disables the held-out loss
  std::size_t log_every = 1;
  std::size_t threads = 1;

  std::size_t eval_size() const { return eval_batch ? eval_batch : 100 * batch; }

  void validate() const {
    model.validate();
    grid.validate();
    driver.validate();
    require(driver.d == model.dims(), ErrorCode::InvalidArgument, "driver and kappa dimensions differ");
    require(batch >= 1, ErrorCode::InvalidArgument, "batch must be at least 1");
    require(std::isfinite(y0), ErrorCode::InvalidArgument, "y0 must be finite");
    require(K > 0.0, ErrorCode::InvalidArgument, "K must be positive");
    require(adam.lr > 0.0, ErrorCode::InvalidArgument, "learning rate must be positive");
  }
};

/// Coefficients of the backward regression scheme at every time index.
/// Basis functions are monomials of (v - center) / scale.
struct RegressionTables {
  std::size_t degree = 4;
  double h = 0.0;
  double lambda_hat = 0.0;
  std::vector<double> center, scale;
  std::vector<std::vector<double>> cy;  // E[Y_{i+1} | V_i] coefficients
  std::vector<std::vector<double>> cz;  // d blocks of coefficients, concatenated
  std::size_t reduced = 0;              // time indices where the degree was lowered

  std::size_t size() const { return cy.size(); }
};

struct SolvedEbsde {
  SolverKind kind = SolverKind::GeBSDE;
  TrainState state;        // GeBSDE: nets = {Z}; LAeBSDE: nets = {Y, Z}
  RegressionTables tables;
  std::optional<OracleSolution> oracle;
  Driver driver;
  FactorModel model;
  double h = 0.01;
  double y0 = 0.0;
  std::size_t d = 1;

  double lambda() const {
    if (kind == SolverKind::Regression) return tables.lambda_hat;
    if (kind == SolverKind::Oracle) return oracle->lambda;
    return state.lambda_bar;
  }

  const Mlp& z_net() const { return state.nets.back(); }

  /// z at time index i and factor value v.
  void z_at(std::size_t i, double v, double* out, double* cache) const {
    switch (kind) {
      case SolverKind::GeBSDE:
      case SolverKind::LAeBSDE: {
        const Mlp& net = z_net();
        net.forward(v, cache);
        const double* o = net.output(cache);
        std::copy(o, o + d, out);
        return;
      }
      case SolverKind::Regression: regression_z(i, v, out); return;
      case SolverKind::Oracle:
        for (std::size_t c = 0; c < d; ++c) out[c] = 0.0;
        out[0] = oracle->z(v);
        return;
    }
  }

  void regression_z(std::size_t i, double v, double* out) const {
    const auto& t = tables;
    if (i >= t.size()) {
      for (std::size_t c = 0; c < d; ++c) out[c] = 0.0;
      return;
    }
    const std::size_t nb = t.cy[i].size();
    const double x = (v - t.center[i]) / t.scale[i];
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0, p = 1.0;
      for (std::size_t q = 0; q < nb; ++q) {
        s += t.cz[i][c * nb + q] * p;
        p *= x;
      }
      out[c] = s;
    }
  }

  /// Regression estimate of Y at time index i (i < size), or y0 beyond.
  double regression_y(std::size_t i, double v) const {
    const auto& t = tables;
    if (i >= t.size()) return y0;
    const double x = (v - t.center[i]) / t.scale[i];
    double s = 0.0, p = 1.0;
    for (double c : t.cy[i]) {
      s += c * p;
      p *= x;
    }
    Vec z{};
    regression_z(i, v, z.data());
    return s + h * (driver.eval(v, z.data()) - t.lambda_hat);
  }
};

struct TrainLogRow {
  std::size_t step = 0;
  double loss = 0.0;
  double lambda_bar = 0.0;
};
struct EvalLogRow {
  std::size_t step = 0;
  double eval_loss = 0.0;
};
struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::vector<EvalLogRow> eval;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
  double grad_lambda = 0.0;
};

namespace detail {

struct PathWork {
  std::vector<double> caches;   // Z-net caches per step
  std::vector<double> ycaches;  // Y-net caches per step (LAeBSDE)
  std::vector<double> gradf;    // grad_z F per step
  std::vector<double> resid;    // LAeBSDE residual per step
  std::vector<double> work;
  std::vector<double> gout;
};

inline void reduce_in_order(const std::vector<std::vector<double>>& per_path, std::vector<double>& out) {
  for (const auto& g : per_path)
    for (std::size_t i = 0; i < g.size(); ++i) out[i] += g[i];
}

}  // namespace detail

/// Loss (1/B) sum_j |Y_N^j - y0|^2 of the global scheme and, optionally, its
/// exact gradient in the Z-net parameters and lambda_bar.
inline LossGrad gebsde_loss_grad(const TrainState& st, const Driver& drv, const PathBundle& paths, double y0,
                                 std::size_t threads = 1, bool need_grad = true) {
  const Mlp& net = st.nets.back();
  const std::size_t B = paths.n_paths();
  const std::size_t d = drv.d;
  const std::size_t cs = net.cache_size();
  const double h = paths.h();
  const double lam = st.lambda_bar;
  std::vector<double> r(B, 0.0), dlam(B, 0.0);
  std::vector<std::vector<double>> grads(need_grad ? B : 0);
  parallel_for_scratch(
      B, threads, [] { return detail::PathWork{}; },
      [&](std::size_t j, detail::PathWork& w) {
        const PathView p = paths.view(j);
        const std::size_t N = p.n_ret;
        w.caches.resize(N * cs);
        w.gradf.resize(N * d);
        double y = y0;
        for (std::size_t k = 0; k < N; ++k) {
          double* c = w.caches.data() + k * cs;
          net.forward(p.v[k], c);
          const double* z = net.output(c);
          y += -h * drv.eval(p.v[k], z) + lam * h + dot(z, p.dw_at(k), d);
          if (need_grad) drv.grad_z(p.v[k], z, w.gradf.data() + k * d);
        }
        r[j] = y - y0;
        if (!need_grad) return;
        const double g = 2.0 * r[j] / static_cast<double>(B);
        grads[j].assign(net.n_params(), 0.0);
        w.work.resize(net.work_size());
        w.gout.resize(d);
        for (std::size_t k = 0; k < N; ++k) {
          for (std::size_t c = 0; c < d; ++c) w.gout[c] = g * (p.dw_at(k)[c] - h * w.gradf[k * d + c]);
          net.backward(w.caches.data() + k * cs, w.gout.data(), grads[j].data(), w.work.data());
        }
        dlam[j] = g * h * static_cast<double>(N);
      });
  LossGrad out;
  for (std::size_t j = 0; j < B; ++j) out.loss += r[j] * r[j];
  out.loss /= static_cast<double>(B);
  if (need_grad) {
    out.grad.assign(net.n_params(), 0.0);
    detail::reduce_in_order(grads, out.grad);
    for (double x : dlam) out.grad_lambda += x;
  }
  return out;
}

/// Weights 1/|T_k| of the locally additive loss, T_k = {j : N_j >= k}, for
/// k = 0..max_j N_j.
inline std::vector<double> alive_weights(const PathBundle& paths) {
  const std::size_t nmax = paths.max_n_ret();
  std::vector<std::size_t> count(nmax + 2, 0);
  for (std::size_t j = 0; j < paths.n_paths(); ++j) count[paths.n_ret(j)] += 1;
  std::vector<double> w(nmax + 1, 0.0);
  std::size_t alive = 0;
  for (std::size_t k = nmax + 1; k-- > 0;) {
    alive += count[k];
    w[k] = alive ? 1.0 / static_cast<double>(alive) : 0.0;
  }
  return w;
}

/// Locally additive loss sum_{k=1}^{max N} (1/|T_k|) sum_{j in T_k}
/// |Y(V_k) + phi_k - y0|^2 with phi_k = sum_{i<k} (h F - lambda_bar h - Z_i . dW_i),
/// and its gradient in (Y-net, Z-net, lambda_bar).
inline LossGrad laebsde_loss_grad(const TrainState& st, const Driver& drv, const PathBundle& paths, double y0,
                                  std::size_t threads = 1, bool need_grad = true) {
  const Mlp& ynet = st.nets[0];
  const Mlp& znet = st.nets[1];
  const std::size_t B = paths.n_paths();
  const std::size_t d = drv.d;
  const std::size_t zs = znet.cache_size(), ys = ynet.cache_size();
  const double h = paths.h();
  const double lam = st.lambda_bar;
  const std::vector<double> wk = alive_weights(paths);
  const std::size_t ny = ynet.n_params();
  std::vector<double> loss(B, 0.0), dlam(B, 0.0);
  std::vector<std::vector<double>> grads(need_grad ? B : 0);
  parallel_for_scratch(
      B, threads, [] { return detail::PathWork{}; },
      [&](std::size_t j, detail::PathWork& w) {
        const PathView p = paths.view(j);
        const std::size_t N = p.n_ret;
        w.caches.resize(N * zs);
        w.ycaches.resize((N + 1) * ys);
        w.gradf.resize(N * d);
        w.resid.assign(N + 1, 0.0);
        double phi = 0.0, l = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
          double* c = w.caches.data() + k * zs;
          znet.forward(p.v[k], c);
          const double* z = znet.output(c);
          phi += h * drv.eval(p.v[k], z) - lam * h - dot(z, p.dw_at(k), d);
          if (need_grad) drv.grad_z(p.v[k], z, w.gradf.data() + k * d);
          double* yc = w.ycaches.data() + (k + 1) * ys;
          ynet.forward(p.v[k + 1], yc);
          const double res = ynet.output(yc)[0] + phi - y0;
          w.resid[k + 1] = res;
          l += wk[k + 1] * res * res;
        }
        loss[j] = l;
        if (!need_grad) return;
        grads[j].assign(ny + znet.n_params(), 0.0);
        double* gy = grads[j].data();
        double* gz = grads[j].data() + ny;
        std::size_t ws = std::max(ynet.work_size(), znet.work_size());
        w.work.resize(ws);
        w.gout.resize(std::max<std::size_t>(d, 1));
        double G = 0.0, dl = 0.0;
        for (std::size_t k = N; k >= 1; --k) {
          const double gr = 2.0 * wk[k] * w.resid[k];
          w.gout[0] = gr;
          ynet.backward(w.ycaches.data() + k * ys, w.gout.data(), gy, w.work.data());
          G += gr;  // d loss / d psi_{k-1}
          const std::size_t i = k - 1;
          for (std::size_t c = 0; c < d; ++c) w.gout[c] = G * (h * w.gradf[i * d + c] - p.dw_at(i)[c]);
          znet.backward(w.caches.data() + i * zs, w.gout.data(), gz, w.work.data());
          dl += -h * G;
        }
        dlam[j] = dl;
      });
  LossGrad out;
  for (double x : loss) out.loss += x;
  if (need_grad) {
    out.grad.assign(ny + znet.n_params(), 0.0);
    detail::reduce_in_order(grads, out.grad);
    for (double x : dlam) out.grad_lambda += x;
  }
  return out;
}

/// Local loss at index k: mean over T_k of |Y(V_k) + phi_k - y0|^2. At k = 0
/// this is |Y(v0) - y0|^2 averaged over the batch.
inline double laebsde_local_loss(const TrainState& st, const Driver& drv, const PathBundle& paths, double y0,
                                 std::size_t k) {
  const Mlp& ynet = st.nets[0];
  const Mlp& znet = st.nets[1];
  const double h = paths.h();
  std::vector<double> zc(znet.cache_size()), yc(ynet.cache_size());
  double sum = 0.0;
  std::size_t alive = 0;
  for (std::size_t j = 0; j < paths.n_paths(); ++j) {
    const PathView p = paths.view(j);
    if (p.n_ret < k) continue;
    double phi = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      znet.forward(p.v[i], zc.data());
      const double* z = znet.output(zc.data());
      phi += h * drv.eval(p.v[i], z) - st.lambda_bar * h - dot(z, p.dw_at(i), drv.d);
    }
    ynet.forward(p.v[k], yc.data());
    const double r = ynet.output(yc.data())[0] + phi - y0;
    sum += r * r;
    ++alive;
  }
  return alive ? sum / static_cast<double>(alive) : 0.0;
}

inline LossGrad solver_loss_grad(SolverKind kind, const TrainState& st, const Driver& drv, const PathBundle& paths,
                                 double y0, std::size_t threads = 1, bool need_grad = true) {
  if (kind == SolverKind::GeBSDE) return gebsde_loss_grad(st, drv, paths, y0, threads, need_grad);
  if (kind == SolverKind::LAeBSDE) return laebsde_loss_grad(st, drv, paths, y0, threads, need_grad);
  throw Error(ErrorCode::InvalidArgument, "loss is defined for the neural solvers only");
}

inline TrainState initial_state(const SolverConfig& cfg) {
  TrainState st;
  const std::size_t d = cfg.model.dims();
  if (cfg.kind == SolverKind::LAeBSDE) {
    st.nets.push_back(Mlp::standard(d, 1));
    st.nets.back().glorot_init(derive_seed(cfg.seed, 11));
  }
  st.nets.push_back(Mlp::standard(d, d));
  st.nets.back().glorot_init(derive_seed(cfg.seed, 12));
  st.lambda_bar = 0.0;
  st.K = cfg.K;
  st.adam = cfg.adam;
  st.reset_moments();
  return st;
}

struct TrainResult {
  SolvedEbsde solution;
  TrainLog log;
};

inline SolvedEbsde wrap_solution(const SolverConfig& cfg, TrainState st) {
  SolvedEbsde sol;
  sol.kind = cfg.kind;
  sol.state = std::move(st);
  sol.driver = cfg.driver;
  sol.model = cfg.model;
  sol.h = cfg.grid.h;
  sol.y0 = cfg.y0;
  sol.d = cfg.model.dims();
  return sol;
}

/// Trains the global (Algorithm-1 style) or locally additive solver. The
/// batch is sampled once unless cfg.resample asks for fresh paths per step.
inline TrainResult train_solver(const SolverConfig& cfg, const std::function<void(const TrainLogRow&)>& progress = {}) {
  cfg.validate();
  require(cfg.kind == SolverKind::GeBSDE || cfg.kind == SolverKind::LAeBSDE, ErrorCode::InvalidArgument,
          "train_solver handles gebsde and laebsde");
  TrainState st = initial_state(cfg);
  TrainLog log;
  PathBundle batch = simulate_paths(cfg.model, cfg.grid, cfg.batch, derive_seed(cfg.seed, 1), cfg.threads);
  std::optional<PathBundle> eval;
  if (cfg.eval_every) eval = simulate_paths(cfg.model, cfg.grid, cfg.eval_size(), derive_seed(cfg.seed, 2), cfg.threads);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cfg.resample && step > 0)
      batch = simulate_paths(cfg.model, cfg.grid, cfg.batch, derive_seed(cfg.seed, 100000 + step), cfg.threads);
    if (eval && step % cfg.eval_every == 0) {
      const double el = solver_loss_grad(cfg.kind, st, cfg.driver, *eval, cfg.y0, cfg.threads, false).loss;
      log.eval.push_back({step, el});
    }
    LossGrad lg = solver_loss_grad(cfg.kind, st, cfg.driver, batch, cfg.y0, cfg.threads);
    if (!std::isfinite(lg.loss))
      throw Error(ErrorCode::NonFiniteLoss, "loss is not finite at step " + std::to_string(step));
    TrainLogRow row{step, lg.loss, st.lambda_bar};
    if (cfg.log_every && step % cfg.log_every == 0) log.rows.push_back(row);
    if (progress) progress(row);
    adam_step(st, lg.grad, lg.grad_lambda);
  }
  if (eval) {
    const double el = solver_loss_grad(cfg.kind, st, cfg.driver, *eval, cfg.y0, cfg.threads, false).loss;
    log.eval.push_back({cfg.steps, el});
  }
  return {wrap_solution(cfg, std::move(st)), std::move(log)};
}

/// Backward least-squares scheme on a fixed bundle. Paths are frozen at y0
/// from their own return index on; conditional expectations are ridge
/// regressions (1e-8) on monomials up to `degree` of the standardized factor.
/// Z uses the centered response (Y_{i+1} - E[Y_{i+1}|V_i]) dW_i / h, which has
/// the same conditional mean as Y_{i+1} dW_i / h and a smaller variance.
inline SolvedEbsde backward_regression(const PathBundle& paths, const Driver& drv_in, double lambda_hat,
                                       std::size_t degree, double y0, const FactorModel& model,
                                       std::optional<double> z_max = std::nullopt, bool quiet = false) {
  Driver drv = drv_in;
  if (z_max) {
    drv.truncate = true;
    drv.z_max = *z_max;
  }
  const std::size_t M = paths.n_paths();
  const std::size_t d = drv.d;
  const double h = paths.h();
  const std::size_t nmax = paths.max_n_ret();
  SolvedEbsde sol;
  sol.kind = SolverKind::Regression;
  sol.driver = drv;
  sol.model = model;
  sol.h = h;
  sol.y0 = y0;
  sol.d = d;
  auto& tb = sol.tables;
  tb.degree = degree;
  tb.h = h;
  tb.lambda_hat = lambda_hat;
  tb.center.assign(nmax, 0.0);
  tb.scale.assign(nmax, 1.0);
  tb.cy.assign(nmax, {});
  tb.cz.assign(nmax, {});
  std::vector<double> ynext(M, y0);  // Y at index i+1 per path
  std::vector<std::size_t> alive;
  std::size_t low_first = nmax, low_last = nmax, low_min = M;  // lowered-degree span, for one warning
  for (std::size_t i = nmax; i-- > 0;) {
    alive.clear();
    for (std::size_t j = 0; j < M; ++j)
      if (paths.n_ret(j) > i) alive.push_back(j);
    const std::size_t n = alive.size();
    double mean = 0.0;
    for (auto j : alive) mean += paths.v(j)[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (auto j : alive) var += (paths.v(j)[i] - mean) * (paths.v(j)[i] - mean);
    var /= static_cast<double>(n);
    std::size_t deg = degree;
    if (var < 1e-24) deg = 0;
    while (deg > 0 && n < 2 * (deg + 1)) --deg;
    if (deg < degree) {
      tb.reduced += 1;
      if (var >= 1e-24) {
        low_first = i;
        low_min = std::min(low_min, n);
        if (low_last == nmax) low_last = i;
      }
    }
    const double sd = var > 1e-24 ? std::sqrt(var) : 1.0;
    tb.center[i] = mean;
    tb.scale[i] = sd;
    const std::size_t nb = deg + 1;
    Eigen::MatrixXd X(n, nb);
    Eigen::VectorXd yv(n);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t j = alive[r];
      const double x = (paths.v(j)[i] - mean) / sd;
      double p = 1.0;
      for (std::size_t q = 0; q < nb; ++q) {
        X(r, q) = p;
        p *= x;
      }
      yv(r) = ynext[j];
    }
    Eigen::MatrixXd gram = X.transpose() * X / static_cast<double>(n);
    gram.diagonal().array() += 1e-8;
    Eigen::LDLT<Eigen::MatrixXd> solver(gram);
    Eigen::VectorXd cy = solver.solve(X.transpose() * yv / static_cast<double>(n));
    Eigen::VectorXd fitted = X * cy;
    tb.cy[i].assign(cy.data(), cy.data() + nb);
    tb.cz[i].assign(d * nb, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
      Eigen::VectorXd zr(n);
      for (std::size_t r = 0; r < n; ++r) zr(r) = (yv(r) - fitted(r)) * paths.dw(alive[r])[i * d + c] / h;
      Eigen::VectorXd cz = solver.solve(X.transpose() * zr / static_cast<double>(n));
      for (std::size_t q = 0; q < nb; ++q) tb.cz[i][c * nb + q] = cz(q);
    }
    // Y_i on alive paths; paths already returned keep y0.
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t j = alive[r];
      const double v = paths.v(j)[i];
      Vec z{};
      sol.regression_z(i, v, z.data());
      ynext[j] = fitted(r) + h * (drv.eval(v, z.data()) - lambda_hat);
    }
  }
  if (!quiet && low_last != nmax)
    std::cerr << "warning: regression degree lowered on indices " << low_first << ".." << low_last << " (down to "
              << low_min << " alive paths)\n";
  return sol;
}

/// Y along one path for a solved eBSDE on indices 0..n (n <= n_ret).
/// GeBSDE and oracle-driven solutions use the forward recursion from y0;
/// LAeBSDE uses its Y-network; the regression scheme uses its tables.
inline void solution_y_path(const SolvedEbsde& sol, const PathView& p, std::size_t n, std::vector<double>& y,
                            std::vector<double>& cache) {
  y.resize(n + 1);
  const std::size_t d = sol.d;
  switch (sol.kind) {
    case SolverKind::GeBSDE: {
      const Mlp& net = sol.z_net();
      cache.resize(net.cache_size());
      y[0] = sol.y0;
      for (std::size_t k = 0; k < n; ++k) {
        net.forward(p.v[k], cache.data());
        const double* z = net.output(cache.data());
        y[k + 1] = y[k] - sol.h * sol.driver.eval(p.v[k], z) + sol.lambda() * sol.h + dot(z, p.dw_at(k), d);
      }
      return;
    }
    case SolverKind::LAeBSDE: {
      const Mlp& net = sol.state.nets[0];
      cache.resize(net.cache_size());
      for (std::size_t k = 0; k <= n; ++k) {
        net.forward(p.v[k], cache.data());
        y[k] = net.output(cache.data())[0];
      }
      return;
    }
    case SolverKind::Regression:
      for (std::size_t k = 0; k <= n; ++k) y[k] = k < p.n_ret ? sol.regression_y(k, p.v[k]) : sol.y0;
      return;
    case SolverKind::Oracle: {
      const double shift = sol.y0 - sol.oracle->y(sol.model.v0);
      for (std::size_t k = 0; k <= n; ++k) y[k] = sol.oracle->y(p.v[k]) + shift;
      return;
    }
  }
}

/// Mean |Y_N - y0|^2 of the forward recursion driven by the solution's z and
/// lambda (terminal mismatch of the global scheme).
inline double terminal_mismatch(const SolvedEbsde& sol, const PathBundle& paths) {
  std::vector<double> cache(sol.kind == SolverKind::Oracle || sol.kind == SolverKind::Regression
                                ? 1
                                : sol.z_net().cache_size());
  double sum = 0.0;
  for (std::size_t j = 0; j < paths.n_paths(); ++j) {
    const PathView p = paths.view(j);
    double y = sol.y0;
    for (std::size_t k = 0; k < p.n_ret; ++k) {
      Vec z{};
      sol.z_at(k, p.v[k], z.data(), cache.data());
      y += -sol.h * sol.driver.eval(p.v[k], z.data()) + sol.lambda() * sol.h + dot(z.data(), p.dw_at(k), sol.d);
    }
    sum += (y - sol.y0) * (y - sol.y0);
  }
  return sum / static_cast<double>(paths.n_paths());
}

inline SolvedEbsde oracle_solution_as_solved(const OracleSolution& o, const Driver& drv, const FactorModel& model,
                                             double h, double y0) {
  SolvedEbsde sol;
  sol.kind = SolverKind::Oracle;
  sol.oracle = o;
  sol.driver = drv;
  sol.model = model;
  sol.h = h;
  sol.y0 = y0;
  sol.d = model.dims();
  return sol;
}

struct ErrorReport {
  std::vector<double> t;
  std::vector<double> eps_y;             // mean relative error at t_i <= T
  std::vector<std::size_t> excluded;     // |y| < 1e-10 entries skipped at t_i
  double I_y = 0.0;
  double I_z = 0.0;
  std::vector<double> path_I_y, path_I_z;
  double lambda_abs_err = 0.0;
  double lambda_bar = 0.0;
};

/// Error metrics against an oracle on fresh paths. The reference Y is
/// y(V) + y0 - y(v0), which is y itself when y0 = y(v0). Integral errors sum
/// h |.| over t_i in [0, T).
inline ErrorReport evaluate(const SolvedEbsde& sol, const OracleSolution& oracle, const PathBundle& paths,
                            double T, std::size_t threads = 1) {
  const double h = paths.h();
  const std::size_t last = static_cast<std::size_t>(std::floor(T / h * (1.0 + 1e-12)));  // t_last <= T
  const std::size_t M = paths.n_paths();
  const std::size_t d = sol.d;
  const double shift = sol.y0 - oracle.y(sol.model.v0);
  std::vector<std::vector<double>> rel(M, std::vector<double>(last + 1, 0.0));
  std::vector<std::vector<unsigned char>> skip(M, std::vector<unsigned char>(last + 1, 0));
  ErrorReport rep;
  rep.path_I_y.assign(M, 0.0);
  rep.path_I_z.assign(M, 0.0);
  const bool neural = sol.kind == SolverKind::GeBSDE || sol.kind == SolverKind::LAeBSDE;
  const std::size_t zcache = neural ? sol.z_net().cache_size() : 1;
  struct Work {
    std::vector<double> y, cache, zc;
  };
  parallel_for_scratch(
      M, threads, [] { return Work{}; },
      [&](std::size_t j, Work& w) {
        const PathView p = paths.view(j);
        solution_y_path(sol, p, last, w.y, w.cache);
        w.zc.resize(zcache);
        double iy = 0.0, iz = 0.0;
        for (std::size_t i = 0; i <= last; ++i) {
          const double yt = oracle.y(p.v[i]) + shift;
          const double err = std::abs(yt - w.y[i]);
          if (std::abs(yt) < 1e-10)
            skip[j][i] = 1;
          else
            rel[j][i] = err / std::abs(yt);
          if (i < last) {
            iy += h * err;
            Vec z{};
            sol.z_at(i, p.v[i], z.data(), w.zc.data());
            double dz = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double zt = c == 0 ? oracle.z(p.v[i]) : 0.0;
              dz += (zt - z[c]) * (zt - z[c]);
            }
            iz += h * dz;
          }
        }
        rep.path_I_y[j] = iy;
        rep.path_I_z[j] = iz;
      });
  rep.t.resize(last + 1);
  rep.eps_y.assign(last + 1, 0.0);
  rep.excluded.assign(last + 1, 0);
  for (std::size_t i = 0; i <= last; ++i) {
    rep.t[i] = h * static_cast<double>(i);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < M; ++j) {
      if (skip[j][i]) {
        rep.excluded[i] += 1;
        continue;
      }
      s += rel[j][i];
      ++n;
    }
    rep.eps_y[i] = n ? s / static_cast<double>(n) : 0.0;
  }
  for (std::size_t j = 0; j < M; ++j) {
    rep.I_y += rep.path_I_y[j];
    rep.I_z += rep.path_I_z[j];
  }
  rep.I_y /= static_cast<double>(M);
  rep.I_z /= static_cast<double>(M);
  rep.lambda_bar = sol.lambda();
  rep.lambda_abs_err = std::abs(sol.lambda() - oracle.lambda);
  return rep;
}

/// Empirical discrete error of the regression scheme on its own bundle:
/// Err^2 = max_i mean_j 1{i <= N_j} |Y_i^j - Ybar_i^j|^2 + mean_j sum_{i<N_j} h |z - Zbar_i|^2,
/// with the supremum inside each step taken at grid points.
inline double regression_error(const SolvedEbsde& sol, const OracleSolution& oracle, const PathBundle& paths) {
  const std::size_t M = paths.n_paths();
  const std::size_t nmax = paths.max_n_ret();
  const double h = paths.h();
  const double shift = sol.y0 - oracle.y(sol.model.v0);
  std::vector<double> ysum(nmax + 1, 0.0);
  double zint = 0.0;
  std::vector<double> y, cache(1);
  for (std::size_t j = 0; j < M; ++j) {
    const PathView p = paths.view(j);
    solution_y_path(sol, p, p.n_ret, y, cache);
    for (std::size_t i = 0; i <= p.n_ret; ++i) {
      const double e = oracle.y(p.v[i]) + shift - y[i];
      ysum[i] += e * e;
    }
    for (std::size_t i = 0; i < p.n_ret; ++i) {
      Vec z{};
      sol.z_at(i, p.v[i], z.data(), cache.data());
      double dz = 0.0;
      for (std::size_t c = 0; c < sol.d; ++c) {
        const double zt = c == 0 ? oracle.z(p.v[i]) : 0.0;
        dz += (zt - z[c]) * (zt - z[c]);
      }
      zint += h * dz;
    }
  }
  double ymax = 0.0;
  for (double s : ysum) ymax = std::max(ymax, s / static_cast<double>(M));
  return std::sqrt(ymax + zint / static_cast<double>(M));
}

}  // namespace ebsde
