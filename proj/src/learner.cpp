#include "analysparse/learner.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "analysparse/config.hpp"
#include "analysparse/errors.hpp"
#include "analysparse/linalg.hpp"

namespace analysparse {

std::string to_string(Projection p) {
  return p == Projection::CenterColumns ? "center-columns" : "none";
}

Projection parse_projection(const std::string& text) {
  if (text == "center-columns" || text == "center") return Projection::CenterColumns;
  if (text == "none") return Projection::None;
  throw ConfigError("unknown projection '" + text + "'");
}

void TrainConfig::validate() const {
  if (m < 1) throw ConfigError("train.m must be at least 1");
  if (!(eta2 >= 0.0) || !std::isfinite(eta2)) throw ConfigError("train.eta2 must be finite and non-negative");
  if (batch_sz < 1) throw ConfigError("train.batch_sz must be at least 1");
  if (!(init_std >= 0.0)) throw ConfigError("train.init_std must be non-negative");
  denoise_cfg.validate();
  eval_cfg.validate();
}

Tensor center_columns(const Tensor& D) {
  Tensor out = D;
  const std::size_t p = D.rows();
  if (p == 0) return out;
  for (std::size_t c = 0; c < D.cols(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < p; ++r) sum += D(r, c);
    const double mean = sum / static_cast<double>(p);
    for (std::size_t r = 0; r < p; ++r) out(r, c) -= mean;
  }
  return out;
}

double max_abs_column_sum(const Tensor& D) {
  double worst = 0.0;
  for (std::size_t c = 0; c < D.cols(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < D.rows(); ++r) sum += D(r, c);
    worst = std::max(worst, std::abs(sum));
  }
  return worst;
}

Var batch_mse(Tape& tape, Var D, std::span<const SignalPair* const> batch,
              const DenoiseConfig& cfg, double eta1, const Rng& item_rng) {
  if (batch.empty()) throw Error("batch_mse: empty batch");
  Var total;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    Rng rng = item_rng.derive(k);
    const Tensor q0 = draw_start(D.value().cols(), rng);
    const Var w_hat = denoise_recorded(tape, D, batch[k]->y, q0, eta1, cfg);
    const Var item = tape.sqdist(w_hat, batch[k]->w);
    total = k == 0 ? item : tape.add(total, item);
  }
  return total;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int k = -10; k <= 4; ++k) grid.push_back(std::ldexp(1.0, k));
  return grid;
}

LambdaSearch grid_search_lambda(const Dataset& val_set, const Tensor& D_base,
                                const std::vector<double>& grid, const DenoiseConfig& cfg,
                                std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  const FistaSolver solver(cfg);
  const Rng rng = Rng(seed, Stream::Eval);

  LambdaSearch out;
  out.loss = std::numeric_limits<double>::infinity();
  for (double lambda : sorted) {
    if (!(lambda > 0.0)) throw ConfigError("lambda grid entries must be positive");
    const Tensor D = scale(D_base, lambda);
    const double loss =
        mean_reconstruction_loss(D, val_set.pairs, solver, solver.prepare(D), rng);
    out.table.emplace_back(lambda, loss);
    if (loss < out.loss) {
      out.loss = loss;
      out.lambda = lambda;
    }
  }
  return out;
}

ReferenceLosses reference_losses(const Dataset& val_set, std::size_t m, const DenoiseConfig& cfg,
                                 std::uint64_t seed) {
  ReferenceLosses refs;
  double zero = 0.0;
  for (const auto& pair : val_set.pairs) zero += squared_norm(sub(pair.y, pair.w));
  refs.zero = val_set.pairs.empty() ? 0.0 : zero / static_cast<double>(val_set.pairs.size());
  const std::size_t p = val_set.config.p;
  if (m == p && p >= 2 && !val_set.pairs.empty()) {
    const LambdaSearch search =
        grid_search_lambda(val_set, make_dtv(p), default_lambda_grid(), cfg, seed);
    refs.has_tv = true;
    refs.tv_lambda = search.lambda;
    refs.tv = search.loss;
  }
  return refs;
}

std::pair<Tensor, TrainReport> train_with_solver(const Dataset& train_set, const Dataset& val_set,
                                                 const TrainConfig& cfg,
                                                 const InnerSolver& train_solver,
                                                 const InnerSolver& eval_solver,
                                                 const InnerSolver& eval_train_budget) {
  cfg.validate();
  const std::size_t N = train_set.size();
  if (N < cfg.batch_sz) {
    throw ConfigError("training set (" + std::to_string(N) + " pairs) is smaller than one batch");
  }
  const std::size_t p = train_set.config.p;
  const auto started = std::chrono::steady_clock::now();

  TrainReport report;
  report.method = train_solver.name();
  report.projection = cfg.projection;
  report.eta2 = cfg.eta2;
  if (cfg.references) {
    report.references = *cfg.references;
  } else if (cfg.compute_references) {
    report.references = reference_losses(val_set, cfg.m, cfg.eval_cfg, cfg.seed);
  }
  const bool can_abort = cfg.abort_worse_than_zero && (cfg.references || cfg.compute_references);

  Rng init_rng(cfg.seed, Stream::Init);
  Tensor D = gaussian(p, cfg.m, 0.0, cfg.init_std, init_rng);
  if (cfg.projection == Projection::CenterColumns) D = center_columns(D);
  report.initial_D = D;

  // Sequential batches over a permutation that is reshuffled on wrap.
  std::vector<std::size_t> order(N);
  for (std::size_t i = 0; i < N; ++i) order[i] = i;
  Rng shuffle_rng = Rng(cfg.seed, Stream::Batch).derive(std::numeric_limits<std::uint64_t>::max());
  std::size_t cursor = 0;

  const Rng eval_rng(cfg.seed, Stream::Eval);
  auto validate_at = [&](std::size_t iteration) {
    if (val_set.pairs.empty()) return;
    ValidationPoint vp;
    vp.iteration = iteration;
    if (is_zero(D)) {
      vp.loss = vp.loss_train_budget = report.references.zero;
    } else {
      vp.loss = mean_reconstruction_loss(D, val_set.pairs, eval_solver, eval_solver.prepare(D),
                                         eval_rng, cfg.execution);
      vp.loss_train_budget = mean_reconstruction_loss(
          D, val_set.pairs, eval_train_budget, eval_train_budget.prepare(D), eval_rng,
          cfg.execution);
    }
    report.val_loss.push_back(vp);
    if (can_abort && iteration > 0 && vp.loss > report.references.zero) {
      throw DivergenceError("validation loss " + format_double(vp.loss) +
                                " exceeds the D = 0 reference " +
                                format_double(report.references.zero),
                            iteration);
    }
  };

  std::vector<const SignalPair*> batch(cfg.batch_sz);
  const double step = cfg.eta2 / static_cast<double>(cfg.batch_sz);
  for (std::size_t t = 0; t < cfg.max_itr2; ++t) {
    if (cursor + cfg.batch_sz > N) {
      for (std::size_t i = N - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);
      cursor = 0;
    }
    for (std::size_t k = 0; k < cfg.batch_sz; ++k) batch[k] = &train_set.pairs[order[cursor + k]];
    cursor += cfg.batch_sz;

    BatchGradient g;
    try {
      const double prepared = train_solver.prepare(D);
      g = batch_gradient(D, batch, train_solver, prepared, Rng(cfg.seed, Stream::Batch).derive(t),
                         cfg.execution);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string("training diverged: ") + e.what(), t);
    } catch (const ZeroOperatorError& e) {
      throw DivergenceError(std::string("training collapsed to D = 0: ") + e.what(), t);
    }
    if (!std::isfinite(g.loss) || !all_finite(g.grad)) {
      throw DivergenceError("non-finite training loss", t);
    }

    // D already lies in C, so a null step would only add rounding noise.
    if (step != 0.0) {
      kernel::axpy(-step, g.grad.values(), D.values());
      if (cfg.projection == Projection::CenterColumns) D = center_columns(D);
    }
    if (!all_finite(D)) throw DivergenceError("non-finite dictionary", t);

    report.train_loss.push_back(g.loss / static_cast<double>(cfg.batch_sz));
    report.max_column_sum.push_back(max_abs_column_sum(D));
    const bool last = t + 1 == cfg.max_itr2;
    if (last || (cfg.validation_every > 0 && (t + 1) % cfg.validation_every == 0)) validate_at(t + 1);
  }
  if (cfg.max_itr2 == 0) validate_at(0);

  report.final_D = D;
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(D), std::move(report)};
}

std::pair<Tensor, TrainReport> train(const Dataset& train_set, const Dataset& val_set,
                                     const TrainConfig& cfg) {
  DenoiseConfig train_budget_eval = cfg.denoise_cfg;
  train_budget_eval.record = false;
  const FistaSolver train_solver(cfg.denoise_cfg);
  const FistaSolver eval_solver(cfg.eval_cfg);
  const FistaSolver eval_train_budget(train_budget_eval);
  return train_with_solver(train_set, val_set, cfg, train_solver, eval_solver, eval_train_budget);
}

TunedRun tune_eta2(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                   const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("eta2 grid is empty");
  TunedRun best;
  bool have_best = false;
  std::optional<ReferenceLosses> refs = cfg.references;
  if (!refs && cfg.compute_references) {
    refs = reference_losses(val_set, cfg.m, cfg.eval_cfg, cfg.seed);
  }
  for (double eta2 : grid) {
    TrainConfig c = cfg;
    c.eta2 = eta2;
    c.references = refs;
    c.abort_worse_than_zero = cfg.abort_worse_than_zero || grid.size() > 1;
    Eta2Trial trial;
    trial.eta2 = eta2;
    try {
      auto [D, report] = train(train_set, val_set, c);
      trial.final_val_loss = report.final_val_loss();
      if (!have_best || trial.final_val_loss < best.report.final_val_loss()) {
        best.D_hat = std::move(D);
        best.report = std::move(report);
        have_best = true;
      }
    } catch (const DivergenceError& e) {
      trial.diverged = true;
      trial.error = e.what();
      trial.final_val_loss = std::numeric_limits<double>::infinity();
    }
    best.trials.push_back(trial);
  }
  if (!have_best) throw DivergenceError("every eta2 candidate diverged", 0);
  return best;
}

Tensor sort_columns(const Tensor& D) {
  const std::size_t p = D.rows();
  const std::size_t m = D.cols();
  struct Key {
    std::size_t col;
    std::size_t row;
    double norm;
  };
  std::vector<Key> keys;
  keys.reserve(m);
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t row = 0;
    double best = -1.0;
    double norm = 0.0;
    for (std::size_t r = 0; r < p; ++r) {
      const double a = std::abs(D(r, c));
      if (a >= best) {
        best = a;
        row = r;
      }
      norm += D(r, c) * D(r, c);
    }
    keys.push_back({c, row, std::sqrt(norm)});
  }
  std::stable_sort(keys.begin(), keys.end(), [&](const Key& a, const Key& b) {
    if (a.row != b.row) return a.row < b.row;
    if (a.norm != b.norm) return a.norm > b.norm;
    for (std::size_t r = 0; r < p; ++r) {
      if (D(r, a.col) != D(r, b.col)) return D(r, a.col) < D(r, b.col);
    }
    return false;
  });
  Tensor out(p, m);
  for (std::size_t k = 0; k < m; ++k) out.set_column(k, D.column(keys[k].col));
  return out;
}

Tensor rescale_unit(const Tensor& D) {
  const double peak = linf_norm(D);
  if (peak == 0.0) throw ZeroOperatorError("rescale_unit: zero dictionary");
  return scale(D, 1.0 / peak);
}

MatchReport match_columns(const Tensor& D_hat, const Tensor& D_ref) {
  if (D_hat.rows() != D_ref.rows()) throw DimensionError("match_columns: row counts differ");
  const std::size_t mh = D_hat.cols();
  const std::size_t mr = D_ref.cols();
  std::vector<double> norm_h(mh);
  std::vector<double> norm_r(mr);
  for (std::size_t c = 0; c < mh; ++c) norm_h[c] = frobenius_norm(D_hat.column(c));
  for (std::size_t c = 0; c < mr; ++c) norm_r[c] = frobenius_norm(D_ref.column(c));

  struct Cand {
    double cos;
    std::size_t h;
    std::size_t r;
  };
  std::vector<Cand> cands;
  cands.reserve(mh * mr);
  for (std::size_t i = 0; i < mh; ++i) {
    for (std::size_t j = 0; j < mr; ++j) {
      double c = 0.0;
      if (norm_h[i] > 0.0 && norm_r[j] > 0.0) {
        double d = 0.0;
        for (std::size_t r = 0; r < D_hat.rows(); ++r) d += D_hat(r, i) * D_ref(r, j);
        c = std::min(1.0, std::abs(d) / (norm_h[i] * norm_r[j]));
      }
      cands.push_back({c, i, j});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Cand& a, const Cand& b) { return a.cos > b.cos; });

  MatchReport out;
  std::vector<bool> used_h(mh, false);
  std::vector<bool> used_r(mr, false);
  const std::size_t pairs = std::min(mh, mr);
  for (const auto& c : cands) {
    if (out.assignment.size() == pairs) break;
    if (used_h[c.h] || used_r[c.r]) continue;
    used_h[c.h] = used_r[c.r] = true;
    out.assignment.emplace_back(c.h, c.r);
    out.cosines.push_back(c.cos);
  }
  double sum = 0.0;
  for (double c : out.cosines) sum += c;
  out.mean_abs_cosine = pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
  return out;
}

}  // namespace analysparse
