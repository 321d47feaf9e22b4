// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "topomo/numerics/random.hpp"

namespace topomo {

namespace {

double eval_loss(const std::function<ad::Var()>& loss_fn) {
  const ad::Var loss = loss_fn();
  if (loss.size() != 1) throw DimensionError("grad_check: loss must be scalar");
  const double v = loss.value()[0];
  if (!std::isfinite(v)) throw NumericalError("grad_check: loss is not finite (" + std::to_string(v) + ")");
  return v;
}

}  // namespace

std::string GradReport::summary(std::size_t worst) const {
  std::vector<const GradEntry*> sorted;
  for (const auto& e : per_parameter) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->rel_err > b->rel_err; });
  std::ostringstream os;
  os << "max_abs_err=" << max_abs_err << " max_rel_err=" << max_rel_err << " tol=" << tol << '\n';
  for (std::size_t i = 0; i < std::min(worst, sorted.size()); ++i) {
    const auto& e = *sorted[i];
    os << "  " << e.name << '[' << e.index << "] analytic=" << e.analytic << " numeric=" << e.numeric
       << " rel=" << e.rel_err << '\n';
  }
  return os.str();
}

GradReport grad_check(const std::function<ad::Var()>& loss_fn, const ad::NamedParams& params,
                      const GradCheckOptions& options) {
  if (!(options.eps > 0.0 && options.eps <= 1e-2)) throw UsageError("grad_check: eps must lie in (0, 1e-2]");

  for (const auto& [name, p] : params) const_cast<ad::Var&>(p).zero_grad();
  {
    const ad::Var loss = loss_fn();
    if (!std::isfinite(loss.value()[0])) throw NumericalError("grad_check: loss is not finite");
    ad::backward(loss);
  }

  GradReport report;
  report.tol = options.tol;
  Rng rng(options.seed);
  for (const auto& [name, p] : params) {
    ad::Var param = p;
    const Tensor analytic = param.grad();
    const std::size_t n = param.size();
    std::vector<std::size_t> picks;
    if (n <= options.sample_size) {
      picks.resize(n);
      for (std::size_t i = 0; i < n; ++i) picks[i] = i;
    } else {
      picks = rng.sample_without_replacement(n, options.sample_size);
      std::sort(picks.begin(), picks.end());
    }
    for (std::size_t idx : picks) {
      double& slot = param.mutable_value()[idx];
      const double saved = slot;
      slot = saved + options.eps;
      const double up = eval_loss(loss_fn);
      slot = saved - options.eps;
      const double down = eval_loss(loss_fn);
      slot = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      GradEntry e{name, idx, analytic[idx], numeric, 0.0, 0.0};
      e.abs_err = std::fabs(e.analytic - e.numeric);
      e.rel_err = e.abs_err / std::max({std::fabs(e.analytic), std::fabs(e.numeric), 1e-8});
      report.max_abs_err = std::max(report.max_abs_err, e.abs_err);
      report.max_rel_err = std::max(report.max_rel_err, e.rel_err);
      report.per_parameter.push_back(std::move(e));
    }
  }
  report.passed = report.max_rel_err < options.tol;
  return report;
}

}  // namespace topomo
