#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pms/numerics/adam.hpp"
#include "pms/numerics/rng.hpp"

namespace pms {

/// Scalar objective built on a fresh tape from bound parameters.
using Objective = std::function<ad::Var(ad::Tape&, const std::map<std::string, ad::Var>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-3;
  /// Coordinates probed per parameter tensor; 0 probes all of them.
  std::size_t max_entries_per_param = 0;
  std::uint64_t sample_seed = 0;
  /// Optional analytic-gradient distortion, used to probe the checker itself.
  double analytic_scale = 1.0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t probed = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline double evaluate(const Objective& f, const ParamGroup& params) {
  ad::Tape tape;
  auto vars = params.bind(tape);
  return f(tape, vars).value().item();
}

}  // namespace detail

/// Compares reverse-mode gradients with central differences.
///
/// The relative error of coordinate i is |a_i - n_i| / max(|a_i|, |n_i|, s)
/// where s is 1% of the largest gradient magnitude in that tensor, floored at
/// the rounding noise of a central difference (10^4 ulp of the objective over
/// the step). Coordinates that are negligible next to their tensor's scale are
/// judged against that scale, and a tensor whose gradient is identically zero
/// is judged against the noise rather than against itself.
inline GradCheckReport gradient_check(const Objective& f, const ParamGroup& params, const GradCheckOptions& opts = {}) {
  const double base = detail::evaluate(f, params);
  const double again = detail::evaluate(f, params);
  if (base != again) {
    throw PreconditionError("gradient_check: objective is not deterministic (" + std::to_string(base) + " vs " +
                            std::to_string(again) + ")");
  }

  Gradients analytic;
  {
    ad::Tape tape;
    auto vars = params.bind(tape);
    ad::Var loss = f(tape, vars);
    tape.backward(loss);
    analytic = ParamGroup::collect(tape, vars);
  }

  const double noise =
      std::max(1e4 * std::numeric_limits<double>::epsilon() * std::max(std::abs(base), 1.0) / opts.step, 1e-10);
  GradCheckReport report;
  report.tolerance = opts.tolerance;
  RngState pick(opts.sample_seed, Stream::test);
  ParamGroup probe = params;
  for (const auto& [name, value] : params.params()) {
    const Tensor& g = analytic.at(name);
    std::vector<std::size_t> indices(value.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    if (opts.max_entries_per_param > 0 && indices.size() > opts.max_entries_per_param) {
      for (std::size_t i = 0; i < opts.max_entries_per_param; ++i) {
        std::swap(indices[i], indices[i + pick.below(indices.size() - i)]);
      }
      indices.resize(opts.max_entries_per_param);
    }

    std::vector<double> numeric(indices.size());
    Tensor& slot = probe.get_mut(name);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const std::size_t i = indices[k];
      const double original = slot[i];
      slot[i] = original + opts.step;
      const double up = detail::evaluate(f, probe);
      slot[i] = original - opts.step;
      const double down = detail::evaluate(f, probe);
      slot[i] = original;
      numeric[k] = (up - down) / (2.0 * opts.step);
    }

    double scale = 0.0;
    for (std::size_t k = 0; k < indices.size(); ++k) {
      scale = std::max({scale, std::abs(g[indices[k]] * opts.analytic_scale), std::abs(numeric[k])});
    }
    const double floor = std::max(0.01 * scale, noise);

    GradCheckEntry entry{name, 0.0, 0, 0.0, 0.0, indices.size()};
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const double a = g[indices[k]] * opts.analytic_scale;
      const double n = numeric[k];
      const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
      if (rel >= entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = indices[k];
        entry.analytic = a;
        entry.numeric = n;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace pms
