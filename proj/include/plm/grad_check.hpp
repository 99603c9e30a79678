#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "plm/gradients.hpp"

namespace plm::net {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Central-difference check of backward_bptt against the scalar loss.  Meant
// for 64-bit scalars and toy dimensions; the window cap is lifted so the
// analytic gradient covers the whole sequence.
template <typename S>
GradCheckReport grad_check(ModelParams<S>& p, const Sample& s, double step = 1e-5) {
  const auto mask = all_trainable(p);
  const auto analytic = backward_bptt(p, s, mask, s.inputs.size());

  GradCheckReport report;
  auto spans_p = collect_spans(p);
  auto spans_g = collect_spans(analytic.grads);
  for (std::size_t b = 0; b < spans_p.size(); ++b) {
    auto pt = spans_p[b].second;
    auto gt = spans_g[b].second;
    for (std::size_t i = 0; i < pt.size(); ++i) {
      const S old = pt[i];
      pt[i] = old + static_cast<S>(step);
      const double up = sample_mean_nll(p, s);
      pt[i] = old - static_cast<S>(step);
      const double down = sample_mean_nll(p, s);
      pt[i] = old;
      const double numeric = (up - down) / (2.0 * step);
      const double a = static_cast<double>(gt[i]);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_block = block_name(spans_p[b].first);
        report.worst_index = i;
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace plm::net
