#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "plm/styleeval.hpp"
#include "plm/train.hpp"
#include "plm/transfer.hpp"

namespace plm::io {

// All CSVs: '.' decimal separator, LF endings, %.17g reals so fixed-seed
// reruns are byte-identical.
inline std::string csv_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_metrics_csv(std::ostream& out, const std::vector<net::EpochMetrics>& trace) {
  out << "epoch,split,nll,perplexity\n";
  for (const auto& m : trace) {
    out << m.epoch << ",train," << csv_real(m.train_nll) << "," << csv_real(m.train_ppl) << "\n";
    if (!std::isnan(m.val_ppl))
      out << m.epoch << ",val," << csv_real(m.val_nll) << "," << csv_real(m.val_ppl) << "\n";
  }
}

inline void write_sweep_csv(std::ostream& out, const std::vector<transfer::SweepRow>& rows) {
  out << "size,perplexity\n";
  for (const auto& r : rows) out << r.size << "," << csv_real(r.perplexity) << "\n";
}

inline void write_matrix_csv(std::ostream& out, const eval::SimilarityMatrix& m) {
  out << "corpus";
  for (const auto& l : m.labels) out << "," << l;
  out << "\n";
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    out << m.labels[i];
    for (std::size_t j = 0; j < m.labels.size(); ++j) out << "," << csv_real(m.values.at(i, j));
    out << "\n";
  }
}

inline void write_convergence_csv(std::ostream& out, const eval::ConvergenceTable& t) {
  out << "target";
  for (auto e : t.epochs) out << ",epoch_" << e;
  out << "\n";
  for (std::size_t i = 0; i < t.targets.size(); ++i) {
    out << t.targets[i];
    for (std::size_t j = 0; j < t.epochs.size(); ++j) out << "," << csv_real(t.values.at(i, j));
    out << "\n";
  }
}

}  // namespace plm::io
