#pragma once

// Independent reference implementations used to cross-check the library.

#include "osda/eval.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace osda::testing {

struct OracleMetrics {
  double acc_known = 0.0;
  bool has_unknown = false;
  double acc_unknown = 0.0;
  double h = 0.0;
};

// Plain counting over class indices: per-class hit rates for the known
// classes present, rejection rate over every unknown-class sample.
inline OracleMetrics oracle_metrics(const std::vector<Decision>& decisions, const std::vector<std::string>& known,
                                    const std::vector<std::string>& unknown) {
  const std::size_t k = known.size();
  std::vector<long> hits(k, 0), seen(k, 0);
  long unk_seen = 0, unk_rejected = 0;
  for (const auto& d : decisions) {
    std::size_t idx = k;
    for (std::size_t i = 0; i < k; ++i)
      if (known[i] == d.true_class) idx = i;
    if (idx < k) {
      seen[idx] += 1;
      if (d.predicted.has_value() && d.predicted.value() == known[idx]) hits[idx] += 1;
      continue;
    }
    for (const auto& u : unknown)
      if (u == d.true_class) {
        unk_seen += 1;
        if (!d.predicted.has_value()) unk_rejected += 1;
      }
  }
  OracleMetrics m;
  double total = 0.0;
  int present = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (seen[i] == 0) continue;
    total += 100.0 * hits[i] / seen[i];
    ++present;
  }
  m.acc_known = present ? total / present : 0.0;
  if (unk_seen > 0) {
    m.has_unknown = true;
    m.acc_unknown = 100.0 * unk_rejected / unk_seen;
    const double s = m.acc_known + m.acc_unknown;
    m.h = s == 0.0 ? 0.0 : 2.0 * m.acc_known * m.acc_unknown / s;
  }
  return m;
}

}  // namespace osda::testing
