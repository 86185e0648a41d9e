#pragma once

#include <vector>

namespace cones {

struct WilcoxonResult {
  double statistic = 0;  // min(W+, W-)
  double p_value = 1;
  int n_used = 0;  // pairs remaining after zero differences are dropped
  bool exact = false;
};

/// Two-sided Wilcoxon signed-rank test on paired scores. Zero differences are
/// dropped; ties receive midranks. For n <= 12 the p-value is computed by
/// exhaustive sign enumeration conditioned on the observed ranks, otherwise a
/// normal approximation with tie-corrected variance is used.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace cones
