#include "cones/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "cones/error.hpp"

namespace cones {

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  require(a.size() == b.size(), "wilcoxon: paired samples differ in length, ", a.size(),
          " vs ", b.size());
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  require(!diffs.empty(), "wilcoxon: degenerate input, all paired differences are zero");
  const int n = static_cast<int>(diffs.size());
  require(n >= 5, "wilcoxon: need at least 5 nonzero paired differences, got ", n);

  // Midranks of |d|, kept as doubled integers so tie handling stays exact.
  std::vector<int> order(diffs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::abs(diffs[i]) < std::abs(diffs[j]);
  });
  std::vector<std::int64_t> rank2(diffs.size());  // 2 * rank
  std::vector<int> tie_sizes;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
    // positions i..j-1 share midrank ((i+1) + j) / 2; doubled: (i+1) + j
    const std::int64_t r2 = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank2[order[k]] = r2;
    tie_sizes.push_back(static_cast<int>(j - i));
    i = j;
  }

  std::int64_t w2_plus = 0;
  std::int64_t t2 = 0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    t2 += rank2[i];
    if (diffs[i] > 0) w2_plus += rank2[i];
  }
  const std::int64_t w2_minus = t2 - w2_plus;
  const std::int64_t w2_min = std::min(w2_plus, w2_minus);
  const std::int64_t w2_max = std::max(w2_plus, w2_minus);

  WilcoxonResult res;
  res.n_used = n;
  res.statistic = static_cast<double>(w2_min) / 2.0;

  if (n <= 12) {
    // Exact two-sided p: enumerate all sign assignments of the observed ranks.
    res.exact = true;
    const std::uint64_t total = 1ull << n;
    std::uint64_t count_le = 0, count_ge = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      std::int64_t s2 = 0;
      for (int i = 0; i < n; ++i)
        if (mask & (1ull << i)) s2 += rank2[static_cast<std::size_t>(i)];
      if (s2 <= w2_min) ++count_le;
      if (s2 >= w2_max) ++count_ge;
    }
    res.p_value = std::min(
        1.0, static_cast<double>(count_le + count_ge) / static_cast<double>(total));
  } else {
    const double nd = static_cast<double>(n);
    const double mu = nd * (nd + 1.0) / 4.0;
    double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0;
    for (int t : tie_sizes) {
      const double td = static_cast<double>(t);
      var -= (td * td * td - td) / 48.0;
    }
    require(var > 0, "wilcoxon: zero variance (all differences tied)");
    const double w_plus = static_cast<double>(w2_plus) / 2.0;
    const double z = (w_plus - mu) / std::sqrt(var);
    res.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  }
  return res;
}

}  // namespace cones
