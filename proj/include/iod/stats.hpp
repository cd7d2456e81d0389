#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace iod {

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;

  [[nodiscard]] double bin_width() const {
    return counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size());
  }
};

struct SampleSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;       // sample standard deviation (n - 1)
  double skewness = 0.0;  // g1 = m3 / m2^{3/2}
  Histogram histogram;
};

/// Fixed-width histogram over [lo, hi); values outside are dropped.
inline Histogram make_histogram(const std::vector<double>& xs, double lo, double hi, int bins) {
  Histogram h{lo, hi, std::vector<std::size_t>(static_cast<std::size_t>(bins), 0)};
  if (!(hi > lo)) return h;
  const double w = (hi - lo) / bins;
  for (double x : xs) {
    if (!(x >= lo && x < hi)) continue;
    auto k = static_cast<std::size_t>((x - lo) / w);
    if (k >= h.counts.size()) k = h.counts.size() - 1;
    ++h.counts[k];
  }
  return h;
}

/// Moments plus a histogram spanning mean +/- 4 std.
inline SampleSummary summarize(const std::vector<double>& xs, int bins = 61) {
  SampleSummary s;
  s.n = xs.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(s.n);
  double m2 = 0.0, m3 = 0.0;
  for (double x : xs) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  const auto n = static_cast<double>(s.n);
  s.std = s.n > 1 ? std::sqrt(m2 / (n - 1.0)) : 0.0;
  m2 /= n;
  m3 /= n;
  s.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  s.histogram = make_histogram(xs, s.mean - 4.0 * s.std, s.mean + 4.0 * s.std, bins);
  return s;
}

}  // namespace iod
