#ifndef SPANPSP_BENCH_HPP
#define SPANPSP_BENCH_HPP

// Decoder timing on random charts.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spanpsp/chart.hpp"
#include "spanpsp/decoder.hpp"
#include "spanpsp/prosody.hpp"

namespace spanpsp {

inline ScoreChart random_chart(std::size_t n, std::size_t labels, std::mt19937_64& rng, std::size_t dummy = 0) {
  ScoreChart chart(n, labels, dummy);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j <= n; ++j)
      for (std::size_t l = 0; l < labels; ++l)
        if (l != dummy) chart.at(i, j, l) = dist(rng);
  return chart;
}

struct BenchRow {
  std::size_t n = 0;
  std::size_t trials = 0;
  double median_seconds = 0.0;
  double min_seconds = 0.0;
};

inline double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

/// Median wall time of decode() over `trials` fresh random charts per length.
/// Chart construction is not timed.
inline std::vector<BenchRow> bench_decode(const std::vector<std::size_t>& lengths, std::size_t trials,
                                          std::uint64_t seed, std::size_t labels = 7) {
  if (trials == 0) throw Error("bench needs at least one trial");
  std::mt19937_64 rng(seed);
  std::vector<BenchRow> rows;
  volatile double sink = 0.0;
  for (std::size_t n : lengths) {
    if (n < 2) throw Error("bench lengths must be at least 2, got " + std::to_string(n));
    std::vector<double> times;
    for (std::size_t t = 0; t < trials; ++t) {
      const ScoreChart chart = random_chart(n, labels, rng);
      const auto start = std::chrono::steady_clock::now();
      const DecodeResult result = decode(chart);
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      sink = sink + result.score;
    }
    rows.push_back({n, trials, median(times), *std::min_element(times.begin(), times.end())});
  }
  return rows;
}

}  // namespace spanpsp

#endif  // SPANPSP_BENCH_HPP
