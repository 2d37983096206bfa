#include "caufc/entropy/cdf_table.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace caufc::entropy {

double CdfTable::bits(int32_t s) const {
  uint32_t width = hi(s) - lo(s);
  return -std::log2(static_cast<double>(width) / kFreqTotal);
}

void CdfTable::validate() const {
  if (cum.size() < 2) fail("cdf table: empty support");
  if (cum.front() != 0) fail("cdf table: cum[0] must be 0");
  if (cum.back() != kFreqTotal) fail("cdf table: total must be 65536");
  for (size_t i = 1; i < cum.size(); ++i) {
    if (cum[i] <= cum[i - 1]) fail("cdf table: zero-width interval at symbol " + std::to_string(i - 1));
  }
}

CdfTable build_table(std::span<const double> probabilities, int32_t s_min) {
  const size_t n = probabilities.size();
  if (n == 0) fail("build_table: empty support");
  if (n >= kFreqTotal) fail("build_table: support too large for 16-bit frequencies");

  double sum = 0.0;
  for (double p : probabilities) {
    if (!std::isfinite(p) || p < kMinProb) fail("build_table: probabilities must be finite and >= 2^-32");
    sum += p;
  }

  std::vector<uint32_t> width(n);
  std::vector<double> remainder(n);
  uint64_t assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    double ideal = probabilities[i] / sum * kFreqTotal;
    double base = std::floor(ideal);
    width[i] = static_cast<uint32_t>(base);
    remainder[i] = ideal - base;
    assigned += width[i];
  }

  // Hand out the leftover units by largest remainder, lower index first.
  uint64_t deficit = kFreqTotal - assigned;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return remainder[a] > remainder[b]; });
  for (uint64_t i = 0; i < deficit; ++i) width[order[i % n]] += 1;

  // Zero-width symbols steal one unit from the current widest interval.
  for (size_t i = 0; i < n; ++i) {
    if (width[i] != 0) continue;
    size_t donor = n;
    uint32_t best = 1;
    for (size_t j = 0; j < n; ++j) {
      if (width[j] > best) {
        best = width[j];
        donor = j;
      }
    }
    if (donor == n) fail("build_table: cannot assign a frequency unit to every symbol");
    width[donor] -= 1;
    width[i] = 1;
  }

  CdfTable t;
  t.s_min = s_min;
  t.cum.resize(n + 1);
  t.cum[0] = 0;
  for (size_t i = 0; i < n; ++i) t.cum[i + 1] = t.cum[i] + width[i];
  t.validate();
  return t;
}

}  // namespace caufc::entropy
