#pragma once

// Binary states, feature maps, the exponential (MaxEnt / Ising) family and
// the brute-force enumeration oracle.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "maxent_smc/errors.hpp"
#include "maxent_smc/random.hpp"

namespace maxent_smc {

inline constexpr std::size_t kMaxBits = 64;
inline constexpr std::size_t kDefaultOracleCap = 20;

/// A point of {0,1}^d packed into one word; bit i holds x_{i+1}.
/// The dimension lives with the FeatureSet, not with the state.
struct BitState {
  std::uint64_t word = 0;

  constexpr bool operator[](std::size_t i) const noexcept { return (word >> i) & 1U; }
  constexpr void set(std::size_t i, bool value) noexcept {
    word = value ? (word | (std::uint64_t{1} << i)) : (word & ~(std::uint64_t{1} << i));
  }
  constexpr BitState flipped(std::uint64_t mask) const noexcept { return BitState{word ^ mask}; }

  /// True when no bit at position >= d is set.
  constexpr bool fits(std::size_t d) const noexcept {
    return d >= kMaxBits || (word >> d) == 0;
  }

  friend constexpr bool operator==(BitState, BitState) = default;
  friend constexpr auto operator<=>(BitState, BitState) = default;
};

inline constexpr std::uint64_t low_mask(std::size_t d) noexcept {
  return d >= kMaxBits ? ~std::uint64_t{0} : (std::uint64_t{1} << d) - 1;
}

/// Parses "0110" as x_1 = 0, x_2 = 1, x_3 = 1, x_4 = 0.
inline BitState parse_bit_string(std::string_view text) {
  if (text.empty() || text.size() > kMaxBits) {
    throw ConfigError("bit string must have between 1 and 64 characters, got " +
                      std::to_string(text.size()));
  }
  BitState x;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '0' && text[i] != '1') {
      throw ConfigError("bit string contains '" + std::string(1, text[i]) + "'");
    }
    x.set(i, text[i] == '1');
  }
  return x;
}

inline std::string to_bit_string(BitState x, std::size_t d) {
  std::string out(d, '0');
  for (std::size_t i = 0; i < d; ++i) {
    if (x[i]) out[i] = '1';
  }
  return out;
}

/// Feature map phi: {0,1}^d -> R^J made of monomials prod_{i in S_j} x_i.
///
/// Every real function on {0,1}^d is a linear combination of monomials, so
/// registering index sets is the extension point for higher-order moments.
/// The built-in pairwise set orders (i,k), i <= k, row-major:
/// (1,1), (1,2), ..., (1,d), (2,2), ..., (d,d).
class FeatureSet {
 public:
  static FeatureSet pairwise(std::size_t d) {
    std::vector<std::vector<std::size_t>> terms;
    terms.reserve(d * (d + 1) / 2);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = i; k < d; ++k) {
        terms.push_back(i == k ? std::vector<std::size_t>{i} : std::vector<std::size_t>{i, k});
      }
    }
    FeatureSet set(d, std::move(terms));
    set.pairwise_ = true;
    return set;
  }

  static FeatureSet first_order(std::size_t d) {
    std::vector<std::vector<std::size_t>> terms;
    for (std::size_t i = 0; i < d; ++i) terms.push_back({i});
    return FeatureSet(d, std::move(terms));
  }

  /// Zero-based bit indices per feature, e.g. {{0, 1}} is the single feature x_1 x_2.
  static FeatureSet monomials(std::size_t d, std::vector<std::vector<std::size_t>> terms) {
    return FeatureSet(d, std::move(terms));
  }

  std::size_t dimension() const noexcept { return d_; }
  std::size_t size() const noexcept { return masks_.size(); }
  bool is_pairwise() const noexcept { return pairwise_; }

  std::uint64_t mask(std::size_t j) const { return masks_.at(j); }
  std::span<const std::uint64_t> masks() const noexcept { return masks_; }
  const std::vector<std::size_t>& term(std::size_t j) const { return terms_.at(j); }

  double evaluate_one(std::size_t j, BitState x) const noexcept {
    return (x.word & masks_[j]) == masks_[j] ? 1.0 : 0.0;
  }

  void evaluate_into(BitState x, std::span<double> out) const {
    if (out.size() != size()) throw ConfigError("feature output buffer has wrong length");
    for (std::size_t j = 0; j < masks_.size(); ++j) out[j] = evaluate_one(j, x);
  }

  std::vector<double> evaluate(BitState x) const {
    std::vector<double> out(size());
    evaluate_into(x, out);
    return out;
  }

  /// sum_{j < count} weights[j] * phi_j(x); the annealing path uses prefixes.
  double partial_dot(std::span<const double> weights, BitState x, std::size_t count) const noexcept {
    double s = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      if ((x.word & masks_[j]) == masks_[j]) s += weights[j];
    }
    return s;
  }

  /// Flat index of the pairwise feature x_i x_k (zero-based, any order of i, k).
  std::optional<std::size_t> pair_index(std::size_t i, std::size_t k) const {
    if (!pairwise_ || i >= d_ || k >= d_) return std::nullopt;
    if (i > k) std::swap(i, k);
    // rows 0..i-1 hold d, d-1, ..., d-i+1 entries
    return i * d_ - i * (i - 1) / 2 + (k - i);
  }

  /// Human-readable name with one-based indices, e.g. "x1x3".
  std::string label(std::size_t j) const {
    std::string out;
    for (auto i : terms_.at(j)) out += "x" + std::to_string(i + 1);
    return out;
  }

  friend bool operator==(const FeatureSet& a, const FeatureSet& b) {
    return a.d_ == b.d_ && a.masks_ == b.masks_;
  }

 private:
  FeatureSet(std::size_t d, std::vector<std::vector<std::size_t>> terms)
      : d_(d), terms_(std::move(terms)) {
    if (d == 0 || d > kMaxBits) {
      throw ConfigError("dimension must be in [1, 64], got " + std::to_string(d));
    }
    if (terms_.empty()) throw ConfigError("feature set is empty");
    masks_.reserve(terms_.size());
    for (auto& t : terms_) {
      std::sort(t.begin(), t.end());
      t.erase(std::unique(t.begin(), t.end()), t.end());
      if (t.empty()) throw ConfigError("constant feature (empty monomial) is not allowed");
      std::uint64_t m = 0;
      for (auto i : t) {
        if (i >= d) throw ConfigError("monomial index " + std::to_string(i) + " out of range");
        m |= std::uint64_t{1} << i;
      }
      masks_.push_back(m);
    }
  }

  std::size_t d_;
  std::vector<std::vector<std::size_t>> terms_;
  std::vector<std::uint64_t> masks_;
  bool pairwise_ = false;
};

/// Natural parameters lambda in R^J.
struct ParamVector {
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}
  static ParamVector zeros(std::size_t n) { return ParamVector(std::vector<double>(n, 0.0)); }

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t j) const { return values[j]; }
  double& operator[](std::size_t j) { return values[j]; }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Target or estimated moments, one entry per feature.
struct MomentVector {
  std::vector<double> values;

  MomentVector() = default;
  explicit MomentVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t j) const { return values[j]; }

  friend bool operator==(const MomentVector&, const MomentVector&) = default;
};

inline void validate(const ParamVector& lambda, const FeatureSet& features) {
  if (lambda.size() != features.size()) {
    throw ConfigError("parameter vector has length " + std::to_string(lambda.size()) +
                      " but the feature set has " + std::to_string(features.size()) + " features");
  }
  for (double v : lambda.values) {
    if (!std::isfinite(v)) throw ConfigError("parameter vector has a non-finite entry");
  }
}

inline void validate(const MomentVector& m, const FeatureSet& features) {
  if (m.size() != features.size()) {
    throw ConfigError("moment vector has length " + std::to_string(m.size()) +
                      " but the feature set has " + std::to_string(features.size()) + " features");
  }
  for (double v : m.values) {
    if (!std::isfinite(v)) throw ConfigError("moment vector has a non-finite entry");
  }
}

/// Checks the elementary constraints of monomial moments: each entry lies in
/// [0,1] and a monomial's moment never exceeds the moment of any monomial
/// dividing it. Returns indices of violating entries.
inline std::vector<std::size_t> moment_violations(const MomentVector& m, const FeatureSet& features) {
  validate(m, features);
  std::vector<std::size_t> bad;
  for (std::size_t j = 0; j < m.size(); ++j) {
    bool ok = m[j] >= 0.0 && m[j] <= 1.0;
    for (std::size_t k = 0; ok && k < m.size(); ++k) {
      const auto mj = features.mask(j);
      const auto mk = features.mask(k);
      if (k != j && (mj & mk) == mk && m[j] > m[k] + 1e-12) ok = false;
    }
    if (!ok) bad.push_back(j);
  }
  return bad;
}

/// log q(x | lambda) = lambda . phi(x).
inline double log_q(BitState x, const ParamVector& lambda, const FeatureSet& features) {
  if (lambda.size() != features.size()) {
    throw ConfigError("log_q: parameter length does not match feature count");
  }
  if (!x.fits(features.dimension())) throw ConfigError("log_q: state has bits beyond dimension");
  return features.partial_dot(lambda.values, x, features.size());
}

/// Symmetric d x d matrix, row-major.
struct SymmetricMatrix {
  std::size_t d = 0;
  std::vector<double> entries;

  double operator()(std::size_t i, std::size_t k) const { return entries[i * d + k]; }
  double& operator()(std::size_t i, std::size_t k) { return entries[i * d + k]; }
};

/// Lambda_ik = lambda_(i,k) for i <= k, mirrored below the diagonal.
inline SymmetricMatrix to_matrix(const ParamVector& lambda, const FeatureSet& features) {
  if (!features.is_pairwise()) throw ConfigError("matrix view needs the pairwise feature set");
  validate(lambda, features);
  const std::size_t d = features.dimension();
  SymmetricMatrix out{d, std::vector<double>(d * d, 0.0)};
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = i; k < d; ++k) {
      const double v = lambda[*features.pair_index(i, k)];
      out(i, k) = v;
      out(k, i) = v;
    }
  }
  return out;
}

/// Inverse of to_matrix; reads the upper triangle and rejects asymmetric input.
inline ParamVector from_matrix(const SymmetricMatrix& matrix, const FeatureSet& features) {
  if (!features.is_pairwise()) throw ConfigError("matrix view needs the pairwise feature set");
  const std::size_t d = features.dimension();
  if (matrix.d != d || matrix.entries.size() != d * d) throw ConfigError("matrix has wrong shape");
  ParamVector out = ParamVector::zeros(features.size());
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = i; k < d; ++k) {
      if (matrix(i, k) != matrix(k, i)) throw ConfigError("matrix is not symmetric");
      out[*features.pair_index(i, k)] = matrix(i, k);
    }
  }
  return out;
}

/// Parameters reproducing exp(sign * x^T A x) for symmetric A: the cross
/// terms of the quadratic form appear twice, hence lambda_(i,k) = 2 sign A_ik.
inline ParamVector from_quadratic_form(const SymmetricMatrix& a, const FeatureSet& features,
                                       double sign) {
  ParamVector out = from_matrix(a, features);
  const std::size_t d = features.dimension();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = i; k < d; ++k) {
      out[*features.pair_index(i, k)] *= (i == k ? sign : 2.0 * sign);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Enumeration oracle. Cost 2^d; refused above the cap.

struct OracleOptions {
  std::size_t d_cap = kDefaultOracleCap;
};

inline void check_oracle_cap(std::size_t d, const OracleOptions& options) {
  if (d > options.d_cap) {
    throw CapabilityError("exact enumeration over {0,1}^" + std::to_string(d) + " needs 2^" +
                          std::to_string(d) + " target evaluations; the oracle cap is d <= " +
                          std::to_string(options.d_cap) + " (raise it explicitly to proceed)");
  }
  if (d > 40) throw CapabilityError("enumeration beyond d = 40 is not supported");
}

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// log q(x|lambda) for every x in {0,1}^d, indexed by the packed word.
inline std::vector<double> enumerate_log_q(const ParamVector& lambda, const FeatureSet& features,
                                           const OracleOptions& options = {}) {
  validate(lambda, features);
  check_oracle_cap(features.dimension(), options);
  const std::uint64_t n = std::uint64_t{1} << features.dimension();
  std::vector<double> out(n);
  for (std::uint64_t w = 0; w < n; ++w) {
    out[w] = features.partial_dot(lambda.values, BitState{w}, features.size());
  }
  return out;
}

/// Exact probabilities pi(x|lambda), indexed by packed word.
inline std::vector<double> oracle_probabilities(const ParamVector& lambda, const FeatureSet& features,
                                                const OracleOptions& options = {}) {
  auto lq = enumerate_log_q(lambda, features, options);
  const double log_z = log_sum_exp(lq);
  for (double& v : lq) v = std::exp(v - log_z);
  return lq;
}

inline double oracle_log_partition(const ParamVector& lambda, const FeatureSet& features,
                                   const OracleOptions& options = {}) {
  return log_sum_exp(enumerate_log_q(lambda, features, options));
}

/// Z(lambda) = sum_x exp(lambda . phi(x)).
inline double oracle_partition(const ParamVector& lambda, const FeatureSet& features,
                               const OracleOptions& options = {}) {
  return std::exp(oracle_log_partition(lambda, features, options));
}

/// Exact expectation under pi(.|lambda) of f returning a number or a vector of numbers.
template <class F>
std::vector<double> oracle_expectation(const ParamVector& lambda, const FeatureSet& features, F&& f,
                                       const OracleOptions& options = {}) {
  const auto p = oracle_probabilities(lambda, features, options);
  std::vector<double> acc;
  for (std::uint64_t w = 0; w < p.size(); ++w) {
    std::vector<double> v;
    if constexpr (std::is_arithmetic_v<std::invoke_result_t<F&, BitState>>) {
      v = {static_cast<double>(f(BitState{w}))};
    } else {
      v = f(BitState{w});
    }
    if (acc.empty()) acc.assign(v.size(), 0.0);
    for (std::size_t j = 0; j < v.size(); ++j) acc[j] += p[w] * v[j];
  }
  return acc;
}

/// Pi(phi | lambda).
inline MomentVector oracle_moments(const ParamVector& lambda, const FeatureSet& features,
                                   const OracleOptions& options = {}) {
  const auto p = oracle_probabilities(lambda, features, options);
  std::vector<double> m(features.size(), 0.0);
  for (std::uint64_t w = 0; w < p.size(); ++w) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if ((w & features.mask(j)) == features.mask(j)) m[j] += p[w];
    }
  }
  return MomentVector(std::move(m));
}

/// Shannon entropy in nats.
inline double oracle_entropy(const ParamVector& lambda, const FeatureSet& features,
                             const OracleOptions& options = {}) {
  const auto p = oracle_probabilities(lambda, features, options);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

/// Exact sampler from pi(.|lambda) by inverse CDF over the enumerated table.
class OracleSampler {
 public:
  OracleSampler(const ParamVector& lambda, const FeatureSet& features, const OracleOptions& options = {})
      : cdf_(oracle_probabilities(lambda, features, options)) {
    std::partial_sum(cdf_.begin(), cdf_.end(), cdf_.begin());
  }

  template <class Engine>
  BitState operator()(Engine& rng) const {
    const double u = uniform01(rng) * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    return BitState{idx};
  }

 private:
  std::vector<double> cdf_;
};

/// One exact draw. Build an OracleSampler directly when drawing repeatedly.
template <class Engine>
BitState oracle_sample(const ParamVector& lambda, const FeatureSet& features, Engine& rng,
                       const OracleOptions& options = {}) {
  return OracleSampler(lambda, features, options)(rng);
}

}  // namespace maxent_smc
