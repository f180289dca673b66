#ifndef CVC_TENSOR_HPP
#define CVC_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cvc/common.hpp"

namespace cvc {

// Dense 4-D tensor, NCHW, row-major, double precision.
// N is almost always 1 in this codebase; scalars are stored as (1,1,1,1).
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  int64_t numel() const { return int64_t(n) * c * h * w; }
  bool operator==(const Shape& o) const = default;
  std::string str() const;
};

struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), v(size_t(s.numel()), fill) {}

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, double value) { return Tensor(s, value); }
  static Tensor scalar(double value) { return Tensor(Shape{1, 1, 1, 1}, value); }

  int64_t numel() const { return shape.numel(); }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& at(int n, int c, int y, int x) {
    return v[size_t(((int64_t(n) * shape.c + c) * shape.h + y) * shape.w + x)];
  }
  double at(int n, int c, int y, int x) const {
    return v[size_t(((int64_t(n) * shape.c + c) * shape.h + y) * shape.w + x)];
  }

  double item() const {
    check_contract(numel() == 1, "Tensor::item on non-scalar tensor " + shape.str());
    return v[0];
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double abs_max() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
  }
};

// Deterministic RNG. mt19937_64's output sequence is pinned by the standard and
// the distributions below are implemented explicitly, so seeded runs reproduce
// across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + int(eng_() % uint64_t(hi - lo + 1));
  }

  double normal() {
    // Box-Muller; cache the second value.
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Tensor normal_tensor(Shape s, double stddev = 1.0) {
    Tensor t(s);
    for (auto& x : t.v) x = stddev * normal();
    return t;
  }

  Tensor uniform_tensor(Shape s, double lo, double hi) {
    Tensor t(s);
    for (auto& x : t.v) x = uniform(lo, hi);
    return t;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cvc

#endif
