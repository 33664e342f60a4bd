#pragma once

// Seeded gradient noise on R^1..R^3, used to draw random smooth functions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "cause_sieve/error.hpp"
#include "cause_sieve/random.hpp"

namespace cause_sieve {

struct PerlinSpec {
  std::uint64_t seed = 0;
  int dim = 1;
  int octaves = 3;
  double base_frequency = 1.0;
  double amplitude = 1.0;
  double persistence = 0.5;
};

/// Octave sum of lattice gradient noise, centred and scaled so that its
/// standard deviation over a 41^dim grid on [-3,3]^dim equals the amplitude.
class PerlinFunction {
 public:
  static constexpr int kGridPoints = 41;
  static constexpr double kGridHalfWidth = 3.0;

  explicit PerlinFunction(const PerlinSpec& spec) : spec_(spec) {
    require(spec.dim >= 1 && spec.dim <= 3, Errc::BadDim, "Perlin dimension must be 1, 2 or 3");
    require(spec.octaves >= 1, Errc::BadParam, "octaves must be >= 1");
    require(spec.base_frequency > 0 && spec.amplitude > 0 && spec.persistence > 0, Errc::BadParam,
            "frequency, amplitude and persistence must be positive");
    for (int k = 0; k < spec.octaves; ++k) {
      Rng rng = make_rng(derive_seed(spec.seed, {0x0ff5e7, static_cast<std::uint64_t>(k)}));
      std::array<double, 3> off{};
      for (double& o : off) o = 64.0 * uniform01(rng);
      offsets_.push_back(off);
    }
    normalise();
  }

  int dim() const noexcept { return spec_.dim; }
  const PerlinSpec& spec() const noexcept { return spec_; }

  double operator()(std::span<const double> x) const {
    require(static_cast<int>(x.size()) == spec_.dim, Errc::BadDim, "Perlin argument has the wrong dimension");
    return (raw(x) - shift_) * scale_;
  }
  double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }
  double operator()(double x1, double x2) const {
    const double v[2] = {x1, x2};
    return (*this)(std::span<const double>(v, 2));
  }
  double operator()(double x1, double x2, double x3) const {
    const double v[3] = {x1, x2, x3};
    return (*this)(std::span<const double>(v, 3));
  }

 private:
  static double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

  /// Unit gradient at an integer lattice point for octave k.
  std::array<double, 3> gradient(int k, const std::array<std::int64_t, 3>& cell) const {
    std::uint64_t h = derive_seed(spec_.seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(cell[0]),
                                               static_cast<std::uint64_t>(cell[1]),
                                               static_cast<std::uint64_t>(cell[2])});
    auto next_unit = [&h] {
      h = mix64(h + 0x9e3779b97f4a7c15ULL);
      return static_cast<double>(h >> 11) * 0x1.0p-53;
    };
    std::array<double, 3> g{};
    if (spec_.dim == 1) {
      g[0] = 2.0 * next_unit() - 1.0;
      return g;
    }
    if (spec_.dim == 2) {
      const double a = 2.0 * std::numbers::pi * next_unit();
      g[0] = std::cos(a);
      g[1] = std::sin(a);
      return g;
    }
    // uniform direction on the sphere
    const double z = 2.0 * next_unit() - 1.0;
    const double a = 2.0 * std::numbers::pi * next_unit();
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    g[0] = r * std::cos(a);
    g[1] = r * std::sin(a);
    g[2] = z;
    return g;
  }

  double noise(int k, const std::array<double, 3>& p) const {
    const int d = spec_.dim;
    std::array<std::int64_t, 3> base{};
    std::array<double, 3> frac{};
    std::array<double, 3> w{};
    for (int i = 0; i < d; ++i) {
      const double fl = std::floor(p[i]);
      base[i] = static_cast<std::int64_t>(fl);
      frac[i] = p[i] - fl;
      w[i] = fade(frac[i]);
    }
    double sum = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      std::array<std::int64_t, 3> cell{};
      double weight = 1.0;
      double dot = 0.0;
      for (int i = 0; i < d; ++i) cell[i] = base[i] + ((corner >> i) & 1);
      const auto g = gradient(k, cell);
      for (int i = 0; i < d; ++i) {
        const int bit = (corner >> i) & 1;
        weight *= bit ? w[i] : 1.0 - w[i];
        dot += g[i] * (frac[i] - bit);
      }
      sum += weight * dot;
    }
    return sum;
  }

  double raw(std::span<const double> x) const {
    double total = 0.0;
    double amp = 1.0;
    double freq = spec_.base_frequency;
    for (int k = 0; k < spec_.octaves; ++k) {
      std::array<double, 3> p{};
      for (int i = 0; i < spec_.dim; ++i) p[i] = freq * x[i] + offsets_[k][i];
      total += amp * noise(k, p);
      amp *= spec_.persistence;
      freq *= 2.0;
    }
    return total;
  }

  void normalise() {
    const int d = spec_.dim;
    const int m = kGridPoints;
    int count = 1;
    for (int i = 0; i < d; ++i) count *= m;
    std::vector<double> vals(static_cast<std::size_t>(count));
    const double step = 2.0 * kGridHalfWidth / (m - 1);
    for (int idx = 0; idx < count; ++idx) {
      std::array<double, 3> x{};
      int r = idx;
      for (int i = 0; i < d; ++i) {
        x[i] = -kGridHalfWidth + step * (r % m);
        r /= m;
      }
      vals[static_cast<std::size_t>(idx)] = raw(std::span<const double>(x.data(), static_cast<std::size_t>(d)));
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= count;
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / count);
    require(sd > 1e-12, Errc::BadParam, "Perlin function is constant on the grid");
    shift_ = mean;
    scale_ = spec_.amplitude / sd;
  }

  PerlinSpec spec_;
  std::vector<std::array<double, 3>> offsets_;
  double shift_ = 0.0;
  double scale_ = 1.0;
};

inline PerlinFunction perlin_fn(const PerlinSpec& spec) { return PerlinFunction(spec); }

}  // namespace cause_sieve
