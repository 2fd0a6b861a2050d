#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace pnrd::detail {

template <std::size_t D>
struct SimplexResult {
  std::array<double, D> x{};
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Nelder-Mead with the standard coefficients (1, 2, 1/2, 1/2). Stops when the
// largest vertex distance from the best vertex drops below `tolerance`.
template <std::size_t D, class F>
SimplexResult<D> nelder_mead(F&& f, const std::array<double, D>& start, double step,
                             double tolerance, int max_iterations) {
  using Point = std::array<double, D>;
  std::array<Point, D + 1> vertex;
  std::array<double, D + 1> value;
  vertex[0] = start;
  for (std::size_t i = 0; i < D; ++i) {
    vertex[i + 1] = start;
    vertex[i + 1][i] += step;
  }
  for (std::size_t i = 0; i <= D; ++i) value[i] = f(vertex[i]);

  auto combine = [](const Point& a, const Point& b, double t) {
    Point out;
    for (std::size_t i = 0; i < D; ++i) out[i] = a[i] + t * (b[i] - a[i]);
    return out;
  };

  SimplexResult<D> result;
  for (int it = 0; it < max_iterations; ++it) {
    std::array<std::size_t, D + 1> order;
    for (std::size_t i = 0; i <= D; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return value[a] < value[b];
    });
    const std::size_t best = order[0];
    const std::size_t worst = order[D];
    const std::size_t second_worst = order[D - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= D; ++i) {
      double dist = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        const double delta = vertex[i][k] - vertex[best][k];
        dist += delta * delta;
      }
      diameter = std::max(diameter, std::sqrt(dist));
    }
    result.iterations = it;
    if (diameter < tolerance) {
      result.converged = true;
      break;
    }

    Point centroid{};
    for (std::size_t i = 0; i <= D; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < D; ++k) centroid[k] += vertex[i][k] / static_cast<double>(D);
    }

    const Point reflected = combine(centroid, vertex[worst], -1.0);
    const double f_reflected = f(reflected);
    if (f_reflected < value[best]) {
      const Point expanded = combine(centroid, vertex[worst], -2.0);
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        vertex[worst] = expanded;
        value[worst] = f_expanded;
      } else {
        vertex[worst] = reflected;
        value[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < value[second_worst]) {
      vertex[worst] = reflected;
      value[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < value[worst];
    const Point contracted =
        outside ? combine(centroid, reflected, 0.5) : combine(centroid, vertex[worst], 0.5);
    const double f_contracted = f(contracted);
    if (f_contracted < std::min(f_reflected, value[worst])) {
      vertex[worst] = contracted;
      value[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i <= D; ++i) {
      if (i == best) continue;
      vertex[i] = combine(vertex[best], vertex[i], 0.5);
      value[i] = f(vertex[i]);
    }
  }

  const auto best_it = std::min_element(value.begin(), value.end());
  const auto best_index = static_cast<std::size_t>(best_it - value.begin());
  result.x = vertex[best_index];
  result.value = *best_it;
  return result;
}

}  // namespace pnrd::detail
