#include <algorithm>
#include <cmath>

#include "cfflow/metrics.hpp"

namespace cfflow {
namespace {

// Area dominated by (a, b) points inside [.., ra] x [.., rb].
double area_2d(std::vector<std::pair<double, double>>& pts, double ra, double rb) {
  std::sort(pts.begin(), pts.end());
  double area = 0.0, best_b = rb;
  for (const auto& [a, b] : pts) {
    if (b < best_b) {
      area += (ra - a) * (best_b - b);
      best_b = b;
    }
  }
  return area;
}

}  // namespace

double hypervolume_3d(std::span<const Objectives> points, const Objectives& reference) {
  std::vector<Objectives> live;
  for (const auto& p : points) {
    if (p[0] < reference[0] && p[1] < reference[1] && p[2] < reference[2]) live.push_back(p);
  }
  std::sort(live.begin(), live.end(), [](const Objectives& x, const Objectives& y) { return x[2] < y[2]; });
  double volume = 0.0;
  std::vector<std::pair<double, double>> front;
  for (std::size_t i = 0; i < live.size(); ++i) {
    front.emplace_back(live[i][0], live[i][1]);
    const double next = i + 1 < live.size() ? live[i + 1][2] : reference[2];
    if (next > live[i][2]) volume += area_2d(front, reference[0], reference[1]) * (next - live[i][2]);
  }
  return volume;
}

double hypervolume_log(std::span<const Objectives> points, const Objectives& reference) {
  return std::log(hypervolume_3d(points, reference) + 1e-12);
}

}  // namespace cfflow
