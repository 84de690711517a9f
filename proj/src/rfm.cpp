#include "rfm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geoflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Fixed relaxation order keeps runs reproducible.
constexpr int kOffsets[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                {0, 1},   {1, -1}, {1, 0},  {1, 1}};

struct CellRef {
  int ix0 = 0, iy0 = 0;  // lower corner node of the containing cell
  double fx = 0.0, fy = 0.0;
};

CellRef locate(const Grid2D& grid, const Config& q) {
  if (q.size() != 2) throw std::invalid_argument("grid lookup: expected a 2d configuration");
  const double tx = (q[0] - grid.origin[0]) / grid.spacing[0];
  const double ty = (q[1] - grid.origin[1]) / grid.spacing[1];
  if (tx < 0.0 || tx > grid.nx - 1 || ty < 0.0 || ty > grid.ny - 1)
    throw std::invalid_argument("grid lookup: configuration outside the grid");
  CellRef ref;
  ref.ix0 = std::min(static_cast<int>(std::floor(tx)), grid.nx - 2);
  ref.iy0 = std::min(static_cast<int>(std::floor(ty)), grid.ny - 2);
  ref.fx = tx - ref.ix0;
  ref.fy = ty - ref.iy0;
  return ref;
}

double interpolate_value(const Grid2D& grid, const Config& q) {
  const CellRef ref = locate(grid, q);
  const double v00 = grid.at(ref.ix0, ref.iy0);
  const double v10 = grid.at(ref.ix0 + 1, ref.iy0);
  const double v01 = grid.at(ref.ix0, ref.iy0 + 1);
  const double v11 = grid.at(ref.ix0 + 1, ref.iy0 + 1);
  if (!std::isfinite(v00) || !std::isfinite(v10) || !std::isfinite(v01) || !std::isfinite(v11))
    throw std::runtime_error("grid lookup: infinite travel time at an interpolation corner");
  return (1.0 - ref.fx) * ((1.0 - ref.fy) * v00 + ref.fy * v01) +
         ref.fx * ((1.0 - ref.fy) * v10 + ref.fy * v11);
}

// Lattice-node gradient that degrades to one-sided differences beside
// obstacles or the boundary; false when no finite neighbor exists on an axis.
bool node_gradient_relaxed(const Grid2D& grid, int i, int j, Eigen::Vector2d& g) {
  const double c = grid.at(i, j);
  if (!std::isfinite(c)) return false;
  const auto axis = [&](int di, int dj, double h, double& out) {
    const bool has_p = grid.in_bounds(i + di, j + dj) && std::isfinite(grid.at(i + di, j + dj));
    const bool has_m = grid.in_bounds(i - di, j - dj) && std::isfinite(grid.at(i - di, j - dj));
    if (has_p && has_m)
      out = (grid.at(i + di, j + dj) - grid.at(i - di, j - dj)) / (2.0 * h);
    else if (has_p)
      out = (grid.at(i + di, j + dj) - c) / h;
    else if (has_m)
      out = (c - grid.at(i - di, j - dj)) / h;
    else
      return false;
    return true;
  };
  return axis(1, 0, grid.spacing[0], g[0]) && axis(0, 1, grid.spacing[1], g[1]);
}

// Bilinear gradient for the backtracker. Corners inside obstacles or without
// any finite neighbor abstain and the free corners are reweighted, which lets
// descending paths slide along obstacle boundaries.
Eigen::Vector2d descent_gradient(const Grid2D& grid, const Config& q) {
  const CellRef ref = locate(grid, q);
  const double wx[2] = {1.0 - ref.fx, ref.fx};
  const double wy[2] = {1.0 - ref.fy, ref.fy};
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  double weight = 0.0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double w = wx[a] * wy[b];
      if (w < 1e-12) continue;
      Eigen::Vector2d gn;
      if (!node_gradient_relaxed(grid, ref.ix0 + a, ref.iy0 + b, gn)) continue;
      g += w * gn;
      weight += w;
    }
  }
  if (weight < 1e-12)
    throw std::runtime_error("backtracking: no finite gradient stencil at the wavefront");
  return g / weight;
}

}  // namespace

Grid2D make_grid(int nx, int ny, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid: need at least 2 nodes per axis");
  if (!(hi[0] > lo[0]) || !(hi[1] > lo[1]))
    throw std::invalid_argument("grid: box upper corner must exceed the lower corner");
  Grid2D g;
  g.origin = lo;
  g.spacing = {(hi[0] - lo[0]) / (nx - 1), (hi[1] - lo[1]) / (ny - 1)};
  g.nx = nx;
  g.ny = ny;
  return g;
}

SpeedModel SpeedModel::free_space(int nx, int ny) {
  SpeedModel m;
  m.nx = nx;
  m.ny = ny;
  m.mask.assign(static_cast<size_t>(nx) * ny, 0);
  return m;
}

void add_disk_obstacle(SpeedModel& speed, const Grid2D& geometry, const Eigen::Vector2d& center,
                       double radius) {
  if (speed.nx != geometry.nx || speed.ny != geometry.ny)
    throw std::invalid_argument("speed model dimensions do not match the grid");
  for (int i = 0; i < geometry.nx; ++i)
    for (int j = 0; j < geometry.ny; ++j)
      if ((geometry.cell_center(i, j) - center).norm() <= radius)
        speed.mask[static_cast<size_t>(i) * geometry.ny + j] = 1;
}

Grid2D solve_rfm(const MetricField& field, const Grid2D& geometry, int source_ix, int source_iy,
                 const SpeedModel& speed, WavefrontState* trace) {
  if (field.role != MetricRole::PathMetric)
    throw std::invalid_argument("wavefront expansion measures segments with the path metric");
  if (geometry.nx < 2 || geometry.ny < 2) throw std::invalid_argument("grid too small");
  if (speed.nx != geometry.nx || speed.ny != geometry.ny)
    throw std::invalid_argument("speed model dimensions do not match the grid");
  if (!geometry.in_bounds(source_ix, source_iy))
    throw std::invalid_argument("source cell outside the grid");
  if (speed.blocked(source_ix, source_iy))
    throw std::invalid_argument("source cell lies inside an obstacle");

  Grid2D out = geometry;
  out.source_ix = source_ix;
  out.source_iy = source_iy;
  const size_t n_cells = static_cast<size_t>(out.nx) * out.ny;
  out.values.assign(n_cells, kInf);

  std::vector<CellStatus> status(n_cells, CellStatus::kFar);
  if (trace) {
    trace->status.assign(n_cells, CellStatus::kFar);
    trace->accepted_values.clear();
  }

  // Min-heap on (tentative U, linear index); the index term makes ties
  // deterministic. Stale entries are skipped on pop.
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  out.at(source_ix, source_iy) = 0.0;
  status[out.index(source_ix, source_iy)] = CellStatus::kTrial;
  queue.emplace(0.0, out.index(source_ix, source_iy));

  Config qe(2);
  Tangent d(2);
  while (!queue.empty()) {
    const auto [u, idx] = queue.top();
    queue.pop();
    if (status[idx] == CellStatus::kAccepted) continue;
    status[idx] = CellStatus::kAccepted;
    if (trace) {
      trace->status[idx] = CellStatus::kAccepted;
      trace->accepted_values.push_back(u);
    }
    const int eix = idx / out.ny;
    const int eiy = idx % out.ny;
    qe[0] = out.origin[0] + eix * out.spacing[0];
    qe[1] = out.origin[1] + eiy * out.spacing[1];
    const MetricTensor metric_at_e = validated_metric(field(qe));

    for (const auto& off : kOffsets) {
      const int nix = eix + off[0];
      const int niy = eiy + off[1];
      if (!out.in_bounds(nix, niy) || speed.blocked(nix, niy)) continue;
      const int nidx = out.index(nix, niy);
      if (status[nidx] == CellStatus::kAccepted) continue;
      d[0] = off[0] * out.spacing[0];
      d[1] = off[1] * out.spacing[1];
      const double cand = u + metric_norm(d, metric_at_e);
      if (cand < out.values[nidx]) {
        out.values[nidx] = cand;
        status[nidx] = CellStatus::kTrial;
        queue.emplace(cand, nidx);
      }
    }
  }
  return out;
}

Tangent grid_gradient(const Grid2D& grid, const Config& q) {
  const CellRef ref = locate(grid, q);
  // The strict stencil needs one extra ring of nodes around the cell.
  if (ref.ix0 < 1 || ref.ix0 + 1 > grid.nx - 2 || ref.iy0 < 1 || ref.iy0 + 1 > grid.ny - 2)
    throw std::invalid_argument("grid gradient: configuration too close to the grid border");
  const double wx[2] = {1.0 - ref.fx, ref.fx};
  const double wy[2] = {1.0 - ref.fy, ref.fy};
  Tangent g = Tangent::Zero(2);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const int i = ref.ix0 + a;
      const int j = ref.iy0 + b;
      const double up = grid.at(i + 1, j), um = grid.at(i - 1, j);
      const double vp = grid.at(i, j + 1), vm = grid.at(i, j - 1);
      if (!std::isfinite(up) || !std::isfinite(um) || !std::isfinite(vp) || !std::isfinite(vm))
        throw std::runtime_error("grid gradient: infinite value in the difference stencil");
      g[0] += wx[a] * wy[b] * (up - um) / (2.0 * grid.spacing[0]);
      g[1] += wx[a] * wy[b] * (vp - vm) / (2.0 * grid.spacing[1]);
    }
  }
  return g;
}

GeodesicPath backtrack_grid(const Grid2D& grid, const MetricField& field, const Config& start,
                            double step, double tol) {
  if (field.role != MetricRole::EikonalMetric)
    throw std::invalid_argument("backtracking follows the eikonal-metric flow");
  if (!(step > 0.0) || !(tol > 0.0))
    throw std::invalid_argument("backtracking needs positive step and tolerance");
  if (grid.source_ix < 0 || grid.source_iy < 0)
    throw std::invalid_argument("grid carries no source cell");

  const Eigen::Vector2d src = grid.source_center();
  Config q = start;
  GeodesicPath path;
  path.points.push_back(q);
  if ((q - src).norm() < tol) return path;  // already at the source

  const double u_start = interpolate_value(grid, start);
  const long budget = std::max<long>(1, static_cast<long>(std::ceil(10.0 * u_start / step)));
  const double xmin = grid.origin[0], xmax = grid.origin[0] + (grid.nx - 1) * grid.spacing[0];
  const double ymin = grid.origin[1], ymax = grid.origin[1] + (grid.ny - 1) * grid.spacing[1];

  // A point sits in a blocked cell when its nearest lattice node never got a
  // finite travel time. Steps into such cells are replaced by slides along
  // the free axis, so descending paths hug obstacle boundaries instead of
  // penetrating them.
  const auto cell_free = [&grid](double x, double y) {
    const int i = static_cast<int>(std::lround((x - grid.origin[0]) / grid.spacing[0]));
    const int j = static_cast<int>(std::lround((y - grid.origin[1]) / grid.spacing[1]));
    return grid.in_bounds(i, j) && std::isfinite(grid.at(i, j));
  };

  Config q_ref = q;
  bool reached = false;
  for (long iter = 0; iter < budget; ++iter) {
    const Eigen::Vector2d g = descent_gradient(grid, q);
    const Eigen::Vector2d flow = validated_metric(field(q)) * g;
    const double fn = flow.norm();
    if (fn < 1e-300) throw std::runtime_error("backtracking: geodesic flow vanished");
    double nx_pos = std::clamp(q[0] - step * flow[0] / fn, xmin, xmax);
    double ny_pos = std::clamp(q[1] - step * flow[1] / fn, ymin, ymax);
    if (!cell_free(nx_pos, ny_pos)) {
      const bool ok_x = cell_free(nx_pos, q[1]);
      const bool ok_y = cell_free(q[0], ny_pos);
      if (ok_x && (!ok_y || std::abs(flow[0]) >= std::abs(flow[1]))) {
        ny_pos = q[1];
      } else if (ok_y) {
        nx_pos = q[0];
      } else {
        nx_pos = q[0];  // cornered: hold position, the stagnation guard decides
        ny_pos = q[1];
      }
    }
    q[0] = nx_pos;
    q[1] = ny_pos;
    path.points.push_back(q);
    if ((q - src).norm() < tol) {
      reached = true;
      break;
    }
    if ((iter + 1) % 100 == 0) {
      if ((q - q_ref).norm() < 1e-9 * step)
        throw std::runtime_error("backtracking stagnated before reaching the source");
      q_ref = q;
    }
  }
  if (!reached) throw std::runtime_error("backtracking exhausted its step budget");
  path.points.push_back(Config(src));

  path.segment_lengths.reserve(path.points.size() - 1);
  path.total_length = 0.0;
  for (size_t k = 0; k + 1 < path.points.size(); ++k) {
    const Config mid = 0.5 * (path.points[k] + path.points[k + 1]);
    const Tangent delta = path.points[k + 1] - path.points[k];
    // Segment lengths belong to the path metric, the pointwise inverse of the
    // eikonal metric handed to this routine.
    const MetricTensor g_eik = validated_metric(field(mid));
    const double len = std::sqrt(std::max(0.0, delta.dot(g_eik.llt().solve(delta))));
    path.segment_lengths.push_back(len);
    path.total_length += len;
  }
  return path;
}

}  // namespace geoflow
