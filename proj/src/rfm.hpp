// Grid-based Riemannian fast marching: wavefront expansion over an
// 8-connected lattice with segment costs measured by the path metric at the
// accepted endpoint, plus grid-gradient descent for path extraction.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "manifold.hpp"

namespace geoflow {

struct Grid2D {
  Eigen::Vector2d origin{0.0, 0.0};  // center of cell (0, 0)
  Eigen::Vector2d spacing{1.0, 1.0};
  int nx = 0;
  int ny = 0;
  int source_ix = -1;
  int source_iy = -1;
  std::vector<double> values;  // row-major, index ix * ny + iy

  int index(int ix, int iy) const { return ix * ny + iy; }
  bool in_bounds(int ix, int iy) const { return ix >= 0 && ix < nx && iy >= 0 && iy < ny; }
  double at(int ix, int iy) const { return values[index(ix, iy)]; }
  double& at(int ix, int iy) { return values[index(ix, iy)]; }
  Eigen::Vector2d cell_center(int ix, int iy) const {
    return {origin[0] + ix * spacing[0], origin[1] + iy * spacing[1]};
  }
  Eigen::Vector2d source_center() const { return cell_center(source_ix, source_iy); }
};

// Uniform lattice geometry over a box; values left empty for the solver.
Grid2D make_grid(int nx, int ny, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi);

// Binary speed model: blocked cells propagate nothing and stay at +infinity.
struct SpeedModel {
  int nx = 0;
  int ny = 0;
  std::vector<uint8_t> mask;  // nonzero = obstacle

  static SpeedModel free_space(int nx, int ny);
  bool blocked(int ix, int iy) const { return mask[ix * ny + iy] != 0; }
};

// Marks every cell whose center lies within radius of center as an obstacle.
void add_disk_obstacle(SpeedModel& speed, const Grid2D& geometry, const Eigen::Vector2d& center,
                       double radius);

enum class CellStatus : uint8_t { kFar, kTrial, kAccepted };

// Bookkeeping of one marching run, exposed so tests can observe the front.
struct WavefrontState {
  std::vector<CellStatus> status;
  std::vector<double> accepted_values;  // U in finalization order
};

// Expands the wavefront from the source cell until every reachable free cell
// is finalized. Ties in the queue break on the linearized cell index, so the
// output is reproducible bit for bit.
Grid2D solve_rfm(const MetricField& field, const Grid2D& geometry, int source_ix, int source_iy,
                 const SpeedModel& speed, WavefrontState* trace = nullptr);

// Central-difference lattice gradient, bilinearly interpolated to q. Strict:
// every stencil node must exist and hold a finite value.
Tangent grid_gradient(const Grid2D& grid, const Config& q);

// Euler descent along the geodesic flow G_eik * grad U with Euclidean-unit
// steps; stops within tol of the source or when the step budget runs out.
GeodesicPath backtrack_grid(const Grid2D& grid, const MetricField& field, const Config& start,
                            double step, double tol);

}  // namespace geoflow
