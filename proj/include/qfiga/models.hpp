#pragma once

#include "qfiga/spline_volume.hpp"

namespace qfiga {

/// Identity-mapped unit cube, one block.
MultiBlockVolume make_unit_cube(Deg3 degrees, int spans);

/// Octant of a hollow sphere (shell radii inner..outer), three conforming
/// blocks around the octant center, cubic.
MultiBlockVolume make_hollow_sphere_octant(int spans, double inner = 9.0,
                                           double outer = 11.0);

/// Quarter-pipe (annulus sector times extrusion), two conforming blocks split
/// at the mid angle, cubic.
MultiBlockVolume make_quarter_pipe(int spans);

/// Grid of conforming unit-cube cells with an optional smooth warp, cubic.
MultiBlockVolume make_block_grid(std::array<int, 3> grid, int spans,
                                 double warp_amplitude = 0.0);

/// Same structure, smoothly displaced control points (family member).
MultiBlockVolume perturb_model(const MultiBlockVolume& model, double amplitude,
                               unsigned seed);

}  // namespace qfiga
