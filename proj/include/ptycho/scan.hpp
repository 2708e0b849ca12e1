#pragma once

#include "ptycho/core.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ptycho::scan {

/// Scan positions in meters, centered near the origin.
struct ScanPattern {
    std::vector<std::array<double, 2>> positions;
    std::size_t count() const { return positions.size(); }
};

/// Fermat spiral: position k at radius c*sqrt(k), angle k * 137.508 deg.
ScanPattern fermat_spiral(int n, double scale);

/// Bridson Poisson-disk sampling over a centered width x height region.
/// Every pairwise distance >= r_min; maximal up to the attempt budget.
ScanPattern poisson_disk(double width, double height, double r_min, int k_attempts,
                         std::uint64_t seed);

/// Area-overlap fraction of two discs of diameter d_probe at center distance d.
double overlap_fraction(double d, double d_probe);

/// Minimum pairwise (nearest-neighbor) distance of a pattern.
double min_pair_distance(const ScanPattern& p);

/// Solve (bisection) for the Fermat scale c whose nearest-neighbor overlap
/// matches the target for a probe of the given diameter.
double solve_fermat_scale(int n, double target_overlap, double probe_diameter);

/// Solve for the Poisson-disk r_min giving the target nearest-neighbor
/// overlap (the binding constraint is d >= r_min, so r_min maps directly).
double solve_poisson_rmin(double target_overlap, double probe_diameter);

/// Exactly n Poisson-disk points: the region is grown until the sampler
/// yields at least n, then the n most central points are kept and re-centered.
ScanPattern poisson_disk_exact(int n, double r_min, int k_attempts, std::uint64_t seed);

/// CSV export/import: header index,x_m,y_m.
void save_csv(const std::string& path, const ScanPattern& p);
ScanPattern load_csv(const std::string& path);

} // namespace ptycho::scan
