#include "ptycho/scan.hpp"

#include "ptycho/io.hpp"
#include "ptycho/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ptycho::scan {

ScanPattern fermat_spiral(int n, double scale) {
    if (n < 1) throw ConfigError("fermat_spiral: n must be >= 1");
    if (!(scale > 0.0)) throw ConfigError("fermat_spiral: scale must be > 0");
    constexpr double golden_angle = 137.508 * kPi / 180.0;
    ScanPattern p;
    p.positions.reserve(n);
    for (int k = 0; k < n; ++k) {
        const double r = scale * std::sqrt(static_cast<double>(k));
        const double a = golden_angle * k;
        p.positions.push_back({r * std::cos(a), r * std::sin(a)});
    }
    return p;
}

ScanPattern poisson_disk(double width, double height, double r_min, int k_attempts,
                         std::uint64_t seed) {
    if (!(r_min > 0.0)) throw ConfigError("poisson_disk: r_min must be > 0");
    if (!(width > 0.0) || !(height > 0.0)) throw ConfigError("poisson_disk: empty region");
    if (k_attempts < 1) k_attempts = 30;

    Rng rng(seed, "poisson_disk");
    const double cell = r_min / std::sqrt(2.0);
    const int gw = std::max(1, static_cast<int>(std::ceil(width / cell)));
    const int gh = std::max(1, static_cast<int>(std::ceil(height / cell)));
    std::vector<int> grid(static_cast<std::size_t>(gw) * gh, -1);

    std::vector<std::array<double, 2>> pts;
    std::vector<std::size_t> active;

    auto grid_index = [&](double x, double y) {
        int gx = std::min(gw - 1, static_cast<int>(x / cell));
        int gy = std::min(gh - 1, static_cast<int>(y / cell));
        return static_cast<std::size_t>(gy) * gw + gx;
    };
    auto fits = [&](double x, double y) {
        if (x < 0.0 || y < 0.0 || x >= width || y >= height) return false;
        const int gx = std::min(gw - 1, static_cast<int>(x / cell));
        const int gy = std::min(gh - 1, static_cast<int>(y / cell));
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) {
                const int nx = gx + dx, ny = gy + dy;
                if (nx < 0 || ny < 0 || nx >= gw || ny >= gh) continue;
                const int id = grid[static_cast<std::size_t>(ny) * gw + nx];
                if (id < 0) continue;
                const double ddx = pts[id][0] - x, ddy = pts[id][1] - y;
                if (ddx * ddx + ddy * ddy < r_min * r_min) return false;
            }
        return true;
    };
    auto insert = [&](double x, double y) {
        pts.push_back({x, y});
        active.push_back(pts.size() - 1);
        grid[grid_index(x, y)] = static_cast<int>(pts.size() - 1);
    };

    insert(width / 2.0, height / 2.0); // deterministic first sample

    while (!active.empty()) {
        const std::size_t pick = rng.uniform_int(active.size());
        const auto base = pts[active[pick]];
        bool found = false;
        for (int a = 0; a < k_attempts; ++a) {
            const double rad = r_min * (1.0 + rng.uniform());
            const double ang = rng.uniform(0.0, 2.0 * kPi);
            const double x = base[0] + rad * std::cos(ang);
            const double y = base[1] + rad * std::sin(ang);
            if (fits(x, y)) {
                insert(x, y);
                found = true;
                break;
            }
        }
        if (!found) {
            active[pick] = active.back();
            active.pop_back();
        }
    }

    ScanPattern p;
    p.positions.reserve(pts.size());
    for (const auto& q : pts) p.positions.push_back({q[0] - width / 2.0, q[1] - height / 2.0});
    return p;
}

double overlap_fraction(double d, double d_probe) {
    if (d < 0.0) throw ConfigError("overlap_fraction: distance must be >= 0");
    if (!(d_probe > 0.0)) throw ConfigError("overlap_fraction: probe diameter must be > 0");
    if (d >= d_probe) return 0.0;
    const double u = d / d_probe;
    return (2.0 * std::acos(u) - 2.0 * u * std::sqrt(1.0 - u * u)) / kPi;
}

double min_pair_distance(const ScanPattern& p) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.positions.size(); ++i)
        for (std::size_t j = i + 1; j < p.positions.size(); ++j) {
            const double dx = p.positions[i][0] - p.positions[j][0];
            const double dy = p.positions[i][1] - p.positions[j][1];
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
        }
    return best;
}

namespace {

double solve_overlap_distance(double target_overlap, double probe_diameter) {
    if (!(target_overlap > 0.0) || !(target_overlap < 1.0))
        throw ConfigError("overlap target must be in (0, 1)");
    double lo = 0.0, hi = probe_diameter;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (overlap_fraction(mid, probe_diameter) > target_overlap)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

double solve_fermat_scale(int n, double target_overlap, double probe_diameter) {
    const double d_target = solve_overlap_distance(target_overlap, probe_diameter);
    if (n < 2) return d_target;
    // nearest-neighbor distance scales linearly with c; bisect anyway for clarity
    double lo = d_target * 1e-3, hi = d_target * 1e3;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (min_pair_distance(fermat_spiral(n, mid)) < d_target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

double solve_poisson_rmin(double target_overlap, double probe_diameter) {
    return solve_overlap_distance(target_overlap, probe_diameter);
}

ScanPattern poisson_disk_exact(int n, double r_min, int k_attempts, std::uint64_t seed) {
    if (n < 1) throw ConfigError("poisson_disk_exact: n must be >= 1");
    double side = r_min * (std::sqrt(static_cast<double>(n)) + 1.0);
    for (int attempt = 0; attempt < 64; ++attempt) {
        ScanPattern raw = poisson_disk(side, side, r_min, k_attempts, seed);
        if (static_cast<int>(raw.count()) >= n) {
            // keep the n most central points, deterministic tie-break by index
            std::vector<std::size_t> order(raw.count());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const auto& pa = raw.positions[a];
                const auto& pb = raw.positions[b];
                return pa[0] * pa[0] + pa[1] * pa[1] < pb[0] * pb[0] + pb[1] * pb[1];
            });
            ScanPattern out;
            double mx = 0.0, my = 0.0;
            for (int i = 0; i < n; ++i) {
                out.positions.push_back(raw.positions[order[i]]);
                mx += out.positions.back()[0];
                my += out.positions.back()[1];
            }
            mx /= n;
            my /= n;
            for (auto& q : out.positions) {
                q[0] -= mx;
                q[1] -= my;
            }
            return out;
        }
        side *= 1.15;
    }
    throw DataError("poisson_disk_exact: could not reach requested count");
}

void save_csv(const std::string& path, const ScanPattern& p) {
    io::CsvWriter csv(path, "index,x_m,y_m");
    for (std::size_t i = 0; i < p.positions.size(); ++i)
        csv.row({std::to_string(i), io::format_double(p.positions[i][0]),
                 io::format_double(p.positions[i][1])});
}

ScanPattern load_csv(const std::string& path) {
    ScanPattern p;
    for (const auto& row : io::read_csv(path)) {
        if (row.size() != 3) throw DataError("scan csv: expected 3 columns: " + path);
        p.positions.push_back({io::parse_double(row[1], "x_m"), io::parse_double(row[2], "y_m")});
    }
    if (p.positions.empty()) throw DataError("scan csv: empty pattern: " + path);
    return p;
}

} // namespace ptycho::scan
