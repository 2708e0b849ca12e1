#pragma once

#include "ptycho/core.hpp"
#include "ptycho/neural.hpp"
#include "ptycho/recon.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ptycho::analysis {

/// PSNR = -10 log10(MSE) for unit peak value; capped at 120 dB below
/// MSE = 1e-12.
double psnr(const RealImage& a, const RealImage& b);

struct PcaResult {
    nn::Vec v1, v2;
    nn::Vec singular_values;  // full descending spectrum of the covariance
    bool degenerate = false;  // sigma_2 ~ 0
    bool ambiguous = false;   // sigma_1 ~ sigma_2 (directions ill-determined)
    double captured_fraction() const {
        const double t = singular_values.sum();
        return t > 0.0 ? (singular_values[0] + singular_values[1]) / t : 0.0;
    }
};

/// Two leading principal directions of the latent covariance with a
/// deterministic sign convention (largest-magnitude component positive).
PcaResult pca_leading(const nn::Mat& latents);

struct LandscapeGrid {
    std::vector<double> alphas, betas;
    std::vector<double> losses;  // row-major over (alpha index, beta index)
    nn::Vec v1, v2;
    nn::Vec h_opt;

    double at(std::size_t ia, std::size_t ib) const { return losses[ia * betas.size() + ib]; }
};

/// Total stack loss at h_opt + alpha*v1 + beta*v2 for every grid node
/// (no optimization steps; same loss code path as reconstruction).
LandscapeGrid landscape(const recon::Pipeline& pipe, const sim::DiffractionStack& stack,
                        const nn::Vec& h_opt, const nn::Vec& v1, const nn::Vec& v2, int grid_n,
                        double range_abs, recon::LossKind kind);

void save_landscape_csv(const std::string& path, const LandscapeGrid& grid);
void save_landscape_ptyb(const std::string& path, const LandscapeGrid& grid);

/// Fraction of cells within 1% of the (max - min) range of the maximum.
double plateau_fraction(const LandscapeGrid& grid);

/// decode((1-t) h_a + t h_b) for steps uniformly spaced t in [0, 1].
std::vector<RealImage> interpolate_latents(const nn::Autoencoder& ae, const nn::Vec& h_a,
                                           const nn::Vec& h_b, int steps);

/// Draws from N(mean, cov) of the reference latents (eigendecomposition
/// sampling; negative eigenvalues clipped to zero); rows are samples.
nn::Mat draw_gaussian_latents(const nn::Mat& latents_ref, int count, std::uint64_t seed);

/// Decode Gaussian draws from the reference latent distribution.
std::vector<RealImage> sample_latents(const nn::Autoencoder& ae, const nn::Mat& latents_ref,
                                      int count, std::uint64_t seed);

/// Horizontal strip sheet of equally sized tiles with a 2-pixel gap.
RealImage tile_strip(const std::vector<RealImage>& tiles);

} // namespace ptycho::analysis
