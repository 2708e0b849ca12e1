#pragma once

#include "ptycho/core.hpp"
#include "ptycho/optics.hpp"
#include "ptycho/scan.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ptycho::sim {

/// Measured (or simulated) diffraction intensities plus per-pixel readout
/// variance. positions_px are integer displacements of the detector window
/// center relative to the object canvas center (snapped scan positions).
struct DiffractionStack {
    Grid grid;
    double z = 0.0;
    std::vector<RealImage> frames;            // J frames, each nx x ny
    RealImage noise_var;                      // nx x ny, photons^2
    std::vector<std::array<int, 2>> positions_px;

    std::size_t count() const { return frames.size(); }
    void validate() const;
};

/// Snap metric scan positions to integer pixel displacements.
std::vector<std::array<int, 2>> snap_positions(const scan::ScanPattern& pattern, double pitch);

/// Canvas size needed so every window offset stays in bounds.
int canvas_extent(int window, const std::vector<std::array<int, 2>>& positions_px, int axis);

/// Window top-left offset in the canvas for frame j.
std::array<int, 2> window_offset(const Grid& window, int canvas_nx, int canvas_ny,
                                 const std::array<int, 2>& pos_px);

/// Noiseless forward pass: frame j = |propagate(probe * canvas_patch_j)|^2.
/// The object canvas must cover every scanned window.
DiffractionStack expected_stack(const ComplexField& object_canvas, const ComplexField& probe,
                                const std::vector<std::array<int, 2>>& positions_px,
                                const optics::PropagationPlan& plan);

/// Poisson shot noise plus Gaussian readout noise per pixel; noise_var is set
/// to sigma_readout^2 everywhere. Negative draws are kept unless clip_negative.
DiffractionStack apply_noise(const DiffractionStack& stack, double sigma_readout,
                             std::uint64_t seed, bool clip_negative = false);

/// Rescale so that sum |P|^2 equals the requested photon total.
ComplexField scale_to_photons(const ComplexField& probe, double total);

/// Per-pixel sample variance over a stack of dark frames.
RealImage darkframes_to_var(const std::vector<RealImage>& dark_frames);

/// Stack bundle on disk: frames.ptyb, noise_var.ptyb, positions.csv, meta.txt.
void save_bundle(const std::string& dir, const DiffractionStack& stack, std::uint64_t seed);
DiffractionStack load_bundle(const std::string& dir);

} // namespace ptycho::sim
