#pragma once

#include "ptycho/core.hpp"

#include <vector>

namespace ptycho::optics {

/// In-place 2D FFT helpers (forward unnormalized, inverse scaled by 1/N).
void fft2(ComplexField& f);
void ifft2(ComplexField& f);

// Precomputed band-limited angular spectrum transfer function for one
// grid/distance pair. |transfer| = 1 on the band mask and 0 elsewhere;
// the plan for -z is the complex conjugate of the plan for +z.
struct PropagationPlan {
    Grid grid;
    double z = 0.0;
    std::vector<cplx> transfer;   // frequency-ordered like the FFT output
    std::vector<std::uint8_t> band_mask;
};

/// Band-limited angular spectrum transfer function (evanescent components
/// zeroed; per-axis frequency limit 1/(lambda*sqrt((2*df*z)^2+1))).
PropagationPlan make_plan(const Grid& grid, double z);

/// inverse-FFT( FFT(field) * transfer ); grids must match.
ComplexField propagate(const ComplexField& field, const PropagationPlan& plan);

/// Adjoint of propagate under the real inner product on interleaved
/// components: propagation with the conjugated transfer function.
ComplexField propagate_adjoint(const ComplexField& field, const PropagationPlan& plan);

/// Exit wave psi = probe * object patch at the given offset into the object
/// canvas; result lives on the probe grid.
ComplexField exit_wave(const ComplexField& probe, const ComplexField& object,
                       int off_x, int off_y);

/// I = |psi|^2 per pixel (photons/pixel at the detector plane).
RealImage intensity(const ComplexField& field);

/// Centered circular top-hat with a raised-cosine edge, uniform zero phase,
/// scaled so that sum |P|^2 = total_photons.
ComplexField synthesize_probe(const Grid& grid, double diameter, double edge_width,
                              double total_photons);

} // namespace ptycho::optics
