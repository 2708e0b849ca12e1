#pragma once

#include "ptycho/core.hpp"

#include <vector>

namespace ptycho::field {

/// Mitchell-Netravali cubic kernel with B = C = 1/3; zero for |x| >= 2.
double mitchell_kernel(double x);

// Precomputed 1D resampling weights for one axis. Each output sample owns a
// short run of source taps; weights are renormalized to sum to 1 so constants
// are preserved (clamp-to-edge at boundaries).
struct ResamplePlan {
    int in_size = 0;
    int out_size = 0;
    std::vector<int> first;            // first source index per output sample
    std::vector<int> count;            // taps per output sample
    std::vector<double> weights;       // concatenated tap weights
    std::vector<std::size_t> offset;   // start of each output sample's weights
};

ResamplePlan make_resample_plan(int in_size, int out_size);

/// Separable Mitchell-Netravali resize to out_w x out_h.
RealImage resize(const RealImage& img, int out_w, int out_h);

/// Transpose of the resize map for the given input geometry:
/// returns R^T grad_out where R is the matrix of resize(in_w x in_h -> grad_out size).
RealImage resize_adjoint(const RealImage& grad_out, int in_w, int in_h);

/// Copy of canvas with patch written (multiply=false) or multiplied in
/// (multiply=true) at the integer pixel offset; offset must keep the patch
/// inside the canvas.
ComplexField embed_patch(const ComplexField& canvas, const ComplexField& patch,
                         int off_x, int off_y, bool multiply = false);
ComplexField embed_patch(const ComplexField& canvas, const RealImage& patch,
                         int off_x, int off_y, bool multiply = false);

/// Extract a w x h sub-field at the given offset.
ComplexField extract_patch(const ComplexField& canvas, int off_x, int off_y, int w, int h);

} // namespace ptycho::field
