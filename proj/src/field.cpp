#include "ptycho/field.hpp"

#include <algorithm>
#include <cmath>

namespace ptycho::field {

double mitchell_kernel(double x) {
    constexpr double B = 1.0 / 3.0;
    constexpr double C = 1.0 / 3.0;
    x = std::fabs(x);
    if (x < 1.0) {
        return ((12.0 - 9.0 * B - 6.0 * C) * x * x * x +
                (-18.0 + 12.0 * B + 6.0 * C) * x * x + (6.0 - 2.0 * B)) /
               6.0;
    }
    if (x < 2.0) {
        return ((-B - 6.0 * C) * x * x * x + (6.0 * B + 30.0 * C) * x * x +
                (-12.0 * B - 48.0 * C) * x + (8.0 * B + 24.0 * C)) /
               6.0;
    }
    return 0.0;
}

ResamplePlan make_resample_plan(int in_size, int out_size) {
    if (in_size < 1 || out_size < 1) throw ConfigError("resize: sizes must be >= 1");
    ResamplePlan plan;
    plan.in_size = in_size;
    plan.out_size = out_size;
    plan.first.resize(out_size);
    plan.count.resize(out_size);
    plan.offset.resize(out_size);

    // When minifying, widen the kernel by the scale factor to anti-alias.
    const double scale = static_cast<double>(in_size) / out_size;
    const double filter_scale = std::max(scale, 1.0);
    const double support = 2.0 * filter_scale;

    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) * scale - 0.5;
        int lo = static_cast<int>(std::ceil(center - support));
        int hi = static_cast<int>(std::floor(center + support));
        // clamp-to-edge: taps outside the image collapse onto edge samples
        lo = std::max(lo, 0);
        hi = std::min(hi, in_size - 1);
        if (lo > hi) {
            lo = std::clamp(static_cast<int>(std::lround(center)), 0, in_size - 1);
            hi = lo;
        }
        plan.first[o] = lo;
        plan.count[o] = hi - lo + 1;
        plan.offset[o] = plan.weights.size();
        double sum = 0.0;
        for (int i = lo; i <= hi; ++i) {
            const double w = mitchell_kernel((i - center) / filter_scale);
            plan.weights.push_back(w);
            sum += w;
        }
        if (sum == 0.0) {
            // degenerate window; fall back to nearest sample
            const std::size_t base = plan.offset[o];
            for (int i = 0; i < plan.count[o]; ++i) plan.weights[base + i] = 0.0;
            const int nearest = std::clamp(static_cast<int>(std::lround(center)), lo, hi);
            plan.weights[base + (nearest - lo)] = 1.0;
        } else {
            const std::size_t base = plan.offset[o];
            for (int i = 0; i < plan.count[o]; ++i) plan.weights[base + i] /= sum;
        }
    }
    return plan;
}

namespace {

// Apply a 1D plan along x for every row: out[y][o] = sum_i w * in[y][i].
void apply_rows(const ResamplePlan& plan, const double* in, int in_w, int rows, double* out) {
    for (int y = 0; y < rows; ++y) {
        const double* src = in + static_cast<std::size_t>(y) * in_w;
        double* dst = out + static_cast<std::size_t>(y) * plan.out_size;
        for (int o = 0; o < plan.out_size; ++o) {
            const double* w = plan.weights.data() + plan.offset[o];
            const double* s = src + plan.first[o];
            double acc = 0.0;
            for (int i = 0; i < plan.count[o]; ++i) acc += w[i] * s[i];
            dst[o] = acc;
        }
    }
}

// Transpose application along x: out[y][i] += w * in[y][o].
void apply_rows_adjoint(const ResamplePlan& plan, const double* in, int rows, double* out) {
    for (int y = 0; y < rows; ++y) {
        const double* src = in + static_cast<std::size_t>(y) * plan.out_size;
        double* dst = out + static_cast<std::size_t>(y) * plan.in_size;
        for (int o = 0; o < plan.out_size; ++o) {
            const double* w = plan.weights.data() + plan.offset[o];
            double* d = dst + plan.first[o];
            const double v = src[o];
            for (int i = 0; i < plan.count[o]; ++i) d[i] += w[i] * v;
        }
    }
}

std::vector<double> transpose(const double* in, int w, int h) {
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out[static_cast<std::size_t>(x) * h + y] = in[static_cast<std::size_t>(y) * w + x];
    return out;
}

} // namespace

RealImage resize(const RealImage& img, int out_w, int out_h) {
    if (img.width < 1 || img.height < 1) throw ConfigError("resize: empty input");
    if (out_w < 1 || out_h < 1) throw ConfigError("resize: output sizes must be >= 1");
    if (out_w == img.width && out_h == img.height) return img; // identity geometry
    const ResamplePlan px = make_resample_plan(img.width, out_w);
    const ResamplePlan py = make_resample_plan(img.height, out_h);

    // rows (x axis), then transpose and run the y-axis plan as rows
    std::vector<double> tmp(static_cast<std::size_t>(out_w) * img.height);
    apply_rows(px, img.v.data(), img.width, img.height, tmp.data());
    std::vector<double> tmp_t = transpose(tmp.data(), out_w, img.height);
    std::vector<double> out_t(static_cast<std::size_t>(out_h) * out_w);
    apply_rows(py, tmp_t.data(), img.height, out_w, out_t.data());

    RealImage out(out_w, out_h);
    out.v = transpose(out_t.data(), out_h, out_w);
    return out;
}

RealImage resize_adjoint(const RealImage& grad_out, int in_w, int in_h) {
    if (in_w < 1 || in_h < 1) throw ConfigError("resize_adjoint: input sizes must be >= 1");
    if (in_w == grad_out.width && in_h == grad_out.height) return grad_out; // identity geometry
    const ResamplePlan px = make_resample_plan(in_w, grad_out.width);
    const ResamplePlan py = make_resample_plan(in_h, grad_out.height);

    // adjoint of (rows-x, then rows-y on transposed): run transposes in reverse
    std::vector<double> g_t = transpose(grad_out.v.data(), grad_out.width, grad_out.height);
    std::vector<double> tmp_t(static_cast<std::size_t>(in_h) * grad_out.width, 0.0);
    apply_rows_adjoint(py, g_t.data(), grad_out.width, tmp_t.data());
    std::vector<double> tmp = transpose(tmp_t.data(), in_h, grad_out.width);
    RealImage out(in_w, in_h, 0.0);
    apply_rows_adjoint(px, tmp.data(), in_h, out.v.data());
    return out;
}

namespace {

void check_embed_bounds(const ComplexField& canvas, int pw, int ph, int off_x, int off_y) {
    if (off_x < 0 || off_y < 0 || off_x + pw > canvas.grid.nx || off_y + ph > canvas.grid.ny)
        throw DataError("embed_patch: offset places patch out of bounds");
}

} // namespace

ComplexField embed_patch(const ComplexField& canvas, const ComplexField& patch,
                         int off_x, int off_y, bool multiply) {
    check_embed_bounds(canvas, patch.grid.nx, patch.grid.ny, off_x, off_y);
    ComplexField out = canvas;
    for (int y = 0; y < patch.grid.ny; ++y)
        for (int x = 0; x < patch.grid.nx; ++x) {
            cplx& dst = out.at(off_x + x, off_y + y);
            dst = multiply ? dst * patch.at(x, y) : patch.at(x, y);
        }
    return out;
}

ComplexField embed_patch(const ComplexField& canvas, const RealImage& patch,
                         int off_x, int off_y, bool multiply) {
    check_embed_bounds(canvas, patch.width, patch.height, off_x, off_y);
    ComplexField out = canvas;
    for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x) {
            cplx& dst = out.at(off_x + x, off_y + y);
            dst = multiply ? dst * patch.at(x, y) : cplx(patch.at(x, y), 0.0);
        }
    return out;
}

ComplexField extract_patch(const ComplexField& canvas, int off_x, int off_y, int w, int h) {
    check_embed_bounds(canvas, w, h, off_x, off_y);
    ComplexField out(Grid(w, h, canvas.grid.pitch, canvas.grid.wavelength));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(x, y) = canvas.at(off_x + x, off_y + y);
    return out;
}

} // namespace ptycho::field
