#include "ptycho/optics.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>

namespace ptycho::optics {

namespace {

// FFTW plan cache keyed by (ny, nx, direction). Plans are created once with
// FFTW_ESTIMATE | FFTW_UNALIGNED so they can execute on any buffer and give
// run-to-run identical results.
class FftCache {
public:
    static FftCache& instance() {
        static FftCache c;
        return c;
    }

    void execute(ComplexField& f, int sign) {
        fftw_plan plan = get(f.grid.ny, f.grid.nx, sign);
        auto* data = reinterpret_cast<fftw_complex*>(f.v.data());
        fftw_execute_dft(plan, data, data);
    }

private:
    fftw_plan get(int ny, int nx, int sign) {
        const std::lock_guard<std::mutex> lock(mu_);
        const auto key = std::make_tuple(ny, nx, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<cplx> scratch(static_cast<std::size_t>(nx) * ny);
        auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan plan = fftw_plan_dft_2d(ny, nx, p, p, sign,
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_[key] = plan;
        return plan;
    }

    std::mutex mu_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline double fft_freq(int i, int n, double step) {
    // standard FFT ordering: 0..n/2-1 positive, then negative
    const int k = (i <= (n - 1) / 2) ? i : i - n;
    return k * step;
}

} // namespace

void fft2(ComplexField& f) { FftCache::instance().execute(f, FFTW_FORWARD); }

void ifft2(ComplexField& f) {
    FftCache::instance().execute(f, FFTW_BACKWARD);
    const double inv = 1.0 / static_cast<double>(f.grid.size());
    for (cplx& z : f.v) z *= inv;
}

PropagationPlan make_plan(const Grid& grid, double z) {
    grid.validate();
    PropagationPlan plan;
    plan.grid = grid;
    plan.z = z;
    plan.transfer.assign(grid.size(), cplx(0.0, 0.0));
    plan.band_mask.assign(grid.size(), 0);

    const double lambda = grid.wavelength;
    const double inv_lambda2 = 1.0 / (lambda * lambda);
    const double dfx = grid.freq_step_x();
    const double dfy = grid.freq_step_y();
    // per-axis band limit of the band-limited angular spectrum method
    const double fx_lim = 1.0 / (lambda * std::sqrt(4.0 * dfx * dfx * z * z + 1.0));
    const double fy_lim = 1.0 / (lambda * std::sqrt(4.0 * dfy * dfy * z * z + 1.0));

    for (int iy = 0; iy < grid.ny; ++iy) {
        const double fy = fft_freq(iy, grid.ny, dfy);
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double fx = fft_freq(ix, grid.nx, dfx);
            const double arg = inv_lambda2 - fx * fx - fy * fy;
            if (arg < 0.0) continue;                               // evanescent
            if (std::fabs(fx) > fx_lim || std::fabs(fy) > fy_lim) continue;
            const double phase = 2.0 * kPi * z * std::sqrt(arg);
            const std::size_t idx = static_cast<std::size_t>(iy) * grid.nx + ix;
            plan.transfer[idx] = cplx(std::cos(phase), std::sin(phase));
            plan.band_mask[idx] = 1;
        }
    }
    return plan;
}

namespace {

ComplexField apply_transfer(const ComplexField& field, const PropagationPlan& plan, bool conj) {
    if (!(field.grid == plan.grid)) throw DataError("propagate: grid mismatch");
    ComplexField out = field;
    fft2(out);
    if (conj) {
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= std::conj(plan.transfer[i]);
    } else {
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= plan.transfer[i];
    }
    ifft2(out);
    return out;
}

} // namespace

ComplexField propagate(const ComplexField& field, const PropagationPlan& plan) {
    return apply_transfer(field, plan, false);
}

ComplexField propagate_adjoint(const ComplexField& field, const PropagationPlan& plan) {
    return apply_transfer(field, plan, true);
}

ComplexField exit_wave(const ComplexField& probe, const ComplexField& object,
                       int off_x, int off_y) {
    const int pw = probe.grid.nx, ph = probe.grid.ny;
    if (off_x < 0 || off_y < 0 || off_x + pw > object.grid.nx || off_y + ph > object.grid.ny)
        throw DataError("exit_wave: object patch out of bounds");
    ComplexField out = probe;
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) out.at(x, y) *= object.at(off_x + x, off_y + y);
    return out;
}

RealImage intensity(const ComplexField& field) {
    RealImage img(field.grid.nx, field.grid.ny);
    for (std::size_t i = 0; i < field.v.size(); ++i) img.v[i] = std::norm(field.v[i]);
    return img;
}

ComplexField synthesize_probe(const Grid& grid, double diameter, double edge_width,
                              double total_photons) {
    grid.validate();
    if (!(total_photons > 0.0)) throw ConfigError("synthesize_probe: total_photons must be > 0");
    const double max_extent = std::min(grid.nx, grid.ny) * grid.pitch;
    if (diameter > max_extent) throw ConfigError("synthesize_probe: diameter exceeds grid");

    ComplexField p(grid);
    const double cx = (grid.nx - 1) / 2.0;
    const double cy = (grid.ny - 1) / 2.0;
    const double r0 = diameter / 2.0;
    double power = 0.0;
    for (int y = 0; y < grid.ny; ++y) {
        for (int x = 0; x < grid.nx; ++x) {
            const double dx = (x - cx) * grid.pitch;
            const double dy = (y - cy) * grid.pitch;
            const double r = std::sqrt(dx * dx + dy * dy);
            double a = 0.0;
            if (r <= r0) {
                a = 1.0;
            } else if (edge_width > 0.0 && r < r0 + edge_width) {
                a = 0.5 * (1.0 + std::cos(kPi * (r - r0) / edge_width));
            }
            p.at(x, y) = cplx(a, 0.0);
            power += a * a;
        }
    }
    if (power <= 0.0) throw ConfigError("synthesize_probe: empty probe");
    const double scale = std::sqrt(total_photons / power);
    for (cplx& z : p.v) z *= scale;
    return p;
}

} // namespace ptycho::optics
