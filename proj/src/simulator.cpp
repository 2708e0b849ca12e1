#include "ptycho/simulator.hpp"

#include "ptycho/io.hpp"
#include "ptycho/ptyb.hpp"
#include "ptycho/rng.hpp"

#include <cmath>
#include <limits>

namespace ptycho::sim {

void DiffractionStack::validate() const {
    if (frames.empty()) throw DataError("DiffractionStack: no frames");
    if (frames.size() != positions_px.size())
        throw DataError("DiffractionStack: frames/positions count mismatch");
    for (const auto& f : frames)
        if (f.width != grid.nx || f.height != grid.ny)
            throw DataError("DiffractionStack: frame shape mismatch");
    if (noise_var.width != grid.nx || noise_var.height != grid.ny)
        throw DataError("DiffractionStack: noise_var shape mismatch");
    for (double v : noise_var.v)
        if (!(v >= 0.0)) throw DataError("DiffractionStack: negative noise variance");
}

std::vector<std::array<int, 2>> snap_positions(const scan::ScanPattern& pattern, double pitch) {
    if (!(pitch > 0.0)) throw ConfigError("snap_positions: pitch must be > 0");
    std::vector<std::array<int, 2>> out;
    out.reserve(pattern.count());
    for (const auto& p : pattern.positions)
        out.push_back({static_cast<int>(std::lround(p[0] / pitch)),
                       static_cast<int>(std::lround(p[1] / pitch))});
    return out;
}

int canvas_extent(int window, const std::vector<std::array<int, 2>>& positions_px, int axis) {
    int m = 0;
    for (const auto& p : positions_px) m = std::max(m, std::abs(p[axis]));
    return window + 2 * m;
}

std::array<int, 2> window_offset(const Grid& window, int canvas_nx, int canvas_ny,
                                 const std::array<int, 2>& pos_px) {
    const int ox = (canvas_nx - window.nx) / 2 + pos_px[0];
    const int oy = (canvas_ny - window.ny) / 2 + pos_px[1];
    if (ox < 0 || oy < 0 || ox + window.nx > canvas_nx || oy + window.ny > canvas_ny)
        throw DataError("scan position out of object canvas bounds");
    return {ox, oy};
}

DiffractionStack expected_stack(const ComplexField& object_canvas, const ComplexField& probe,
                                const std::vector<std::array<int, 2>>& positions_px,
                                const optics::PropagationPlan& plan) {
    if (!(probe.grid == plan.grid)) throw DataError("expected_stack: probe/plan grid mismatch");
    if (positions_px.empty()) throw DataError("expected_stack: no scan positions");
    DiffractionStack stack;
    stack.grid = probe.grid;
    stack.z = plan.z;
    stack.positions_px = positions_px;
    stack.noise_var = RealImage(probe.grid.nx, probe.grid.ny, 0.0);
    stack.frames.reserve(positions_px.size());
    for (const auto& pos : positions_px) {
        const auto off = window_offset(probe.grid, object_canvas.grid.nx, object_canvas.grid.ny, pos);
        const ComplexField psi = optics::exit_wave(probe, object_canvas, off[0], off[1]);
        stack.frames.push_back(optics::intensity(optics::propagate(psi, plan)));
    }
    return stack;
}

DiffractionStack apply_noise(const DiffractionStack& stack, double sigma_readout,
                             std::uint64_t seed, bool clip_negative) {
    if (sigma_readout < 0.0) throw ConfigError("apply_noise: sigma must be >= 0");
    stack.validate();
    DiffractionStack out = stack;
    out.noise_var = RealImage(stack.grid.nx, stack.grid.ny, sigma_readout * sigma_readout);
    for (std::size_t j = 0; j < stack.frames.size(); ++j) {
        Rng rng(seed, "noise", j); // per-frame stream: parallel == serial
        RealImage& f = out.frames[j];
        for (double& x : f.v) {
            double v = static_cast<double>(rng.poisson(x));
            if (sigma_readout > 0.0) v += rng.normal(0.0, sigma_readout);
            if (clip_negative && v < 0.0) v = 0.0;
            x = v;
        }
    }
    return out;
}

ComplexField scale_to_photons(const ComplexField& probe, double total) {
    if (!(total > 0.0)) throw ConfigError("scale_to_photons: total must be > 0");
    const double power = probe.power();
    if (!(power > 0.0)) throw DataError("scale_to_photons: zero probe");
    // already normalized (to rounding of the power sum): keep bit-exact
    if (std::fabs(power - total) <= 1e-12 * total) return probe;
    ComplexField out = probe;
    const double s = std::sqrt(total / power);
    for (cplx& z : out.v) z *= s;
    return out;
}

RealImage darkframes_to_var(const std::vector<RealImage>& dark_frames) {
    if (dark_frames.size() < 2) throw DataError("darkframes_to_var: need at least 2 frames");
    const int w = dark_frames[0].width, h = dark_frames[0].height;
    for (const auto& f : dark_frames)
        if (f.width != w || f.height != h) throw DataError("darkframes_to_var: shape mismatch");
    const double n = static_cast<double>(dark_frames.size());
    RealImage mean(w, h, 0.0), var(w, h, 0.0);
    for (const auto& f : dark_frames)
        for (std::size_t i = 0; i < f.size(); ++i) mean.v[i] += f.v[i];
    for (double& m : mean.v) m /= n;
    for (const auto& f : dark_frames)
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double d = f.v[i] - mean.v[i];
            var.v[i] += d * d;
        }
    for (double& v : var.v) v /= (n - 1.0);
    return var;
}

void save_bundle(const std::string& dir, const DiffractionStack& stack, std::uint64_t seed) {
    stack.validate();
    io::ensure_dir(dir);
    const std::uint64_t J = stack.count();
    const std::uint64_t ny = stack.grid.ny, nx = stack.grid.nx;
    std::vector<double> flat;
    flat.reserve(J * ny * nx);
    for (const auto& f : stack.frames) flat.insert(flat.end(), f.v.begin(), f.v.end());
    ptyb::save_f64(dir + "/frames.ptyb", flat, {J, ny, nx});
    ptyb::save_f64(dir + "/noise_var.ptyb", stack.noise_var.v, {ny, nx});
    {
        io::CsvWriter csv(dir + "/positions.csv", "index,px,py");
        for (std::size_t j = 0; j < stack.positions_px.size(); ++j)
            csv.row({std::to_string(j), std::to_string(stack.positions_px[j][0]),
                     std::to_string(stack.positions_px[j][1])});
    }
    io::KeyValues meta;
    meta["wavelength_m"] = io::format_double(stack.grid.wavelength);
    meta["pitch_m"] = io::format_double(stack.grid.pitch);
    meta["z_m"] = io::format_double(stack.z);
    meta["nx"] = std::to_string(stack.grid.nx);
    meta["ny"] = std::to_string(stack.grid.ny);
    meta["seed"] = std::to_string(seed);
    io::write_kv(dir + "/meta.txt", meta);
}

DiffractionStack load_bundle(const std::string& dir) {
    const auto meta = io::read_kv(dir + "/meta.txt");
    auto need = [&](const char* key) {
        auto it = meta.find(key);
        if (it == meta.end()) throw DataError("bundle meta missing key: " + std::string(key));
        return it->second;
    };
    DiffractionStack stack;
    stack.grid = Grid(static_cast<int>(io::parse_long(need("nx"), "nx")),
                      static_cast<int>(io::parse_long(need("ny"), "ny")),
                      io::parse_double(need("pitch_m"), "pitch_m"),
                      io::parse_double(need("wavelength_m"), "wavelength_m"));
    stack.z = io::parse_double(need("z_m"), "z_m");

    const auto frames = ptyb::load(dir + "/frames.ptyb");
    if (frames.dtype != ptyb::DType::f64 || frames.shape.size() != 3)
        throw DataError("bundle frames.ptyb must be 3D f64");
    const std::uint64_t J = frames.shape[0];
    if (frames.shape[1] != static_cast<std::uint64_t>(stack.grid.ny) ||
        frames.shape[2] != static_cast<std::uint64_t>(stack.grid.nx))
        throw DataError("bundle frames shape does not match meta");
    const std::size_t per = stack.grid.size();
    stack.frames.reserve(J);
    for (std::uint64_t j = 0; j < J; ++j) {
        RealImage f(stack.grid.nx, stack.grid.ny);
        std::copy_n(frames.f64.begin() + static_cast<std::ptrdiff_t>(j * per), per, f.v.begin());
        stack.frames.push_back(std::move(f));
    }

    const auto nv = ptyb::load(dir + "/noise_var.ptyb");
    if (nv.dtype != ptyb::DType::f64 || nv.shape.size() != 2)
        throw DataError("bundle noise_var.ptyb must be 2D f64");
    stack.noise_var = RealImage(stack.grid.nx, stack.grid.ny);
    stack.noise_var.v = nv.f64;

    for (const auto& row : io::read_csv(dir + "/positions.csv")) {
        if (row.size() != 3) throw DataError("bundle positions.csv: expected 3 columns");
        stack.positions_px.push_back({static_cast<int>(io::parse_long(row[1], "px")),
                                      static_cast<int>(io::parse_long(row[2], "py"))});
    }
    stack.validate();
    return stack;
}

} // namespace ptycho::sim
