#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptycho {

using cplx = std::complex<double>;

/// Thrown on malformed or inconsistent input data (files, shapes, geometry).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown on invalid configuration or argument values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown when an optimization produces a non-finite loss.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Uniform sampling grid with square pixels and an illumination wavelength.
struct Grid {
    int nx = 0;              // columns (x)
    int ny = 0;              // rows (y)
    double pitch = 0.0;      // meters per pixel
    double wavelength = 0.0; // meters

    Grid() = default;
    Grid(int nx_, int ny_, double pitch_, double wavelength_)
        : nx(nx_), ny(ny_), pitch(pitch_), wavelength(wavelength_) {
        validate();
    }

    void validate() const {
        if (nx < 2 || ny < 2) throw ConfigError("Grid: nx and ny must be >= 2");
        if (!(pitch > 0.0)) throw ConfigError("Grid: pitch must be positive");
        if (!(wavelength > 0.0)) throw ConfigError("Grid: wavelength must be positive");
    }

    double freq_step_x() const { return 1.0 / (nx * pitch); }
    double freq_step_y() const { return 1.0 / (ny * pitch); }
    std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
    bool operator==(const Grid& o) const = default;
};

/// Real-valued image, row-major, v[y*width + x].
struct RealImage {
    int width = 0;
    int height = 0;
    std::vector<double> v;

    RealImage() = default;
    RealImage(int w, int h, double fill = 0.0)
        : width(w), height(h), v(static_cast<std::size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw ConfigError("RealImage: empty dimensions");
    }

    double& at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return v.size(); }

    bool same_shape(const RealImage& o) const { return width == o.width && height == o.height; }

    void assert_finite(const char* what = "RealImage") const {
        for (double x : v)
            if (!std::isfinite(x)) throw DataError(std::string(what) + ": non-finite value");
    }
};

/// Complex field sampled on a Grid, row-major, v[y*nx + x].
struct ComplexField {
    Grid grid;
    std::vector<cplx> v;

    ComplexField() = default;
    explicit ComplexField(const Grid& g, cplx fill = {0.0, 0.0})
        : grid(g), v(g.size(), fill) {}

    cplx& at(int x, int y) { return v[static_cast<std::size_t>(y) * grid.nx + x]; }
    cplx at(int x, int y) const { return v[static_cast<std::size_t>(y) * grid.nx + x]; }

    double power() const {
        double s = 0.0;
        for (const cplx& z : v) s += std::norm(z);
        return s;
    }

    void assert_finite(const char* what = "ComplexField") const {
        for (const cplx& z : v)
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
                throw DataError(std::string(what) + ": non-finite value");
    }
};

constexpr double kPi = 3.14159265358979323846;

} // namespace ptycho
