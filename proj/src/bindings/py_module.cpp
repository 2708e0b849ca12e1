#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ptycho/analysis.hpp"
#include "ptycho/field.hpp"
#include "ptycho/neural.hpp"
#include "ptycho/optics.hpp"
#include "ptycho/recon.hpp"
#include "ptycho/scan.hpp"
#include "ptycho/simulator.hpp"

namespace py = pybind11;
using namespace ptycho;

namespace {

RealImage to_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DataError("expected a 2D float64 array");
    RealImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::copy_n(a.data(), img.size(), img.v.data());
    return img;
}

py::array_t<double> from_image(const RealImage& img) {
    py::array_t<double> a({img.height, img.width});
    std::copy_n(img.v.data(), img.size(), a.mutable_data());
    return a;
}

ComplexField to_field(const py::array_t<cplx, py::array::c_style | py::array::forcecast>& a,
                      double pitch, double wavelength) {
    if (a.ndim() != 2) throw DataError("expected a 2D complex128 array");
    ComplexField f(Grid(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), pitch,
                        wavelength));
    std::copy_n(a.data(), f.v.size(), f.v.data());
    return f;
}

py::array_t<cplx> from_field(const ComplexField& f) {
    py::array_t<cplx> a({f.grid.ny, f.grid.nx});
    std::copy_n(f.v.data(), f.v.size(), a.mutable_data());
    return a;
}

nn::Tensor4 to_batch(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() == 3) {
        nn::Tensor4 t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                      static_cast<int>(a.shape(2)), 1);
        std::copy_n(a.data(), t.size(), t.v.data());
        return t;
    }
    if (a.ndim() == 4 && a.shape(3) == 1) {
        nn::Tensor4 t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                      static_cast<int>(a.shape(2)), 1);
        std::copy_n(a.data(), t.size(), t.v.data());
        return t;
    }
    throw DataError("expected an (n, h, w) or (n, h, w, 1) float64 array");
}

py::array_t<double> from_batch(const nn::Tensor4& t) {
    py::array_t<double> a({t.n, t.h, t.w});
    std::copy_n(t.v.data(), t.size(), a.mutable_data());
    return a;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Ptychography simulation and latent-space reconstruction core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

    // field
    m.def("mitchell_kernel", &field::mitchell_kernel, py::arg("x"));
    m.def(
        "resize",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& img, int out_w,
           int out_h) { return from_image(field::resize(to_image(img), out_w, out_h)); },
        py::arg("image"), py::arg("out_w"), py::arg("out_h"));
    m.def(
        "resize_adjoint",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& g, int in_w,
           int in_h) { return from_image(field::resize_adjoint(to_image(g), in_w, in_h)); },
        py::arg("grad_out"), py::arg("in_w"), py::arg("in_h"));

    // optics
    m.def(
        "propagate",
        [](const py::array_t<cplx, py::array::c_style | py::array::forcecast>& f, double pitch,
           double wavelength, double z) {
            const ComplexField field = to_field(f, pitch, wavelength);
            return from_field(optics::propagate(field, optics::make_plan(field.grid, z)));
        },
        py::arg("field"), py::arg("pitch"), py::arg("wavelength"), py::arg("z"));
    m.def(
        "band_mask",
        [](int nx, int ny, double pitch, double wavelength, double z) {
            const auto plan = optics::make_plan(Grid(nx, ny, pitch, wavelength), z);
            py::array_t<bool> a({ny, nx});
            for (std::size_t i = 0; i < plan.band_mask.size(); ++i)
                a.mutable_data()[i] = plan.band_mask[i] != 0;
            return a;
        },
        py::arg("nx"), py::arg("ny"), py::arg("pitch"), py::arg("wavelength"), py::arg("z"));
    m.def(
        "synthesize_probe",
        [](int nx, int ny, double pitch, double wavelength, double diameter, double edge_width,
           double photons) {
            return from_field(optics::synthesize_probe(Grid(nx, ny, pitch, wavelength), diameter,
                                                       edge_width, photons));
        },
        py::arg("nx"), py::arg("ny"), py::arg("pitch"), py::arg("wavelength"), py::arg("diameter"),
        py::arg("edge_width"), py::arg("total_photons"));

    // scan
    m.def(
        "fermat_spiral",
        [](int n, double scale) {
            const auto p = scan::fermat_spiral(n, scale);
            py::array_t<double> a({static_cast<int>(p.count()), 2});
            for (std::size_t i = 0; i < p.count(); ++i) {
                a.mutable_at(i, 0) = p.positions[i][0];
                a.mutable_at(i, 1) = p.positions[i][1];
            }
            return a;
        },
        py::arg("n"), py::arg("scale"));
    m.def(
        "poisson_disk",
        [](double width, double height, double r_min, int k_attempts, std::uint64_t seed) {
            const auto p = scan::poisson_disk(width, height, r_min, k_attempts, seed);
            py::array_t<double> a({static_cast<int>(p.count()), 2});
            for (std::size_t i = 0; i < p.count(); ++i) {
                a.mutable_at(i, 0) = p.positions[i][0];
                a.mutable_at(i, 1) = p.positions[i][1];
            }
            return a;
        },
        py::arg("width"), py::arg("height"), py::arg("r_min"), py::arg("k_attempts") = 30,
        py::arg("seed") = 1);
    m.def("overlap_fraction", &scan::overlap_fraction, py::arg("d"), py::arg("probe_diameter"));

    // losses and schedules
    m.def(
        "mixed_loss",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& I,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& X,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& var) {
            return recon::mixed_loss(to_image(I), to_image(X), to_image(var));
        },
        py::arg("predicted"), py::arg("measured"), py::arg("noise_var"));
    m.def(
        "poisson_loss",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& I,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& X) {
            return recon::poisson_loss(to_image(I), to_image(X));
        },
        py::arg("predicted"), py::arg("measured"));
    m.def("lr_schedule", &recon::lr_schedule, py::arg("alpha"), py::arg("epoch"));

    // analysis
    m.def(
        "psnr",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
            return analysis::psnr(to_image(a), to_image(b));
        },
        py::arg("image"), py::arg("reference"));
    m.def(
        "effective_rank",
        [](const nn::Mat& latents, double tau) {
            const auto [rank, sv] = nn::effective_rank(latents, tau);
            return py::make_tuple(rank, sv);
        },
        py::arg("latents"), py::arg("tau") = 0.01);
    m.def(
        "pca_leading",
        [](const nn::Mat& latents) {
            const auto r = analysis::pca_leading(latents);
            return py::make_tuple(r.v1, r.v2, r.singular_values, r.ambiguous);
        },
        py::arg("latents"));

    // noise
    m.def(
        "apply_noise",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& frames,
           double sigma, std::uint64_t seed) {
            if (frames.ndim() != 3) throw DataError("expected (J, ny, nx) float64 array");
            sim::DiffractionStack stack;
            const int J = static_cast<int>(frames.shape(0));
            const int ny = static_cast<int>(frames.shape(1));
            const int nx = static_cast<int>(frames.shape(2));
            stack.grid = Grid(nx, ny, 1e-6, 1e-6);
            stack.noise_var = RealImage(nx, ny, 0.0);
            for (int j = 0; j < J; ++j) {
                RealImage f(nx, ny);
                std::copy_n(frames.data() + static_cast<std::size_t>(j) * nx * ny, f.size(),
                            f.v.data());
                stack.frames.push_back(std::move(f));
                stack.positions_px.push_back({0, 0});
            }
            const auto noisy = sim::apply_noise(stack, sigma, seed);
            py::array_t<double> out({J, ny, nx});
            for (int j = 0; j < J; ++j)
                std::copy_n(noisy.frames[j].v.data(), noisy.frames[j].size(),
                            out.mutable_data() + static_cast<std::size_t>(j) * nx * ny);
            return out;
        },
        py::arg("frames"), py::arg("sigma_readout"), py::arg("seed"));

    // autoencoder
    py::class_<nn::Autoencoder>(m, "Autoencoder")
        .def_static("init", &nn::Autoencoder::init, py::arg("latent_dim") = 128,
                    py::arg("irmae") = true, py::arg("seed") = 1)
        .def_static("load", &nn::Autoencoder::load, py::arg("weights_dir"))
        .def("save", &nn::Autoencoder::save, py::arg("weights_dir"))
        .def_readonly("latent_dim", &nn::Autoencoder::latent_dim)
        .def_readonly("irmae", &nn::Autoencoder::irmae)
        .def(
            "encode",
            [](const nn::Autoencoder& ae,
               const py::array_t<double, py::array::c_style | py::array::forcecast>& x) -> nn::Mat {
                return nn::encode(ae, to_batch(x));
            },
            py::arg("images"))
        .def(
            "decode",
            [](const nn::Autoencoder& ae, const nn::Mat& h) { return from_batch(nn::decode(ae, h)); },
            py::arg("latents"))
        .def("bottleneck_product", &nn::Autoencoder::bottleneck_product);

    m.def(
        "load_idx",
        [](const std::string& images, const std::string& labels) {
            const auto d = nn::idx_load(images, labels);
            py::array_t<std::uint8_t> labs(static_cast<int>(d.labels.size()));
            std::copy(d.labels.begin(), d.labels.end(), labs.mutable_data());
            return py::make_tuple(from_batch(d.images), labs);
        },
        py::arg("images_path"), py::arg("labels_path"));

    m.attr("__version__") = "0.1.0";
}
