// Acceptance suite: one pass/fail line per criterion.
//
//   acceptance [--criterion N] [--work DIR]
//
// Heavy prerequisites (dataset, trained autoencoders, simulated stacks,
// reconstructions) are cached under the work directory so criteria can run
// individually or as a sequence.

#include "ptycho/analysis.hpp"
#include "ptycho/cli.hpp"
#include "ptycho/dataset.hpp"
#include "ptycho/field.hpp"
#include "ptycho/io.hpp"
#include "ptycho/neural.hpp"
#include "ptycho/optics.hpp"
#include "ptycho/ptyb.hpp"
#include "ptycho/recon.hpp"
#include "ptycho/rng.hpp"
#include "ptycho/scan.hpp"
#include "ptycho/simulator.hpp"

#include "../support/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ptycho;

namespace {

std::string g_work;

std::string src_path(const std::string& rel) { return std::string(PTYCHO_SOURCE_DIR) + "/" + rel; }

double now_seconds() {
    static const auto t0 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CheckList {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        notes.push_back(std::string(ok ? "  ok   " : "  FAIL ") + what);
        pass = pass && ok;
    }
    void info(const std::string& what) { notes.push_back("  info " + what); }
};

void run_cli(const std::string& command, const std::vector<std::string>& sets,
             const std::string& out) {
    const int rc = cli::run_command(command, {}, sets, out, true);
    if (rc != 0)
        throw std::runtime_error("CLI command '" + command + "' failed with exit code " +
                                 std::to_string(rc));
}

/// Build-once artifact: runs the builder unless DIR/.done exists.
std::string cached(const std::string& name, const std::function<void(const std::string&)>& build) {
    const std::string dir = g_work + "/" + name;
    if (fs::exists(dir + "/.done")) return dir;
    fs::remove_all(dir);
    build(dir);
    io::write_text(dir + "/.done", "ok\n");
    return dir;
}

// ---------------------------------------------------------------------------
// shared desk-scale configuration (256x256 detector, z = 8 cm, 16 Poisson-disk
// positions, sigma = 0.3) used by criteria 5 and 7
// ---------------------------------------------------------------------------

struct DeskConfig {
    int nx = 256, ny = 256;
    double pitch = 13.8e-6;
    double wavelength = 561e-9;
    double z = 0.08;
    double sigma = 0.3;
    double probe_diameter = 1.5e-3;
    double probe_edge_px = 5.0;
    int obj_px = 96;
    int scan_count = 16;
    double scan_overlap = 0.8;
    double alpha_latent = 0.2;
    double alpha_conventional = 0.05;
    int epochs_latent = 100;
    int epochs_conventional = 150;
    std::uint64_t seed = 1;
};

std::vector<std::string> desk_sim_sets(const DeskConfig& d, double photons,
                                       const std::string& gt_path, std::uint64_t seed) {
    return {
        "nx=" + std::to_string(d.nx),
        "ny=" + std::to_string(d.ny),
        "pitch_m=" + io::format_double(d.pitch),
        "wavelength_m=" + io::format_double(d.wavelength),
        "z_m=" + io::format_double(d.z),
        "photons=" + io::format_double(photons),
        "sigma_readout=" + io::format_double(d.sigma),
        "probe_diameter_m=" + io::format_double(d.probe_diameter),
        "probe_edge_px=" + io::format_double(d.probe_edge_px),
        "object_px=" + std::to_string(d.obj_px),
        "scan_kind=poisson",
        "scan_count=" + std::to_string(d.scan_count),
        "scan_overlap=" + io::format_double(d.scan_overlap),
        "object_image=" + gt_path,
        "seed=" + std::to_string(seed),
    };
}

std::string dataset_dir() {
    return cached("dataset", [&](const std::string& dir) {
        // the simulation ground truth is a photomask-style binary '3' rendered
        // at the object-plane raster, not a decoder output
        run_cli("make-dataset",
                {"corpus_images=" + src_path("data/glyphs_images.ptyb"),
                 "corpus_labels=" + src_path("data/glyphs_labels.ptyb"), "n_train=10000",
                 "n_test=2000", "gt_digit=3", "gt_size=96", "gt_threshold=0.5", "seed=1"},
                dir);
    });
}

std::string weights_dir(const std::string& kind) {
    return cached("ae_" + kind, [&](const std::string& dir) {
        std::vector<std::string> sets = {"idx_dir=" + dataset_dir(), "epochs=20", "seed=1"};
        if (kind == "std")
            sets.push_back("irmae=false");
        else
            sets.push_back("irmae=true");
        if (kind == "irmae4") sets.push_back("class_filter=4");
        run_cli("train-ae", sets, dir);
    });
}

std::string bundle_dir(const DeskConfig& d, double photons) {
    std::ostringstream name;
    name << "bundle_" << std::scientific << photons;
    return cached(name.str(), [&](const std::string& dir) {
        const std::string gt = dataset_dir() + "/gt_digit.ptyb";
        const std::uint64_t seed =
            Rng(d.seed, "sim", static_cast<std::uint64_t>(photons)).next_u64();
        run_cli("simulate", desk_sim_sets(d, photons, gt, seed), dir);
    });
}

std::string recon_dir(const DeskConfig& d, double photons, const std::string& mode,
                      const std::string& loss_kind = "mixed", double alpha_override = 0.0,
                      const char* tag = "") {
    std::ostringstream name;
    name << "recon_" << mode << "_" << loss_kind << tag << "_" << std::scientific << photons;
    return cached(name.str(), [&](const std::string& dir) {
        const std::string bundle = bundle_dir(d, photons);
        const bool latent = mode == "latent";
        double alpha = latent ? d.alpha_latent : d.alpha_conventional;
        if (alpha_override > 0.0) alpha = alpha_override;
        std::vector<std::string> sets = {
            "bundle=" + bundle,
            "mode=" + mode,
            "loss_kind=" + loss_kind,
            "epochs=" + std::to_string(latent ? d.epochs_latent : d.epochs_conventional),
            "object_px=" + std::to_string(d.obj_px),
            "ground_truth=" + bundle + "/gt_object.ptyb",
            "seed=" + std::to_string(d.seed),
            "alpha=" + io::format_double(alpha),
        };
        if (latent) {
            sets.push_back("weights=" + weights_dir("irmae") + "/weights");
            sets.push_back("init=mean");
        } else {
            sets.push_back("init=flat");
        }
        run_cli("reconstruct", sets, dir);
    });
}

double manifest_num(const std::string& dir, const std::string& key) {
    const auto kv = io::read_kv(dir + "/manifest");
    return io::parse_double(kv.at(key), key);
}

double rel_gap(double a, double b, double floor_scale) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor_scale});
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness of the full differentiable chain
// ---------------------------------------------------------------------------

bool criterion1() {
    CheckList c;
    const double t0 = now_seconds();

    Grid grid(64, 64, 3.45e-6, 561e-9);
    const double z = 0.01;
    nn::Autoencoder decoder = nn::Autoencoder::init(128, true, 210);

    sim::DiffractionStack stack;
    stack.grid = grid;
    stack.z = z;
    stack.positions_px = {{0, 0}, {3, -2}, {-2, 4}};
    stack.noise_var = RealImage(64, 64, 0.09);
    Rng rng(211, "c1");
    ComplexField probe(grid);
    for (cplx& p : probe.v) p = cplx(rng.normal(), rng.normal());
    stack.frames.assign(3, RealImage(64, 64, 0.0));
    for (auto& f : stack.frames)
        for (double& v : f.v) v = rng.uniform(0.0, 8.0);

    recon::Pipeline pipe = recon::make_pipeline(stack, probe, 48, 0.0, &decoder);
    const auto kind = recon::LossKind::MixedPoissonGaussian;

    // latent branch: all 128 components of dL/dh
    {
        recon::ReconstructionState st;
        st.mode = recon::Mode::Latent;
        st.probe = probe;
        st.h = nn::Vec::Zero(128);
        for (int i = 0; i < 128; ++i) st.h[i] = rng.normal();

        nn::Vec analytic = nn::Vec::Zero(128);
        for (std::size_t j = 0; j < 3; ++j)
            analytic += recon::gradient(pipe, st, j, kind, stack.frames[j]).d_h;

        auto total = [&]() {
            double l = 0.0;
            for (std::size_t j = 0; j < 3; ++j)
                l += recon::mixed_loss(recon::forward_predict(pipe, st, j), stack.frames[j],
                                       pipe.noise_var);
            return l;
        };
        const double step = 1e-5;
        const double gmax = analytic.cwiseAbs().maxCoeff();
        double worst = 0.0;
        for (int i = 0; i < 128; ++i) {
            const double keep = st.h[i];
            st.h[i] = keep + step;
            const double lp = total();
            st.h[i] = keep - step;
            const double lm = total();
            st.h[i] = keep;
            worst = std::max(worst, rel_gap(analytic[i], (lp - lm) / (2 * step), 1e-6 * gmax));
        }
        c.require(worst < 1e-4, "dL/dh vs finite differences, max rel err " +
                                    io::format_double(worst) + " < 1e-4 (128 components)");
    }

    // conventional branch: dL/dO and dL/dP at 20 random pixels, re and im
    {
        recon::ReconstructionState st;
        st.mode = recon::Mode::Conventional;
        st.probe = probe;
        st.object.resize(48 * 48);
        for (auto& o : st.object) o = cplx(rng.uniform(0.2, 1.0), rng.uniform(-0.4, 0.4));

        std::vector<cplx> d_obj(st.object.size(), cplx(0, 0));
        ComplexField d_probe;
        for (std::size_t j = 0; j < 3; ++j) {
            auto g = recon::gradient(pipe, st, j, kind, stack.frames[j], true);
            for (std::size_t i = 0; i < d_obj.size(); ++i) d_obj[i] += g.d_object[i];
            if (d_probe.v.empty())
                d_probe = std::move(g.d_probe);
            else
                for (std::size_t i = 0; i < d_probe.v.size(); ++i) d_probe.v[i] += g.d_probe.v[i];
        }
        auto total = [&]() {
            double l = 0.0;
            for (std::size_t j = 0; j < 3; ++j)
                l += recon::mixed_loss(recon::forward_predict(pipe, st, j), stack.frames[j],
                                       pipe.noise_var);
            return l;
        };
        const double step = 1e-6;
        double o_scale = 0.0, p_scale = 0.0;
        for (const cplx& v : d_obj)
            o_scale = std::max({o_scale, std::fabs(v.real()), std::fabs(v.imag())});
        for (const cplx& v : d_probe.v)
            p_scale = std::max({p_scale, std::fabs(v.real()), std::fabs(v.imag())});

        double worst_o = 0.0, worst_p = 0.0;
        for (int t = 0; t < 20; ++t) {
            const std::size_t i = rng.uniform_int(st.object.size());
            cplx keep = st.object[i];
            st.object[i] = keep + cplx(step, 0);
            const double lpr = total();
            st.object[i] = keep - cplx(step, 0);
            const double lmr = total();
            st.object[i] = keep + cplx(0, step);
            const double lpi = total();
            st.object[i] = keep - cplx(0, step);
            const double lmi = total();
            st.object[i] = keep;
            worst_o = std::max(worst_o,
                               rel_gap(d_obj[i].real(), (lpr - lmr) / (2 * step), 1e-6 * o_scale));
            worst_o = std::max(worst_o,
                               rel_gap(d_obj[i].imag(), (lpi - lmi) / (2 * step), 1e-6 * o_scale));
        }
        for (int t = 0; t < 20; ++t) {
            const std::size_t i = rng.uniform_int(probe.v.size());
            cplx keep = st.probe.v[i];
            st.probe.v[i] = keep + cplx(step, 0);
            const double lpr = total();
            st.probe.v[i] = keep - cplx(step, 0);
            const double lmr = total();
            st.probe.v[i] = keep + cplx(0, step);
            const double lpi = total();
            st.probe.v[i] = keep - cplx(0, step);
            const double lmi = total();
            st.probe.v[i] = keep;
            worst_p = std::max(
                worst_p, rel_gap(d_probe.v[i].real(), (lpr - lmr) / (2 * step), 1e-6 * p_scale));
            worst_p = std::max(
                worst_p, rel_gap(d_probe.v[i].imag(), (lpi - lmi) / (2 * step), 1e-6 * p_scale));
        }
        c.require(worst_o < 1e-4, "dL/dO vs finite differences, max rel err " +
                                      io::format_double(worst_o) + " < 1e-4 (20 pixels, re+im)");
        c.require(worst_p < 1e-4, "dL/dP vs finite differences, max rel err " +
                                      io::format_double(worst_p) + " < 1e-4 (20 pixels, re+im)");
    }

    const double dt = now_seconds() - t0;
    c.require(dt < 120.0, "runtime " + io::format_double(dt) + " s < 120 s");
    for (const auto& n : c.notes) std::puts(n.c_str());
    return c.pass;
}

// ---------------------------------------------------------------------------
// criterion 2: propagation physics
// ---------------------------------------------------------------------------

bool criterion2() {
    CheckList c;
    const double t0 = now_seconds();
    Grid g(64, 64, 3.45e-6, 561e-9);
    const double z = 0.01;
    const auto plan = optics::make_plan(g, z);
    const auto plan_back = optics::make_plan(g, -z);

    // band-confined random field
    ComplexField f(g);
    Rng rng(22, "c2");
    for (cplx& v : f.v) v = cplx(rng.normal(), rng.normal());
    optics::fft2(f);
    for (std::size_t i = 0; i < f.v.size(); ++i)
        if (!plan.band_mask[i]) f.v[i] = 0.0;
    optics::ifft2(f);

    const ComplexField fwd = optics::propagate(f, plan);
    const ComplexField back = optics::propagate(fwd, plan_back);
    double max_err = 0.0;
    for (std::size_t i = 0; i < f.v.size(); ++i)
        max_err = std::max(max_err, std::abs(back.v[i] - f.v[i]));
    c.require(max_err < 1e-10,
              "round trip +z/-z max abs err " + io::format_double(max_err) + " < 1e-10");

    const double e0 = f.power(), e1 = fwd.power();
    c.require(std::fabs(e1 - e0) < 1e-12 * e0,
              "band-confined energy drift " + io::format_double(std::fabs(e1 - e0) / e0) +
                  " < 1e-12 relative");

    ComplexField constant(g, cplx(1.0, 0.0));
    const ComplexField cprop = optics::propagate(constant, plan);
    const cplx want = std::polar(1.0, 2.0 * kPi * z / g.wavelength);
    double cerr = 0.0;
    for (const cplx& v : cprop.v) cerr = std::max(cerr, std::abs(v - want));
    c.require(cerr < 1e-12, "constant-field phase = 2 pi z / lambda, err " +
                                io::format_double(cerr) + " < 1e-12");

    const double diameter = 8 * g.pitch, edge = 5 * g.pitch;
    const double z_disk = 1e-3;
    const ComplexField disk = optics::synthesize_probe(g, diameter, edge, 1.0);
    const ComplexField asm_out = optics::propagate(disk, optics::make_plan(g, z_disk));
    const ComplexField rs =
        oracles::rayleigh_sommerfeld_disk(g, diameter, edge, std::abs(disk.at(32, 32)), z_disk);
    double mref = 0.0, merr = 0.0;
    for (std::size_t i = 0; i < rs.v.size(); ++i) {
        mref = std::max(mref, std::abs(rs.v[i]));
        merr = std::max(merr, std::abs(rs.v[i] - asm_out.v[i]));
    }
    c.require(merr / mref < 1e-3, "64x64 disk vs direct Rayleigh-Sommerfeld, rel err " +
                                      io::format_double(merr / mref) + " < 1e-3");

    const double dt = now_seconds() - t0;
    c.require(dt < 60.0, "runtime " + io::format_double(dt) + " s < 60 s");
    for (const auto& n : c.notes) std::puts(n.c_str());
    return c.pass;
}

// ---------------------------------------------------------------------------
// criterion 3: noise model moments
// ---------------------------------------------------------------------------

bool criterion3() {
    CheckList c;
    Grid g(100, 100, 1e-6, 5e-7);
    sim::DiffractionStack stack;
    stack.grid = g;
    stack.noise_var = RealImage(100, 100, 0.0);
    stack.frames.assign(10, RealImage(100, 100, 4.0)); // 10^5 draws total
    stack.positions_px.assign(10, {0, 0});
    const auto noisy = sim::apply_noise(stack, 0.3, 303);

    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (const auto& f : noisy.frames)
        for (double v : f.v) {
            s += v;
            s2 += v * v;
            ++n;
        }
    const double mean = s / static_cast<double>(n);
    const double var = s2 / static_cast<double>(n) - mean * mean;
    c.require(n == 100000, "draw count 10^5");
    c.require(std::fabs(mean - 4.0) < 0.04,
              "sample mean " + io::format_double(mean) + " within 4 +- 0.04");
    c.require(std::fabs(var - 4.09) / 4.09 < 0.02,
              "sample variance " + io::format_double(var) +
                  " within 4.09 +- 2% (Var = I + sigma^2)");
    for (const auto& no : c.notes) std::puts(no.c_str());
    return c.pass;
}

// ---------------------------------------------------------------------------
// criterion 4: IRMAE rank separation
// ---------------------------------------------------------------------------

bool criterion4() {
    CheckList c;
    const double t0 = now_seconds();
    const std::string w_std = weights_dir("std");
    const std::string w_irmae = weights_dir("irmae");
    const std::string w_irmae4 = weights_dir("irmae4");

    const auto rank_of = [&](const std::string& dir) {
        return static_cast<int>(manifest_num(dir, "effective_rank"));
    };
    const int r_std = rank_of(w_std);
    const int r_irmae = rank_of(w_irmae);
    const int r_irmae4 = rank_of(w_irmae4);

    c.info("effective ranks (tau = 0.01): standard " + std::to_string(r_std) + ", IRMAE " +
           std::to_string(r_irmae) + ", IRMAE '4'-only " + std::to_string(r_irmae4) +
           " (reference points from the printed study: 86 / 22 / 13)");
    c.info("IRMAE bottleneck product rank " +
           std::to_string(static_cast<int>(manifest_num(w_irmae, "bottleneck_product_rank"))) +
           " vs latent rank " + std::to_string(r_irmae));
    c.require(r_irmae * 2 < r_std, "IRMAE rank < 0.5 x standard-AE rank (" +
                                       std::to_string(r_irmae) + " vs " + std::to_string(r_std) +
                                       ")");
    c.require(r_irmae4 <= r_irmae, "'4'-filtered IRMAE rank <= full-set IRMAE rank (" +
                                       std::to_string(r_irmae4) + " vs " +
                                       std::to_string(r_irmae) + ")");
    const double dt = now_seconds() - t0;
    c.require(dt < 3600.0, "runtime " + io::format_double(dt) + " s < 3600 s");
    for (const auto& n : c.notes) std::puts(n.c_str());
    return c.pass;
}

// ---------------------------------------------------------------------------
// criterion 5: noise-robustness crossover
// ---------------------------------------------------------------------------

bool criterion5() {
    CheckList c;
    const double t0 = now_seconds();
    DeskConfig d;
    const std::vector<double> photons = {1e3, 1e4, 1e5, 1e6};

    std::map<double, double> psnr_conv, psnr_lat;
    for (double p : photons) {
        psnr_conv[p] = manifest_num(recon_dir(d, p, "conventional"), "psnr_db");
        psnr_lat[p] = manifest_num(recon_dir(d, p, "latent"), "psnr_db");
        c.info("photons " + io::format_double(p) + ": conventional " +
               io::format_double(psnr_conv[p]) + " dB, latent " + io::format_double(psnr_lat[p]) +
               " dB");
    }

    c.require(psnr_lat[1e3] >= psnr_conv[1e3] + 5.0,
              "latent beats conventional by >= 5 dB at 10^3 photons (gap " +
                  io::format_double(psnr_lat[1e3] - psnr_conv[1e3]) + " dB)");
    c.require(psnr_conv[1e6] >= psnr_lat[1e6] + 3.0,
              "conventional beats latent by >= 3 dB at 10^6 photons (gap " +
                  io::format_double(psnr_conv[1e6] - psnr_lat[1e6]) + " dB)");
    bool monotone = true;
    for (std::size_t i = 1; i < photons.size(); ++i)
        monotone = monotone && psnr_conv[photons[i]] >= psnr_conv[photons[i - 1]] - 1.0;
    c.require(monotone, "conventional PSNR nondecreasing in photons (within 1 dB)");

    // the crossover emerges about 1.5 decades higher on this 256^2 desk
    // instance (16x fewer measured pixels than a 1024^2 detector); show it
    // with the Poisson estimator pair at 10^8 photons
    {
        const double p_hi = 1e8;
        const double conv_hi =
            manifest_num(recon_dir(d, p_hi, "conventional", "poisson", 0.0, "_info"), "psnr_db");
        const double lat_hi =
            manifest_num(recon_dir(d, p_hi, "latent", "poisson", 0.0, "_info"), "psnr_db");
        c.info("informational: at 10^8 photons (Poisson estimator both modes) conventional " +
               io::format_double(conv_hi) + " dB vs latent " + io::format_double(lat_hi) +
               " dB (gap " + io::format_double(conv_hi - lat_hi) + " dB)");
    }

    const double dt = now_seconds() - t0;
    c.require(dt < 2700.0, "runtime " + io::format_double(dt) + " s < 2700 s");
    for (const auto& n : c.notes) std::puts(n.c_str());
    return c.pass;
}

// ---------------------------------------------------------------------------
// criterion 6: latent fixed point
// ---------------------------------------------------------------------------

bool criterion6() {
    CheckList c;
    nn::Autoencoder decoder = nn::Autoencoder::init(128, true, 606);
    Grid grid(64, 64, 13.8e-6, 561e-9);

    sim::DiffractionStack stack;
    stack.grid = grid;
    stack.z = 0.02;
    stack.positions_px = {{0, 0}, {4, -3}, {-5, 2}, {1, 5}};
    stack.noise_var = RealImage(64, 64, 0.0);
    const ComplexField probe =
        optics::synthesize_probe(grid, 40 * grid.pitch, 5 * grid.pitch, 1e5);
    recon::Pipeline pipe = recon::make_pipeline(stack, probe, 48, 0.0, &decoder);

    Rng rng(607, "c6");
    recon::ReconstructionState gen;
    gen.mode = recon::Mode::Latent;
    gen.probe = probe;
    gen.h = nn::Vec::Zero(128);
    for (int i = 0; i < 128; ++i) gen.h[i] = rng.normal();
    stack.frames.assign(4, RealImage(64, 64, 0.0));
    for (std::size_t j = 0; j < 4; ++j) stack.frames[j] = recon::forward_predict(pipe, gen, j);

    recon::ReconConfig rc;
    rc.mode = recon::Mode::Latent;
    rc.loss_kind = recon::LossKind::PoissonOnly;
    rc.alpha = 0.5;
    rc.epochs = 25;
    rc.seed = 3;
    rc.latent_init = gen.h;
    const recon::ReconResult res = recon::reconstruct(pipe, stack, rc);

    bool non_increasing = true;
    const double first = res.history.front().loss;
    for (const auto& r : res.history)
        if (r.loss > first + 1e-9 * std::max(1.0, std::fabs(first))) non_increasing = false;
    c.require(non_increasing, "loss never increases beyond 1e-9 relative (stays at " +
                                  io::format_double(first) + ")");

    nn::Mat hm(1, 128);
    hm.row(0) = gen.h.transpose();
    const nn::Tensor4 dec = nn::decode(decoder, hm);
    RealImage dec_img(32, 32);
    std::copy(dec.v.begin(), dec.v.end(), dec_img.v.begin());
    const RealImage want = field::resize(dec_img, 48, 48);
    bool exact = res.object_image.v.size() == want.v.size();
    if (exact)
        for (std::size_t i = 0; i < want.v.size(); ++i)
            exact = exact && res.object_image.v[i] == want.v[i];
    c.require(exact, "recovered image equals decode(h*) exactly");
    c.require(res.state.h == gen.h, "latent vector untouched by optimization at the fixed point");

    for (const auto& n : c.notes) std::puts(n.c_str());
    return c.pass;
}

// ---------------------------------------------------------------------------
// criterion 7: landscape sanity around the converged high-SNR solution
// ---------------------------------------------------------------------------

struct GridStats {
    double center = 0.0;
    double min_val = 0.0;
    int min_ia = 0, min_ib = 0;
    int n = 0;
    double plateau = 0.0;
};

GridStats read_grid(const std::string& dir) {
    const auto rows = io::read_csv(dir + "/landscape.csv");
    GridStats g;
    g.n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(rows.size()))));
    std::vector<double> losses;
    losses.reserve(rows.size());
    double mx = -1e300;
    g.min_val = 1e300;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double a = io::parse_double(rows[r][0], "alpha");
        const double b = io::parse_double(rows[r][1], "beta");
        const double l = io::parse_double(rows[r][2], "loss");
        losses.push_back(l);
        if (l < g.min_val) {
            g.min_val = l;
            g.min_ia = static_cast<int>(r) / g.n;
            g.min_ib = static_cast<int>(r) % g.n;
        }
        mx = std::max(mx, l);
        if (a == 0.0 && b == 0.0) g.center = l;
    }
    const double tol = 0.01 * std::max(std::fabs(mx), 1e-300);
    std::size_t cnt = 0;
    for (double l : losses)
        if (mx - l <= tol) ++cnt;
    g.plateau = static_cast<double>(cnt) / static_cast<double>(losses.size());
    return g;
}

bool criterion7() {
    CheckList c;
    const double t0 = now_seconds();
    DeskConfig d;
    const std::string bundle = bundle_dir(d, 1e6);
    // converged high-SNR latent solution: alpha at the top of the stated range
    const std::string recon = recon_dir(d, 1e6, "latent", "mixed", 1.0, "_c7");
    const std::string weights = weights_dir("irmae") + "/weights";

    auto land = [&](const std::string& kind) {
        return cached("landscape_" + kind, [&](const std::string& dir) {
            run_cli("landscape",
                    {"bundle=" + bundle, "weights=" + weights, "state=" + recon, "mode=latent",
                     "loss_kind=" + kind, "grid_n=21", "range_abs=10",
                     "object_px=" + std::to_string(d.obj_px), "seed=1"},
                    dir);
        });
    };
    const std::string mixed_dir = land("mixed");
    const std::string poisson_dir = land("poisson");

    const GridStats mixed = read_grid(mixed_dir);
    const double final_loss = manifest_num(recon, "final_loss");
    c.require(mixed.n == 21, "21x21 grid (441 evaluations)");
    c.require(mixed.center == final_loss,
              "loss at (0,0) equals the reconstruction final loss exactly (" +
                  io::format_double(mixed.center) + ")");
    const int ctr = mixed.n / 2;
    const bool central = std::abs(mixed.min_ia - ctr) <= 1 && std::abs(mixed.min_ib - ctr) <= 1;
    c.require(central, "grid minimum at (" + std::to_string(mixed.min_ia) + "," +
                           std::to_string(mixed.min_ib) + ") lies in the central 3x3 cells");

    const GridStats poisson = read_grid(poisson_dir);
    c.info("plateau fraction: mixed " + io::format_double(mixed.plateau) + ", poisson " +
           io::format_double(poisson.plateau));
    c.require(poisson.plateau >= 2.0 * mixed.plateau,
              "Poisson-only plateau area >= 2x the mixed-loss plateau area");

    const double dt = now_seconds() - t0;
    c.require(dt < 1200.0, "runtime " + io::format_double(dt) + " s < 1200 s");
    for (const auto& n : c.notes) std::puts(n.c_str());
    return c.pass;
}

// ---------------------------------------------------------------------------
// criterion 8: unit identities
// ---------------------------------------------------------------------------

bool criterion8() {
    CheckList c;

    Rng rng(808, "c8");
    RealImage I(8, 8);
    for (double& v : I.v) v = rng.uniform(0.1, 9.0);
    RealImage var(8, 8, 0.09);
    double want = 0.0;
    for (double v : I.v) want += std::log(v + 0.09);
    const double got = recon::mixed_loss(I, I, var);
    c.require(std::fabs(got - want) <= 1e-12 * std::fabs(want),
              "mixed loss at X = I equals sum ln(I + sigma^2) to 1e-12");
    c.require(recon::poisson_loss(I, I) == 0.0, "poisson loss at X = I equals 0");

    RealImage a(10, 10, 0.5), b(10, 10, 0.0), cc(10, 10, 0.6);
    c.require(std::fabs(analysis::psnr(a, b) - 6.0206) < 1e-3, "PSNR 6.02 dB case");
    c.require(std::fabs(analysis::psnr(a, cc) - 20.0) < 1e-9, "PSNR 20 dB case");

    c.require(std::fabs(field::mitchell_kernel(0.0) - 8.0 / 9.0) < 1e-12, "Mitchell kernel 8/9");
    c.require(std::fabs(field::mitchell_kernel(1.0) - 1.0 / 18.0) < 1e-12, "Mitchell kernel 1/18");

    c.require(recon::lr_schedule(0.4, 0) == 0.4, "lr schedule n=0");
    c.require(std::fabs(recon::lr_schedule(1.0, 1) - 0.97) < 1e-15, "lr schedule n=1");
    c.require(std::fabs(recon::lr_schedule(0.1, 100) - 0.1 * std::pow(0.97, 100)) < 1e-15,
              "lr schedule n=100");

    const auto fermat = scan::fermat_spiral(2, 1.0);
    const double ang = 137.508 * kPi / 180.0;
    c.require(fermat.positions[0][0] == 0.0 && fermat.positions[0][1] == 0.0,
              "Fermat k=0 at origin");
    c.require(std::fabs(fermat.positions[1][0] - std::cos(ang)) < 1e-12 &&
                  std::fabs(fermat.positions[1][1] - std::sin(ang)) < 1e-12,
              "Fermat k=1 at the golden angle");

    const double lens = (2.0 * std::acos(0.5) - 0.5 * std::sqrt(3.0)) / kPi;
    c.require(std::fabs(scan::overlap_fraction(0.5, 1.0) - lens) < 1e-12 &&
                  std::fabs(lens - 0.3910) < 1e-4,
              "overlap closed form 0.3910 at d = D/2");

    for (const auto& n : c.notes) std::puts(n.c_str());
    return c.pass;
}

// ---------------------------------------------------------------------------
// criterion 9: CLI determinism
// ---------------------------------------------------------------------------

std::vector<std::string> list_files(const std::string& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir).string());
    std::sort(out.begin(), out.end());
    return out;
}

std::string normalize_for_compare(const std::string& rel, const std::string& text) {
    if (rel != "sweep.csv") return text;
    // wall-clock seconds column is observability metadata, not payload
    std::istringstream iss(text);
    std::ostringstream oss;
    std::string line;
    while (std::getline(iss, line)) {
        const auto pos = line.rfind(',');
        oss << (pos == std::string::npos ? line : line.substr(0, pos)) << "\n";
    }
    return oss.str();
}

bool compare_dirs(CheckList& c, const std::string& what, const std::string& a,
                  const std::string& b) {
    const auto fa = list_files(a);
    const auto fb = list_files(b);
    if (fa != fb) {
        c.require(false, what + ": file sets differ");
        return false;
    }
    for (const auto& rel : fa) {
        const std::string ta = normalize_for_compare(rel, io::read_text(a + "/" + rel));
        const std::string tb = normalize_for_compare(rel, io::read_text(b + "/" + rel));
        if (ta != tb) {
            c.require(false, what + ": " + rel + " differs between reruns");
            return false;
        }
    }
    c.require(true,
              what + ": " + std::to_string(fa.size()) + " files byte-identical across reruns");
    return true;
}

bool criterion9() {
    CheckList c;
    const double t0 = now_seconds();
    const std::string root = g_work + "/determinism";
    fs::remove_all(root);
    fs::create_directories(root);

    // small geometry shared by the determinism reruns
    const std::vector<std::string> sim_sets = {
        "nx=64",        "ny=64",        "pitch_m=13.8e-6",
        "z_m=0.02",     "photons=1e4",  "sigma_readout=0.3",
        "probe_diameter_m=4e-4",        "object_px=32",
        "scan_count=4", "scan_overlap=0.75",
        "seed=5",
    };

    // dataset + tiny training feed the reconstruct/landscape/sweep runs
    for (const char* run : {"a", "b"})
        run_cli("make-dataset",
                {"corpus_images=" + src_path("data/glyphs_images.ptyb"),
                 "corpus_labels=" + src_path("data/glyphs_labels.ptyb"), "n_train=64",
                 "n_test=16", "gt_digit=3", "seed=5"},
                root + "/ds_" + std::string(run));
    compare_dirs(c, "make-dataset", root + "/ds_a", root + "/ds_b");

    for (const char* run : {"a", "b"})
        run_cli("train-ae",
                {"idx_dir=" + root + "/ds_a", "epochs=1", "ae_batch=16", "latent_dim=32",
                 "seed=5"},
                root + "/ae_" + std::string(run));
    compare_dirs(c, "train-ae", root + "/ae_a", root + "/ae_b");

    for (const char* run : {"a", "b"}) {
        auto sets = sim_sets;
        sets.push_back("object_image=" + root + "/ds_a/gt_digit.ptyb");
        run_cli("simulate", sets, root + "/sim_" + std::string(run));
    }
    compare_dirs(c, "simulate", root + "/sim_a", root + "/sim_b");

    for (const char* run : {"a", "b"})
        run_cli("reconstruct",
                {"bundle=" + root + "/sim_a", "mode=conventional", "epochs=2", "alpha=0.05",
                 "object_px=32", "seed=5"},
                root + "/rc_conv_" + std::string(run));
    compare_dirs(c, "reconstruct (conventional)", root + "/rc_conv_a", root + "/rc_conv_b");

    for (const char* run : {"a", "b"})
        run_cli("reconstruct",
                {"bundle=" + root + "/sim_a", "mode=latent", "weights=" + root + "/ae_a/weights",
                 "epochs=2", "alpha=0.2", "object_px=32", "init=mean", "seed=5"},
                root + "/rc_lat_" + std::string(run));
    compare_dirs(c, "reconstruct (latent)", root + "/rc_lat_a", root + "/rc_lat_b");

    for (const char* run : {"a", "b"})
        run_cli("landscape",
                {"bundle=" + root + "/sim_a", "weights=" + root + "/ae_a/weights",
                 "state=" + root + "/rc_lat_a", "mode=latent", "grid_n=5", "range_abs=4",
                 "object_px=32", "seed=5"},
                root + "/land_" + std::string(run));
    compare_dirs(c, "landscape", root + "/land_a", root + "/land_b");

    for (const char* run : {"a", "b"}) {
        auto sets = sim_sets;
        sets.push_back("object_image=" + root + "/ds_a/gt_digit.ptyb");
        sets.push_back("weights=" + root + "/ae_a/weights");
        sets.push_back("photon_list=1e3,1e4");
        sets.push_back("epochs=2");
        sets.push_back("alpha_latent=0.2");
        sets.push_back("alpha_conventional=0.05");
        run_cli("sweep", sets, root + "/sweep_" + std::string(run));
    }
    compare_dirs(c, "sweep (seconds column normalized)", root + "/sweep_a", root + "/sweep_b");

    const double dt = now_seconds() - t0;
    c.info("runtime " + io::format_double(dt) + " s");
    for (const auto& n : c.notes) std::puts(n.c_str());
    return c.pass;
}

} // namespace

int main(int argc, char** argv) {
    g_work = std::string(PTYCHO_BINARY_DIR) + "/acceptance_work";
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            selected.push_back(std::atoi(argv[++i]));
        } else if (std::strcmp(argv[i], "--work") == 0 && i + 1 < argc) {
            g_work = argv[++i];
        } else {
            std::fprintf(stderr, "usage: acceptance [--criterion N]... [--work DIR]\n");
            return 2;
        }
    }
    if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    fs::create_directories(g_work);

    const std::map<int, std::pair<std::string, bool (*)()>> criteria = {
        {1, {"gradient correctness of the differentiable chain", criterion1}},
        {2, {"propagation physics", criterion2}},
        {3, {"noise model moments", criterion3}},
        {4, {"IRMAE rank separation", criterion4}},
        {5, {"noise-robustness crossover", criterion5}},
        {6, {"latent fixed point", criterion6}},
        {7, {"loss landscape sanity", criterion7}},
        {8, {"unit identities", criterion8}},
        {9, {"CLI determinism", criterion9}},
    };

    int failures = 0;
    for (int n : selected) {
        const auto it = criteria.find(n);
        if (it == criteria.end()) {
            std::fprintf(stderr, "unknown criterion %d\n", n);
            return 2;
        }
        bool ok = false;
        try {
            ok = it->second.second();
        } catch (const std::exception& e) {
            std::printf("  error: %s\n", e.what());
            ok = false;
        }
        std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", n, it->second.first.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures;
}
