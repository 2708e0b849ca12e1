#include "ptycho/cli.hpp"

#include "ptycho/analysis.hpp"
#include "ptycho/dataset.hpp"
#include "ptycho/field.hpp"
#include "ptycho/neural.hpp"
#include "ptycho/optics.hpp"
#include "ptycho/ptyb.hpp"
#include "ptycho/recon.hpp"
#include "ptycho/rng.hpp"
#include "ptycho/scan.hpp"
#include "ptycho/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace fs = std::filesystem;

namespace ptycho::cli {

Config Config::from_file(const std::string& path) { return Config(io::read_kv(path)); }

std::string Config::str(const std::string& key, const std::string& def) {
    touched_.insert(key);
    const auto it = kv_.find(key);
    const std::string v = it == kv_.end() ? def : it->second;
    resolved_[key] = v;
    return v;
}

std::string Config::str_required(const std::string& key) {
    touched_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing required config key '" + key + "'");
    resolved_[key] = it->second;
    return it->second;
}

double Config::num(const std::string& key, double def) {
    touched_.insert(key);
    const auto it = kv_.find(key);
    const double v = it == kv_.end() ? def : io::parse_double(it->second, key);
    resolved_[key] = io::format_double(v);
    return v;
}

double Config::num_required(const std::string& key) {
    const std::string s = str_required(key);
    return io::parse_double(s, key);
}

long Config::integer(const std::string& key, long def) {
    touched_.insert(key);
    const auto it = kv_.find(key);
    const long v = it == kv_.end() ? def : io::parse_long(it->second, key);
    resolved_[key] = std::to_string(v);
    return v;
}

bool Config::flag(const std::string& key, bool def) {
    touched_.insert(key);
    const auto it = kv_.find(key);
    const bool v = it == kv_.end() ? def : io::parse_bool(it->second, key);
    resolved_[key] = v ? "true" : "false";
    return v;
}

std::vector<long> Config::int_list(const std::string& key) {
    const std::string s = str(key, "");
    std::vector<long> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(io::parse_long(item, key));
    return out;
}

std::vector<double> Config::num_list(const std::string& key) {
    const std::string s = str(key, "");
    std::vector<double> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(io::parse_double(item, key));
    return out;
}

void Config::reject_unknown() const {
    for (const auto& [k, v] : kv_)
        if (!touched_.count(k)) throw ConfigError("unknown config key '" + k + "'");
}

void prepare_out_dir(const std::string& out, bool force) {
    if (out.empty()) throw ConfigError("output directory required");
    if (fs::exists(out)) {
        if (!fs::is_directory(out)) throw ConfigError("output path is not a directory: " + out);
        if (!fs::is_empty(out) && !force)
            throw ConfigError("output directory not empty (use --force): " + out);
        if (force) {
            for (const auto& entry : fs::directory_iterator(out)) fs::remove_all(entry.path());
        }
    }
    io::ensure_dir(out);
}

namespace {

struct SimSetup {
    Grid grid;
    ComplexField probe;
    scan::ScanPattern pattern;
    std::vector<std::array<int, 2>> positions_px;
    int canvas_nx = 0, canvas_ny = 0;
    int obj_px = 0;
    double canvas_fill = 0.0;
    double photons = 0.0;
    double sigma_readout = 0.3;
    bool clip_negative = false;
    RealImage gt_resized; // object region raster
    double z = 0.0;
};

// Shared between cmd_simulate and cmd_sweep: reads geometry keys, loads the
// ground-truth image, builds probe and scan pattern.
SimSetup read_sim_setup(Config& cfg, bool need_photons) {
    SimSetup s;
    const int nx = static_cast<int>(cfg.integer("nx", 256));
    const int ny = static_cast<int>(cfg.integer("ny", 256));
    const double pitch = cfg.num("pitch_m", 3.45e-6);
    const double wavelength = cfg.num("wavelength_m", 561e-9);
    s.z = cfg.num("z_m", 0.08);
    s.grid = Grid(nx, ny, pitch, wavelength);

    // sweep supplies its own per-point totals but may share a config file
    // that also carries a photons key
    s.photons = cfg.num("photons", 1e6);
    if (need_photons && !(s.photons > 0.0)) throw ConfigError("photons must be > 0");
    s.sigma_readout = cfg.num("sigma_readout", 0.3);
    if (s.sigma_readout < 0.0) throw ConfigError("sigma_readout must be >= 0");
    s.clip_negative = cfg.flag("clip_negative", false);

    const double probe_diameter = cfg.num("probe_diameter_m", 1.5e-3);
    const double probe_edge_px = cfg.num("probe_edge_px", 5.0);
    s.probe = optics::synthesize_probe(s.grid, probe_diameter, probe_edge_px * pitch, 1.0);

    const std::string kind = cfg.str("scan_kind", "poisson");
    const int count = static_cast<int>(cfg.integer("scan_count", 16));
    const double overlap = cfg.num("scan_overlap", 0.67);
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
    if (count < 1) throw ConfigError("scan_count must be >= 1");
    if (kind == "poisson") {
        const double r_min = scan::solve_poisson_rmin(overlap, probe_diameter);
        s.pattern = scan::poisson_disk_exact(count, r_min, 30, Rng(seed, "scan").next_u64());
    } else if (kind == "fermat") {
        const double c = scan::solve_fermat_scale(count, overlap, probe_diameter);
        s.pattern = scan::fermat_spiral(count, c);
    } else {
        throw ConfigError("unknown scan_kind '" + kind + "' (poisson|fermat)");
    }
    const auto subset = cfg.int_list("scan_subset");
    if (!subset.empty()) {
        scan::ScanPattern sub;
        for (long idx : subset) {
            if (idx < 0 || idx >= static_cast<long>(s.pattern.count()))
                throw ConfigError("scan_subset index out of range: " + std::to_string(idx));
            sub.positions.push_back(s.pattern.positions[idx]);
        }
        s.pattern = sub;
    }
    s.positions_px = sim::snap_positions(s.pattern, pitch);
    s.canvas_nx = sim::canvas_extent(nx, s.positions_px, 0);
    s.canvas_ny = sim::canvas_extent(ny, s.positions_px, 1);

    s.obj_px = static_cast<int>(cfg.integer("object_px", 96));
    if (s.obj_px < 2) throw ConfigError("object_px must be >= 2");
    s.canvas_fill = cfg.num("canvas_fill", 0.0);

    const std::string gt_path = cfg.str_required("object_image");
    RealImage gt = io::read_image(gt_path);
    for (double v : gt.v)
        if (v < 0.0 || v > 1.0)
            throw DataError("object_image values must lie in [0,1]: " + gt_path);
    s.gt_resized = field::resize(gt, s.obj_px, s.obj_px);
    for (double& v : s.gt_resized.v) v = std::clamp(v, 0.0, 1.0);
    return s;
}

ComplexField build_gt_canvas(const SimSetup& s) {
    Grid cgrid(s.canvas_nx, s.canvas_ny, s.grid.pitch, s.grid.wavelength);
    ComplexField canvas(cgrid, cplx(s.canvas_fill, 0.0));
    const int ox = (s.canvas_nx - s.obj_px) / 2, oy = (s.canvas_ny - s.obj_px) / 2;
    return field::embed_patch(canvas, s.gt_resized, ox, oy, false);
}

sim::DiffractionStack simulate_noisy(const SimSetup& s, double photons, std::uint64_t seed,
                                     sim::DiffractionStack* noiseless_out) {
    const ComplexField probe = sim::scale_to_photons(s.probe, photons);
    const auto plan = optics::make_plan(s.grid, s.z);
    const ComplexField canvas = build_gt_canvas(s);
    sim::DiffractionStack expected = sim::expected_stack(canvas, probe, s.positions_px, plan);
    if (noiseless_out) *noiseless_out = expected;
    return sim::apply_noise(expected, s.sigma_readout, seed, s.clip_negative);
}

io::KeyValues sim_meta_extra(const SimSetup& s, double photons) {
    io::KeyValues extra;
    extra["photons"] = io::format_double(photons);
    extra["sigma_readout"] = io::format_double(s.sigma_readout);
    extra["object_px"] = std::to_string(s.obj_px);
    extra["canvas_fill"] = io::format_double(s.canvas_fill);
    extra["canvas_nx"] = std::to_string(s.canvas_nx);
    extra["canvas_ny"] = std::to_string(s.canvas_ny);
    extra["frames"] = std::to_string(s.positions_px.size());
    return extra;
}

void save_bundle_with_meta(const std::string& out, const sim::DiffractionStack& stack,
                           std::uint64_t seed, const io::KeyValues& extra) {
    sim::save_bundle(out, stack, seed);
    auto meta = io::read_kv(out + "/meta.txt");
    for (const auto& [k, v] : extra) meta[k] = v;
    io::write_kv(out + "/meta.txt", meta);
}

} // namespace

void cmd_simulate(Config& cfg, const std::string& out, bool force) {
    SimSetup s = read_sim_setup(cfg, true);
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
    cfg.reject_unknown();
    prepare_out_dir(out, force);
    cfg.write_resolved(out + "/config.resolved");

    sim::DiffractionStack noiseless;
    sim::DiffractionStack noisy = simulate_noisy(s, s.photons, seed, &noiseless);

    save_bundle_with_meta(out, noisy, seed, sim_meta_extra(s, s.photons));
    {
        std::vector<double> flat;
        for (const auto& f : noiseless.frames) flat.insert(flat.end(), f.v.begin(), f.v.end());
        ptyb::save_f64(out + "/frames_expected.ptyb", flat,
                       {noiseless.count(), static_cast<std::uint64_t>(s.grid.ny),
                        static_cast<std::uint64_t>(s.grid.nx)});
    }
    const ComplexField probe = sim::scale_to_photons(s.probe, s.photons);
    ptyb::save_c128(out + "/probe.ptyb", probe.v,
                    {static_cast<std::uint64_t>(s.grid.ny), static_cast<std::uint64_t>(s.grid.nx)});
    scan::save_csv(out + "/pattern.csv", s.pattern);
    ptyb::save_f64(out + "/gt_object.ptyb", s.gt_resized.v,
                   {static_cast<std::uint64_t>(s.obj_px), static_cast<std::uint64_t>(s.obj_px)});
    io::write_pgm(out + "/gt_object.pgm", s.gt_resized);

    double detected = 0.0;
    for (const auto& f : noiseless.frames)
        for (double v : f.v) detected += v;
    std::printf("simulate: %zu frames, illumination %.6g photons, expected detected %.6g photons\n",
                noisy.count(), probe.power(), detected);
}

namespace {

nn::Dataset load_idx_dir(Config& cfg, int class_filter, long limit, const char* split) {
    const std::string dir = cfg.str_required("idx_dir");
    const bool train = std::string(split) == "train";
    const std::string imgs = dir + (train ? "/train-images-idx3-ubyte" : "/t10k-images-idx3-ubyte");
    const std::string labs = dir + (train ? "/train-labels-idx1-ubyte" : "/t10k-labels-idx1-ubyte");
    nn::Dataset d = nn::idx_load(imgs, labs);
    if (class_filter >= 0) d = nn::filter_class(d, class_filter);
    if (limit > 0 && limit < d.images.n) d = nn::take_first(d, static_cast<int>(limit));
    return d;
}

} // namespace

void cmd_train_ae(Config& cfg, const std::string& out, bool force) {
    const bool irmae = cfg.flag("irmae", true);
    const int latent_dim = static_cast<int>(cfg.integer("latent_dim", 128));
    const int epochs = static_cast<int>(cfg.integer("epochs", 50));
    const double lr = cfg.num("ae_lr", 1e-3);
    const int batch = static_cast<int>(cfg.integer("ae_batch", 64));
    const long class_filter = cfg.integer("class_filter", -1);
    const long train_limit = cfg.integer("train_limit", 0);
    const long val_limit = cfg.integer("val_limit", 0);
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
    const bool verbose = cfg.flag("verbose", false);
    if (epochs < 0) throw ConfigError("epochs must be >= 0");

    nn::Dataset train = load_idx_dir(cfg, static_cast<int>(class_filter), train_limit, "train");
    nn::Dataset val = load_idx_dir(cfg, static_cast<int>(class_filter), val_limit, "test");
    cfg.reject_unknown();
    prepare_out_dir(out, force);
    cfg.write_resolved(out + "/config.resolved");

    nn::Autoencoder ae = nn::Autoencoder::init(latent_dim, irmae, seed);
    nn::TrainConfig tc;
    tc.epochs = epochs;
    tc.batch = batch;
    tc.lr = lr;
    tc.seed = seed;
    tc.verbose = verbose;
    const nn::TrainResult tr = nn::train_autoencoder(ae, train.images, tc);

    ae.save(out + "/weights");
    {
        io::CsvWriter csv(out + "/loss_curve.csv", "epoch,bce");
        for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e)
            csv.row({std::to_string(e), io::format_double(tr.epoch_loss[e])});
    }

    const nn::Mat latents = nn::encode_all(ae, val.images);
    ptyb::save_f64(out + "/weights/latents_val.ptyb",
                   std::vector<double>(latents.data(), latents.data() + latents.size()),
                   {static_cast<std::uint64_t>(latents.rows()),
                    static_cast<std::uint64_t>(latents.cols())});
    const nn::Vec hbar = nn::latent_mean(ae, train.images);
    ptyb::save_f64(out + "/weights/latent_mean.ptyb",
                   std::vector<double>(hbar.data(), hbar.data() + hbar.size()),
                   {static_cast<std::uint64_t>(hbar.size())});

    const auto [rank, sv] = nn::effective_rank(latents);
    {
        io::CsvWriter csv(out + "/singular_values.csv", "index,sigma");
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            csv.row({std::to_string(i), io::format_double(sv[i])});
    }
    const auto [w_rank, w_sv] = nn::matrix_rank(ae.bottleneck_product());

    io::KeyValues manifest;
    manifest["irmae"] = irmae ? "true" : "false";
    manifest["latent_dim"] = std::to_string(latent_dim);
    manifest["epochs"] = std::to_string(epochs);
    manifest["seed"] = std::to_string(seed);
    manifest["n_train"] = std::to_string(train.images.n);
    manifest["n_val"] = std::to_string(val.images.n);
    manifest["effective_rank"] = std::to_string(rank);
    manifest["rank_tau"] = "0.01";
    manifest["bottleneck_product_rank"] = std::to_string(w_rank);
    manifest["final_bce"] = tr.epoch_loss.empty() ? "nan" : io::format_double(tr.epoch_loss.back());
    if (class_filter >= 0) {
        manifest["class_filter"] = std::to_string(class_filter);
        manifest["class_count_train"] = std::to_string(train.images.n);
    }
    io::write_kv(out + "/manifest", manifest);

    // latent-space exploration sheets (interpolation per distinct classes, Gaussian samples)
    int ia = 0, ib = val.images.n > 1 ? 1 : 0;
    for (int i = 0; i < val.images.n; ++i)
        if (val.labels[i] == 9) {
            ia = i;
            break;
        }
    for (int i = 0; i < val.images.n; ++i)
        if (val.labels[i] == 0) {
            ib = i;
            break;
        }
    const nn::Vec h_a = latents.row(ia).transpose();
    const nn::Vec h_b = latents.row(ib).transpose();
    io::write_pgm(out + "/interp_sheet.pgm",
                  analysis::tile_strip(analysis::interpolate_latents(ae, h_a, h_b, 8)));
    if (val.images.n >= 2)
        io::write_pgm(out + "/samples_sheet.pgm",
                      analysis::tile_strip(analysis::sample_latents(ae, latents, 8,
                                                                    Rng(seed, "samples").next_u64())));

    std::printf("train-ae: %d epochs on %d images, effective rank %d (product rank %d)\n", epochs,
                train.images.n, rank, w_rank);
}

namespace {

struct ReconInputs {
    sim::DiffractionStack stack;
    ComplexField probe;
    nn::Autoencoder decoder;
    bool have_decoder = false;
    recon::Pipeline pipe;
    recon::ReconConfig rc;
    RealImage ground_truth;
    bool have_gt = false;
};

ReconInputs read_recon_inputs(Config& cfg, bool need_bundle = true) {
    ReconInputs in;
    const std::string bundle = cfg.str_required("bundle");
    (void)need_bundle;
    in.stack = sim::load_bundle(bundle);
    const auto probe_arr = ptyb::load(bundle + "/probe.ptyb");
    if (probe_arr.dtype != ptyb::DType::c128 || probe_arr.shape.size() != 2)
        throw DataError("bundle probe.ptyb must be 2D c128");
    if (probe_arr.shape[0] != static_cast<std::uint64_t>(in.stack.grid.ny) ||
        probe_arr.shape[1] != static_cast<std::uint64_t>(in.stack.grid.nx))
        throw DataError("bundle probe shape mismatch");
    in.probe = ComplexField(in.stack.grid);
    in.probe.v = probe_arr.c128;

    in.rc.mode = recon::parse_mode(cfg.str("mode", "latent"));
    in.rc.loss_kind = recon::parse_loss_kind(cfg.str("loss_kind", "mixed"));
    in.rc.alpha = cfg.num("alpha", in.rc.mode == recon::Mode::Latent ? 0.1 : 0.02);
    in.rc.epochs = static_cast<int>(cfg.integer("epochs", 100));
    in.rc.seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
    in.rc.init = cfg.str("init", in.rc.mode == recon::Mode::Latent ? "mean" : "flat");
    in.rc.train_probe = cfg.flag("train_probe", false);
    in.rc.amp_clamp = cfg.flag("amp_clamp", false);
    in.rc.l2 = cfg.num("l2", 0.0);
    in.rc.batch_frames = static_cast<int>(cfg.integer("batch_frames", 1));
    in.rc.restarts = static_cast<int>(cfg.integer("restarts", 1));

    const int obj_px = static_cast<int>(cfg.integer("object_px", 96));
    const double canvas_fill = cfg.num("canvas_fill", 0.0);

    const std::string weights = cfg.str("weights", "");
    if (in.rc.mode == recon::Mode::Latent) {
        if (weights.empty()) throw ConfigError("latent mode requires 'weights'");
        in.decoder = nn::Autoencoder::load(weights);
        in.have_decoder = true;
        if (in.rc.init == "mean") {
            const std::string mean_path =
                cfg.str("latent_mean", weights + "/latent_mean.ptyb");
            const auto arr = ptyb::load(mean_path);
            if (arr.dtype != ptyb::DType::f64 ||
                arr.f64.size() != static_cast<std::size_t>(in.decoder.latent_dim))
                throw DataError("latent_mean: wrong shape: " + mean_path);
            nn::Vec m(in.decoder.latent_dim);
            std::copy(arr.f64.begin(), arr.f64.end(), m.data());
            in.rc.latent_mean = m;
        } else {
            cfg.str("latent_mean", "");
        }
    } else {
        cfg.str("latent_mean", "");
    }

    in.pipe = recon::make_pipeline(in.stack, in.probe, obj_px, canvas_fill,
                                   in.have_decoder ? &in.decoder : nullptr);

    const std::string gt = cfg.str("ground_truth", "");
    if (!gt.empty()) {
        RealImage img = io::read_image(gt);
        in.ground_truth = field::resize(img, obj_px, obj_px);
        for (double& v : in.ground_truth.v) v = std::clamp(v, 0.0, 1.0);
        in.have_gt = true;
    }
    return in;
}

RealImage clipped01(const RealImage& img) {
    RealImage out = img;
    for (double& v : out.v) v = std::clamp(v, 0.0, 1.0);
    return out;
}

} // namespace

void cmd_reconstruct(Config& cfg, const std::string& out, bool force) {
    ReconInputs in = read_recon_inputs(cfg);
    cfg.reject_unknown();
    prepare_out_dir(out, force);
    cfg.write_resolved(out + "/config.resolved");

    const recon::ReconResult res = recon::reconstruct(in.pipe, in.stack, in.rc);

    {
        io::CsvWriter csv(out + "/history.csv", "step,epoch,frame,loss");
        for (const auto& r : res.history)
            csv.row({std::to_string(r.step), std::to_string(r.epoch), std::to_string(r.frame),
                     io::format_double(r.loss)});
    }
    io::write_pgm(out + "/object.pgm", clipped01(res.object_image));
    if (in.rc.mode == recon::Mode::Latent) {
        ptyb::save_f64(out + "/object.ptyb", res.object_image.v,
                       {static_cast<std::uint64_t>(res.object_image.height),
                        static_cast<std::uint64_t>(res.object_image.width)});
        std::vector<double> h(res.state.h.data(), res.state.h.data() + res.state.h.size());
        ptyb::save_f64(out + "/h.ptyb", h, {static_cast<std::uint64_t>(h.size())});
    } else {
        ptyb::save_c128(out + "/object.ptyb", res.state.object,
                        {static_cast<std::uint64_t>(in.pipe.obj_px),
                         static_cast<std::uint64_t>(in.pipe.obj_px)});
    }
    if (in.rc.train_probe)
        ptyb::save_c128(out + "/probe_refined.ptyb", res.state.probe.v,
                        {static_cast<std::uint64_t>(in.pipe.grid.ny),
                         static_cast<std::uint64_t>(in.pipe.grid.nx)});

    io::KeyValues manifest;
    manifest["mode"] = recon::to_string(in.rc.mode);
    manifest["loss_kind"] = recon::to_string(in.rc.loss_kind);
    manifest["seed"] = std::to_string(in.rc.seed);
    manifest["alpha"] = io::format_double(in.rc.alpha);
    manifest["epochs"] = std::to_string(in.rc.epochs);
    manifest["steps"] = std::to_string(res.history.size());
    manifest["final_loss"] = io::format_double(res.final_loss);
    manifest["free_parameters"] = std::to_string(res.state.free_parameter_count());
    manifest["status"] = "ok";
    double psnr_db = 0.0;
    if (in.have_gt) {
        psnr_db = analysis::psnr(clipped01(res.object_image), in.ground_truth);
        manifest["psnr_db"] = io::format_double(psnr_db);
    }
    io::write_kv(out + "/manifest", manifest);

    if (in.have_gt)
        std::printf("reconstruct: final loss %.10g, psnr %.3f dB\n", res.final_loss, psnr_db);
    else
        std::printf("reconstruct: final loss %.10g\n", res.final_loss);
}

void cmd_sweep(Config& cfg, const std::string& out, bool force) {
    SimSetup s = read_sim_setup(cfg, false);
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
    const auto photon_list = cfg.num_list("photon_list");
    if (photon_list.empty()) throw ConfigError("photon_list required (comma-separated)");
    for (double p : photon_list)
        if (!(p > 0.0)) throw ConfigError("photon_list entries must be > 0");
    std::vector<std::string> modes;
    {
        std::stringstream ss(cfg.str("sweep_modes", "conventional,latent"));
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) modes.push_back(item);
        for (const auto& m : modes) recon::parse_mode(m);
    }

    const std::string weights = cfg.str_required("weights");
    nn::Autoencoder decoder = nn::Autoencoder::load(weights);
    nn::Vec latent_mean;
    {
        const auto arr = ptyb::load(weights + "/latent_mean.ptyb");
        if (arr.dtype != ptyb::DType::f64 ||
            arr.f64.size() != static_cast<std::size_t>(decoder.latent_dim))
            throw DataError("latent_mean.ptyb: wrong shape in " + weights);
        latent_mean.resize(decoder.latent_dim);
        std::copy(arr.f64.begin(), arr.f64.end(), latent_mean.data());
    }

    recon::ReconConfig base;
    base.epochs = static_cast<int>(cfg.integer("epochs", 100));
    base.loss_kind = recon::parse_loss_kind(cfg.str("loss_kind", "mixed"));
    base.batch_frames = static_cast<int>(cfg.integer("batch_frames", 1));
    base.restarts = static_cast<int>(cfg.integer("restarts", 1));
    const double alpha_latent = cfg.num("alpha_latent", 0.1);
    const double alpha_conventional = cfg.num("alpha_conventional", 0.02);
    const std::string init_latent = cfg.str("init_latent", "mean");
    const std::string init_conventional = cfg.str("init_conventional", "flat");
    cfg.reject_unknown();
    prepare_out_dir(out, force);
    cfg.write_resolved(out + "/config.resolved");

    io::CsvWriter csv(out + "/sweep.csv", "photons,mode,psnr,final_loss,seconds");
    std::uint64_t point = 0;
    for (double photons : photon_list) {
        const std::uint64_t sim_seed = Rng(seed, "sweep_sim", point).next_u64();
        sim::DiffractionStack noisy = simulate_noisy(s, photons, sim_seed, nullptr);
        const ComplexField probe = sim::scale_to_photons(s.probe, photons);
        for (const auto& mode_name : modes) {
            const auto t0 = std::chrono::steady_clock::now();
            recon::ReconConfig rc = base;
            rc.mode = recon::parse_mode(mode_name);
            rc.seed = Rng(seed, "sweep_recon", point).next_u64();
            if (rc.mode == recon::Mode::Latent) {
                rc.alpha = alpha_latent;
                rc.init = init_latent;
                rc.latent_mean = latent_mean;
            } else {
                rc.alpha = alpha_conventional;
                rc.init = init_conventional;
            }
            recon::Pipeline pipe = recon::make_pipeline(
                noisy, probe, s.obj_px, s.canvas_fill,
                rc.mode == recon::Mode::Latent ? &decoder : nullptr);
            const recon::ReconResult res = recon::reconstruct(pipe, noisy, rc);
            const double p = analysis::psnr(clipped01(res.object_image), s.gt_resized);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            csv.row({io::format_double(photons), mode_name, io::format_double(p),
                     io::format_double(res.final_loss), io::format_double(secs)});
            std::printf("sweep: photons %.3g mode %s psnr %.3f dB (%.1fs)\n", photons,
                        mode_name.c_str(), p, secs);
        }
        ++point;
    }
}

void cmd_landscape(Config& cfg, const std::string& out, bool force) {
    ReconInputs in = read_recon_inputs(cfg);
    if (in.rc.mode != recon::Mode::Latent)
        throw ConfigError("landscape requires mode=latent");
    const std::string state_dir = cfg.str_required("state");
    const std::string latents_path =
        cfg.str("latents", cfg.str("weights", "") + "/latents_val.ptyb");
    const int grid_n = static_cast<int>(cfg.integer("grid_n", 21));
    const double range_abs = cfg.num("range_abs", 10.0);
    cfg.reject_unknown();

    const auto h_arr = ptyb::load(state_dir + "/h.ptyb");
    if (h_arr.dtype != ptyb::DType::f64 ||
        h_arr.f64.size() != static_cast<std::size_t>(in.decoder.latent_dim))
        throw DataError("state h.ptyb has wrong shape");
    nn::Vec h_opt(in.decoder.latent_dim);
    std::copy(h_arr.f64.begin(), h_arr.f64.end(), h_opt.data());

    const auto lat_arr = ptyb::load(latents_path);
    if (lat_arr.dtype != ptyb::DType::f64 || lat_arr.shape.size() != 2 ||
        lat_arr.shape[1] != static_cast<std::uint64_t>(in.decoder.latent_dim))
        throw DataError("latents array has wrong shape: " + latents_path);
    nn::Mat latents(static_cast<Eigen::Index>(lat_arr.shape[0]),
                    static_cast<Eigen::Index>(lat_arr.shape[1]));
    std::copy(lat_arr.f64.begin(), lat_arr.f64.end(), latents.data());

    prepare_out_dir(out, force);
    cfg.write_resolved(out + "/config.resolved");

    const analysis::PcaResult pca = analysis::pca_leading(latents);
    if (pca.degenerate)
        std::fprintf(stderr, "landscape: warning: latent covariance is near rank-1\n");
    if (pca.ambiguous)
        std::fprintf(stderr, "landscape: warning: leading directions are ambiguous\n");

    const analysis::LandscapeGrid grid = analysis::landscape(
        in.pipe, in.stack, h_opt, pca.v1, pca.v2, grid_n, range_abs, in.rc.loss_kind);

    analysis::save_landscape_csv(out + "/landscape.csv", grid);
    analysis::save_landscape_ptyb(out + "/landscape.ptyb", grid);
    ptyb::save_f64(out + "/v1.ptyb", std::vector<double>(pca.v1.data(), pca.v1.data() + pca.v1.size()),
                   {static_cast<std::uint64_t>(pca.v1.size())});
    ptyb::save_f64(out + "/v2.ptyb", std::vector<double>(pca.v2.data(), pca.v2.data() + pca.v2.size()),
                   {static_cast<std::uint64_t>(pca.v2.size())});

    const int c = grid_n / 2;
    io::KeyValues manifest;
    manifest["grid_n"] = std::to_string(grid_n);
    manifest["range_abs"] = io::format_double(range_abs);
    manifest["loss_kind"] = recon::to_string(in.rc.loss_kind);
    manifest["center_loss"] = io::format_double(grid.at(c, c));
    manifest["captured_variance"] = io::format_double(pca.captured_fraction());
    manifest["plateau_fraction"] = io::format_double(analysis::plateau_fraction(grid));
    manifest["pca_ambiguous"] = pca.ambiguous ? "true" : "false";
    io::write_kv(out + "/manifest", manifest);

    std::printf("landscape: %dx%d grid, center loss %.10g, captured variance %.4f\n", grid_n,
                grid_n, grid.at(c, c), pca.captured_fraction());
}

void cmd_make_dataset(Config& cfg, const std::string& out, bool force) {
    const std::string corpus_images = cfg.str_required("corpus_images");
    const std::string corpus_labels = cfg.str_required("corpus_labels");
    const int n_train = static_cast<int>(cfg.integer("n_train", 10000));
    const int n_test = static_cast<int>(cfg.integer("n_test", 2000));
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
    const long gt_digit = cfg.integer("gt_digit", -1);
    const long gt_rank = cfg.integer("gt_rank", 0);
    const long gt_size = cfg.integer("gt_size", 32);
    const double gt_threshold = cfg.num("gt_threshold", -1.0);
    cfg.reject_unknown();
    prepare_out_dir(out, force);
    cfg.write_resolved(out + "/config.resolved");

    const auto corpus = dataset::load_corpus(corpus_images, corpus_labels);
    dataset::make_idx_dataset(corpus, out, n_train, n_test, seed);
    if (gt_digit >= 0) {
        RealImage gt = dataset::render_digit(corpus, static_cast<int>(gt_digit),
                                             static_cast<int>(gt_rank),
                                             static_cast<int>(gt_size));
        if (gt_threshold >= 0.0)
            for (double& v : gt.v) v = v >= gt_threshold ? 1.0 : 0.0; // photomask-style binary
        ptyb::save_f64(out + "/gt_digit.ptyb", gt.v,
                       {static_cast<std::uint64_t>(gt.height), static_cast<std::uint64_t>(gt.width)});
        io::write_pgm(out + "/gt_digit.pgm", gt);
    }
    std::printf("make-dataset: %d train / %d test images from %d glyphs\n", n_train, n_test,
                corpus.count);
}

int run_command(const std::string& command, const std::vector<std::string>& config_files,
                const std::vector<std::string>& overrides, const std::string& out, bool force) {
    try {
        io::KeyValues kv;
        for (const auto& path : config_files) {
            const auto file_kv = io::read_kv(path);
            for (const auto& [k, v] : file_kv) kv[k] = v;
        }
        Config cfg(kv);
        for (const auto& ov : overrides) {
            const auto eq = ov.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + ov + "'");
            cfg.override_kv(ov.substr(0, eq), ov.substr(eq + 1));
        }
        if (command == "simulate")
            cmd_simulate(cfg, out, force);
        else if (command == "train-ae")
            cmd_train_ae(cfg, out, force);
        else if (command == "reconstruct")
            cmd_reconstruct(cfg, out, force);
        else if (command == "sweep")
            cmd_sweep(cfg, out, force);
        else if (command == "landscape")
            cmd_landscape(cfg, out, force);
        else if (command == "make-dataset")
            cmd_make_dataset(cfg, out, force);
        else
            throw ConfigError("unknown command '" + command + "'");
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 4;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

} // namespace ptycho::cli
