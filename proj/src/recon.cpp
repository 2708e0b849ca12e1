#include "ptycho/recon.hpp"

#include "ptycho/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ptycho::recon {

LossKind parse_loss_kind(const std::string& s) {
    if (s == "mixed") return LossKind::MixedPoissonGaussian;
    if (s == "poisson") return LossKind::PoissonOnly;
    throw ConfigError("unknown loss_kind '" + s + "' (expected mixed|poisson)");
}

Mode parse_mode(const std::string& s) {
    if (s == "conventional") return Mode::Conventional;
    if (s == "latent") return Mode::Latent;
    throw ConfigError("unknown mode '" + s + "' (expected conventional|latent)");
}

std::string to_string(LossKind k) {
    return k == LossKind::MixedPoissonGaussian ? "mixed" : "poisson";
}
std::string to_string(Mode m) { return m == Mode::Conventional ? "conventional" : "latent"; }

namespace {
constexpr double kVarFloor = 1e-12;
}

double mixed_loss(const RealImage& I, const RealImage& X, const RealImage& noise_var,
                  RealImage* grad_I) {
    if (!I.same_shape(X) || !I.same_shape(noise_var)) throw DataError("mixed_loss: shape mismatch");
    if (grad_I && !grad_I->same_shape(I)) *grad_I = RealImage(I.width, I.height);
    double loss = 0.0;
    for (std::size_t k = 0; k < I.v.size(); ++k) {
        const double v = std::max(I.v[k] + noise_var.v[k], kVarFloor);
        const double r = X.v[k] - I.v[k];
        loss += std::log(v) + r * r / v;
        if (grad_I) grad_I->v[k] = 1.0 / v + 2.0 * (I.v[k] - X.v[k]) / v - r * r / (v * v);
    }
    return loss;
}

double poisson_loss(const RealImage& I, const RealImage& X, RealImage* grad_I) {
    if (!I.same_shape(X)) throw DataError("poisson_loss: shape mismatch");
    if (grad_I && !grad_I->same_shape(I)) *grad_I = RealImage(I.width, I.height);
    double loss = 0.0;
    for (std::size_t k = 0; k < I.v.size(); ++k) {
        if (I.v[k] < 0.0) throw DataError("poisson_loss: negative predicted intensity");
        const double x = std::max(X.v[k], 0.0); // readout noise can push X below 0
        const double si = std::sqrt(I.v[k]);
        const double sx = std::sqrt(x);
        const double d = sx - si;
        loss += d * d;
        if (grad_I) grad_I->v[k] = 1.0 - sx / std::max(si, 1e-12);
    }
    return loss;
}

double lr_schedule(double alpha, int epoch) {
    if (!(alpha > 0.0)) throw ConfigError("lr_schedule: alpha must be > 0");
    if (epoch < 0) throw ConfigError("lr_schedule: epoch must be >= 0");
    return alpha * std::pow(0.97, static_cast<double>(epoch));
}

void Pipeline::finalize() {
    grid.validate();
    if (!(probe.grid == grid)) throw DataError("Pipeline: probe grid mismatch");
    if (!(plan.grid == grid)) throw DataError("Pipeline: plan grid mismatch");
    if (positions_px.empty()) throw DataError("Pipeline: no scan positions");
    if (obj_px < 1) throw ConfigError("Pipeline: obj_px must be >= 1");
    if (canvas_nx == 0) canvas_nx = sim::canvas_extent(grid.nx, positions_px, 0);
    if (canvas_ny == 0) canvas_ny = sim::canvas_extent(grid.ny, positions_px, 1);
    if (obj_px > canvas_nx || obj_px > canvas_ny)
        throw DataError("Pipeline: object region exceeds canvas");
    if (noise_var.width != grid.nx || noise_var.height != grid.ny)
        throw DataError("Pipeline: noise_var shape mismatch");
    for (std::size_t j = 0; j < positions_px.size(); ++j) frame_offset(j); // bounds check
}

std::array<int, 2> Pipeline::frame_offset(std::size_t j) const {
    return sim::window_offset(grid, canvas_nx, canvas_ny, positions_px[j]);
}

std::array<int, 2> Pipeline::object_offset() const {
    return {(canvas_nx - obj_px) / 2, (canvas_ny - obj_px) / 2};
}

Pipeline make_pipeline(const sim::DiffractionStack& stack, const ComplexField& probe,
                       int obj_px, double canvas_fill, const nn::Autoencoder* decoder) {
    Pipeline pipe;
    pipe.grid = stack.grid;
    pipe.probe = probe;
    pipe.plan = optics::make_plan(stack.grid, stack.z);
    pipe.positions_px = stack.positions_px;
    pipe.obj_px = obj_px;
    pipe.canvas_fill = canvas_fill;
    pipe.noise_var = stack.noise_var;
    pipe.decoder = decoder;
    pipe.finalize();
    return pipe;
}

std::size_t ReconstructionState::free_parameter_count() const {
    std::size_t n = 0;
    if (mode == Mode::Latent)
        n += static_cast<std::size_t>(h.size());
    else
        n += 2 * object.size();
    if (probe_trainable) n += 2 * probe.v.size();
    return n;
}

namespace {

RealImage decode_object(const nn::Autoencoder& ae, const nn::Vec& h, nn::DecodeCache* cache) {
    nn::Mat hm(1, h.size());
    hm.row(0) = h.transpose();
    const nn::Tensor4 out = nn::decode(ae, hm, cache);
    RealImage img(out.w, out.h);
    std::copy(out.v.begin(), out.v.end(), img.v.begin());
    return img;
}

} // namespace

ComplexField build_canvas(const Pipeline& pipe, const ReconstructionState& state) {
    Grid cgrid(pipe.canvas_nx, pipe.canvas_ny, pipe.grid.pitch, pipe.grid.wavelength);
    ComplexField canvas(cgrid, cplx(pipe.canvas_fill, 0.0));
    const auto off = pipe.object_offset();
    if (state.mode == Mode::Latent) {
        if (!pipe.decoder) throw DataError("Pipeline: latent mode requires a decoder");
        nn::DecodeCache cache;
        const RealImage dec = decode_object(*pipe.decoder, state.h, &cache);
        const RealImage obj = field::resize(dec, pipe.obj_px, pipe.obj_px);
        return field::embed_patch(canvas, obj, off[0], off[1], false);
    }
    if (static_cast<int>(state.object.size()) != pipe.obj_px * pipe.obj_px)
        throw DataError("state object size mismatch");
    for (int y = 0; y < pipe.obj_px; ++y)
        for (int x = 0; x < pipe.obj_px; ++x)
            canvas.at(off[0] + x, off[1] + y) = state.object[static_cast<std::size_t>(y) * pipe.obj_px + x];
    return canvas;
}

RealImage forward_predict(const Pipeline& pipe, const ReconstructionState& state,
                          std::size_t frame_index) {
    const ComplexField canvas = build_canvas(pipe, state);
    const auto off = pipe.frame_offset(frame_index);
    const ComplexField psi = optics::exit_wave(state.probe, canvas, off[0], off[1]);
    return optics::intensity(optics::propagate(psi, pipe.plan));
}

namespace {

double frame_loss(LossKind kind, const RealImage& I, const RealImage& X, const RealImage& var,
                  RealImage* grad) {
    return kind == LossKind::MixedPoissonGaussian ? mixed_loss(I, X, var, grad)
                                                  : poisson_loss(I, X, grad);
}

} // namespace

FrameGradient gradient(const Pipeline& pipe, const ReconstructionState& state,
                       std::size_t frame_index, LossKind kind, const RealImage& measured,
                       bool want_probe_grad) {
    FrameGradient out;
    const auto obj_off = pipe.object_offset();
    const auto off = pipe.frame_offset(frame_index);

    // forward with retained intermediates
    nn::DecodeCache dec_cache;
    RealImage decoded;              // 32x32 decoder output (latent mode)
    ComplexField canvas = [&] {
        Grid cgrid(pipe.canvas_nx, pipe.canvas_ny, pipe.grid.pitch, pipe.grid.wavelength);
        ComplexField cv(cgrid, cplx(pipe.canvas_fill, 0.0));
        if (state.mode == Mode::Latent) {
            if (!pipe.decoder) throw DataError("Pipeline: latent mode requires a decoder");
            decoded = decode_object(*pipe.decoder, state.h, &dec_cache);
            const RealImage obj = field::resize(decoded, pipe.obj_px, pipe.obj_px);
            return field::embed_patch(cv, obj, obj_off[0], obj_off[1], false);
        }
        if (static_cast<int>(state.object.size()) != pipe.obj_px * pipe.obj_px)
            throw DataError("state object size mismatch");
        for (int y = 0; y < pipe.obj_px; ++y)
            for (int x = 0; x < pipe.obj_px; ++x)
                cv.at(obj_off[0] + x, obj_off[1] + y) =
                    state.object[static_cast<std::size_t>(y) * pipe.obj_px + x];
        return cv;
    }();

    const ComplexField patch = field::extract_patch(canvas, off[0], off[1], pipe.grid.nx, pipe.grid.ny);
    ComplexField psi = state.probe;
    for (std::size_t i = 0; i < psi.v.size(); ++i) psi.v[i] *= patch.v[i];
    const ComplexField psi_det = optics::propagate(psi, pipe.plan);
    const RealImage I = optics::intensity(psi_det);

    RealImage g_I(pipe.grid.nx, pipe.grid.ny);
    out.loss = frame_loss(kind, I, measured, pipe.noise_var, &g_I);

    // intensity adjoint (Wirtinger, reported as 2 dL/d conj(psi))
    ComplexField g_psi_det = psi_det;
    for (std::size_t i = 0; i < g_psi_det.v.size(); ++i) g_psi_det.v[i] *= 2.0 * g_I.v[i];

    // propagation adjoint: conjugated transfer function
    const ComplexField g_psi = optics::propagate_adjoint(g_psi_det, pipe.plan);

    // exit-wave adjoints
    ComplexField g_patch = g_psi;
    for (std::size_t i = 0; i < g_patch.v.size(); ++i)
        g_patch.v[i] *= std::conj(state.probe.v[i]);
    if (want_probe_grad) {
        out.d_probe = g_psi;
        for (std::size_t i = 0; i < out.d_probe.v.size(); ++i)
            out.d_probe.v[i] *= std::conj(patch.v[i]);
    }

    // scatter the window gradient into the canvas, then read the object region
    const int ox0 = std::max(obj_off[0], off[0]);
    const int oy0 = std::max(obj_off[1], off[1]);
    const int ox1 = std::min(obj_off[0] + pipe.obj_px, off[0] + pipe.grid.nx);
    const int oy1 = std::min(obj_off[1] + pipe.obj_px, off[1] + pipe.grid.ny);

    if (state.mode == Mode::Latent) {
        RealImage g_obj(pipe.obj_px, pipe.obj_px, 0.0);
        for (int cy = oy0; cy < oy1; ++cy)
            for (int cx = ox0; cx < ox1; ++cx)
                g_obj.at(cx - obj_off[0], cy - obj_off[1]) =
                    std::real(g_patch.at(cx - off[0], cy - off[1]));
        const RealImage g_dec = field::resize_adjoint(g_obj, 32, 32);
        nn::Tensor4 d_out(1, 32, 32, 1);
        std::copy(g_dec.v.begin(), g_dec.v.end(), d_out.v.begin());
        nn::Mat d_h;
        nn::decode_backward(*pipe.decoder, dec_cache, d_out, nullptr, &d_h);
        out.d_h = d_h.row(0).transpose();
    } else {
        out.d_object.assign(state.object.size(), cplx(0.0, 0.0));
        for (int cy = oy0; cy < oy1; ++cy)
            for (int cx = ox0; cx < ox1; ++cx)
                out.d_object[static_cast<std::size_t>(cy - obj_off[1]) * pipe.obj_px +
                             (cx - obj_off[0])] = g_patch.at(cx - off[0], cy - off[1]);
    }
    return out;
}

double total_stack_loss(const Pipeline& pipe, const ReconstructionState& state,
                        const sim::DiffractionStack& stack, LossKind kind) {
    if (stack.count() != pipe.positions_px.size())
        throw DataError("total_stack_loss: stack/pipeline frame count mismatch");
    const ComplexField canvas = build_canvas(pipe, state);
    double total = 0.0;
    for (std::size_t j = 0; j < stack.count(); ++j) {
        const auto off = pipe.frame_offset(j);
        const ComplexField psi = optics::exit_wave(state.probe, canvas, off[0], off[1]);
        const RealImage I = optics::intensity(optics::propagate(psi, pipe.plan));
        total += frame_loss(kind, I, stack.frames[j], pipe.noise_var, nullptr);
    }
    return total;
}

RealImage object_amplitude(const Pipeline& pipe, const ReconstructionState& state) {
    if (state.mode == Mode::Latent) {
        nn::DecodeCache cache;
        const RealImage dec = decode_object(*pipe.decoder, state.h, &cache);
        return field::resize(dec, pipe.obj_px, pipe.obj_px);
    }
    RealImage img(pipe.obj_px, pipe.obj_px);
    for (std::size_t i = 0; i < state.object.size(); ++i) img.v[i] = std::abs(state.object[i]);
    return img;
}

namespace {

ReconstructionState init_state(const Pipeline& pipe, const ReconConfig& cfg, std::uint64_t seed) {
    ReconstructionState st;
    st.mode = cfg.mode;
    st.probe = pipe.probe;
    st.probe_trainable = cfg.train_probe;
    if (cfg.mode == Mode::Latent) {
        if (!pipe.decoder) throw DataError("reconstruct: latent mode requires decoder weights");
        const int d = pipe.decoder->latent_dim;
        if (cfg.latent_init) {
            if (cfg.latent_init->size() != d) throw DataError("latent_init: dimension mismatch");
            st.h = *cfg.latent_init;
        } else if (cfg.init == "mean") {
            if (!cfg.latent_mean) throw DataError("init=mean requires a latent mean vector");
            if (cfg.latent_mean->size() != d) throw DataError("latent_mean: dimension mismatch");
            st.h = *cfg.latent_mean;
        } else if (cfg.init == "zeros") {
            st.h = nn::Vec::Zero(d);
        } else if (cfg.init == "gauss") {
            Rng rng(seed, "latent_init");
            st.h = nn::Vec::Zero(d);
            for (int i = 0; i < d; ++i) st.h[i] = rng.normal();
        } else {
            throw ConfigError("unknown latent init '" + cfg.init + "' (mean|zeros|gauss)");
        }
    } else {
        const std::size_t n = static_cast<std::size_t>(pipe.obj_px) * pipe.obj_px;
        if (cfg.init == "flat" || cfg.init == "mean") {
            st.object.assign(n, cplx(0.5, 0.0));
        } else if (cfg.init == "zeros") {
            st.object.assign(n, cplx(0.0, 0.0));
        } else if (cfg.init == "gauss") {
            Rng rng(seed, "object_init");
            st.object.resize(n);
            for (auto& o : st.object) o = cplx(0.5 + 0.1 * rng.normal(), 0.1 * rng.normal());
        } else {
            throw ConfigError("unknown conventional init '" + cfg.init + "' (flat|zeros|gauss)");
        }
    }
    return st;
}

ReconResult run_once(const Pipeline& pipe, const sim::DiffractionStack& stack,
                     const ReconConfig& cfg, std::uint64_t seed) {
    ReconResult result;
    result.state = init_state(pipe, cfg, seed);
    ReconstructionState& st = result.state;

    const std::size_t J = stack.count();
    std::vector<int> order(J);
    std::iota(order.begin(), order.end(), 0);

    long step = 0;
    const int batch = std::max(1, cfg.batch_frames);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        st.epoch = epoch;
        const double lr = lr_schedule(cfg.alpha, epoch);
        Rng shuffle_rng(seed, "order", static_cast<std::uint64_t>(epoch));
        for (std::size_t i = J - 1; i > 0; --i) {
            const std::size_t j = shuffle_rng.uniform_int(i + 1);
            std::swap(order[i], order[j]);
        }
        for (std::size_t pos = 0; pos < J; pos += batch) {
            const std::size_t bend = std::min(J, pos + static_cast<std::size_t>(batch));
            nn::Vec g_h;
            std::vector<cplx> g_obj;
            ComplexField g_probe;
            double loss = 0.0;
            int last_frame = order[pos];
            for (std::size_t bi = pos; bi < bend; ++bi) {
                const int j = order[bi];
                last_frame = j;
                FrameGradient g = gradient(pipe, st, static_cast<std::size_t>(j), cfg.loss_kind,
                                           stack.frames[j], cfg.train_probe);
                loss += g.loss;
                if (st.mode == Mode::Latent) {
                    if (g_h.size() == 0)
                        g_h = std::move(g.d_h);
                    else
                        g_h += g.d_h;
                } else {
                    if (g_obj.empty())
                        g_obj = std::move(g.d_object);
                    else
                        for (std::size_t k = 0; k < g_obj.size(); ++k) g_obj[k] += g.d_object[k];
                }
                if (cfg.train_probe) {
                    if (g_probe.v.empty())
                        g_probe = std::move(g.d_probe);
                    else
                        for (std::size_t k = 0; k < g_probe.v.size(); ++k)
                            g_probe.v[k] += g.d_probe.v[k];
                }
            }
            if (!std::isfinite(loss))
                throw DivergenceError("non-finite loss at step " + std::to_string(step) +
                                      " (epoch " + std::to_string(epoch) + ", frame " +
                                      std::to_string(last_frame) + ")");
            if (cfg.l2 > 0.0 && st.mode == Mode::Conventional)
                for (std::size_t k = 0; k < g_obj.size(); ++k)
                    g_obj[k] += 2.0 * cfg.l2 * st.object[k];

            std::vector<std::span<double>> params;
            std::vector<std::span<const double>> grads;
            if (st.mode == Mode::Latent) {
                params.emplace_back(st.h.data(), static_cast<std::size_t>(st.h.size()));
                grads.emplace_back(g_h.data(), static_cast<std::size_t>(g_h.size()));
            } else {
                params.emplace_back(reinterpret_cast<double*>(st.object.data()), 2 * st.object.size());
                grads.emplace_back(reinterpret_cast<const double*>(g_obj.data()), 2 * g_obj.size());
            }
            if (cfg.train_probe) {
                params.emplace_back(reinterpret_cast<double*>(st.probe.v.data()), 2 * st.probe.v.size());
                grads.emplace_back(reinterpret_cast<const double*>(g_probe.v.data()),
                                   2 * g_probe.v.size());
            }
            nn::adam_step(params, grads, st.adam, lr);
            if (cfg.amp_clamp && st.mode == Mode::Conventional)
                for (auto& o : st.object) {
                    const double a = std::abs(o);
                    if (a > 1.0) o /= a;
                }
            result.history.push_back({step, epoch, last_frame, loss});
            ++step;
        }
    }
    result.final_loss = total_stack_loss(pipe, st, stack, cfg.loss_kind);
    result.object_image = object_amplitude(pipe, st);
    return result;
}

} // namespace

ReconResult reconstruct(const Pipeline& pipe, const sim::DiffractionStack& stack,
                        const ReconConfig& cfg) {
    if (stack.count() != pipe.positions_px.size())
        throw DataError("reconstruct: stack/pipeline frame count mismatch");
    if (cfg.epochs < 0) throw ConfigError("reconstruct: epochs must be >= 0");
    if (cfg.restarts < 1) throw ConfigError("reconstruct: restarts must be >= 1");

    ReconResult best;
    bool have = false;
    for (int r = 0; r < cfg.restarts; ++r) {
        const std::uint64_t seed = r == 0 ? cfg.seed : Rng(cfg.seed, "restart", r).next_u64();
        ReconResult res = run_once(pipe, stack, cfg, seed);
        if (!have || res.final_loss < best.final_loss) {
            best = std::move(res);
            have = true;
        }
    }
    return best;
}

} // namespace ptycho::recon
