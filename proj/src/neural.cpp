#include "ptycho/neural.hpp"

#include "ptycho/io.hpp"
#include "ptycho/ptyb.hpp"
#include "ptycho/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ptycho::nn {

namespace {

constexpr int kChannels[5] = {1, 32, 64, 128, 256};
constexpr int kFlat = 2 * 2 * 256;

using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;

void check_input(const Tensor4& x, int h, int w, int c, const char* who) {
    if (x.h != h || x.w != w || x.c != c)
        throw DataError(std::string(who) + ": expected shape (*, " + std::to_string(h) + ", " +
                        std::to_string(w) + ", " + std::to_string(c) + ")");
}

} // namespace

Mat im2col(const Tensor4& x) {
    const int oh = x.h / kStride, ow = x.w / kStride;
    const int ci = x.c;
    Mat cols = Mat::Zero(static_cast<Eigen::Index>(x.n) * oh * ow, kKernel * kKernel * ci);
    for (int n = 0; n < x.n; ++n) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const Eigen::Index row = (static_cast<Eigen::Index>(n) * oh + oy) * ow + ox;
                double* dst = cols.data() + row * cols.cols();
                for (int ky = 0; ky < kKernel; ++ky) {
                    const int iy = oy * kStride + ky - kPad;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < kKernel; ++kx) {
                        const int ix = ox * kStride + kx - kPad;
                        if (ix < 0 || ix >= x.w) continue;
                        const double* src = x.v.data() +
                            ((static_cast<std::size_t>(n) * x.h + iy) * x.w + ix) * ci;
                        std::copy_n(src, ci, dst + (ky * kKernel + kx) * ci);
                    }
                }
            }
        }
    }
    return cols;
}

Tensor4 col2im(const Mat& cols, int n, int h, int w, int ci) {
    const int oh = h / kStride, ow = w / kStride;
    if (cols.rows() != static_cast<Eigen::Index>(n) * oh * ow ||
        cols.cols() != kKernel * kKernel * ci)
        throw DataError("col2im: shape mismatch");
    Tensor4 x(n, h, w, ci, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const Eigen::Index row = (static_cast<Eigen::Index>(i) * oh + oy) * ow + ox;
                const double* src = cols.data() + row * cols.cols();
                for (int ky = 0; ky < kKernel; ++ky) {
                    const int iy = oy * kStride + ky - kPad;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kKernel; ++kx) {
                        const int ix = ox * kStride + kx - kPad;
                        if (ix < 0 || ix >= w) continue;
                        double* dst = x.v.data() +
                            ((static_cast<std::size_t>(i) * h + iy) * w + ix) * ci;
                        const double* s = src + (ky * kKernel + kx) * ci;
                        for (int c = 0; c < ci; ++c) dst[c] += s[c];
                    }
                }
            }
        }
    }
    return x;
}

Tensor4 conv_forward(const Tensor4& x, const Mat& w, const Vec& b) {
    const int ci = x.c;
    if (w.rows() != kKernel * kKernel * ci) throw DataError("conv_forward: weight shape mismatch");
    const int co = static_cast<int>(w.cols());
    const int oh = x.h / kStride, ow = x.w / kStride;
    const Mat cols = im2col(x);
    Tensor4 y(x.n, oh, ow, co);
    MapMat ymat(y.v.data(), cols.rows(), co);
    ymat.noalias() = cols * w;
    if (b.size()) {
        if (b.size() != co) throw DataError("conv_forward: bias shape mismatch");
        ymat.rowwise() += b.transpose();
    }
    return y;
}

Tensor4 conv_backward_input(const Tensor4& dy, const Mat& w, int in_h, int in_w) {
    const int co = static_cast<int>(w.cols());
    if (dy.c != co) throw DataError("conv_backward_input: channel mismatch");
    const int ci = static_cast<int>(w.rows()) / (kKernel * kKernel);
    CMapMat dymat(dy.v.data(), static_cast<Eigen::Index>(dy.n) * dy.h * dy.w, co);
    Mat dcols(dymat.rows(), w.rows());
    dcols.noalias() = dymat * w.transpose();
    return col2im(dcols, dy.n, in_h, in_w, ci);
}

void conv_backward_weights(const Tensor4& x, const Tensor4& dy, Mat& dw, Vec& db) {
    const Mat cols = im2col(x);
    CMapMat dymat(dy.v.data(), static_cast<Eigen::Index>(dy.n) * dy.h * dy.w, dy.c);
    if (cols.rows() != dymat.rows()) throw DataError("conv_backward_weights: shape mismatch");
    dw.noalias() = cols.transpose() * dymat;
    db = dymat.colwise().sum().transpose();
}

void relu_inplace(Tensor4& t) {
    for (double& x : t.v) x = x > 0.0 ? x : 0.0;
}

void sigmoid_inplace(Tensor4& t) {
    for (double& x : t.v) x = 1.0 / (1.0 + std::exp(-x));
}

namespace {

Mat he_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, Rng rng) {
    const double limit = std::sqrt(6.0 / fan_in);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
    return m;
}

Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out, Rng rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
    return m;
}

} // namespace

Autoencoder Autoencoder::init(int latent_dim, bool irmae, std::uint64_t seed) {
    if (latent_dim < 1) throw ConfigError("Autoencoder: latent_dim must be >= 1");
    Autoencoder ae;
    ae.latent_dim = latent_dim;
    ae.irmae = irmae;
    Rng root(seed, "autoencoder_init");

    for (int i = 0; i < 4; ++i) {
        Conv c;
        const int ci = kChannels[i], co = kChannels[i + 1];
        c.w = he_uniform(kKernel * kKernel * ci, co, kKernel * kKernel * ci,
                         root.derive("enc_conv_w", i));
        c.b = Vec::Zero(co);
        ae.enc.push_back(std::move(c));
    }
    ae.enc_fc.w = he_uniform(kFlat, latent_dim, kFlat, root.derive("enc_fc_w"));
    ae.enc_fc.b = Vec::Zero(latent_dim);

    if (irmae) {
        // small init keeps the deep linear stack in the rich (rank-minimizing)
        // training regime; He-scale init is lazy here and never prunes rank
        const double limit = 1.0 / std::sqrt(static_cast<double>(latent_dim));
        for (int i = 0; i < 8; ++i) {
            Rng rng = root.derive("bottleneck_w", i);
            Mat w(latent_dim, latent_dim);
            for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = rng.uniform(-limit, limit);
            ae.bottleneck.push_back(std::move(w));
        }
    }

    ae.dec_fc.w = he_uniform(latent_dim, kFlat, latent_dim, root.derive("dec_fc_w"));
    ae.dec_fc.b = Vec::Zero(kFlat);

    // decoder layers in adjoint-conv orientation: layer i maps
    // (s, s, kChannels[4-i]) -> (2s, 2s, kChannels[3-i])
    for (int i = 0; i < 4; ++i) {
        Conv c;
        const int ci_small = kChannels[4 - i];
        const int co_big = kChannels[3 - i];
        const double fan_in = ci_small * 4.0; // taps reaching one output pixel
        if (i == 3)
            c.w = glorot_uniform(kKernel * kKernel * co_big, ci_small, fan_in, co_big * 4.0,
                                 root.derive("dec_conv_w", i));
        else
            c.w = he_uniform(kKernel * kKernel * co_big, ci_small, fan_in,
                             root.derive("dec_conv_w", i));
        c.b = Vec::Zero(co_big);
        ae.dec.push_back(std::move(c));
    }
    return ae;
}

Mat Autoencoder::bottleneck_product() const {
    Mat w = Mat::Identity(latent_dim, latent_dim);
    for (const Mat& wi : bottleneck) w = wi * w; // W = W8 ... W1
    return w;
}

AeGrads AeGrads::zeros_like(const Autoencoder& ae) {
    AeGrads g;
    for (const auto& c : ae.enc)
        g.enc.push_back({Mat::Zero(c.w.rows(), c.w.cols()), Vec::Zero(c.b.size())});
    g.enc_fc = {Mat::Zero(ae.enc_fc.w.rows(), ae.enc_fc.w.cols()), Vec::Zero(ae.enc_fc.b.size())};
    for (const auto& w : ae.bottleneck) g.bottleneck.push_back(Mat::Zero(w.rows(), w.cols()));
    g.dec_fc = {Mat::Zero(ae.dec_fc.w.rows(), ae.dec_fc.w.cols()), Vec::Zero(ae.dec_fc.b.size())};
    for (const auto& c : ae.dec)
        g.dec.push_back({Mat::Zero(c.w.rows(), c.w.cols()), Vec::Zero(c.b.size())});
    return g;
}

void AeGrads::setZero() {
    for (auto& c : enc) {
        c.w.setZero();
        c.b.setZero();
    }
    enc_fc.w.setZero();
    enc_fc.b.setZero();
    for (auto& w : bottleneck) w.setZero();
    dec_fc.w.setZero();
    dec_fc.b.setZero();
    for (auto& c : dec) {
        c.w.setZero();
        c.b.setZero();
    }
}

Mat encode(const Autoencoder& ae, const Tensor4& x, EncodeCache* cache) {
    check_input(x, 32, 32, 1, "encode");
    EncodeCache local;
    EncodeCache& cc = cache ? *cache : local;
    cc.acts.clear();
    cc.bn.clear();
    cc.acts.push_back(x);
    for (int i = 0; i < 4; ++i) {
        Tensor4 y = conv_forward(cc.acts.back(), ae.enc[i].w, ae.enc[i].b);
        relu_inplace(y);
        cc.acts.push_back(std::move(y));
    }
    const Tensor4& last = cc.acts.back();
    cc.flat = CMapMat(last.v.data(), last.n, kFlat);
    Mat out = cc.flat * ae.enc_fc.w;
    out.rowwise() += ae.enc_fc.b.transpose();
    cc.bn.push_back(std::move(out));
    for (const Mat& w : ae.bottleneck) cc.bn.push_back(cc.bn.back() * w.transpose());
    return cc.bn.back();
}

Tensor4 decode(const Autoencoder& ae, const Mat& h, DecodeCache* cache) {
    if (h.cols() != ae.latent_dim) throw DataError("decode: latent dimension mismatch");
    DecodeCache local;
    DecodeCache& cc = cache ? *cache : local;
    cc.h = h;
    Mat fc = h * ae.dec_fc.w;
    fc.rowwise() += ae.dec_fc.b.transpose();
    fc = fc.cwiseMax(0.0);
    cc.fc_post = fc;

    cc.acts.clear();
    Tensor4 t(static_cast<int>(h.rows()), 2, 2, 256);
    std::copy_n(cc.fc_post.data(), t.size(), t.v.data());
    cc.acts.push_back(std::move(t));
    for (int i = 0; i < 4; ++i) {
        const Tensor4& in = cc.acts.back();
        Tensor4 y = conv_backward_input(in, ae.dec[i].w, in.h * 2, in.w * 2);
        // bias on the upsampled output channels
        const Vec& b = ae.dec[i].b;
        const int co = static_cast<int>(b.size());
        MapMat ymat(y.v.data(), static_cast<Eigen::Index>(y.n) * y.h * y.w, co);
        ymat.rowwise() += b.transpose();
        if (i < 3)
            relu_inplace(y);
        else
            sigmoid_inplace(y);
        cc.acts.push_back(std::move(y));
    }
    return cc.acts.back();
}

void decode_backward_pre(const Autoencoder& ae, const DecodeCache& cache,
                         const Tensor4& d_pre_last, AeGrads* grads, Mat* d_h) {
    Tensor4 d_big = d_pre_last; // gradient w.r.t. pre-activation of layer i
    for (int i = 3; i >= 0; --i) {
        const Tensor4& input_small = cache.acts[i];
        if (grads) {
            conv_backward_weights(d_big, input_small, grads->dec[i].w, grads->dec[i].b);
            // conv_backward_weights computed db over the *small* tensor; the
            // transposed-conv bias lives on the big output instead.
            CMapMat dmat(d_big.v.data(), static_cast<Eigen::Index>(d_big.n) * d_big.h * d_big.w,
                         d_big.c);
            grads->dec[i].b = dmat.colwise().sum().transpose();
        }
        Tensor4 d_small = conv_forward(d_big, ae.dec[i].w, Vec());
        if (i > 0) {
            // chain previous layer's ReLU using its stored output
            const Tensor4& act = cache.acts[i];
            for (std::size_t k = 0; k < d_small.v.size(); ++k)
                if (act.v[k] <= 0.0) d_small.v[k] = 0.0;
        } else {
            // gradient w.r.t. fc_post (already post-ReLU values stored)
            for (std::size_t k = 0; k < d_small.v.size(); ++k)
                if (cache.acts[0].v[k] <= 0.0) d_small.v[k] = 0.0;
        }
        d_big = std::move(d_small);
    }

    CMapMat d_fc(d_big.v.data(), d_big.n, kFlat);
    if (grads) {
        grads->dec_fc.w.noalias() = cache.h.transpose() * d_fc;
        grads->dec_fc.b = d_fc.colwise().sum().transpose();
    }
    if (d_h) d_h->noalias() = d_fc * ae.dec_fc.w.transpose();
}

void decode_backward(const Autoencoder& ae, const DecodeCache& cache, const Tensor4& d_out,
                     AeGrads* grads, Mat* d_h) {
    const Tensor4& out = cache.acts.back();
    Tensor4 d_pre = d_out;
    for (std::size_t k = 0; k < d_pre.v.size(); ++k) {
        const double s = out.v[k];
        d_pre.v[k] *= s * (1.0 - s);
    }
    decode_backward_pre(ae, cache, d_pre, grads, d_h);
}

void encode_backward(const Autoencoder& ae, const EncodeCache& cache, const Mat& d_h,
                     AeGrads* grads) {
    Mat d = d_h;
    const int nb = static_cast<int>(ae.bottleneck.size());
    for (int i = nb - 1; i >= 0; --i) {
        if (grads) grads->bottleneck[i].noalias() = d.transpose() * cache.bn[i];
        d = d * ae.bottleneck[i];
    }
    if (grads) {
        grads->enc_fc.w.noalias() = cache.flat.transpose() * d;
        grads->enc_fc.b = d.colwise().sum().transpose();
    }
    Mat d_flat = d * ae.enc_fc.w.transpose();

    Tensor4 d_act(cache.acts[4].n, 2, 2, 256);
    std::copy_n(d_flat.data(), d_act.size(), d_act.v.data());
    for (int i = 3; i >= 0; --i) {
        // through layer i's ReLU
        const Tensor4& act = cache.acts[i + 1];
        for (std::size_t k = 0; k < d_act.v.size(); ++k)
            if (act.v[k] <= 0.0) d_act.v[k] = 0.0;
        if (grads) conv_backward_weights(cache.acts[i], d_act, grads->enc[i].w, grads->enc[i].b);
        if (i > 0) d_act = conv_backward_input(d_act, ae.enc[i].w, cache.acts[i].h, cache.acts[i].w);
    }
}

double bce_loss(const Tensor4& xhat, const Tensor4& x) {
    if (xhat.v.size() != x.v.size()) throw DataError("bce_loss: shape mismatch");
    constexpr double eps = 1e-7;
    double sum = 0.0;
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        const double p = std::clamp(xhat.v[i], eps, 1.0 - eps);
        sum -= x.v[i] * std::log(p) + (1.0 - x.v[i]) * std::log(1.0 - p);
    }
    return sum / static_cast<double>(x.v.size());
}

Tensor4 bce_grad(const Tensor4& xhat, const Tensor4& x) {
    if (xhat.v.size() != x.v.size()) throw DataError("bce_grad: shape mismatch");
    constexpr double eps = 1e-7;
    Tensor4 g = xhat;
    const double inv_m = 1.0 / static_cast<double>(x.v.size());
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        const double p = std::clamp(xhat.v[i], eps, 1.0 - eps);
        g.v[i] = (-x.v[i] / p + (1.0 - x.v[i]) / (1.0 - p)) * inv_m;
    }
    return g;
}

void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state, double lr) {
    if (!(lr > 0.0)) throw ConfigError("adam_step: lr must be > 0");
    if (params.size() != grads.size()) throw DataError("adam_step: group count mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t g = 0; g < params.size(); ++g) {
            state.m[g].assign(params[g].size(), 0.0);
            state.v[g].assign(params[g].size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw DataError("adam_step: state group mismatch");
    state.t += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t g = 0; g < params.size(); ++g) {
        if (params[g].size() != grads[g].size() || params[g].size() != state.m[g].size())
            throw DataError("adam_step: shape mismatch in group " + std::to_string(g));
        double* p = params[g].data();
        const double* gr = grads[g].data();
        double* m = state.m[g].data();
        double* v = state.v[g].data();
        const std::size_t n = params[g].size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gr[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gr[i] * gr[i];
            const double mhat = m[i] / b1t;
            const double vhat = v[i] / b2t;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

namespace {

template <class ConvT, class DenseT, class MatT>
void collect_spans(std::vector<ConvT>& enc, DenseT& enc_fc, std::vector<MatT>& bottleneck,
                   DenseT& dec_fc, std::vector<ConvT>& dec, auto&& add) {
    for (auto& c : enc) {
        add(c.w.data(), c.w.size());
        add(c.b.data(), c.b.size());
    }
    add(enc_fc.w.data(), enc_fc.w.size());
    add(enc_fc.b.data(), enc_fc.b.size());
    for (auto& w : bottleneck) add(w.data(), w.size());
    add(dec_fc.w.data(), dec_fc.w.size());
    add(dec_fc.b.data(), dec_fc.b.size());
    for (auto& c : dec) {
        add(c.w.data(), c.w.size());
        add(c.b.data(), c.b.size());
    }
}

} // namespace

std::vector<std::span<double>> param_spans(Autoencoder& ae) {
    std::vector<std::span<double>> out;
    collect_spans(ae.enc, ae.enc_fc, ae.bottleneck, ae.dec_fc, ae.dec,
                  [&](double* p, Eigen::Index n) { out.emplace_back(p, static_cast<std::size_t>(n)); });
    return out;
}

std::vector<std::span<const double>> grad_spans(const AeGrads& g) {
    std::vector<std::span<const double>> out;
    auto& gg = const_cast<AeGrads&>(g);
    collect_spans(gg.enc, gg.enc_fc, gg.bottleneck, gg.dec_fc, gg.dec,
                  [&](double* p, Eigen::Index n) { out.emplace_back(p, static_cast<std::size_t>(n)); });
    return out;
}

TrainResult train_autoencoder(Autoencoder& ae, const Tensor4& data, const TrainConfig& cfg) {
    if (data.n < 1) throw DataError("train_autoencoder: empty data");
    if (cfg.batch < 1) throw ConfigError("train_autoencoder: batch must be >= 1");
    TrainResult result;
    AdamState adam;
    AeGrads grads = AeGrads::zeros_like(ae);
    auto params = param_spans(ae);

    std::vector<int> order(data.n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        for (int i = data.n - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        double loss_sum = 0.0;
        long count = 0;
        for (int start = 0; start < data.n; start += cfg.batch) {
            const int bn = std::min(cfg.batch, data.n - start);
            Tensor4 batch(bn, 32, 32, 1);
            const std::size_t px = 32 * 32;
            for (int b = 0; b < bn; ++b)
                std::copy_n(data.v.begin() + static_cast<std::size_t>(order[start + b]) * px, px,
                            batch.v.begin() + static_cast<std::size_t>(b) * px);
            EncodeCache ec;
            DecodeCache dc;
            const Mat h = encode(ae, batch, &ec);
            const Tensor4 out = decode(ae, h, &dc);
            loss_sum += bce_loss(out, batch) * bn;
            count += bn;

            // fused sigmoid + BCE gradient w.r.t. the pre-sigmoid values
            Tensor4 d_pre = out;
            const double inv_m = 1.0 / static_cast<double>(out.v.size());
            for (std::size_t k = 0; k < d_pre.v.size(); ++k)
                d_pre.v[k] = (out.v[k] - batch.v[k]) * inv_m;

            Mat d_h;
            decode_backward_pre(ae, dc, d_pre, &grads, &d_h);
            encode_backward(ae, ec, d_h, &grads);
            adam_step(params, grad_spans(grads), adam, cfg.lr);
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(count));
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %d/%d  bce %.6f\n", epoch + 1, cfg.epochs,
                         result.epoch_loss.back());
    }
    return result;
}

namespace {

std::uint32_t read_be32(std::ifstream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("IDX: truncated header: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

} // namespace

Dataset idx_load(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw DataError("IDX: cannot open: " + images_path);
    if (read_be32(imgs, images_path) != 0x00000803u)
        throw DataError("IDX: bad image magic: " + images_path);
    const std::uint32_t n = read_be32(imgs, images_path);
    const std::uint32_t rows = read_be32(imgs, images_path);
    const std::uint32_t cols = read_be32(imgs, images_path);
    if (n < 1 || rows < 1 || cols < 1 || rows > 32 || cols > 32)
        throw DataError("IDX: unsupported image dimensions: " + images_path);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw DataError("IDX: cannot open: " + labels_path);
    if (read_be32(labs, labels_path) != 0x00000801u)
        throw DataError("IDX: bad label magic: " + labels_path);
    const std::uint32_t nl = read_be32(labs, labels_path);
    if (nl != n) throw DataError("IDX: image/label count mismatch");

    Dataset d;
    d.images = Tensor4(static_cast<int>(n), 32, 32, 1, 0.0);
    d.labels.resize(n);
    const int pad_y = (32 - static_cast<int>(rows)) / 2;
    const int pad_x = (32 - static_cast<int>(cols)) / 2;
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < n; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!imgs) throw DataError("IDX: truncated image data: " + images_path);
        for (std::uint32_t y = 0; y < rows; ++y)
            for (std::uint32_t x = 0; x < cols; ++x)
                d.images.at(static_cast<int>(i), pad_y + static_cast<int>(y),
                            pad_x + static_cast<int>(x), 0) =
                    buf[y * cols + x] / 255.0;
    }
    labs.read(reinterpret_cast<char*>(d.labels.data()), static_cast<std::streamsize>(n));
    if (!labs) throw DataError("IDX: truncated label data: " + labels_path);
    for (unsigned char l : d.labels)
        if (l > 9) throw DataError("IDX: label out of range: " + labels_path);
    return d;
}

Dataset filter_class(const Dataset& data, int label) {
    std::vector<int> keep;
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        if (data.labels[i] == label) keep.push_back(static_cast<int>(i));
    if (keep.empty()) throw DataError("filter_class: no samples with label " + std::to_string(label));
    Dataset out;
    out.images = Tensor4(static_cast<int>(keep.size()), 32, 32, 1);
    out.labels.reserve(keep.size());
    const std::size_t px = 32 * 32;
    for (std::size_t k = 0; k < keep.size(); ++k) {
        std::copy_n(data.images.v.begin() + static_cast<std::size_t>(keep[k]) * px, px,
                    out.images.v.begin() + k * px);
        out.labels.push_back(data.labels[keep[k]]);
    }
    return out;
}

Dataset take_first(const Dataset& data, int n) {
    if (n < 1 || n > data.images.n) throw DataError("take_first: bad count");
    Dataset out;
    out.images = Tensor4(n, 32, 32, 1);
    const std::size_t px = 32 * 32;
    std::copy_n(data.images.v.begin(), static_cast<std::size_t>(n) * px, out.images.v.begin());
    out.labels.assign(data.labels.begin(), data.labels.begin() + n);
    return out;
}

std::pair<int, Vec> effective_rank(const Mat& latents, double tau) {
    if (latents.rows() < 2) throw DataError("effective_rank: need at least 2 samples");
    const Eigen::Index n = latents.rows();
    const Eigen::RowVectorXd mean = latents.colwise().mean();
    Mat centered = latents.rowwise() - mean;
    Mat cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    Vec sv = es.eigenvalues().reverse(); // descending
    for (Eigen::Index i = 0; i < sv.size(); ++i) sv[i] = std::max(sv[i], 0.0);
    // rounding floor so a numerically zero covariance reports rank 0
    const double scale = latents.squaredNorm() / static_cast<double>(n);
    const double floor = 1e-12 * std::max(scale, 1e-300);
    int rank = 0;
    if (sv.size() > 0 && sv[0] > floor) {
        const double thresh = tau * sv[0];
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv[i] > thresh) ++rank;
    }
    return {rank, sv};
}

std::pair<int, Vec> matrix_rank(const Mat& m, double tau) {
    Eigen::JacobiSVD<Mat> svd(m);
    Vec sv = svd.singularValues();
    int rank = 0;
    if (sv.size() > 0 && sv[0] > 0.0) {
        const double thresh = tau * sv[0];
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv[i] > thresh) ++rank;
    }
    return {rank, sv};
}

Mat encode_all(const Autoencoder& ae, const Tensor4& data, int batch) {
    Mat out(data.n, ae.latent_dim);
    const std::size_t px = 32 * 32;
    for (int start = 0; start < data.n; start += batch) {
        const int bn = std::min(batch, data.n - start);
        Tensor4 b(bn, 32, 32, 1);
        std::copy_n(data.v.begin() + static_cast<std::size_t>(start) * px,
                    static_cast<std::size_t>(bn) * px, b.v.begin());
        out.middleRows(start, bn) = encode(ae, b);
    }
    return out;
}

Vec latent_mean(const Autoencoder& ae, const Tensor4& data) {
    if (data.n < 1) throw DataError("latent_mean: empty data");
    return encode_all(ae, data).colwise().mean().transpose();
}

namespace {

void save_param(const std::string& dir, std::vector<std::string>& manifest,
                const std::string& name, const double* data, std::size_t n,
                const std::vector<std::uint64_t>& shape) {
    std::vector<double> buf(data, data + n);
    const std::string file = name + ".ptyb";
    ptyb::save_f64(dir + "/" + file, buf, shape);
    std::ostringstream line;
    line << name << " ";
    for (std::size_t i = 0; i < shape.size(); ++i) line << (i ? "x" : "") << shape[i];
    line << " f64 " << std::hex << fnv1a64(buf.data(), n * sizeof(double));
    manifest.push_back(line.str());
}

std::vector<double> load_param(const std::string& dir, const std::string& name,
                               std::size_t expect_n) {
    const auto a = ptyb::load(dir + "/" + name + ".ptyb");
    if (a.dtype != ptyb::DType::f64 || a.f64.size() != expect_n)
        throw DataError("weights: bad parameter " + name);
    return a.f64;
}

} // namespace

void Autoencoder::save(const std::string& dir) const {
    io::ensure_dir(dir);
    std::vector<std::string> manifest;
    auto dump = [&](const std::string& name, const Mat& m) {
        save_param(dir, manifest, name, m.data(), static_cast<std::size_t>(m.size()),
                   {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())});
    };
    auto dump_vec = [&](const std::string& name, const Vec& v) {
        save_param(dir, manifest, name, v.data(), static_cast<std::size_t>(v.size()),
                   {static_cast<std::uint64_t>(v.size())});
    };
    for (std::size_t i = 0; i < enc.size(); ++i) {
        dump("enc_conv" + std::to_string(i + 1) + "_w", enc[i].w);
        dump_vec("enc_conv" + std::to_string(i + 1) + "_b", enc[i].b);
    }
    dump("enc_fc_w", enc_fc.w);
    dump_vec("enc_fc_b", enc_fc.b);
    for (std::size_t i = 0; i < bottleneck.size(); ++i)
        dump("bottleneck_w" + std::to_string(i + 1), bottleneck[i]);
    dump("dec_fc_w", dec_fc.w);
    dump_vec("dec_fc_b", dec_fc.b);
    for (std::size_t i = 0; i < dec.size(); ++i) {
        dump("dec_conv" + std::to_string(i + 1) + "_w", dec[i].w);
        dump_vec("dec_conv" + std::to_string(i + 1) + "_b", dec[i].b);
    }
    std::ostringstream header;
    header << "latent_dim=" << latent_dim << "\n";
    header << "irmae=" << (irmae ? "true" : "false") << "\n";
    io::write_text(dir + "/params.txt", header.str());
    std::ostringstream mf;
    mf << "# name shape dtype fnv1a64\n";
    for (const auto& line : manifest) mf << line << "\n";
    io::write_text(dir + "/manifest.txt", mf.str());
}

Autoencoder Autoencoder::load(const std::string& dir) {
    const auto kv = io::read_kv(dir + "/params.txt");
    const int latent = static_cast<int>(io::parse_long(kv.at("latent_dim"), "latent_dim"));
    const bool irmae = io::parse_bool(kv.at("irmae"), "irmae");
    Autoencoder ae = Autoencoder::init(latent, irmae, 0);
    auto fill = [&](const std::string& name, Mat& m) {
        const auto buf = load_param(dir, name, static_cast<std::size_t>(m.size()));
        std::copy(buf.begin(), buf.end(), m.data());
    };
    auto fill_vec = [&](const std::string& name, Vec& v) {
        const auto buf = load_param(dir, name, static_cast<std::size_t>(v.size()));
        std::copy(buf.begin(), buf.end(), v.data());
    };
    for (std::size_t i = 0; i < ae.enc.size(); ++i) {
        fill("enc_conv" + std::to_string(i + 1) + "_w", ae.enc[i].w);
        fill_vec("enc_conv" + std::to_string(i + 1) + "_b", ae.enc[i].b);
    }
    fill("enc_fc_w", ae.enc_fc.w);
    fill_vec("enc_fc_b", ae.enc_fc.b);
    for (std::size_t i = 0; i < ae.bottleneck.size(); ++i)
        fill("bottleneck_w" + std::to_string(i + 1), ae.bottleneck[i]);
    fill("dec_fc_w", ae.dec_fc.w);
    fill_vec("dec_fc_b", ae.dec_fc.b);
    for (std::size_t i = 0; i < ae.dec.size(); ++i) {
        fill("dec_conv" + std::to_string(i + 1) + "_w", ae.dec[i].w);
        fill_vec("dec_conv" + std::to_string(i + 1) + "_b", ae.dec[i].b);
    }
    return ae;
}

} // namespace ptycho::nn
