#pragma once

#include "ptycho/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ptycho::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Dense 4D tensor in NHWC layout.
struct Tensor4 {
    int n = 0, h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n_, int h_, int w_, int c_, double fill = 0.0)
        : n(n_), h(h_), w(w_), c(c_),
          v(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill) {
        if (n_ < 1 || h_ < 1 || w_ < 1 || c_ < 1) throw ConfigError("Tensor4: sizes must be >= 1");
    }

    double& at(int i, int y, int x, int k) {
        return v[((static_cast<std::size_t>(i) * h + y) * w + x) * c + k];
    }
    double at(int i, int y, int x, int k) const {
        return v[((static_cast<std::size_t>(i) * h + y) * w + x) * c + k];
    }
    std::size_t size() const { return v.size(); }
};

// 4x4 kernel, stride 2, SAME padding (one pixel each side for even inputs):
// output spatial size is exactly half the input.
constexpr int kKernel = 4;
constexpr int kStride = 2;
constexpr int kPad = 1;

Mat im2col(const Tensor4& x);                                   // (n*oh*ow, 16*ci)
Tensor4 col2im(const Mat& cols, int n, int h, int w, int ci);   // scatter-add adjoint

/// Strided convolution y = conv(x) * W + b with W of shape (16*ci, co).
Tensor4 conv_forward(const Tensor4& x, const Mat& w, const Vec& b);
/// Input gradient of conv_forward (also the forward map of a transposed conv).
Tensor4 conv_backward_input(const Tensor4& dy, const Mat& w, int in_h, int in_w);
/// Parameter gradients of conv_forward.
void conv_backward_weights(const Tensor4& x, const Tensor4& dy, Mat& dw, Vec& db);

void relu_inplace(Tensor4& t);
void sigmoid_inplace(Tensor4& t);

/// Convolutional layer parameters (shared by conv and transposed-conv roles).
struct Conv {
    Mat w; // (16*ci, co) in conv orientation
    Vec b;
};

struct Dense {
    Mat w; // (in, out)
    Vec b; // (out)
};

// Autoencoder per the fixed architecture: four stride-2 convs
// (1->32->64->128->256, ReLU), flatten 2x2x256, linear to the latent size,
// optional stack of eight square linear maps (no bias), then the mirrored
// decoder ending in a sigmoid.
struct Autoencoder {
    int latent_dim = 128;
    bool irmae = true;
    std::vector<Conv> enc;        // 4 layers
    Dense enc_fc;                 // 1024 -> latent
    std::vector<Mat> bottleneck;  // 8 x (latent x latent), empty when !irmae
    Dense dec_fc;                 // latent -> 1024
    std::vector<Conv> dec;        // 4 layers in adjoint-conv orientation

    static Autoencoder init(int latent_dim, bool irmae, std::uint64_t seed);

    /// W = W8 * ... * W1 (column convention); identity when !irmae.
    Mat bottleneck_product() const;

    void save(const std::string& dir) const;
    static Autoencoder load(const std::string& dir);
};

struct AeGrads {
    std::vector<Conv> enc;
    Dense enc_fc;
    std::vector<Mat> bottleneck;
    Dense dec_fc;
    std::vector<Conv> dec;

    static AeGrads zeros_like(const Autoencoder& ae);
    void setZero();
};

struct EncodeCache {
    std::vector<Tensor4> acts; // acts[0] = input, acts[i+1] = post-ReLU conv output
    Mat flat;                  // (n, 1024)
    std::vector<Mat> bn;       // bn[0] = enc_fc output, bn[i+1] = bn[i] * Wi^T
};

struct DecodeCache {
    Mat h;
    Mat fc_post;               // (n, 1024) post-ReLU
    std::vector<Tensor4> acts; // acts[0] = reshaped fc_post, then per-layer outputs
};

/// Latent codes for a batch; x must be (n, 32, 32, 1) in [0, 1].
Mat encode(const Autoencoder& ae, const Tensor4& x, EncodeCache* cache = nullptr);
/// Decoded images in (0, 1); h must be (n, latent_dim).
Tensor4 decode(const Autoencoder& ae, const Mat& h, DecodeCache* cache = nullptr);

/// Backward through the decoder given the gradient w.r.t. the *pre-sigmoid*
/// values of the last layer. Fills grads when non-null, d_h when non-null.
void decode_backward_pre(const Autoencoder& ae, const DecodeCache& cache,
                         const Tensor4& d_pre_last, AeGrads* grads, Mat* d_h);
/// Backward given the gradient w.r.t. the decoded output (chains the sigmoid).
void decode_backward(const Autoencoder& ae, const DecodeCache& cache,
                     const Tensor4& d_out, AeGrads* grads, Mat* d_h);
void encode_backward(const Autoencoder& ae, const EncodeCache& cache, const Mat& d_h,
                     AeGrads* grads);

/// Mean over all elements of -(x ln xhat + (1-x) ln(1-xhat)); xhat clamped
/// to [1e-7, 1-1e-7].
double bce_loss(const Tensor4& xhat, const Tensor4& x);
Tensor4 bce_grad(const Tensor4& xhat, const Tensor4& x);

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;
    std::vector<std::vector<double>> m, v;
};

/// Standard Adam update with bias correction; state shapes are captured on
/// first use and must match thereafter.
void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state, double lr);

std::vector<std::span<double>> param_spans(Autoencoder& ae);
std::vector<std::span<const double>> grad_spans(const AeGrads& g);

struct TrainConfig {
    int epochs = 50;
    int batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    bool verbose = false;
};

struct TrainResult {
    std::vector<double> epoch_loss;
};

/// Minibatch Adam on BCE(x, decode(encode(x))), reshuffled each epoch.
TrainResult train_autoencoder(Autoencoder& ae, const Tensor4& data, const TrainConfig& cfg);

struct Dataset {
    Tensor4 images; // (n, 32, 32, 1), zero-padded from the stored size, in [0,1]
    std::vector<std::uint8_t> labels;
};

/// IDX reader (big-endian, magic 0x00000803 images / 0x00000801 labels).
Dataset idx_load(const std::string& images_path, const std::string& labels_path);
Dataset filter_class(const Dataset& data, int label);
Dataset take_first(const Dataset& data, int n);

/// Singular values of the latent covariance (descending) and the count above
/// tau * sigma_1.
std::pair<int, Vec> effective_rank(const Mat& latents, double tau = 0.01);

/// Numerical rank of a general matrix with the same tau rule.
std::pair<int, Vec> matrix_rank(const Mat& m, double tau = 0.01);

/// Mean latent over a dataset (encoded in batches).
Vec latent_mean(const Autoencoder& ae, const Tensor4& data);

/// Encode a dataset in batches; rows are per-sample latents.
Mat encode_all(const Autoencoder& ae, const Tensor4& data, int batch = 256);

} // namespace ptycho::nn
