#include "ptycho/dataset.hpp"

#include "ptycho/field.hpp"
#include "ptycho/io.hpp"
#include "ptycho/ptyb.hpp"
#include "ptycho/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ptycho::dataset {

GlyphCorpus load_corpus(const std::string& images_ptyb, const std::string& labels_ptyb) {
    const auto imgs = ptyb::load(images_ptyb);
    const auto labs = ptyb::load(labels_ptyb);
    if (imgs.dtype != ptyb::DType::u8 || imgs.shape.size() != 3 || imgs.shape[1] != 8 ||
        imgs.shape[2] != 8)
        throw DataError("glyph corpus: expected u8 array of shape (n, 8, 8): " + images_ptyb);
    if (labs.dtype != ptyb::DType::u8 || labs.shape.size() != 1 || labs.shape[0] != imgs.shape[0])
        throw DataError("glyph corpus: label shape mismatch: " + labels_ptyb);
    GlyphCorpus c;
    c.count = static_cast<int>(imgs.shape[0]);
    c.images = imgs.u8;
    c.labels = labs.u8;
    for (auto l : c.labels)
        if (l > 9) throw DataError("glyph corpus: label out of range");
    return c;
}

namespace {

RealImage glyph_upsampled(const GlyphCorpus& corpus, int index, int size) {
    RealImage g(8, 8);
    for (int i = 0; i < 64; ++i) g.v[i] = corpus.images[static_cast<std::size_t>(index) * 64 + i] / 255.0;
    RealImage up = field::resize(g, size, size);
    for (double& v : up.v) v = std::clamp(v, 0.0, 1.0);
    return up;
}

double bilinear(const RealImage& img, double x, double y) {
    if (x < 0.0 || y < 0.0 || x > img.width - 1.0 || y > img.height - 1.0) return 0.0;
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fx) * (1 - fy) * img.at(x0, y0) + fx * (1 - fy) * img.at(x1, y0) +
           (1 - fx) * fy * img.at(x0, y1) + fx * fy * img.at(x1, y1);
}

struct AugmentParams {
    double sx, sy, rot, shear, jx, jy, gamma;
    double el_amp, el_fx, el_fy, el_p1, el_p2;
};

AugmentParams draw_params(Rng& rng) {
    AugmentParams p;
    p.sx = rng.uniform(0.8, 1.15);
    p.sy = rng.uniform(0.8, 1.15);
    p.rot = rng.uniform(-0.21, 0.21);
    p.shear = rng.uniform(-0.15, 0.15);
    p.jx = rng.uniform(-1.5, 1.5);
    p.jy = rng.uniform(-1.5, 1.5);
    p.gamma = rng.uniform(0.8, 1.3);
    p.el_amp = rng.uniform(0.0, 1.0);
    p.el_fx = rng.uniform(0.5, 1.5);
    p.el_fy = rng.uniform(0.5, 1.5);
    p.el_p1 = rng.uniform(0.0, 2.0 * kPi);
    p.el_p2 = rng.uniform(0.0, 2.0 * kPi);
    return p;
}

// 28x28 sample: glyph upsampled to 16x16, mapped through an inverse affine
// (rotation, shear, anisotropic scale to a ~20px box) plus a smooth elastic
// warp, sampled bilinearly.
std::vector<std::uint8_t> render_augmented(const RealImage& glyph16, const AugmentParams& p) {
    constexpr int out = 28;
    constexpr double base = 20.0;
    const double cx = (out - 1) / 2.0;
    const double cos_r = std::cos(p.rot), sin_r = std::sin(p.rot);
    std::vector<std::uint8_t> img(out * out);
    for (int y = 0; y < out; ++y) {
        for (int x = 0; x < out; ++x) {
            const double px = x - cx - p.jx;
            const double py = y - cx - p.jy;
            // inverse rotation
            double qx = cos_r * px + sin_r * py;
            double qy = -sin_r * px + cos_r * py;
            // inverse shear (forward was x += shear*y)
            qx -= p.shear * qy;
            // inverse scale into glyph coordinates
            double ux = qx / (p.sx * base / 16.0);
            double uy = qy / (p.sy * base / 16.0);
            // elastic warp in glyph coordinates
            ux += p.el_amp * std::sin(2.0 * kPi * p.el_fx * uy / 16.0 + p.el_p1);
            uy += p.el_amp * std::sin(2.0 * kPi * p.el_fy * ux / 16.0 + p.el_p2);
            const double v = bilinear(glyph16, ux + 7.5, uy + 7.5);
            const double g = std::pow(std::clamp(v, 0.0, 1.0), p.gamma);
            img[static_cast<std::size_t>(y) * out + x] =
                static_cast<std::uint8_t>(std::lround(g * 255.0));
        }
    }
    return img;
}

} // namespace

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
    if (pixels.size() != static_cast<std::size_t>(n) * rows * cols)
        throw DataError("write_idx_images: size mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for write: " + path);
    auto be32 = [&](std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v)};
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    be32(0x00000803u);
    be32(n);
    be32(rows);
    be32(cols);
    os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!os) throw DataError("write failed: " + path);
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for write: " + path);
    auto be32 = [&](std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v)};
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    be32(0x00000801u);
    be32(static_cast<std::uint32_t>(labels.size()));
    os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (!os) throw DataError("write failed: " + path);
}

void make_idx_dataset(const GlyphCorpus& corpus, const std::string& out_dir, int n_train,
                      int n_test, std::uint64_t seed) {
    if (corpus.count < 1) throw DataError("make_idx_dataset: empty corpus");
    if (n_train < 1 || n_test < 1) throw ConfigError("make_idx_dataset: counts must be >= 1");
    io::ensure_dir(out_dir);

    // pre-upsample every glyph once
    std::vector<RealImage> glyphs;
    glyphs.reserve(corpus.count);
    for (int i = 0; i < corpus.count; ++i) glyphs.push_back(glyph_upsampled(corpus, i, 16));

    auto synth = [&](const char* split, int n, std::vector<std::uint8_t>& pixels,
                     std::vector<std::uint8_t>& labels) {
        pixels.resize(static_cast<std::size_t>(n) * 28 * 28);
        labels.resize(n);
        for (int i = 0; i < n; ++i) {
            Rng rng(seed, split, static_cast<std::uint64_t>(i));
            const int g = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(corpus.count)));
            const AugmentParams p = draw_params(rng);
            const auto img = render_augmented(glyphs[g], p);
            std::copy(img.begin(), img.end(), pixels.begin() + static_cast<std::size_t>(i) * 28 * 28);
            labels[i] = corpus.labels[g];
        }
    };

    std::vector<std::uint8_t> px, lb;
    synth("train", n_train, px, lb);
    write_idx_images(out_dir + "/train-images-idx3-ubyte", px, n_train, 28, 28);
    write_idx_labels(out_dir + "/train-labels-idx1-ubyte", lb);
    synth("test", n_test, px, lb);
    write_idx_images(out_dir + "/t10k-images-idx3-ubyte", px, n_test, 28, 28);
    write_idx_labels(out_dir + "/t10k-labels-idx1-ubyte", lb);
}

RealImage render_digit(const GlyphCorpus& corpus, int digit, int glyph_rank, int out_size) {
    if (digit < 0 || digit > 9) throw ConfigError("render_digit: digit must be 0..9");
    if (out_size < 8) throw ConfigError("render_digit: out_size too small");
    int seen = 0;
    int idx = -1;
    for (int i = 0; i < corpus.count; ++i) {
        if (corpus.labels[i] == digit) {
            if (seen == glyph_rank) {
                idx = i;
                break;
            }
            ++seen;
        }
    }
    if (idx < 0) throw DataError("render_digit: not enough glyphs of requested class");
    const int box = (out_size * 20) / 32; // a ~20px digit box inside a 32px frame
    RealImage up = glyph_upsampled(corpus, idx, box);
    RealImage out(out_size, out_size, 0.0);
    const int off = (out_size - box) / 2;
    for (int y = 0; y < box; ++y)
        for (int x = 0; x < box; ++x) out.at(off + x, off + y) = up.at(x, y);
    return out;
}

} // namespace ptycho::dataset
