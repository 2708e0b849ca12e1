#include "ptycho/analysis.hpp"

#include "ptycho/io.hpp"
#include "ptycho/ptyb.hpp"
#include "ptycho/rng.hpp"

#include <algorithm>
#include <cmath>

namespace ptycho::analysis {

double psnr(const RealImage& a, const RealImage& b) {
    if (!a.same_shape(b)) throw DataError("psnr: shape mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.v.size());
    if (mse < 1e-12) return 120.0;
    return -10.0 * std::log10(mse);
}

PcaResult pca_leading(const nn::Mat& latents) {
    if (latents.rows() < 3) throw DataError("pca_leading: need at least 3 samples");
    const Eigen::Index n = latents.rows();
    const Eigen::RowVectorXd mean = latents.colwise().mean();
    nn::Mat centered = latents.rowwise() - mean;
    nn::Mat cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<nn::Mat> es(cov);
    const Eigen::Index d = cov.rows();

    PcaResult r;
    r.singular_values = es.eigenvalues().reverse();
    for (Eigen::Index i = 0; i < r.singular_values.size(); ++i)
        r.singular_values[i] = std::max(r.singular_values[i], 0.0);
    r.v1 = es.eigenvectors().col(d - 1);
    r.v2 = es.eigenvectors().col(d - 2);

    // deterministic sign: the largest-magnitude component is positive
    auto fix_sign = [](nn::Vec& v) {
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v[imax] < 0.0) v = -v;
    };
    fix_sign(r.v1);
    fix_sign(r.v2);

    const double s1 = r.singular_values[0];
    const double s2 = r.singular_values.size() > 1 ? r.singular_values[1] : 0.0;
    r.degenerate = !(s2 > 1e-12 * std::max(s1, 1.0));
    r.ambiguous = s1 > 0.0 && (s1 - s2) / s1 < 0.05;
    return r;
}

LandscapeGrid landscape(const recon::Pipeline& pipe, const sim::DiffractionStack& stack,
                        const nn::Vec& h_opt, const nn::Vec& v1, const nn::Vec& v2, int grid_n,
                        double range_abs, recon::LossKind kind) {
    if (grid_n < 3 || grid_n % 2 == 0) throw ConfigError("landscape: grid_n must be odd and >= 3");
    if (!(range_abs > 0.0)) throw ConfigError("landscape: range must be > 0");
    if (std::abs(v1.dot(v2)) > 1e-10) throw DataError("landscape: v1 and v2 must be orthogonal");
    if (std::abs(v1.norm() - 1.0) > 1e-12 || std::abs(v2.norm() - 1.0) > 1e-12)
        throw DataError("landscape: v1 and v2 must be unit vectors");

    LandscapeGrid grid;
    grid.v1 = v1;
    grid.v2 = v2;
    grid.h_opt = h_opt;
    grid.alphas.resize(grid_n);
    grid.betas.resize(grid_n);
    for (int i = 0; i < grid_n; ++i) {
        const double t = -range_abs + 2.0 * range_abs * i / (grid_n - 1);
        grid.alphas[i] = t;
        grid.betas[i] = t;
    }
    grid.losses.resize(static_cast<std::size_t>(grid_n) * grid_n);

    recon::ReconstructionState st;
    st.mode = recon::Mode::Latent;
    st.probe = pipe.probe;
    for (int ia = 0; ia < grid_n; ++ia) {
        for (int ib = 0; ib < grid_n; ++ib) {
            st.h = h_opt + grid.alphas[ia] * v1 + grid.betas[ib] * v2;
            grid.losses[static_cast<std::size_t>(ia) * grid_n + ib] =
                recon::total_stack_loss(pipe, st, stack, kind);
        }
    }
    return grid;
}

void save_landscape_csv(const std::string& path, const LandscapeGrid& grid) {
    io::CsvWriter csv(path, "alpha,beta,loss");
    for (std::size_t ia = 0; ia < grid.alphas.size(); ++ia)
        for (std::size_t ib = 0; ib < grid.betas.size(); ++ib)
            csv.row({io::format_double(grid.alphas[ia]), io::format_double(grid.betas[ib]),
                     io::format_double(grid.at(ia, ib))});
}

void save_landscape_ptyb(const std::string& path, const LandscapeGrid& grid) {
    ptyb::save_f64(path, grid.losses,
                   {static_cast<std::uint64_t>(grid.alphas.size()),
                    static_cast<std::uint64_t>(grid.betas.size())});
}

double plateau_fraction(const LandscapeGrid& grid) {
    const double mx = *std::max_element(grid.losses.begin(), grid.losses.end());
    const double tol = 0.01 * std::max(std::fabs(mx), 1e-300);
    std::size_t count = 0;
    for (double l : grid.losses)
        if (mx - l <= tol) ++count;
    return static_cast<double>(count) / static_cast<double>(grid.losses.size());
}

namespace {

RealImage decode_single(const nn::Autoencoder& ae, const nn::Vec& h) {
    nn::Mat hm(1, h.size());
    hm.row(0) = h.transpose();
    const nn::Tensor4 out = nn::decode(ae, hm);
    RealImage img(out.w, out.h);
    std::copy(out.v.begin(), out.v.end(), img.v.begin());
    return img;
}

} // namespace

std::vector<RealImage> interpolate_latents(const nn::Autoencoder& ae, const nn::Vec& h_a,
                                           const nn::Vec& h_b, int steps) {
    if (steps < 2) throw ConfigError("interpolate_latents: steps must be >= 2");
    std::vector<RealImage> out;
    out.reserve(steps);
    for (int s = 0; s < steps; ++s) {
        const double t = static_cast<double>(s) / (steps - 1);
        const nn::Vec h = (1.0 - t) * h_a + t * h_b;
        out.push_back(decode_single(ae, h));
    }
    return out;
}

nn::Mat draw_gaussian_latents(const nn::Mat& latents_ref, int count, std::uint64_t seed) {
    if (latents_ref.rows() < 2)
        throw DataError("draw_gaussian_latents: need at least 2 reference latents");
    if (count < 1) throw ConfigError("draw_gaussian_latents: count must be >= 1");
    const Eigen::Index n = latents_ref.rows(), d = latents_ref.cols();
    const Eigen::RowVectorXd mean = latents_ref.colwise().mean();
    nn::Mat centered = latents_ref.rowwise() - mean;
    nn::Mat cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<nn::Mat> es(cov);
    nn::Vec evals = es.eigenvalues();
    for (Eigen::Index i = 0; i < evals.size(); ++i) evals[i] = std::max(evals[i], 0.0);
    const nn::Mat scaled = es.eigenvectors() * evals.cwiseSqrt().asDiagonal();

    Rng rng(seed, "sample_latents");
    nn::Mat out(count, d);
    nn::Vec z(d);
    for (int s = 0; s < count; ++s) {
        for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
        out.row(s) = mean + (scaled * z).transpose();
    }
    return out;
}

std::vector<RealImage> sample_latents(const nn::Autoencoder& ae, const nn::Mat& latents_ref,
                                      int count, std::uint64_t seed) {
    const nn::Mat draws = draw_gaussian_latents(latents_ref, count, seed);
    std::vector<RealImage> out;
    out.reserve(count);
    for (int s = 0; s < count; ++s) out.push_back(decode_single(ae, draws.row(s).transpose()));
    return out;
}

RealImage tile_strip(const std::vector<RealImage>& tiles) {
    if (tiles.empty()) throw DataError("tile_strip: no tiles");
    const int tw = tiles[0].width, th = tiles[0].height;
    constexpr int gap = 2;
    RealImage sheet(static_cast<int>(tiles.size()) * (tw + gap) - gap, th, 0.0);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        if (tiles[t].width != tw || tiles[t].height != th)
            throw DataError("tile_strip: tile size mismatch");
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x)
                sheet.at(static_cast<int>(t) * (tw + gap) + x, y) = tiles[t].at(x, y);
    }
    return sheet;
}

} // namespace ptycho::analysis
