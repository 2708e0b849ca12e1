#pragma once

#include "ptycho/core.hpp"
#include "ptycho/field.hpp"
#include "ptycho/neural.hpp"
#include "ptycho/optics.hpp"
#include "ptycho/simulator.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ptycho::recon {

enum class LossKind { MixedPoissonGaussian, PoissonOnly };
enum class Mode { Conventional, Latent };

LossKind parse_loss_kind(const std::string& s);
Mode parse_mode(const std::string& s);
std::string to_string(LossKind k);
std::string to_string(Mode m);

/// Eq-style mixed Poisson-Gaussian negative log likelihood:
/// sum_k ln(I_k + var_k) + (X_k - I_k)^2 / (I_k + var_k), denominators
/// floored at 1e-12. grad_I, when non-null, receives dL/dI.
double mixed_loss(const RealImage& I, const RealImage& X, const RealImage& noise_var,
                  RealImage* grad_I = nullptr);

/// sum_k (sqrt(X_k) - sqrt(I_k))^2 with measured X clamped at 0.
double poisson_loss(const RealImage& I, const RealImage& X, RealImage* grad_I = nullptr);

/// Exponentially decaying learning rate alpha * 0.97^n.
double lr_schedule(double alpha, int epoch);

/// Geometry and fixed inputs of the differentiable forward model.
struct Pipeline {
    Grid grid;                                  // detector window
    ComplexField probe;
    optics::PropagationPlan plan;
    std::vector<std::array<int, 2>> positions_px;
    int canvas_nx = 0, canvas_ny = 0;
    int obj_px = 0;                             // square object region, centered
    double canvas_fill = 0.0;
    RealImage noise_var;
    const nn::Autoencoder* decoder = nullptr;   // latent mode only

    /// Sizes the canvas from the scan extent and validates geometry.
    void finalize();
    std::array<int, 2> frame_offset(std::size_t j) const;
    std::array<int, 2> object_offset() const;
};

Pipeline make_pipeline(const sim::DiffractionStack& stack, const ComplexField& probe,
                       int obj_px, double canvas_fill, const nn::Autoencoder* decoder);

struct ReconstructionState {
    Mode mode = Mode::Latent;
    nn::Vec h;                     // latent vector (latent mode)
    std::vector<cplx> object;      // obj_px^2 complex pixels (conventional mode)
    ComplexField probe;            // working copy; updated when trainable
    bool probe_trainable = false;
    nn::AdamState adam;
    int epoch = 0;

    std::size_t free_parameter_count() const;
};

/// Object canvas for the current state (latent: fill + resize(decode(h));
/// conventional: fill + complex object region).
ComplexField build_canvas(const Pipeline& pipe, const ReconstructionState& state);

/// Predicted intensity of one frame.
RealImage forward_predict(const Pipeline& pipe, const ReconstructionState& state,
                          std::size_t frame_index);

struct FrameGradient {
    double loss = 0.0;
    nn::Vec d_h;                   // latent mode
    std::vector<cplx> d_object;    // conventional mode (2 * dL/d conj(O))
    ComplexField d_probe;          // when probe trainable
};

/// Loss and gradients for one frame by the adjoint chain:
/// dL/dI -> dL/dpsi = 2 (dL/dI) psi -> conjugate-transfer propagation ->
/// exit-wave adjoints -> resize adjoint -> decoder backward pass.
FrameGradient gradient(const Pipeline& pipe, const ReconstructionState& state,
                       std::size_t frame_index, LossKind kind, const RealImage& measured,
                       bool want_probe_grad = false);

/// Total loss over all frames at the given state (no optimization steps);
/// the same code path reports a reconstruction's final loss and fills
/// landscape grids.
double total_stack_loss(const Pipeline& pipe, const ReconstructionState& state,
                        const sim::DiffractionStack& stack, LossKind kind);

struct StepRecord {
    long step;
    int epoch;
    int frame;
    double loss;
};

struct ReconConfig {
    Mode mode = Mode::Latent;
    LossKind loss_kind = LossKind::MixedPoissonGaussian;
    double alpha = 0.1;
    int epochs = 100;
    std::uint64_t seed = 1;
    std::string init = "mean";     // latent: mean|zeros|gauss; conventional: flat|gauss
    std::optional<nn::Vec> latent_mean;
    std::optional<nn::Vec> latent_init;
    bool train_probe = false;
    bool amp_clamp = false;
    double l2 = 0.0;
    int batch_frames = 1;
    int restarts = 1;
};

struct ReconResult {
    ReconstructionState state;
    std::vector<StepRecord> history;
    double final_loss = 0.0;       // total stack loss at the final parameters
    RealImage object_image;        // amplitude on the object-region raster
};

/// Stochastic per-frame Adam with the exponential epoch schedule and
/// seed-shuffled frame order.
ReconResult reconstruct(const Pipeline& pipe, const sim::DiffractionStack& stack,
                        const ReconConfig& cfg);

/// Amplitude image of the current object estimate on the object-region raster.
RealImage object_amplitude(const Pipeline& pipe, const ReconstructionState& state);

} // namespace ptycho::recon
