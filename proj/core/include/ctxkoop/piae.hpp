#pragma once

// Dual Koopman autoencoder: CSI and context autoencoders coupled by z' = K z + B zeta.

#include "ctxkoop/diffnet.hpp"
#include "ctxkoop/types.hpp"

#include <cstdint>
#include <vector>

namespace ctxkoop {

/// Parameter groups that can be frozen during training.
struct ParamGroups {
    bool csi = true;      // csi_enc, csi_dec
    bool ctx = true;      // ctx_enc, ctx_dec
    bool koopman = true;  // K
    bool input = true;    // B

    static ParamGroups all() { return {}; }
    static ParamGroups none() { return {false, false, false, false}; }
};

struct PiaeModel {
    ModelDims dims;
    Mlp2 csi_enc;  // csi_in -> csi_hidden -> csi_latent
    Mlp2 csi_dec;  // csi_latent -> csi_hidden -> csi_in
    Mlp2 ctx_enc;  // ctx_in -> ctx_hidden -> ctx_latent
    Mlp2 ctx_dec;  // ctx_latent -> ctx_hidden -> ctx_in
    Matrix K;      // csi_latent x csi_latent
    Matrix B;      // csi_latent x ctx_latent

    static PiaeModel zeros(const ModelDims& dims = {});

    /// Glorot-uniform encoder/decoder weights; K and B start at zero so that unconstrained
    /// latent directions do not grow during rollout.
    static PiaeModel init(const ModelDims& dims, std::uint64_t seed);

    void validate() const;

    /// Blocks in fixed order: csi_enc, csi_dec, ctx_enc, ctx_dec (4 each), K, B.
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;

    /// True when B is identically zero, i.e. context cannot influence the dynamics.
    [[nodiscard]] bool context_decoupled() const;
};

struct PiaeGrad {
    Mlp2Grad csi_enc, csi_dec, ctx_enc, ctx_dec;
    Matrix K, B;

    static PiaeGrad zeros_like(const PiaeModel& m);
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    [[nodiscard]] double norm() const;
};

struct PiaeLossBreakdown {
    double csi_t = 0.0;
    double csi_t1 = 0.0;
    double context = 0.0;
    double koopman = 0.0;
    double total = 0.0;
};

Vector encode_csi(const PiaeModel& m, double h);
double decode_csi(const PiaeModel& m, const Vector& z);
Vector encode_ctx(const PiaeModel& m, const Vector& u);
Vector decode_ctx(const PiaeModel& m, const Vector& zeta);

/// z' = K z + B zeta, exactly linear.
Vector koopman_step(const PiaeModel& m, const Vector& z, const Vector& zeta);

/// Loss terms over a window of T >= 2 samples:
///   csi_t   = mean over t in [0, T)   of |h_t - dec(enc(h_t))|^2
///   csi_t1  = mean over t in [1, T)   of the same
///   context = mean over t in [0, T)   of |u_t - dec(enc(u_t))|^2
///   koopman = mean over t in [0, T-1) of |enc(h_{t+1}) - (K enc(h_t) + B enc(u_t))|^2
///   total   = alpha (csi_t + csi_t1) + beta context + gamma koopman
///
/// When beta == 0 and B is zero the context networks are not evaluated.
PiaeLossBreakdown piae_losses(const PiaeModel& m, const Window& w, const LossWeights& weights);

/// Gradient of the total loss. Gradients of frozen groups are left at zero and their
/// reverse passes skipped.
PiaeGrad piae_gradients(const PiaeModel& m, const Window& w, const LossWeights& weights,
                        const ParamGroups& active = ParamGroups::all(),
                        PiaeLossBreakdown* losses = nullptr);

/// Precomputed context encodings, reused while the context encoder is frozen.
struct ContextCache {
    Matrix zeta;  // T x ctx_latent
};
ContextCache cache_context(const PiaeModel& m, const Window& w);
PiaeGrad piae_gradients(const PiaeModel& m, const Window& w, const LossWeights& weights,
                        const ParamGroups& active, const ContextCache& cache,
                        PiaeLossBreakdown* losses = nullptr);

/// Recursive forecast through a silence interval.
///
/// Starting from z_0 (the encoding of the last observed sample), step k computes
/// z_{k+1} = K z_k + B enc(contexts[k]) and emits dec(z_{k+1}). contexts[0] is the context
/// at the last observed step. When B is zero the context values are never read.
std::vector<double> rollout_silence(const PiaeModel& m, const Vector& z0,
                                    const std::vector<Vector>& contexts);

}  // namespace ctxkoop
