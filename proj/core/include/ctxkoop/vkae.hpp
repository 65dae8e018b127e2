#pragma once

// Variational Koopman autoencoder: Gaussian encoder heads, pathwise (reparameterized)
// gradients, Gaussian likelihood reconstruction and KL regularization toward N(0, I).

#include "ctxkoop/diffnet.hpp"
#include "ctxkoop/piae.hpp"
#include "ctxkoop/types.hpp"

#include <cstdint>
#include <random>

namespace ctxkoop {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

struct GaussianLatent {
    Vector mean;
    Vector log_var;
};

/// Encoder heads emit [mean | log-variance] from one shared hidden layer, so their output
/// width is twice the latent size.
struct VkaeModel {
    ModelDims dims;
    Mlp2 csi_enc;  // csi_in -> csi_hidden -> 2 csi_latent
    Mlp2 csi_dec;
    Mlp2 ctx_enc;  // ctx_in -> ctx_hidden -> 2 ctx_latent
    Mlp2 ctx_dec;
    Matrix K;
    Matrix B;
    double sigma2_h = 1.0;
    double sigma2_u = 1.0;

    static VkaeModel zeros(const ModelDims& dims = {});
    static VkaeModel init(const ModelDims& dims, std::uint64_t seed);

    void validate() const;
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    [[nodiscard]] bool context_decoupled() const;
};

using VkaeGrad = PiaeGrad;

struct VkaeLossBreakdown {
    double csi_t = 0.0;
    double csi_t1 = 0.0;
    double context = 0.0;
    double koopman = 0.0;
    double kl_z = 0.0;
    double kl_zeta = 0.0;
    double total = 0.0;
};

/// Standard-normal draws for one window, recorded so a loss evaluation can be repeated.
struct VkaeNoise {
    Matrix eps_z;     // T x csi_latent
    Matrix eps_zeta;  // T x ctx_latent

    static VkaeNoise draw(const ModelDims& dims, Eigen::Index T, std::mt19937_64& rng);
    static VkaeNoise zeros(const ModelDims& dims, Eigen::Index T);
};

GaussianLatent encode_gaussian_csi(const VkaeModel& m, double h);
GaussianLatent encode_gaussian_ctx(const VkaeModel& m, const Vector& u);

/// mean + exp(log_var / 2) * noise
Vector reparameterize(const GaussianLatent& g, const Vector& noise);

/// 0.5 (|x - mean|^2 / var + d log(2 pi var)). Throws DomainError if var <= 0.
double nll_gaussian(const Vector& x, const Vector& mean, double var);

/// KL(N(mean, diag exp(log_var)) || N(0, I)).
double kl_std_normal(const GaussianLatent& g);

/// Loss terms for one noise draw. The Koopman target for h_{t+1} is its posterior mean;
/// z_t and zeta_t are reparameterized samples. The context path (context NLL, kl_zeta, and
/// B zeta) is evaluated when beta > 0, B is nonzero, or a context-side group is active;
/// otherwise those terms are 0.
VkaeLossBreakdown vkae_losses(const VkaeModel& m, const Window& w, const LossWeights& weights,
                              const VkaeNoise& noise,
                              const ParamGroups& active = ParamGroups::all());

/// Draws fresh noise from `rng`.
VkaeLossBreakdown vkae_losses(const VkaeModel& m, const Window& w, const LossWeights& weights,
                              std::mt19937_64& rng);

/// Pathwise gradient of the total loss with the noise held fixed.
VkaeGrad vkae_gradients(const VkaeModel& m, const Window& w, const LossWeights& weights,
                        const VkaeNoise& noise, const ParamGroups& active = ParamGroups::all(),
                        VkaeLossBreakdown* losses = nullptr);

VkaeGrad vkae_gradients(const VkaeModel& m, const Window& w, const LossWeights& weights,
                        std::mt19937_64& rng, const ParamGroups& active = ParamGroups::all(),
                        VkaeLossBreakdown* losses = nullptr);

/// Deterministic forecast using posterior means for both the initial state and contexts.
std::vector<double> rollout_silence(const VkaeModel& m, const Vector& z0,
                                    const std::vector<Vector>& contexts);

}  // namespace ctxkoop
