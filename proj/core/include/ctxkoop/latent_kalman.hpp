#pragma once

/// @file latent_kalman.hpp
/// Extended Kalman filtering and Rauch-Tung-Striebel smoothing in the learned latent space.
///
/// The latent state follows the stochastic linear system
///
///     z_{t+1} = K z_t + B zeta_t + w_t,   w_t ~ N(0, Q)
///     h_t     = dec(z_t) + v_t,           v_t ~ N(0, R)
///
/// where zeta_t ~ N(mu_t, diag(var_t)) is the encoded context. Observations enter through the
/// decoder network, linearized at the predicted mean with its exact reverse-mode Jacobian.
/// Covariance updates use the Joseph form and every covariance leaving this module is
/// re-symmetrized.

#include "ctxkoop/diffnet.hpp"
#include "ctxkoop/piae.hpp"
#include "ctxkoop/vkae.hpp"

#include <optional>
#include <vector>

namespace ctxkoop {

struct LatentBelief {
    Vector mean;
    Matrix cov;
};

/// Non-owning view of the pieces of a model the filter needs.
struct LatentSystem {
    const Matrix* K = nullptr;
    const Matrix* B = nullptr;
    const Mlp2* decoder = nullptr;

    [[nodiscard]] Eigen::Index state_dim() const { return K->rows(); }
};

LatentSystem latent_system(const PiaeModel& m);
LatentSystem latent_system(const VkaeModel& m);

/// Per-step context statistics. `ctx_var` may be empty (deterministic context encoder).
struct NoiseConfig {
    Matrix Q;  // process covariance, n x n
    double R = 0.0;
    std::vector<Vector> ctx_mean;
    std::vector<Vector> ctx_var;

    void validate(Eigen::Index state_dim) const;
};

inline constexpr double kPredictedCovJitter = 1e-9;

/// Predicts step t+1 from the belief at step t using the context statistics at index t.
LatentBelief ekf_predict(const LatentBelief& belief, const LatentSystem& sys,
                         const NoiseConfig& noise, std::size_t t);

/// d dec / dz at z, one row per decoder output.
Matrix decoder_jacobian(const Mlp2& decoder, const Vector& z);

/// Measurement update against a scalar observation. Throws NumericError if the innovation
/// variance is not positive.
LatentBelief ekf_update(const LatentBelief& predicted, double h_obs, const LatentSystem& sys,
                        double R);

/// One filtered step: the prior for step t (before the update) and the posterior.
struct FilterStep {
    LatentBelief predicted;
    LatentBelief filtered;
};

/// Backward RTS pass. The predicted belief of step t+1 is steps[t+1].predicted. The last
/// smoothed belief equals the last filtered belief exactly.
std::vector<LatentBelief> rts_smooth(const std::vector<FilterStep>& steps, const Matrix& K);

/// Forward filter over `observations` (nullopt = silent step) starting from `initial`, which
/// is the prior for step 0.
std::vector<FilterStep> ekf_filter(const LatentBelief& initial,
                                   const std::vector<std::optional<double>>& observations,
                                   const LatentSystem& sys, const NoiseConfig& noise);

struct SmoothedSeries {
    std::vector<double> csi;       // dec(smoothed mean)
    std::vector<double> variance;  // H P H^T + R at the smoothed mean
    std::vector<LatentBelief> beliefs;
};

/// Filter with updates only on observed steps, smooth the whole horizon, then decode.
SmoothedSeries smooth_and_decode(const LatentBelief& initial,
                                 const std::vector<std::optional<double>>& observations,
                                 const LatentSystem& sys, const NoiseConfig& noise);

/// Symmetrizes in place.
void symmetrize(Matrix& m);

}  // namespace ctxkoop
