#include "ctxkoop/latent_kalman.hpp"

#include "ctxkoop/errors.hpp"

#include <cmath>

namespace ctxkoop {

LatentSystem latent_system(const PiaeModel& m) { return {&m.K, &m.B, &m.csi_dec}; }
LatentSystem latent_system(const VkaeModel& m) { return {&m.K, &m.B, &m.csi_dec}; }

void symmetrize(Matrix& m) {
    Matrix t = 0.5 * (m + m.transpose());
    m = std::move(t);
}

void NoiseConfig::validate(Eigen::Index n) const {
    if (Q.rows() != n || Q.cols() != n) {
        throw ShapeError("process covariance " + shape_string(Q) + " does not match state dim " +
                         std::to_string(n));
    }
    if (!(R >= 0.0)) throw ParameterError("observation variance must be non-negative");
    if (!ctx_var.empty() && ctx_var.size() != ctx_mean.size()) {
        throw ShapeError("context mean and variance sequences differ in length");
    }
}

LatentBelief ekf_predict(const LatentBelief& belief, const LatentSystem& sys,
                         const NoiseConfig& noise, std::size_t t) {
    const Matrix& K = *sys.K;
    if (belief.mean.size() != K.cols() || belief.cov.rows() != K.cols() ||
        belief.cov.cols() != K.cols()) {
        throw ShapeError("ekf_predict: belief does not match K " + shape_string(K));
    }
    LatentBelief out;
    out.mean = K * belief.mean;
    out.cov = K * belief.cov * K.transpose() + noise.Q;
    if (t < noise.ctx_mean.size()) {
        const Matrix& B = *sys.B;
        const Vector& mu = noise.ctx_mean[t];
        if (mu.size() != B.cols()) throw ShapeError("ekf_predict: context mean length mismatch");
        out.mean.noalias() += B * mu;
        if (!noise.ctx_var.empty()) {
            const Vector& var = noise.ctx_var[t];
            if (var.size() != B.cols()) {
                throw ShapeError("ekf_predict: context variance length mismatch");
            }
            const Matrix scaled = B * var.cwiseSqrt().asDiagonal();
            out.cov.noalias() += scaled * scaled.transpose();
        }
    }
    symmetrize(out.cov);
    return out;
}

Matrix decoder_jacobian(const Mlp2& decoder, const Vector& z) {
    if (!z.allFinite()) throw InputError("decoder_jacobian: non-finite latent");
    return mlp_jacobian(decoder, z);
}

LatentBelief ekf_update(const LatentBelief& predicted, double h_obs, const LatentSystem& sys,
                        double R) {
    if (sys.decoder->out_dim() != 1) {
        throw ShapeError("ekf_update: expects a scalar-output decoder");
    }
    const Eigen::Index n = predicted.mean.size();
    const RowVector H = decoder_jacobian(*sys.decoder, predicted.mean).row(0);
    const double y = h_obs - mlp_eval(*sys.decoder, predicted.mean)(0);

    const Vector PHt = predicted.cov * H.transpose();
    const double S = H.dot(PHt) + R;
    if (!(S > 0.0) || !std::isfinite(S)) {
        throw NumericError("ekf_update: innovation variance " + std::to_string(S) +
                           " is not positive");
    }
    const Vector G = PHt / S;

    LatentBelief out;
    out.mean = predicted.mean + G * y;
    const Matrix IGH = Matrix::Identity(n, n) - G * H;
    out.cov = IGH * predicted.cov * IGH.transpose() + (G * R) * G.transpose();
    symmetrize(out.cov);
    return out;
}

std::vector<LatentBelief> rts_smooth(const std::vector<FilterStep>& steps, const Matrix& K) {
    if (steps.empty()) throw InputError("rts_smooth: empty sequence");
    const std::size_t T = steps.size();
    std::vector<LatentBelief> smoothed(T);
    smoothed[T - 1] = steps[T - 1].filtered;
    for (std::size_t t = T - 1; t-- > 0;) {
        const LatentBelief& f = steps[t].filtered;
        const LatentBelief& p = steps[t + 1].predicted;
        const Eigen::Index n = p.cov.rows();
        const Matrix reg = p.cov + kPredictedCovJitter * Matrix::Identity(n, n);
        const Eigen::LDLT<Matrix> ldlt(reg);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw NumericError("rts_smooth: predicted covariance at step " +
                               std::to_string(t + 1) + " is not positive definite");
        }
        // C = P_f K^T P_p^{-1}  <=>  C^T = P_p^{-1} K P_f
        const Matrix C = ldlt.solve(K * f.cov).transpose();
        if (!C.allFinite()) {
            throw NumericError("rts_smooth: smoother gain at step " + std::to_string(t) +
                               " is not finite");
        }
        LatentBelief s;
        s.mean = f.mean + C * (smoothed[t + 1].mean - p.mean);
        s.cov = f.cov + C * (smoothed[t + 1].cov - p.cov) * C.transpose();
        symmetrize(s.cov);
        smoothed[t] = std::move(s);
    }
    return smoothed;
}

std::vector<FilterStep> ekf_filter(const LatentBelief& initial,
                                   const std::vector<std::optional<double>>& observations,
                                   const LatentSystem& sys, const NoiseConfig& noise) {
    noise.validate(sys.state_dim());
    std::vector<FilterStep> steps;
    steps.reserve(observations.size());
    LatentBelief prior = initial;
    for (std::size_t t = 0; t < observations.size(); ++t) {
        if (t > 0) prior = ekf_predict(steps.back().filtered, sys, noise, t - 1);
        FilterStep step;
        step.predicted = prior;
        step.filtered = observations[t] ? ekf_update(prior, *observations[t], sys, noise.R)
                                        : prior;
        steps.push_back(std::move(step));
    }
    return steps;
}

SmoothedSeries smooth_and_decode(const LatentBelief& initial,
                                 const std::vector<std::optional<double>>& observations,
                                 const LatentSystem& sys, const NoiseConfig& noise) {
    if (observations.empty()) throw InputError("smooth_and_decode: empty horizon");
    const std::vector<FilterStep> steps = ekf_filter(initial, observations, sys, noise);
    SmoothedSeries out;
    out.beliefs = rts_smooth(steps, *sys.K);
    out.csi.reserve(out.beliefs.size());
    out.variance.reserve(out.beliefs.size());
    for (const LatentBelief& b : out.beliefs) {
        out.csi.push_back(mlp_eval(*sys.decoder, b.mean)(0));
        const RowVector H = decoder_jacobian(*sys.decoder, b.mean).row(0);
        out.variance.push_back(H.dot(b.cov * H.transpose()) + noise.R);
    }
    return out;
}

}  // namespace ctxkoop
