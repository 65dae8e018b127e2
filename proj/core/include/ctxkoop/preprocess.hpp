#pragma once

#include "ctxkoop/diffnet.hpp"
#include "ctxkoop/types.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ctxkoop {

/// Central-point Savitzky-Golay smoothing weights for a window of `window_len` samples and a
/// local polynomial of degree `poly_order`, from the least-squares normal equations.
std::vector<double> savgol_coefficients(int window_len, int poly_order);

/// Savitzky-Golay smoothing with mirror padding (x[-k] = x[k]). Output length equals input
/// length. Throws ParameterError on an even window, poly_order >= window_len, or a sequence
/// shorter than the window.
std::vector<double> savgol_filter(std::span<const double> x, int window_len, int poly_order);

/// Per-feature affine standardization of CSI (1 feature) and context (19 features).
class Standardizer {
public:
    /// Fits moments on a training segment. Zero-variance features get std 1 and a warning.
    void fit(std::span<const double> csi, const Matrix& ctx);

    [[nodiscard]] bool fitted() const { return fitted_; }

    double apply_csi(double h) const;
    double invert_csi(double h) const;
    Vector apply_ctx(const Vector& u) const;
    Vector invert_ctx(const Vector& u) const;
    Matrix apply_ctx(const Matrix& u) const;

    [[nodiscard]] double csi_mean() const { return csi_mean_; }
    [[nodiscard]] double csi_std() const { return csi_std_; }
    [[nodiscard]] const Vector& ctx_mean() const { return ctx_mean_; }
    [[nodiscard]] const Vector& ctx_std() const { return ctx_std_; }
    [[nodiscard]] const std::vector<std::string>& warnings() const { return warnings_; }

    /// Restores a previously fitted state.
    static Standardizer from_moments(double csi_mean, double csi_std, Vector ctx_mean,
                                     Vector ctx_std);

    bool operator==(const Standardizer& other) const;

private:
    void require_fitted() const;

    bool fitted_ = false;
    double csi_mean_ = 0.0;
    double csi_std_ = 1.0;
    Vector ctx_mean_;
    Vector ctx_std_;
    std::vector<std::string> warnings_;
};

/// Sliding-window protocol: train on `train_len` observed samples, then forecast through
/// `silence_len` silent samples. Episode k starts at train_start + k * stride.
struct EpisodePlan {
    std::size_t train_start = 0;
    std::size_t train_len = 200;
    std::size_t silence_len = 200;
    std::size_t stride = 400;

    void validate() const;
};

/// Half-open index ranges of one episode.
struct Episode {
    std::size_t train_begin = 0;
    std::size_t train_end = 0;  // == silence_begin
    std::size_t silence_end = 0;

    [[nodiscard]] std::size_t silence_begin() const { return train_end; }
    bool operator==(const Episode&) const = default;
};

/// Every episode whose silence interval ends inside the trace. Throws ParameterError if not
/// even one fits.
std::vector<Episode> plan_episodes(std::size_t trace_len, const EpisodePlan& plan);

}  // namespace ctxkoop
