#pragma once

#include "ctxkoop/diffnet.hpp"

namespace ctxkoop {

inline constexpr int kContextFeatures = 19;

/// Network sizes. Defaults are the production architecture; tests shrink them.
struct ModelDims {
    int csi_in = 1;
    int csi_hidden = 64;
    int csi_latent = 50;
    int ctx_in = kContextFeatures;
    int ctx_hidden = 256;
    int ctx_latent = 950;

    bool operator==(const ModelDims&) const = default;
    void validate() const;
};

/// Weights of the total loss. lambda only affects the variational model.
struct LossWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    double lambda = 1.0;

    void validate() const;
};

/// A contiguous run of standardized, fully observed samples. Row t of `csi` and `ctx` are
/// the same time step.
struct Window {
    Matrix csi;  // T x csi_in
    Matrix ctx;  // T x ctx_in

    [[nodiscard]] Eigen::Index length() const { return csi.rows(); }
};

}  // namespace ctxkoop
