#include "ctxkoop/preprocess.hpp"

#include "ctxkoop/errors.hpp"

#include <cmath>

namespace ctxkoop {

std::vector<double> savgol_coefficients(int window_len, int poly_order) {
    if (window_len < 1 || window_len % 2 == 0) {
        throw ParameterError("savgol: window length must be a positive odd number");
    }
    if (poly_order < 0 || poly_order >= window_len) {
        throw ParameterError("savgol: polynomial order must be in [0, window_len)");
    }
    const int half = window_len / 2;
    // Vandermonde A (window x order+1) on offsets -half..half; the smoothed centre value is
    // row 0 of (A^T A)^{-1} A^T.
    Eigen::MatrixXd A(window_len, poly_order + 1);
    for (int i = 0; i < window_len; ++i) {
        double p = 1.0;
        for (int j = 0; j <= poly_order; ++j) {
            A(i, j) = p;
            p *= static_cast<double>(i - half);
        }
    }
    const Eigen::MatrixXd normal = A.transpose() * A;
    const Eigen::MatrixXd proj = normal.ldlt().solve(A.transpose());
    std::vector<double> c(static_cast<std::size_t>(window_len));
    for (int i = 0; i < window_len; ++i) c[static_cast<std::size_t>(i)] = proj(0, i);
    return c;
}

std::vector<double> savgol_filter(std::span<const double> x, int window_len, int poly_order) {
    const std::vector<double> c = savgol_coefficients(window_len, poly_order);
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    if (n < window_len) {
        throw ParameterError("savgol: sequence of length " + std::to_string(n) +
                             " is shorter than the window " + std::to_string(window_len));
    }
    const std::ptrdiff_t half = window_len / 2;
    auto at = [&](std::ptrdiff_t i) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
        return x[static_cast<std::size_t>(i)];
    };
    std::vector<double> y(x.size());
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -half; k <= half; ++k) {
            acc += c[static_cast<std::size_t>(k + half)] * at(t + k);
        }
        y[static_cast<std::size_t>(t)] = acc;
    }
    return y;
}

void Standardizer::fit(std::span<const double> csi, const Matrix& ctx) {
    if (csi.empty()) throw InputError("standardizer: empty training segment");
    if (static_cast<std::size_t>(ctx.rows()) != csi.size()) {
        throw ShapeError("standardizer: csi and context lengths differ");
    }
    warnings_.clear();
    const double n = static_cast<double>(csi.size());

    double mean = 0.0;
    for (double h : csi) mean += h;
    mean /= n;
    double var = 0.0;
    for (double h : csi) var += (h - mean) * (h - mean);
    var /= n;
    csi_mean_ = mean;
    csi_std_ = std::sqrt(var);
    if (!(csi_std_ > 0.0)) {
        csi_std_ = 1.0;
        warnings_.emplace_back("csi has zero variance; std set to 1");
    }

    ctx_mean_ = ctx.colwise().mean().transpose();
    ctx_std_ = ((ctx.rowwise() - ctx_mean_.transpose()).array().square().colwise().sum() / n)
                   .sqrt()
                   .transpose();
    for (Eigen::Index j = 0; j < ctx_std_.size(); ++j) {
        if (!(ctx_std_(j) > 0.0)) {
            ctx_std_(j) = 1.0;
            warnings_.push_back("context feature " + std::to_string(j) +
                                " has zero variance; std set to 1");
        }
    }
    fitted_ = true;
}

void Standardizer::require_fitted() const {
    if (!fitted_) throw StateError("standardizer used before fit");
}

double Standardizer::apply_csi(double h) const {
    require_fitted();
    return (h - csi_mean_) / csi_std_;
}

double Standardizer::invert_csi(double h) const {
    require_fitted();
    return h * csi_std_ + csi_mean_;
}

Vector Standardizer::apply_ctx(const Vector& u) const {
    require_fitted();
    if (u.size() != ctx_mean_.size()) throw ShapeError("standardizer: context length mismatch");
    return (u - ctx_mean_).cwiseQuotient(ctx_std_);
}

Vector Standardizer::invert_ctx(const Vector& u) const {
    require_fitted();
    if (u.size() != ctx_mean_.size()) throw ShapeError("standardizer: context length mismatch");
    return u.cwiseProduct(ctx_std_) + ctx_mean_;
}

Matrix Standardizer::apply_ctx(const Matrix& u) const {
    require_fitted();
    if (u.cols() != ctx_mean_.size()) throw ShapeError("standardizer: context width mismatch");
    Matrix out = u.rowwise() - ctx_mean_.transpose();
    out.array().rowwise() /= ctx_std_.transpose().array();
    return out;
}

Standardizer Standardizer::from_moments(double csi_mean, double csi_std, Vector ctx_mean,
                                        Vector ctx_std) {
    if (!(csi_std > 0.0) || !(ctx_std.array() > 0.0).all() || ctx_mean.size() != ctx_std.size()) {
        throw ParameterError("standardizer: invalid stored moments");
    }
    Standardizer s;
    s.csi_mean_ = csi_mean;
    s.csi_std_ = csi_std;
    s.ctx_mean_ = std::move(ctx_mean);
    s.ctx_std_ = std::move(ctx_std);
    s.fitted_ = true;
    return s;
}

bool Standardizer::operator==(const Standardizer& other) const {
    return fitted_ == other.fitted_ && csi_mean_ == other.csi_mean_ &&
           csi_std_ == other.csi_std_ && ctx_mean_.size() == other.ctx_mean_.size() &&
           ctx_mean_ == other.ctx_mean_ && ctx_std_ == other.ctx_std_;
}

void EpisodePlan::validate() const {
    if (train_len == 0 || silence_len == 0 || stride == 0) {
        throw ParameterError("episode plan lengths and stride must be positive");
    }
    if (train_len < 2) throw ParameterError("training window needs at least 2 samples");
}

std::vector<Episode> plan_episodes(std::size_t trace_len, const EpisodePlan& plan) {
    plan.validate();
    const std::size_t span = plan.train_len + plan.silence_len;
    if (plan.train_start + span > trace_len) {
        throw ParameterError("trace of length " + std::to_string(trace_len) +
                             " cannot hold one episode of " + std::to_string(span) +
                             " samples starting at " + std::to_string(plan.train_start));
    }
    std::vector<Episode> out;
    for (std::size_t start = plan.train_start; start + span <= trace_len; start += plan.stride) {
        out.push_back({start, start + plan.train_len, start + span});
    }
    return out;
}

}  // namespace ctxkoop
