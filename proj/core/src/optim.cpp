#include "ctxkoop/optim.hpp"

#include "ctxkoop/errors.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <utility>
#include <ostream>

namespace ctxkoop {

void AdamConfig::validate() const {
    if (!(lr > 0.0) || !(eps > 0.0) || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 ||
        beta2 >= 1.0) {
        throw ParameterError("invalid Adam hyperparameters");
    }
}

AdamState::AdamState(const AdamConfig& cfg, const std::vector<std::span<const double>>& like)
    : config(cfg), block_steps(like.size(), 0) {
    cfg.validate();
    m.reserve(like.size());
    v.reserve(like.size());
    for (auto b : like) {
        m.emplace_back(b.size(), 0.0);
        v.emplace_back(b.size(), 0.0);
    }
}

void adam_step(AdamState& state, const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, const std::vector<bool>& active) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        (!active.empty() && active.size() != params.size())) {
        throw ShapeError("adam_step: block counts differ (params " +
                         std::to_string(params.size()) + ", grads " +
                         std::to_string(grads.size()) + ", state " +
                         std::to_string(state.m.size()) + ")");
    }
    const AdamConfig& c = state.config;
    ++state.step;
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (!active.empty() && !active[b]) continue;
        auto p = params[b];
        auto g = grads[b];
        auto& m = state.m[b];
        auto& v = state.v[b];
        if (p.size() != g.size() || p.size() != m.size()) {
            throw ShapeError("adam_step: block " + std::to_string(b) + " has " +
                             std::to_string(p.size()) + " parameters but " +
                             std::to_string(g.size()) + " gradients");
        }
        const long t = ++state.block_steps[b];
        const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

const char* variant_name(Variant v) { return v == Variant::Piae ? "piae" : "vkae"; }

Variant parse_variant(std::string_view s) {
    if (s == "piae") return Variant::Piae;
    if (s == "vkae") return Variant::Vkae;
    throw ParameterError("unknown variant '" + std::string(s) + "' (expected piae or vkae)");
}

void TrainConfig::validate() const {
    if (epochs_per_window < 0) throw ParameterError("epochs per window must be non-negative");
    adam.validate();
    effective_weights().validate();
}

LossWeights TrainConfig::effective_weights() const {
    LossWeights w = weights;
    if (!use_context) w.beta = 0.0;
    return w;
}

ParamGroups TrainConfig::active_groups() const {
    ParamGroups g;
    if (!use_context) {
        g.ctx = false;
        g.input = false;
    }
    return g;
}

std::vector<bool> block_mask(const ParamGroups& groups) {
    std::vector<bool> mask;
    mask.reserve(18);
    for (int i = 0; i < 8; ++i) mask.push_back(groups.csi);
    for (int i = 0; i < 8; ++i) mask.push_back(groups.ctx);
    mask.push_back(groups.koopman);
    mask.push_back(groups.input);
    return mask;
}

void write_loss_csv(const LossCurve& curve, std::ostream& os) {
    os << "iteration,csi_t,csi_t1,context,koopman,kl_z,kl_zeta,total\n";
    char buf[256];
    for (const LossRecord& r : curve) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.iteration, r.csi_t, r.csi_t1, r.context, r.koopman, r.kl_z, r.kl_zeta,
                      r.total);
        os << buf;
    }
}

namespace {

LossRecord to_record(int it, const PiaeLossBreakdown& l) {
    return {it, l.csi_t, l.csi_t1, l.context, l.koopman, 0.0, 0.0, l.total};
}

LossRecord to_record(int it, const VkaeLossBreakdown& l) {
    return {it, l.csi_t, l.csi_t1, l.context, l.koopman, l.kl_z, l.kl_zeta, l.total};
}

// Groups updated at iteration `it`. The alternating schedule updates the CSI side (CSI
// autoencoder and K) on even iterations and the context side (context autoencoder and B) on
// odd ones.
ParamGroups step_groups(const ParamGroups& base, bool alt_update, int it) {
    if (!alt_update) return base;
    ParamGroups g = base;
    if (it % 2 == 0) {
        g.ctx = false;
        g.input = false;
    } else {
        g.csi = false;
        g.koopman = false;
    }
    return g;
}

void check_finite(const std::vector<std::span<const double>>& blocks) {
    for (auto b : blocks) {
        for (double x : b) {
            if (!std::isfinite(x)) throw NumericError("parameters became non-finite during training");
        }
    }
}

}  // namespace

LossCurve train_window(PiaeModel& model, AdamState& adam, const Window& window,
                       const TrainConfig& cfg) {
    cfg.validate();
    const LossWeights weights = cfg.effective_weights();
    const ParamGroups base = cfg.active_groups();
    if (!cfg.use_context) model.B.setZero();

    // A frozen context encoder that still feeds B can be evaluated once.
    std::optional<ContextCache> cache;
    if (!base.ctx && !cfg.alt_update && (base.input || !model.context_decoupled())) {
        cache = cache_context(model, window);
    }

    LossCurve curve;
    curve.reserve(static_cast<std::size_t>(cfg.epochs_per_window) + 1);
    for (int it = 0; it < cfg.epochs_per_window; ++it) {
        const ParamGroups groups = step_groups(base, cfg.alt_update, it);
        PiaeLossBreakdown lb;
        const PiaeGrad g = cache ? piae_gradients(model, window, weights, groups, *cache, &lb)
                                 : piae_gradients(model, window, weights, groups, &lb);
        curve.push_back(to_record(it, lb));
        adam_step(adam, model.blocks(), g.blocks(), block_mask(groups));
    }
    check_finite(std::as_const(model).blocks());
    curve.push_back(to_record(cfg.epochs_per_window, piae_losses(model, window, weights)));
    return curve;
}

LossCurve train_window(VkaeModel& model, AdamState& adam, const Window& window,
                       const TrainConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const LossWeights weights = cfg.effective_weights();
    const ParamGroups base = cfg.active_groups();
    if (!cfg.use_context) model.B.setZero();

    LossCurve curve;
    curve.reserve(static_cast<std::size_t>(cfg.epochs_per_window) + 1);
    for (int it = 0; it < cfg.epochs_per_window; ++it) {
        const ParamGroups groups = step_groups(base, cfg.alt_update, it);
        VkaeLossBreakdown lb;
        const VkaeGrad g = vkae_gradients(model, window, weights, rng, groups, &lb);
        curve.push_back(to_record(it, lb));
        adam_step(adam, model.blocks(), g.blocks(), block_mask(groups));
    }
    check_finite(std::as_const(model).blocks());
    const VkaeNoise noise = VkaeNoise::draw(model.dims, window.length(), rng);
    curve.push_back(
        to_record(cfg.epochs_per_window, vkae_losses(model, window, weights, noise, base)));
    return curve;
}

LossCurve train_window(PiaeModel& model, const Window& window, const TrainConfig& cfg) {
    AdamState adam(cfg.adam, std::as_const(model).blocks());
    return train_window(model, adam, window, cfg);
}

// ---------------------------------------------------------------------------------------

Trainer::Trainer(const ModelDims& dims, const TrainConfig& cfg, const SmoothingConfig& smoothing)
    : dims_(dims), cfg_(cfg), smoothing_(smoothing), rng_(cfg.seed ^ 0x9E3779B97F4A7C15ULL) {
    cfg_.validate();
    reset_model();
}

void Trainer::reset_model() {
    if (cfg_.variant == Variant::Piae) {
        PiaeModel m = PiaeModel::init(dims_, cfg_.seed);
        adam_ = AdamState(cfg_.adam, std::as_const(m).blocks());
        model_ = std::move(m);
    } else {
        VkaeModel m = VkaeModel::init(dims_, cfg_.seed);
        adam_ = AdamState(cfg_.adam, std::as_const(m).blocks());
        model_ = std::move(m);
    }
}

Window Trainer::prepare_window(std::span<const double> csi_raw, const Matrix& ctx_raw) const {
    std::vector<double> csi(csi_raw.begin(), csi_raw.end());
    Matrix ctx = ctx_raw;
    if (smoothing_.enabled) {
        csi = savgol_filter(csi, smoothing_.window_len, smoothing_.poly_order);
        if (smoothing_.smooth_context) {
            for (Eigen::Index j = 0; j < ctx.cols(); ++j) {
                std::vector<double> col(ctx.rows());
                for (Eigen::Index i = 0; i < ctx.rows(); ++i) col[static_cast<std::size_t>(i)] = ctx(i, j);
                col = savgol_filter(col, smoothing_.window_len, smoothing_.poly_order);
                for (Eigen::Index i = 0; i < ctx.rows(); ++i) ctx(i, j) = col[static_cast<std::size_t>(i)];
            }
        }
    }
    Window w;
    w.csi.resize(static_cast<Eigen::Index>(csi.size()), 1);
    for (std::size_t i = 0; i < csi.size(); ++i) {
        w.csi(static_cast<Eigen::Index>(i), 0) = standardizer_.apply_csi(csi[i]);
    }
    w.ctx = standardizer_.apply_ctx(ctx);
    return w;
}

LossCurve Trainer::train_episode(std::span<const double> csi_raw, const Matrix& ctx_raw) {
    if (static_cast<Eigen::Index>(csi_raw.size()) != ctx_raw.rows()) {
        throw ShapeError("train_episode: csi and context lengths differ");
    }
    if (cfg_.cold_start && episodes_ > 0) reset_model();

    standardizer_.fit(csi_raw, ctx_raw);
    const Window window = prepare_window(csi_raw, ctx_raw);

    LossCurve curve;
    if (auto* piae = std::get_if<PiaeModel>(&model_)) {
        curve = train_window(*piae, adam_, window, cfg_);
        initial_latent_ = encode_csi(*piae, window.csi(window.length() - 1, 0));
    } else {
        auto& vkae = std::get<VkaeModel>(model_);
        curve = train_window(vkae, adam_, window, cfg_, rng_);
        initial_latent_ = encode_gaussian_csi(vkae, window.csi(window.length() - 1, 0)).mean;
    }
    history_.push_back(curve);
    ++episodes_;
    return curve;
}

namespace {

std::vector<Vector> standardized_rows(const Standardizer& s, const Matrix& ctx_raw) {
    const Matrix std_ctx = s.apply_ctx(ctx_raw);
    std::vector<Vector> rows;
    rows.reserve(static_cast<std::size_t>(std_ctx.rows()));
    for (Eigen::Index i = 0; i < std_ctx.rows(); ++i) rows.emplace_back(std_ctx.row(i).transpose());
    return rows;
}

std::vector<double> rollout_raw(const AnyModel& model, const Standardizer& s, const Vector& z0,
                                const Matrix& contexts_raw) {
    const std::vector<Vector> rows = standardized_rows(s, contexts_raw);
    std::vector<double> out = std::visit(
        [&](const auto& m) { return rollout_silence(m, z0, rows); }, model);
    for (double& h : out) h = s.invert_csi(h);
    return out;
}

}  // namespace

std::vector<double> Trainer::predict(const Matrix& contexts_raw) const {
    if (episodes_ == 0) throw StateError("Trainer::predict called before any training");
    return rollout_raw(model_, standardizer_, initial_latent_, contexts_raw);
}

std::vector<double> predict_silence(const AnyModel& model, const Standardizer& standardizer,
                                    double last_h_raw, const Matrix& contexts_raw) {
    const double h = standardizer.apply_csi(last_h_raw);
    Vector z0;
    if (const auto* piae = std::get_if<PiaeModel>(&model)) {
        z0 = encode_csi(*piae, h);
    } else {
        z0 = encode_gaussian_csi(std::get<VkaeModel>(model), h).mean;
    }
    return rollout_raw(model, standardizer, z0, contexts_raw);
}

}  // namespace ctxkoop
