#include "ctxkoop/piae.hpp"

#include "ctxkoop/errors.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace ctxkoop {

void ModelDims::validate() const {
    if (csi_in <= 0 || csi_hidden <= 0 || csi_latent <= 0 || ctx_in <= 0 || ctx_hidden <= 0 ||
        ctx_latent <= 0) {
        throw ParameterError("model dimensions must be positive");
    }
}

void LossWeights::validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || lambda < 0) {
        throw ParameterError("loss weights must be non-negative");
    }
    if (alpha == 0 && beta == 0 && gamma == 0 && lambda == 0) {
        throw ParameterError("at least one loss weight must be positive");
    }
}

namespace {

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> span_of(const Matrix& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <class Net, class Out>
void append_blocks(Net& net, Out& out) {
    auto b = net.blocks();
    out.insert(out.end(), b.begin(), b.end());
}

void check_window(const PiaeModel& m, const Window& w) {
    if (w.length() < 2) {
        throw InputError("window needs at least 2 samples, got " + std::to_string(w.length()));
    }
    if (w.csi.cols() != m.dims.csi_in || w.ctx.cols() != m.dims.ctx_in ||
        w.ctx.rows() != w.csi.rows()) {
        throw ShapeError("window shapes csi " + shape_string(w.csi) + ", ctx " +
                         shape_string(w.ctx) + " do not match the model");
    }
}

bool needs_context(const PiaeModel& m, const LossWeights& weights, const ParamGroups& active) {
    return weights.beta != 0.0 || !m.context_decoupled() || active.input || active.ctx;
}

// Shared body of the two gradient entry points. `zeta_in` is either freshly computed from the
// context encoder tape or taken from a cache.
PiaeGrad gradients_impl(const PiaeModel& m, const Window& w, const LossWeights& weights,
                        const ParamGroups& active, const ContextCache* cache,
                        PiaeLossBreakdown* losses) {
    check_window(m, w);
    const Eigen::Index T = w.length();
    const double inv_t = 1.0 / static_cast<double>(T);
    const double inv_t1 = 1.0 / static_cast<double>(T - 1);

    PiaeGrad g = PiaeGrad::zeros_like(m);
    PiaeLossBreakdown lb;

    // CSI autoencoder.
    const MlpTape enc = mlp_forward(m.csi_enc, w.csi);
    const Matrix& z = enc.output;  // T x n
    const MlpTape dec = mlp_forward(m.csi_dec, z);
    const Matrix csi_err = w.csi - dec.output;  // T x csi_in
    const Vector csi_sq = csi_err.rowwise().squaredNorm();
    lb.csi_t = csi_sq.sum() * inv_t;
    lb.csi_t1 = csi_sq.tail(T - 1).sum() * inv_t1;

    // Context autoencoder.
    const bool use_ctx = cache != nullptr || needs_context(m, weights, active);
    MlpTape ctx_enc_tape;
    MlpTape ctx_dec_tape;
    Matrix ctx_err;
    const Matrix* zeta = nullptr;
    if (cache != nullptr) {
        zeta = &cache->zeta;
        if (zeta->rows() != T || zeta->cols() != m.dims.ctx_latent) {
            throw ShapeError("context cache " + shape_string(*zeta) + " does not match window");
        }
        if (weights.beta != 0.0) {
            const Matrix uhat = mlp_eval(m.ctx_dec, *zeta);
            lb.context = (w.ctx - uhat).rowwise().squaredNorm().sum() * inv_t;
        }
    } else if (use_ctx) {
        ctx_enc_tape = mlp_forward(m.ctx_enc, w.ctx);
        zeta = &ctx_enc_tape.output;
        if (weights.beta != 0.0 || active.ctx) {
            ctx_dec_tape = mlp_forward(m.ctx_dec, *zeta);
            ctx_err = w.ctx - ctx_dec_tape.output;
            lb.context = ctx_err.rowwise().squaredNorm().sum() * inv_t;
        }
    }

    // Koopman consistency.
    Matrix pred = z.topRows(T - 1) * m.K.transpose();
    if (zeta != nullptr) pred.noalias() += zeta->topRows(T - 1) * m.B.transpose();
    const Matrix resid = z.bottomRows(T - 1) - pred;  // (T-1) x n
    lb.koopman = resid.rowwise().squaredNorm().sum() * inv_t1;

    lb.total = weights.alpha * (lb.csi_t + lb.csi_t1) + weights.beta * lb.context +
               weights.gamma * lb.koopman;
    if (!std::isfinite(lb.total)) throw NumericError("PIAE loss is not finite");
    if (losses != nullptr) *losses = lb;

    // Reverse pass.
    const Matrix d_resid = (2.0 * weights.gamma * inv_t1) * resid;
    if (active.koopman) g.K.noalias() = -d_resid.transpose() * z.topRows(T - 1);
    if (active.input && zeta != nullptr) {
        g.B.noalias() = -d_resid.transpose() * zeta->topRows(T - 1);
    }

    if (active.csi) {
        Matrix d_hhat = csi_err * (-2.0 * weights.alpha * inv_t);
        d_hhat.bottomRows(T - 1) += csi_err.bottomRows(T - 1) * (-2.0 * weights.alpha * inv_t1);
        MlpBackward dec_back = mlp_backward(m.csi_dec, dec, d_hhat);
        g.csi_dec = std::move(dec_back.grad);

        Matrix dz = std::move(dec_back.dx);
        dz.bottomRows(T - 1) += d_resid;
        dz.topRows(T - 1).noalias() -= d_resid * m.K;
        g.csi_enc = mlp_backward(m.csi_enc, enc, dz, false).grad;
    }

    if (active.ctx && cache == nullptr && zeta != nullptr) {
        Matrix dzeta = Matrix::Zero(T, m.dims.ctx_latent);
        if (ctx_dec_tape.output.size() != 0) {
            const Matrix d_uhat = ctx_err * (-2.0 * weights.beta * inv_t);
            MlpBackward back = mlp_backward(m.ctx_dec, ctx_dec_tape, d_uhat);
            g.ctx_dec = std::move(back.grad);
            dzeta = std::move(back.dx);
        }
        dzeta.topRows(T - 1).noalias() -= d_resid * m.B;
        g.ctx_enc = mlp_backward(m.ctx_enc, ctx_enc_tape, dzeta, false).grad;
    }
    return g;
}

}  // namespace

PiaeModel PiaeModel::zeros(const ModelDims& d) {
    d.validate();
    PiaeModel m;
    m.dims = d;
    m.csi_enc = Mlp2::zeros(d.csi_in, d.csi_hidden, d.csi_latent);
    m.csi_dec = Mlp2::zeros(d.csi_latent, d.csi_hidden, d.csi_in);
    m.ctx_enc = Mlp2::zeros(d.ctx_in, d.ctx_hidden, d.ctx_latent);
    m.ctx_dec = Mlp2::zeros(d.ctx_latent, d.ctx_hidden, d.ctx_in);
    m.K = Matrix::Zero(d.csi_latent, d.csi_latent);
    m.B = Matrix::Zero(d.csi_latent, d.ctx_latent);
    return m;
}

PiaeModel PiaeModel::init(const ModelDims& d, std::uint64_t seed) {
    d.validate();
    std::mt19937_64 rng(seed);
    PiaeModel m = zeros(d);
    m.csi_enc = Mlp2::glorot(d.csi_in, d.csi_hidden, d.csi_latent, rng);
    m.csi_dec = Mlp2::glorot(d.csi_latent, d.csi_hidden, d.csi_in, rng);
    m.ctx_enc = Mlp2::glorot(d.ctx_in, d.ctx_hidden, d.ctx_latent, rng);
    m.ctx_dec = Mlp2::glorot(d.ctx_latent, d.ctx_hidden, d.ctx_in, rng);
    return m;
}

void PiaeModel::validate() const {
    dims.validate();
    for (const Mlp2* net : {&csi_enc, &csi_dec, &ctx_enc, &ctx_dec}) net->validate();
    const bool ok = csi_enc.in_dim() == dims.csi_in && csi_enc.out_dim() == dims.csi_latent &&
                    csi_dec.in_dim() == dims.csi_latent && csi_dec.out_dim() == dims.csi_in &&
                    ctx_enc.in_dim() == dims.ctx_in && ctx_enc.out_dim() == dims.ctx_latent &&
                    ctx_dec.in_dim() == dims.ctx_latent && ctx_dec.out_dim() == dims.ctx_in &&
                    K.rows() == dims.csi_latent && K.cols() == dims.csi_latent &&
                    B.rows() == dims.csi_latent && B.cols() == dims.ctx_latent;
    if (!ok) throw ShapeError("PIAE parameters do not match the declared dimensions");
}

std::vector<std::span<double>> PiaeModel::blocks() {
    std::vector<std::span<double>> out;
    append_blocks(csi_enc, out);
    append_blocks(csi_dec, out);
    append_blocks(ctx_enc, out);
    append_blocks(ctx_dec, out);
    out.push_back(span_of(K));
    out.push_back(span_of(B));
    return out;
}

std::vector<std::span<const double>> PiaeModel::blocks() const {
    std::vector<std::span<const double>> out;
    append_blocks(csi_enc, out);
    append_blocks(csi_dec, out);
    append_blocks(ctx_enc, out);
    append_blocks(ctx_dec, out);
    out.push_back(span_of(K));
    out.push_back(span_of(B));
    return out;
}

bool PiaeModel::context_decoupled() const { return B.isZero(0.0); }

PiaeGrad PiaeGrad::zeros_like(const PiaeModel& m) {
    PiaeGrad g;
    g.csi_enc = Mlp2Grad::zeros_like(m.csi_enc);
    g.csi_dec = Mlp2Grad::zeros_like(m.csi_dec);
    g.ctx_enc = Mlp2Grad::zeros_like(m.ctx_enc);
    g.ctx_dec = Mlp2Grad::zeros_like(m.ctx_dec);
    g.K = Matrix::Zero(m.K.rows(), m.K.cols());
    g.B = Matrix::Zero(m.B.rows(), m.B.cols());
    return g;
}

std::vector<std::span<double>> PiaeGrad::blocks() {
    std::vector<std::span<double>> out;
    append_blocks(csi_enc, out);
    append_blocks(csi_dec, out);
    append_blocks(ctx_enc, out);
    append_blocks(ctx_dec, out);
    out.push_back(span_of(K));
    out.push_back(span_of(B));
    return out;
}

std::vector<std::span<const double>> PiaeGrad::blocks() const {
    std::vector<std::span<const double>> out;
    append_blocks(csi_enc, out);
    append_blocks(csi_dec, out);
    append_blocks(ctx_enc, out);
    append_blocks(ctx_dec, out);
    out.push_back(span_of(K));
    out.push_back(span_of(B));
    return out;
}

double PiaeGrad::norm() const {
    double s = 0.0;
    for (auto b : blocks())
        for (double v : b) s += v * v;
    return std::sqrt(s);
}

Vector encode_csi(const PiaeModel& m, double h) {
    if (!std::isfinite(h)) throw InputError("encode_csi: non-finite input");
    Vector x(1);
    x(0) = h;
    return mlp_eval(m.csi_enc, x);
}

double decode_csi(const PiaeModel& m, const Vector& z) {
    if (z.size() != m.dims.csi_latent) {
        throw ShapeError("decode_csi: latent length " + std::to_string(z.size()) + ", expected " +
                         std::to_string(m.dims.csi_latent));
    }
    if (!z.allFinite()) throw InputError("decode_csi: non-finite latent");
    return mlp_eval(m.csi_dec, z)(0);
}

Vector encode_ctx(const PiaeModel& m, const Vector& u) {
    if (u.size() != m.dims.ctx_in) {
        throw ShapeError("encode_ctx: context length " + std::to_string(u.size()) +
                         ", expected " + std::to_string(m.dims.ctx_in));
    }
    if (!u.allFinite()) throw InputError("encode_ctx: non-finite context");
    return mlp_eval(m.ctx_enc, u);
}

Vector decode_ctx(const PiaeModel& m, const Vector& zeta) {
    if (zeta.size() != m.dims.ctx_latent) {
        throw ShapeError("decode_ctx: latent length " + std::to_string(zeta.size()) +
                         ", expected " + std::to_string(m.dims.ctx_latent));
    }
    if (!zeta.allFinite()) throw InputError("decode_ctx: non-finite latent");
    return mlp_eval(m.ctx_dec, zeta);
}

Vector koopman_step(const PiaeModel& m, const Vector& z, const Vector& zeta) {
    if (z.size() != m.K.cols() || zeta.size() != m.B.cols()) {
        throw ShapeError("koopman_step: z length " + std::to_string(z.size()) + ", zeta length " +
                         std::to_string(zeta.size()) + " vs K " + shape_string(m.K) + ", B " +
                         shape_string(m.B));
    }
    return m.K * z + m.B * zeta;
}

PiaeLossBreakdown piae_losses(const PiaeModel& m, const Window& w, const LossWeights& weights) {
    check_window(m, w);
    const Eigen::Index T = w.length();
    PiaeLossBreakdown lb;
    const Matrix z = mlp_eval(m.csi_enc, w.csi);
    const Vector csi_sq = (w.csi - mlp_eval(m.csi_dec, z)).rowwise().squaredNorm();
    lb.csi_t = csi_sq.sum() / static_cast<double>(T);
    lb.csi_t1 = csi_sq.tail(T - 1).sum() / static_cast<double>(T - 1);

    Matrix pred = z.topRows(T - 1) * m.K.transpose();
    const bool coupled = !m.context_decoupled();
    if (weights.beta != 0.0 || coupled) {
        const Matrix zeta = mlp_eval(m.ctx_enc, w.ctx);
        if (weights.beta != 0.0) {
            lb.context = (w.ctx - mlp_eval(m.ctx_dec, zeta)).rowwise().squaredNorm().sum() /
                         static_cast<double>(T);
        }
        if (coupled) pred.noalias() += zeta.topRows(T - 1) * m.B.transpose();
    }
    lb.koopman = (z.bottomRows(T - 1) - pred).rowwise().squaredNorm().sum() /
                 static_cast<double>(T - 1);
    lb.total = weights.alpha * (lb.csi_t + lb.csi_t1) + weights.beta * lb.context +
               weights.gamma * lb.koopman;
    return lb;
}

PiaeGrad piae_gradients(const PiaeModel& m, const Window& w, const LossWeights& weights,
                        const ParamGroups& active, PiaeLossBreakdown* losses) {
    return gradients_impl(m, w, weights, active, nullptr, losses);
}

ContextCache cache_context(const PiaeModel& m, const Window& w) {
    check_window(m, w);
    return {mlp_eval(m.ctx_enc, w.ctx)};
}

PiaeGrad piae_gradients(const PiaeModel& m, const Window& w, const LossWeights& weights,
                        const ParamGroups& active, const ContextCache& cache,
                        PiaeLossBreakdown* losses) {
    ParamGroups frozen_ctx = active;
    frozen_ctx.ctx = false;
    return gradients_impl(m, w, weights, frozen_ctx, &cache, losses);
}

std::vector<double> rollout_silence(const PiaeModel& m, const Vector& z0,
                                    const std::vector<Vector>& contexts) {
    if (contexts.empty()) throw InputError("rollout_silence: no contexts to roll out over");
    if (z0.size() != m.dims.csi_latent) {
        throw ShapeError("rollout_silence: initial latent length " + std::to_string(z0.size()));
    }
    const bool coupled = !m.context_decoupled();
    std::vector<double> out;
    out.reserve(contexts.size());
    Vector z = z0;
    for (const Vector& u : contexts) {
        Vector next = m.K * z;
        if (coupled) next.noalias() += m.B * encode_ctx(m, u);
        z = std::move(next);
        out.push_back(decode_csi(m, z));
    }
    return out;
}

}  // namespace ctxkoop
