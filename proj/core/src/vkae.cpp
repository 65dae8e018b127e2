#include "ctxkoop/vkae.hpp"

#include "ctxkoop/errors.hpp"

#include <cmath>
#include <numbers>

namespace ctxkoop {

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

struct HeadSplit {
    Matrix mean;
    Matrix log_var;      // clamped
    Matrix pass_mask;    // 1 where the clamp is inactive
};

HeadSplit split_heads(const Matrix& out, Eigen::Index n) {
    HeadSplit s;
    s.mean = out.leftCols(n);
    const Matrix raw = out.rightCols(n);
    s.log_var = raw.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
    s.pass_mask = ((raw.array() >= kLogVarMin) && (raw.array() <= kLogVarMax)).cast<double>();
    return s;
}

double kl_rows(const HeadSplit& s) {
    return 0.5 * (s.log_var.array().exp() + s.mean.array().square() - 1.0 - s.log_var.array())
                     .sum();
}

void check_window(const VkaeModel& m, const Window& w) {
    if (w.length() < 2) {
        throw InputError("window needs at least 2 samples, got " + std::to_string(w.length()));
    }
    if (w.csi.cols() != m.dims.csi_in || w.ctx.cols() != m.dims.ctx_in ||
        w.ctx.rows() != w.csi.rows()) {
        throw ShapeError("window shapes csi " + shape_string(w.csi) + ", ctx " +
                         shape_string(w.ctx) + " do not match the model");
    }
}

void check_noise(const VkaeModel& m, const Window& w, const VkaeNoise& noise, bool use_ctx) {
    if (noise.eps_z.rows() != w.length() || noise.eps_z.cols() != m.dims.csi_latent ||
        (use_ctx && (noise.eps_zeta.rows() != w.length() ||
                     noise.eps_zeta.cols() != m.dims.ctx_latent))) {
        throw ShapeError("VKAE noise draws do not match window and latent sizes");
    }
}

bool context_path(const VkaeModel& m, const LossWeights& weights, const ParamGroups& active) {
    return weights.beta != 0.0 || !m.context_decoupled() || active.ctx || active.input;
}

VkaeGrad vkae_impl(const VkaeModel& m, const Window& w, const LossWeights& weights,
                   const VkaeNoise& noise, const ParamGroups& active, bool want_grad,
                   VkaeLossBreakdown* losses) {
    check_window(m, w);
    const bool use_ctx = context_path(m, weights, active);
    check_noise(m, w, noise, use_ctx);
    const Eigen::Index T = w.length();
    const Eigen::Index n = m.dims.csi_latent;
    const Eigen::Index p = m.dims.ctx_latent;
    const double inv_t = 1.0 / static_cast<double>(T);
    const double inv_t1 = 1.0 / static_cast<double>(T - 1);
    const double log2pi = std::log(2.0 * std::numbers::pi);

    VkaeLossBreakdown lb;

    const MlpTape enc = mlp_forward(m.csi_enc, w.csi);
    const HeadSplit hz = split_heads(enc.output, n);
    const Matrix sz = (0.5 * hz.log_var.array()).exp().matrix();
    const Matrix z = hz.mean + sz.cwiseProduct(noise.eps_z);
    const MlpTape dec = mlp_forward(m.csi_dec, z);
    const Matrix csi_err = w.csi - dec.output;
    const Vector csi_nll =
        0.5 * (csi_err.rowwise().squaredNorm() / m.sigma2_h).array() +
        0.5 * static_cast<double>(m.dims.csi_in) * (log2pi + std::log(m.sigma2_h));
    lb.csi_t = csi_nll.sum() * inv_t;
    lb.csi_t1 = csi_nll.tail(T - 1).sum() * inv_t1;
    lb.kl_z = kl_rows(hz) * inv_t;

    MlpTape ctx_enc_tape;
    MlpTape ctx_dec_tape;
    HeadSplit hu;
    Matrix su;
    Matrix zeta;
    Matrix ctx_err;
    if (use_ctx) {
        ctx_enc_tape = mlp_forward(m.ctx_enc, w.ctx);
        hu = split_heads(ctx_enc_tape.output, p);
        su = (0.5 * hu.log_var.array()).exp().matrix();
        zeta = hu.mean + su.cwiseProduct(noise.eps_zeta);
        ctx_dec_tape = mlp_forward(m.ctx_dec, zeta);
        ctx_err = w.ctx - ctx_dec_tape.output;
        lb.context = (0.5 * (ctx_err.rowwise().squaredNorm() / m.sigma2_u).array() +
                      0.5 * static_cast<double>(m.dims.ctx_in) *
                          (log2pi + std::log(m.sigma2_u)))
                         .sum() *
                     inv_t;
        lb.kl_zeta = kl_rows(hu) * inv_t;
    }

    Matrix pred = z.topRows(T - 1) * m.K.transpose();
    if (use_ctx) pred.noalias() += zeta.topRows(T - 1) * m.B.transpose();
    const Matrix resid = hz.mean.bottomRows(T - 1) - pred;
    lb.koopman = resid.rowwise().squaredNorm().sum() * inv_t1;

    lb.total = weights.alpha * (lb.csi_t + lb.csi_t1) + weights.beta * lb.context +
               weights.gamma * lb.koopman + weights.lambda * (lb.kl_z + lb.kl_zeta);
    if (!std::isfinite(lb.total)) throw NumericError("VKAE loss is not finite");
    if (losses != nullptr) *losses = lb;

    VkaeGrad g;
    if (!want_grad) return g;
    g.csi_enc = Mlp2Grad::zeros_like(m.csi_enc);
    g.csi_dec = Mlp2Grad::zeros_like(m.csi_dec);
    g.ctx_enc = Mlp2Grad::zeros_like(m.ctx_enc);
    g.ctx_dec = Mlp2Grad::zeros_like(m.ctx_dec);
    g.K = Matrix::Zero(m.K.rows(), m.K.cols());
    g.B = Matrix::Zero(m.B.rows(), m.B.cols());

    const Matrix d_resid = (2.0 * weights.gamma * inv_t1) * resid;
    if (active.koopman) g.K.noalias() = -d_resid.transpose() * z.topRows(T - 1);
    if (active.input && use_ctx) g.B.noalias() = -d_resid.transpose() * zeta.topRows(T - 1);

    const double kl_scale = weights.lambda * inv_t;

    if (active.csi) {
        Matrix d_hhat = csi_err * (-weights.alpha * inv_t / m.sigma2_h);
        d_hhat.bottomRows(T - 1) += csi_err.bottomRows(T - 1) * (-weights.alpha * inv_t1 / m.sigma2_h);
        MlpBackward dec_back = mlp_backward(m.csi_dec, dec, d_hhat);
        g.csi_dec = std::move(dec_back.grad);

        Matrix dz = std::move(dec_back.dx);
        dz.topRows(T - 1).noalias() -= d_resid * m.K;

        Matrix d_mean = dz + kl_scale * hz.mean;
        d_mean.bottomRows(T - 1) += d_resid;
        Matrix d_lv = (0.5 * dz.array() * noise.eps_z.array() * sz.array() +
                       kl_scale * 0.5 * (hz.log_var.array().exp() - 1.0))
                          .matrix()
                          .cwiseProduct(hz.pass_mask);
        Matrix d_out(T, 2 * n);
        d_out << d_mean, d_lv;
        g.csi_enc = mlp_backward(m.csi_enc, enc, d_out, false).grad;
    }

    if (active.ctx && use_ctx) {
        const Matrix d_uhat = ctx_err * (-weights.beta * inv_t / m.sigma2_u);
        MlpBackward back = mlp_backward(m.ctx_dec, ctx_dec_tape, d_uhat);
        g.ctx_dec = std::move(back.grad);
        Matrix dzeta = std::move(back.dx);
        dzeta.topRows(T - 1).noalias() -= d_resid * m.B;

        Matrix d_mean = dzeta + kl_scale * hu.mean;
        Matrix d_lv = (0.5 * dzeta.array() * noise.eps_zeta.array() * su.array() +
                       kl_scale * 0.5 * (hu.log_var.array().exp() - 1.0))
                          .matrix()
                          .cwiseProduct(hu.pass_mask);
        Matrix d_out(T, 2 * p);
        d_out << d_mean, d_lv;
        g.ctx_enc = mlp_backward(m.ctx_enc, ctx_enc_tape, d_out, false).grad;
    }
    return g;
}

}  // namespace

VkaeModel VkaeModel::zeros(const ModelDims& d) {
    d.validate();
    VkaeModel m;
    m.dims = d;
    m.csi_enc = Mlp2::zeros(d.csi_in, d.csi_hidden, 2 * d.csi_latent);
    m.csi_dec = Mlp2::zeros(d.csi_latent, d.csi_hidden, d.csi_in);
    m.ctx_enc = Mlp2::zeros(d.ctx_in, d.ctx_hidden, 2 * d.ctx_latent);
    m.ctx_dec = Mlp2::zeros(d.ctx_latent, d.ctx_hidden, d.ctx_in);
    m.K = Matrix::Zero(d.csi_latent, d.csi_latent);
    m.B = Matrix::Zero(d.csi_latent, d.ctx_latent);
    return m;
}

VkaeModel VkaeModel::init(const ModelDims& d, std::uint64_t seed) {
    d.validate();
    std::mt19937_64 rng(seed);
    VkaeModel m = zeros(d);
    m.csi_enc = Mlp2::glorot(d.csi_in, d.csi_hidden, 2 * d.csi_latent, rng);
    m.csi_dec = Mlp2::glorot(d.csi_latent, d.csi_hidden, d.csi_in, rng);
    m.ctx_enc = Mlp2::glorot(d.ctx_in, d.ctx_hidden, 2 * d.ctx_latent, rng);
    m.ctx_dec = Mlp2::glorot(d.ctx_latent, d.ctx_hidden, d.ctx_in, rng);
    return m;
}

void VkaeModel::validate() const {
    dims.validate();
    for (const Mlp2* net : {&csi_enc, &csi_dec, &ctx_enc, &ctx_dec}) net->validate();
    const bool ok =
        csi_enc.in_dim() == dims.csi_in && csi_enc.out_dim() == 2 * dims.csi_latent &&
        csi_dec.in_dim() == dims.csi_latent && csi_dec.out_dim() == dims.csi_in &&
        ctx_enc.in_dim() == dims.ctx_in && ctx_enc.out_dim() == 2 * dims.ctx_latent &&
        ctx_dec.in_dim() == dims.ctx_latent && ctx_dec.out_dim() == dims.ctx_in &&
        K.rows() == dims.csi_latent && K.cols() == dims.csi_latent &&
        B.rows() == dims.csi_latent && B.cols() == dims.ctx_latent;
    if (!ok) throw ShapeError("VKAE parameters do not match the declared dimensions");
    if (!(sigma2_h > 0.0) || !(sigma2_u > 0.0)) {
        throw ParameterError("VKAE likelihood variances must be positive");
    }
}

std::vector<std::span<double>> VkaeModel::blocks() {
    std::vector<std::span<double>> out;
    append_blocks(csi_enc, out);
    append_blocks(csi_dec, out);
    append_blocks(ctx_enc, out);
    append_blocks(ctx_dec, out);
    out.push_back(span_of(K));
    out.push_back(span_of(B));
    return out;
}

std::vector<std::span<const double>> VkaeModel::blocks() const {
    std::vector<std::span<const double>> out;
    append_blocks(csi_enc, out);
    append_blocks(csi_dec, out);
    append_blocks(ctx_enc, out);
    append_blocks(ctx_dec, out);
    out.push_back(span_of(K));
    out.push_back(span_of(B));
    return out;
}

bool VkaeModel::context_decoupled() const { return B.isZero(0.0); }

VkaeNoise VkaeNoise::draw(const ModelDims& dims, Eigen::Index T, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    VkaeNoise noise;
    noise.eps_z.resize(T, dims.csi_latent);
    noise.eps_zeta.resize(T, dims.ctx_latent);
    for (Eigen::Index i = 0; i < noise.eps_z.size(); ++i) noise.eps_z.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < noise.eps_zeta.size(); ++i) {
        noise.eps_zeta.data()[i] = normal(rng);
    }
    return noise;
}

VkaeNoise VkaeNoise::zeros(const ModelDims& dims, Eigen::Index T) {
    return {Matrix::Zero(T, dims.csi_latent), Matrix::Zero(T, dims.ctx_latent)};
}

GaussianLatent encode_gaussian_csi(const VkaeModel& m, double h) {
    if (!std::isfinite(h)) throw InputError("encode_gaussian_csi: non-finite input");
    Vector x(1);
    x(0) = h;
    const Vector out = mlp_eval(m.csi_enc, x);
    const Eigen::Index n = m.dims.csi_latent;
    return {out.head(n), out.tail(n).cwiseMax(kLogVarMin).cwiseMin(kLogVarMax)};
}

GaussianLatent encode_gaussian_ctx(const VkaeModel& m, const Vector& u) {
    if (u.size() != m.dims.ctx_in) {
        throw ShapeError("encode_gaussian_ctx: context length " + std::to_string(u.size()) +
                         ", expected " + std::to_string(m.dims.ctx_in));
    }
    if (!u.allFinite()) throw InputError("encode_gaussian_ctx: non-finite context");
    const Vector out = mlp_eval(m.ctx_enc, u);
    const Eigen::Index p = m.dims.ctx_latent;
    return {out.head(p), out.tail(p).cwiseMax(kLogVarMin).cwiseMin(kLogVarMax)};
}

Vector reparameterize(const GaussianLatent& g, const Vector& noise) {
    if (g.mean.size() != g.log_var.size() || noise.size() != g.mean.size()) {
        throw ShapeError("reparameterize: mean " + std::to_string(g.mean.size()) + ", log_var " +
                         std::to_string(g.log_var.size()) + ", noise " +
                         std::to_string(noise.size()));
    }
    return g.mean + (0.5 * g.log_var.array()).exp().matrix().cwiseProduct(noise);
}

double nll_gaussian(const Vector& x, const Vector& mean, double var) {
    if (!(var > 0.0)) throw DomainError("nll_gaussian: variance must be positive");
    if (x.size() != mean.size()) throw ShapeError("nll_gaussian: length mismatch");
    const double d = static_cast<double>(x.size());
    return 0.5 * ((x - mean).squaredNorm() / var + d * std::log(2.0 * std::numbers::pi * var));
}

double kl_std_normal(const GaussianLatent& g) {
    if (g.mean.size() != g.log_var.size()) throw ShapeError("kl_std_normal: length mismatch");
    return 0.5 *
           (g.log_var.array().exp() + g.mean.array().square() - 1.0 - g.log_var.array()).sum();
}

VkaeLossBreakdown vkae_losses(const VkaeModel& m, const Window& w, const LossWeights& weights,
                              const VkaeNoise& noise, const ParamGroups& active) {
    VkaeLossBreakdown lb;
    vkae_impl(m, w, weights, noise, active, false, &lb);
    return lb;
}

VkaeLossBreakdown vkae_losses(const VkaeModel& m, const Window& w, const LossWeights& weights,
                              std::mt19937_64& rng) {
    return vkae_losses(m, w, weights, VkaeNoise::draw(m.dims, w.length(), rng));
}

VkaeGrad vkae_gradients(const VkaeModel& m, const Window& w, const LossWeights& weights,
                        const VkaeNoise& noise, const ParamGroups& active,
                        VkaeLossBreakdown* losses) {
    return vkae_impl(m, w, weights, noise, active, true, losses);
}

VkaeGrad vkae_gradients(const VkaeModel& m, const Window& w, const LossWeights& weights,
                        std::mt19937_64& rng, const ParamGroups& active,
                        VkaeLossBreakdown* losses) {
    return vkae_impl(m, w, weights, VkaeNoise::draw(m.dims, w.length(), rng), active, true,
                     losses);
}

std::vector<double> rollout_silence(const VkaeModel& m, const Vector& z0,
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
        if (coupled) next.noalias() += m.B * encode_gaussian_ctx(m, u).mean;
        z = std::move(next);
        out.push_back(mlp_eval(m.csi_dec, z)(0));
    }
    return out;
}

}  // namespace ctxkoop
