#include "ctxkoop/errors.hpp"
#include "ctxkoop/optim.hpp"
#include "ctxkoop/piae.hpp"
#include "ctxkoop/scenario.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace ctxkoop;
using namespace ctxkoop::testing;

namespace {

// relu(x) - relu(-x) == x: a two-unit ReLU pathway that is exactly the identity.
Mlp2 identity_pathway(double gain = 1.0) {
    Mlp2 n = Mlp2::zeros(1, 2, 1);
    n.w1(0, 0) = 1.0;
    n.w1(1, 0) = -1.0;
    n.w2(0, 0) = gain;
    n.w2(0, 1) = -gain;
    return n;
}

// Scalar CSI, scalar context, one latent dimension each, identity lifts.
PiaeModel scalar_identity_model(double k, double b) {
    PiaeModel m = PiaeModel::zeros({1, 2, 1, 1, 2, 1});
    m.csi_enc = identity_pathway();
    m.csi_dec = identity_pathway();
    m.ctx_enc = identity_pathway();
    m.ctx_dec = identity_pathway();
    m.K(0, 0) = k;
    m.B(0, 0) = b;
    return m;
}

ScalarObjective piae_objective(const PiaeModel& m, const Window& w, const LossWeights& lw) {
    return model_objective(
        m, [w, lw](const PiaeModel& x) { return piae_losses(x, w, lw).total; },
        [w, lw](const PiaeModel& x) { return piae_gradients(x, w, lw); });
}

}  // namespace

// --- encoders and decoders -------------------------------------------------------------

TEST(PiaeEncode, ZeroModelMapsToZero) {
    const PiaeModel m = PiaeModel::zeros();
    EXPECT_EQ(encode_csi(m, 3.2), Vector::Zero(50));
    EXPECT_EQ(decode_csi(m, Vector::Ones(50)), 0.0);
    EXPECT_EQ(encode_ctx(m, Vector::Ones(19)), Vector::Zero(950));
    EXPECT_EQ(decode_ctx(m, Vector::Ones(950)), Vector::Zero(19));
}

TEST(PiaeEncode, DefaultArchitecture) {
    const PiaeModel m = PiaeModel::init({}, 1);
    EXPECT_EQ(m.csi_enc.hidden_dim(), 64);
    EXPECT_EQ(m.K.rows(), 50);
    EXPECT_EQ(m.K.cols(), 50);
    EXPECT_EQ(m.B.rows(), 50);
    EXPECT_EQ(m.B.cols(), 950);
    EXPECT_EQ(m.ctx_enc.hidden_dim(), 256);
    EXPECT_EQ(m.ctx_enc.in_dim(), 19);
    EXPECT_NO_THROW(m.validate());
}

TEST(PiaeEncode, PureFunctionOfInput) {
    const PiaeModel m = PiaeModel::init({}, 42);
    EXPECT_EQ(encode_csi(m, 0.37), encode_csi(m, 0.37));
    const Vector u = Vector::LinSpaced(19, -1.0, 1.0);
    EXPECT_EQ(encode_ctx(m, u), encode_ctx(m, u));
}

TEST(PiaeEncode, MatchesLoopOracleAtSeed42) {
    const PiaeModel m = randomized<PiaeModel>({}, 42);
    const auto z = loop_mlp(m.csi_enc, {1.0});
    const Vector got = encode_csi(m, 1.0);
    for (int i = 0; i < 50; ++i) EXPECT_NEAR(got(i), z[static_cast<std::size_t>(i)], 1e-13);

    std::mt19937_64 rng(3);
    const Vector u = random_vector(19, rng);
    const auto zeta = loop_mlp(m.ctx_enc, to_std(u));
    const Vector gz = encode_ctx(m, u);
    for (int i = 0; i < 950; ++i) EXPECT_NEAR(gz(i), zeta[static_cast<std::size_t>(i)], 1e-12);

    const auto uhat = loop_mlp(m.ctx_dec, to_std(gz));
    const Vector gu = decode_ctx(m, gz);
    for (int i = 0; i < 19; ++i) EXPECT_NEAR(gu(i), uhat[static_cast<std::size_t>(i)], 1e-11);
    EXPECT_NEAR(decode_csi(m, got), loop_mlp(m.csi_dec, z)[0], 1e-12);
}

TEST(PiaeEncode, RejectsBadInputs) {
    const PiaeModel m = PiaeModel::init(tiny_dims(), 1);
    EXPECT_THROW((void)encode_csi(m, std::numeric_limits<double>::quiet_NaN()), InputError);
    EXPECT_THROW((void)encode_ctx(m, Vector::Zero(7)), ShapeError);
    EXPECT_THROW((void)decode_ctx(m, Vector::Zero(2)), ShapeError);
    EXPECT_THROW((void)decode_csi(m, Vector::Zero(9)), ShapeError);
}

TEST(PiaeDecode, IsNotLinear) {
    const PiaeModel m = randomized<PiaeModel>({}, 42);
    std::mt19937_64 rng(8);
    const Vector z = random_vector(50, rng);
    EXPECT_GT(std::abs(decode_csi(m, 2.0 * z) - 2.0 * decode_csi(m, z)), 1e-6);
}

TEST(PiaeDecode, ReconstructsAConstantTraceAfterTraining) {
    const ModelDims d = tiny_dims();
    PiaeModel m = PiaeModel::init(d, 5);
    const Eigen::Index T = 16;
    Window w{Matrix::Constant(T, 1, 0.8), Matrix::Constant(T, d.ctx_in, 0.1)};
    TrainConfig cfg;
    cfg.epochs_per_window = 3000;
    cfg.adam.lr = 1e-2;
    (void)train_window(m, w, cfg);
    EXPECT_NEAR(decode_csi(m, encode_csi(m, 0.8)), 0.8, 1e-3);
}

// --- Koopman step ----------------------------------------------------------------------

TEST(KoopmanStep, IdentityDynamics) {
    PiaeModel m = PiaeModel::zeros();
    m.K.setIdentity();
    std::mt19937_64 rng(1);
    const Vector z = random_vector(50, rng);
    EXPECT_EQ(koopman_step(m, z, random_vector(950, rng)), z);
    EXPECT_EQ(koopman_step(PiaeModel::zeros(), Vector::Zero(50), Vector::Ones(950)),
              Vector::Zero(50));
}

TEST(KoopmanStep, IsExactlyLinear) {
    const PiaeModel m = randomized<PiaeModel>({}, 42);
    std::mt19937_64 rng(2);
    const Vector z1 = random_vector(50, rng), z2 = random_vector(50, rng);
    const Vector q1 = random_vector(950, rng), q2 = random_vector(950, rng);
    const double a = 1.7, b = -0.6;
    const Vector lhs = koopman_step(m, a * z1 + b * z2, a * q1 + b * q2);
    const Vector rhs = a * koopman_step(m, z1, q1) + b * koopman_step(m, z2, q2);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KoopmanStep, ShapeErrors) {
    const PiaeModel m = PiaeModel::zeros();
    EXPECT_THROW((void)koopman_step(m, Vector::Zero(49), Vector::Zero(950)), ShapeError);
    EXPECT_THROW((void)koopman_step(m, Vector::Zero(50), Vector::Zero(951)), ShapeError);
}

// --- losses ----------------------------------------------------------------------------

TEST(PiaeLosses, ZeroAtAPerfectFixedPoint) {
    const PiaeModel m = scalar_identity_model(1.0, 0.0);
    Window w{Matrix::Constant(2, 1, 0.5), Matrix::Constant(2, 1, 0.3)};
    const PiaeLossBreakdown lb = piae_losses(m, w, {});
    EXPECT_EQ(lb.csi_t, 0.0);
    EXPECT_EQ(lb.csi_t1, 0.0);
    EXPECT_EQ(lb.context, 0.0);
    EXPECT_EQ(lb.koopman, 0.0);
    EXPECT_EQ(lb.total, 0.0);
    EXPECT_EQ(piae_gradients(m, w, {}).norm(), 0.0);
}

TEST(PiaeLosses, ContextDrivenFixedPoint) {
    // z' = 0 * z + (0.5 / 0.3) * zeta reproduces h' = 0.5 from u = 0.3.
    const PiaeModel m = scalar_identity_model(0.0, 0.5 / 0.3);
    Window w{Matrix::Constant(2, 1, 0.5), Matrix::Constant(2, 1, 0.3)};
    EXPECT_NEAR(piae_losses(m, w, {}).total, 0.0, 1e-30);
}

TEST(PiaeLosses, ZeroModelReconstructionIsMeanSquare) {
    const ModelDims d = tiny_dims();
    std::mt19937_64 rng(4);
    Matrix h = random_matrix(50, 1, rng);
    h.array() -= h.mean();
    h /= std::sqrt(h.squaredNorm() / 50.0);  // standardized: mean 0, variance 1
    const Window w{h, random_matrix(50, d.ctx_in, rng)};
    const PiaeLossBreakdown lb = piae_losses(PiaeModel::zeros(d), w, {});
    EXPECT_NEAR(lb.csi_t, h.squaredNorm() / 50.0, 1e-12);
    EXPECT_NEAR(lb.csi_t, 1.0, 1e-12);
    EXPECT_NEAR(lb.csi_t1, h.bottomRows(49).squaredNorm() / 49.0, 1e-12);
    EXPECT_EQ(lb.koopman, 0.0);
}

TEST(PiaeLosses, MatchLoopOracle) {
    const ModelDims d = tiny_dims();
    const PiaeModel m = randomized<PiaeModel>(d, 42);
    const Window w = random_window(8, d, 42);
    const LossWeights lw{0.7, 1.3, 2.1, 1.0};
    const PiaeLossBreakdown lb = piae_losses(m, w, lw);

    const std::size_t T = 8;
    std::vector<std::vector<double>> z(T), zeta(T);
    double csi_t = 0, csi_t1 = 0, context = 0, koop = 0;
    for (std::size_t t = 0; t < T; ++t) {
        const double h = w.csi(static_cast<Eigen::Index>(t), 0);
        std::vector<double> u(static_cast<std::size_t>(d.ctx_in));
        for (int j = 0; j < d.ctx_in; ++j) u[static_cast<std::size_t>(j)] = w.ctx(static_cast<Eigen::Index>(t), j);
        z[t] = loop_mlp(m.csi_enc, {h});
        zeta[t] = loop_mlp(m.ctx_enc, u);
        const double e = h - loop_mlp(m.csi_dec, z[t])[0];
        csi_t += e * e / T;
        if (t >= 1) csi_t1 += e * e / (T - 1);
        const auto uhat = loop_mlp(m.ctx_dec, zeta[t]);
        for (std::size_t j = 0; j < u.size(); ++j) context += (u[j] - uhat[j]) * (u[j] - uhat[j]) / T;
    }
    for (std::size_t t = 0; t + 1 < T; ++t) {
        for (int i = 0; i < d.csi_latent; ++i) {
            double p = 0;
            for (int j = 0; j < d.csi_latent; ++j) p += m.K(i, j) * z[t][static_cast<std::size_t>(j)];
            for (int j = 0; j < d.ctx_latent; ++j) p += m.B(i, j) * zeta[t][static_cast<std::size_t>(j)];
            const double r = z[t + 1][static_cast<std::size_t>(i)] - p;
            koop += r * r / (T - 1);
        }
    }
    EXPECT_NEAR(lb.csi_t, csi_t, 1e-12);
    EXPECT_NEAR(lb.csi_t1, csi_t1, 1e-12);
    EXPECT_NEAR(lb.context, context, 1e-12);
    EXPECT_NEAR(lb.koopman, koop, 1e-12);
    EXPECT_NEAR(lb.total, 0.7 * (csi_t + csi_t1) + 1.3 * context + 2.1 * koop, 1e-11);
}

TEST(PiaeLosses, NonNegativeOnRandomInputs) {
    const ModelDims d = tiny_dims();
    for (std::uint64_t s = 0; s < 20; ++s) {
        const PiaeLossBreakdown lb =
            piae_losses(randomized<PiaeModel>(d, s), random_window(5, d, s + 50), {});
        EXPECT_GE(lb.csi_t, 0.0);
        EXPECT_GE(lb.csi_t1, 0.0);
        EXPECT_GE(lb.context, 0.0);
        EXPECT_GE(lb.koopman, 0.0);
        EXPECT_GE(lb.total, 0.0);
    }
}

TEST(PiaeLosses, RejectsShortOrMismatchedWindows) {
    const ModelDims d = tiny_dims();
    const PiaeModel m = PiaeModel::init(d, 1);
    EXPECT_THROW((void)piae_losses(m, random_window(1, d, 1), {}), InputError);
    Window bad = random_window(4, d, 1);
    bad.ctx = Matrix::Zero(4, d.ctx_in + 1);
    EXPECT_THROW((void)piae_losses(m, bad, {}), ShapeError);
}

// --- gradients -------------------------------------------------------------------------

TEST(PiaeGradients, MatchFiniteDifferencesOnEveryParameter) {
    const ModelDims d = tiny_dims();
    for (std::uint64_t seed : {1u, 7u, 42u}) {
        const PiaeModel m = randomized<PiaeModel>(d, seed);
        const Window w = random_window(4, d, seed + 100);
        const LossWeights lw{1.0, 0.8, 1.5, 1.0};
        const auto params = flatten(m.blocks());
        EXPECT_LT(grad_check(piae_objective(m, w, lw), params, 1e-5), 1e-4) << "seed " << seed;
    }
}

TEST(PiaeGradients, ClosedFormKAndBMatchFiniteDifferences) {
    const ModelDims d = tiny_dims();
    const PiaeModel m = randomized<PiaeModel>(d, 3);
    const Window w = random_window(6, d, 4);
    const auto blocks = m.blocks();
    std::vector<std::size_t> kb;
    std::size_t offset = 0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (b >= 16) {
            for (std::size_t i = 0; i < blocks[b].size(); ++i) kb.push_back(offset + i);
        }
        offset += blocks[b].size();
    }
    // The loss is quadratic in K and B, so central differences are exact up to rounding.
    EXPECT_LT(grad_check(piae_objective(m, w, {}), flatten(blocks), 1e-4, kb), 1e-5);
}

TEST(PiaeGradients, FrozenGroupsGetNoGradient) {
    const ModelDims d = tiny_dims();
    const PiaeModel m = randomized<PiaeModel>(d, 9);
    const Window w = random_window(5, d, 9);
    ParamGroups only_k = ParamGroups::none();
    only_k.koopman = true;
    const PiaeGrad g = piae_gradients(m, w, {}, only_k);
    const PiaeGrad full = piae_gradients(m, w, {});
    EXPECT_EQ(g.K, full.K);
    EXPECT_TRUE(g.B.isZero(0.0));
    EXPECT_TRUE(g.csi_enc.w1.isZero(0.0));
    EXPECT_TRUE(g.ctx_dec.w2.isZero(0.0));
}

TEST(PiaeGradients, ContextCacheGivesTheSameGradients) {
    const ModelDims d = tiny_dims();
    const PiaeModel m = randomized<PiaeModel>(d, 10);
    const Window w = random_window(7, d, 10);
    ParamGroups frozen_ctx;
    frozen_ctx.ctx = false;
    PiaeLossBreakdown a, b;
    const PiaeGrad g1 = piae_gradients(m, w, {}, frozen_ctx, &a);
    const PiaeGrad g2 = piae_gradients(m, w, {}, frozen_ctx, cache_context(m, w), &b);
    EXPECT_LT((g1.K - g2.K).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((g1.B - g2.B).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((g1.csi_enc.w1 - g2.csi_enc.w1).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_NEAR(a.total, b.total, 1e-13);
}

TEST(PiaeGradients, KGradientScalesWithGamma) {
    const ModelDims d = tiny_dims();
    const PiaeModel m = randomized<PiaeModel>(d, 11);
    const Window w = random_window(6, d, 11);
    const PiaeGrad g1 = piae_gradients(m, w, {1.0, 1.0, 1.0, 1.0});
    const PiaeGrad g2 = piae_gradients(m, w, {1.0, 1.0, 2.0, 1.0});
    EXPECT_EQ(g2.K, 2.0 * g1.K);
    EXPECT_EQ(g2.B, 2.0 * g1.B);
}

// --- rollout ---------------------------------------------------------------------------

TEST(Rollout, FrozenDynamicsHoldTheLastObservation) {
    PiaeModel m = scalar_identity_model(1.0, 0.0);
    const double last = 0.42;
    const std::vector<Vector> ctx(200, Vector::Constant(1, 5.0));
    const auto out = rollout_silence(m, encode_csi(m, last), ctx);
    ASSERT_EQ(out.size(), 200u);
    for (double v : out) EXPECT_EQ(v, last);
}

TEST(Rollout, ReproducesAKnownLinearSystem) {
    const double ks = 0.9, bs = 0.25;
    const PiaeModel m = scalar_identity_model(ks, bs);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n;
    std::vector<Vector> ctx;
    std::vector<double> h{0.3};
    for (int t = 0; t < 200; ++t) {
        ctx.push_back(Vector::Constant(1, n(rng)));
        h.push_back(ks * h.back() + bs * ctx.back()(0));
    }
    const auto out = rollout_silence(m, encode_csi(m, h[0]), ctx);
    ASSERT_EQ(out.size(), 200u);
    for (std::size_t t = 0; t < out.size(); ++t) EXPECT_NEAR(out[t], h[t + 1], 1e-6);
}

TEST(Rollout, WithoutBNeverReadsContextValues) {
    PiaeModel m = randomized<PiaeModel>(tiny_dims(), 13);
    m.B.setZero();
    const Vector z0 = encode_csi(m, 0.2);
    const std::vector<Vector> nan_ctx(10, Vector::Constant(4, std::numeric_limits<double>::quiet_NaN()));
    const std::vector<Vector> ctx(10, Vector::Constant(4, 1.0));
    EXPECT_EQ(rollout_silence(m, z0, nan_ctx), rollout_silence(m, z0, ctx));
}

TEST(Rollout, RejectsEmptyContexts) {
    const PiaeModel m = PiaeModel::init(tiny_dims(), 1);
    EXPECT_THROW((void)rollout_silence(m, Vector::Zero(3), {}), InputError);
}

// --- trainability ----------------------------------------------------------------------

TEST(PiaeTraining, TwoHundredStepsHalveTheLossOnSyntheticData) {
    const Trace tr = generate_trace(scenario_config("5G_5W_28GHz", 42), 400);
    TrainConfig cfg;
    cfg.epochs_per_window = 200;
    cfg.seed = 42;
    Trainer trainer({}, cfg);
    const std::vector<double> csi(tr.csi.begin(), tr.csi.begin() + 200);
    const LossCurve c = trainer.train_episode(csi, tr.context_matrix(0, 200));
    EXPECT_LT(c.back().total, 0.5 * c.front().total);
}
