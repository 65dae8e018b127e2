#pragma once

// Adam and the sliding-window training protocol.

#include "ctxkoop/diffnet.hpp"
#include "ctxkoop/piae.hpp"
#include "ctxkoop/preprocess.hpp"
#include "ctxkoop/vkae.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <variant>
#include <vector>

namespace ctxkoop {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// First/second moment accumulators shaped like the parameter blocks. Each block keeps its
/// own step count so that blocks skipped by alternating updates get correct bias correction.
struct AdamState {
    AdamConfig config;
    long step = 0;  // number of adam_step calls
    std::vector<long> block_steps;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    AdamState() = default;
    AdamState(const AdamConfig& cfg, const std::vector<std::span<const double>>& like);
};

/// One bias-corrected Adam update. Blocks with active[i] == false are left untouched, including
/// their moments. An empty `active` means every block is updated.
void adam_step(AdamState& state, const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads,
               const std::vector<bool>& active = {});

enum class Variant { Piae, Vkae };
const char* variant_name(Variant v);
Variant parse_variant(std::string_view s);

struct TrainConfig {
    int epochs_per_window = 2000;
    AdamConfig adam;
    LossWeights weights;
    Variant variant = Variant::Piae;
    bool alt_update = false;
    bool use_context = true;
    bool cold_start = false;
    std::uint64_t seed = 0;

    void validate() const;
    /// Without context: beta = 0 and the context networks and B are frozen (B stays zero).
    [[nodiscard]] LossWeights effective_weights() const;
    [[nodiscard]] ParamGroups active_groups() const;
};

/// Block mask in model block order for the given groups.
std::vector<bool> block_mask(const ParamGroups& groups);

struct LossRecord {
    int iteration = 0;
    double csi_t = 0.0;
    double csi_t1 = 0.0;
    double context = 0.0;
    double koopman = 0.0;
    double kl_z = 0.0;
    double kl_zeta = 0.0;
    double total = 0.0;
};
using LossCurve = std::vector<LossRecord>;

/// iteration,csi_t,csi_t1,context,koopman,kl_z,kl_zeta,total
void write_loss_csv(const LossCurve& curve, std::ostream& os);

/// Full-window gradient steps on a standardized window. The curve holds the loss before every
/// step plus one entry after the last step. `rng` is only used by the variational model.
LossCurve train_window(PiaeModel& model, AdamState& adam, const Window& window,
                       const TrainConfig& cfg);
LossCurve train_window(VkaeModel& model, AdamState& adam, const Window& window,
                       const TrainConfig& cfg, std::mt19937_64& rng);

/// Convenience overload with a fresh optimizer state.
LossCurve train_window(PiaeModel& model, const Window& window, const TrainConfig& cfg);

using AnyModel = std::variant<PiaeModel, VkaeModel>;

struct SmoothingConfig {
    bool enabled = true;
    int window_len = 11;
    int poly_order = 3;
    bool smooth_context = false;
};

/// Owns one model across sliding-window episodes. The trainer never retains raw samples: after
/// `train_episode` returns, only model parameters, optimizer moments, loss records and the
/// fitted moments of the standardizer remain.
class Trainer {
public:
    Trainer(const ModelDims& dims, const TrainConfig& cfg, const SmoothingConfig& smoothing = {});

    /// Fits the standardizer on the window, smooths, standardizes and trains. Raw inputs are
    /// borrowed for the duration of the call only.
    LossCurve train_episode(std::span<const double> csi_raw, const Matrix& ctx_raw);

    /// Forecast in dB through a silence interval. contexts_raw row k is the context at step
    /// k relative to the last observed sample (row 0 = last observed step).
    std::vector<double> predict(const Matrix& contexts_raw) const;

    [[nodiscard]] const AnyModel& model() const { return model_; }
    [[nodiscard]] const AdamState& adam() const { return adam_; }
    [[nodiscard]] const Standardizer& standardizer() const { return standardizer_; }
    [[nodiscard]] const TrainConfig& config() const { return cfg_; }
    [[nodiscard]] const SmoothingConfig& smoothing() const { return smoothing_; }
    [[nodiscard]] const std::vector<LossCurve>& history() const { return history_; }
    /// Latent encoding of the last (smoothed, standardized) observation of the latest episode;
    /// the starting point of the next forecast.
    [[nodiscard]] const Vector& initial_latent() const { return initial_latent_; }
    [[nodiscard]] int episodes() const { return episodes_; }

    /// Standardized, smoothed training window prepared from raw inputs (not retained).
    Window prepare_window(std::span<const double> csi_raw, const Matrix& ctx_raw) const;

private:
    void reset_model();

    ModelDims dims_;
    TrainConfig cfg_;
    SmoothingConfig smoothing_;
    AnyModel model_;
    AdamState adam_;
    Standardizer standardizer_;
    std::mt19937_64 rng_;
    std::vector<LossCurve> history_;
    Vector initial_latent_;
    int episodes_ = 0;
};

/// Rollout in standardized units, then mapped back to dB.
std::vector<double> predict_silence(const AnyModel& model, const Standardizer& standardizer,
                                    double last_h_raw, const Matrix& contexts_raw);

}  // namespace ctxkoop
