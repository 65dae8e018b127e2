#pragma once

// Repeated-run evaluation: with-context vs no-context forecasting through silence intervals.

#include "ctxkoop/latent_kalman.hpp"
#include "ctxkoop/optim.hpp"
#include "ctxkoop/scenario.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ctxkoop {

/// sqrt(mean((pred - truth)^2)). Throws ShapeError on length mismatch or empty input.
double rmse(std::span<const double> pred, std::span<const double> truth);

/// Population mean and standard deviation (std is 0 for a single value).
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};
MeanStd mean_std(std::span<const double> xs);

/// Latent filter settings for the optional Kalman column.
struct KalmanSettings {
    double q = 1e-4;     // process variance per latent dimension
    double r_db = 0.1;   // measurement noise sd in dB
    double p0 = 1.0;     // initial latent variance
};

struct ExperimentSpec {
    std::vector<std::string> scenarios{kScenarioNames.begin(), kScenarioNames.end()};
    int runs = 10;
    std::uint64_t seed_base = 0;
    std::size_t trace_len = 400;
    EpisodePlan plan;
    TrainConfig train;  // use_context is overridden per arm
    SmoothingConfig smoothing;
    ModelDims dims;
    bool adversarial = false;
    bool kalman = false;
    KalmanSettings kalman_settings;
    /// Where prediction and loss CSVs go. Empty: nothing is written.
    std::filesystem::path out_dir;

    void validate() const;
};

/// One scenario x variant x context arm over all runs.
struct RunReport {
    std::string scenario;
    Variant variant = Variant::Piae;
    bool context = true;
    std::vector<double> rmse_per_run;  // silence steps only, dB
    double rmse_mean = 0.0;
    double rmse_std = 0.0;
    std::vector<double> horizon_rmse_per_run;  // training reconstruction + silence, dB
    double horizon_rmse_mean = 0.0;
    std::vector<double> kalman_rmse_per_run;  // empty unless Kalman is on
    double kalman_rmse_mean = 0.0;
    double kalman_rmse_std = 0.0;
    std::vector<double> wall_time_per_prediction;  // seconds, one per episode
    double wall_time_mean = 0.0;
    double wall_time_std = 0.0;
    std::vector<std::string> files;  // relative to the output directory
};

/// A field on which the two arms differ.
struct ConfigDiff {
    std::string field;
    std::string with_context;
    std::string without_context;
};

struct ExperimentReport {
    ExperimentSpec spec;
    std::vector<RunReport> reports;  // per scenario: context arm, then no-context arm
    std::vector<ConfigDiff> baseline_audit;
    /// True when the arms differ only in beta, B and the context networks.
    bool baseline_parity = false;
};

/// Effective differences between the with-context and no-context training configurations.
std::vector<ConfigDiff> audit_baseline(const TrainConfig& with_context,
                                       const TrainConfig& without_context);

/// Per-run result of one arm, for callers that drive runs themselves.
struct ArmRun {
    std::vector<double> silence_pred;
    std::vector<double> silence_truth;
    std::vector<double> horizon_pred;
    std::vector<double> horizon_truth;
    std::vector<double> kalman_pred;  // silence steps, empty unless Kalman is on
    std::vector<double> wall_times;
    std::vector<LossCurve> losses;
    std::vector<Episode> episodes;
};

/// Trains one arm episode by episode and forecasts each silence interval. Each episode sees
/// the trace with its own silence interval masked; training and prediction read only observed
/// samples and contexts, and the withheld ground truth is read only for scoring.
ArmRun run_arm(const Trace& trace, const ExperimentSpec& spec, bool use_context,
               std::uint64_t seed);

ExperimentReport run_experiment(const ExperimentSpec& spec);

inline constexpr std::string_view kReportSchema = "ctxkoop.run_report.v1";

/// Report document with sorted keys. Timing lives under a separate top-level "timing" key,
/// omitted when include_timing is false.
std::string report_json(const ExperimentReport& report, bool include_timing = true);

/// scenario,variant,context,runs,rmse_mean_db,rmse_std_db,horizon_rmse_mean_db,
/// kalman_rmse_mean_db,kalman_rmse_std_db,time_per_prediction_mean_s,time_per_prediction_std_s
void write_summary_csv(const ExperimentReport& report, std::ostream& os);

/// Aligned text table: one row per scenario with both arms as "mean +/- std".
void write_summary_table(const ExperimentReport& report, std::ostream& os);

/// step,t,truth_db,pred_db,silent
void write_prediction_csv(const Trace& trace, const Episode& ep, std::span<const double> pred,
                          std::span<const double> truth, std::ostream& os);

/// Trains over every episode of `plan` on the observed samples of `trace`. Returns the trainer.
Trainer train_on_trace(const Trace& trace, const EpisodePlan& plan, const ModelDims& dims,
                       const TrainConfig& cfg, const SmoothingConfig& smoothing);

/// A forecast over one maximal run of silent samples.
struct SilenceForecast {
    std::size_t begin = 0;  // first silent index
    std::vector<double> pred;
};

/// Forecasts every silent run of `trace` that follows at least one observed sample, starting
/// from the last observed value before it.
std::vector<SilenceForecast> forecast_silent_runs(const AnyModel& model,
                                                  const Standardizer& standardizer,
                                                  const Trace& trace);

}  // namespace ctxkoop
