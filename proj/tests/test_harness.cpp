#include "ctxkoop/errors.hpp"
#include "ctxkoop/harness.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ctxkoop;
using namespace ctxkoop::testing;

namespace {

ExperimentSpec quick_spec() {
    ExperimentSpec s;
    s.scenarios = {"5G_5W_28GHz"};
    s.runs = 2;
    s.dims = {1, 16, 8, 19, 32, 16};
    s.train.epochs_per_window = 30;
    s.train.adam.lr = 3e-3;
    return s;
}

}  // namespace

TEST(Metrics, RmseExamples) {
    const std::vector<double> a = {1.0, 2.0, 3.0};
    EXPECT_EQ(rmse(a, a), 0.0);
    EXPECT_DOUBLE_EQ(rmse(std::vector<double>{0.0, 0.0}, std::vector<double>{3.0, 4.0}), std::sqrt(12.5));
    EXPECT_DOUBLE_EQ(rmse(std::vector<double>{-90.0}, std::vector<double>{-92.5}), 2.5);
    std::mt19937_64 rng(1);
    const Vector p = random_vector(100, rng), t = random_vector(100, rng);
    double acc = 0;
    for (int i = 0; i < 100; ++i) acc += (p(i) - t(i)) * (p(i) - t(i));
    EXPECT_NEAR(rmse(to_std(p), to_std(t)), std::sqrt(acc / 100.0), 1e-14);
    EXPECT_THROW((void)rmse(a, std::vector<double>{1.0}), ShapeError);
    EXPECT_THROW((void)rmse(std::vector<double>{}, std::vector<double>{}), ShapeError);
}

TEST(Metrics, PopulationMeanAndStd) {
    const MeanStd m = mean_std(std::vector<double>{2, 4, 4, 4, 5, 5, 7, 9});
    EXPECT_DOUBLE_EQ(m.mean, 5.0);
    EXPECT_DOUBLE_EQ(m.std, 2.0);
    const MeanStd one = mean_std(std::vector<double>{3.25});
    EXPECT_EQ(one.mean, 3.25);
    EXPECT_EQ(one.std, 0.0);
}

TEST(Audit, ArmsDifferOnlyInContextHandling) {
    TrainConfig with, without;
    with.use_context = true;
    without.use_context = false;
    const auto diffs = audit_baseline(with, without);
    std::vector<std::string> fields;
    for (const auto& d : diffs) fields.push_back(d.field);
    std::sort(fields.begin(), fields.end());
    EXPECT_EQ(fields, (std::vector<std::string>{"B", "beta", "context_losses", "context_networks"}));

    without.adam.lr = 1e-2;
    without.epochs_per_window = 10;
    bool saw_lr = false, saw_epochs = false;
    for (const auto& d : audit_baseline(with, without)) {
        saw_lr |= d.field == "lr";
        saw_epochs |= d.field == "epochs_per_window";
    }
    EXPECT_TRUE(saw_lr && saw_epochs);
    EXPECT_TRUE(audit_baseline(with, with).empty());
}

TEST(Experiment, SpecValidation) {
    ExperimentSpec s = quick_spec();
    s.runs = 0;
    EXPECT_THROW(s.validate(), ParameterError);
    s = quick_spec();
    s.scenarios = {"5G_9W_28GHz"};
    EXPECT_THROW(s.validate(), ParameterError);
    s = quick_spec();
    s.trace_len = 300;
    EXPECT_THROW(s.validate(), ParameterError);
}

TEST(Experiment, ReportIsDeterministicApartFromTiming) {
    const ExperimentSpec spec = quick_spec();
    const ExperimentReport a = run_experiment(spec);
    const ExperimentReport b = run_experiment(spec);
    EXPECT_EQ(report_json(a, false), report_json(b, false));
    EXPECT_TRUE(a.baseline_parity);

    const auto doc = nlohmann::json::parse(report_json(a));
    EXPECT_EQ(doc.at("schema"), kReportSchema);
    EXPECT_TRUE(doc.contains("timing"));
    EXPECT_FALSE(nlohmann::json::parse(report_json(a, false)).contains("timing"));
    // Keys are emitted in sorted order.
    std::string prev;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        EXPECT_LT(prev, it.key());
        prev = it.key();
    }

    ASSERT_EQ(a.reports.size(), 2u);
    EXPECT_TRUE(a.reports[0].context);
    EXPECT_FALSE(a.reports[1].context);
    for (const RunReport& r : a.reports) {
        ASSERT_EQ(r.rmse_per_run.size(), 2u);
        const MeanStd m = mean_std(r.rmse_per_run);
        EXPECT_EQ(r.rmse_mean, m.mean);
        EXPECT_EQ(r.rmse_std, m.std);
        EXPECT_EQ(r.wall_time_per_prediction.size(), 2u);
        EXPECT_TRUE(r.kalman_rmse_per_run.empty());
    }
}

TEST(Experiment, SingleRunHasZeroSpread) {
    ExperimentSpec spec = quick_spec();
    spec.runs = 1;
    spec.kalman = true;
    const ExperimentReport r = run_experiment(spec);
    for (const RunReport& rep : r.reports) {
        EXPECT_EQ(rep.rmse_std, 0.0);
        ASSERT_EQ(rep.kalman_rmse_per_run.size(), 1u);
        EXPECT_TRUE(std::isfinite(rep.kalman_rmse_mean));
        EXPECT_EQ(rep.kalman_rmse_std, 0.0);
    }
    std::ostringstream csv, table;
    write_summary_csv(r, csv);
    write_summary_table(r, table);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
              "scenario,variant,context,runs,rmse_mean_db,rmse_std_db,horizon_rmse_mean_db,"
              "kalman_rmse_mean_db,kalman_rmse_std_db,time_per_prediction_mean_s,"
              "time_per_prediction_std_s");
    EXPECT_NE(table.str().find("5G_5W_28GHz"), std::string::npos);
    EXPECT_NE(table.str().find("+/-"), std::string::npos);
}

TEST(Experiment, WritesPredictionAndLossFiles) {
    ExperimentSpec spec = quick_spec();
    spec.runs = 1;
    spec.out_dir = std::filesystem::temp_directory_path() / "ctxkoop_test_experiment";
    std::filesystem::remove_all(spec.out_dir);
    const ExperimentReport r = run_experiment(spec);
    for (const RunReport& rep : r.reports) {
        ASSERT_EQ(rep.files.size(), 2u);
        for (const auto& f : rep.files) EXPECT_TRUE(std::filesystem::exists(spec.out_dir / f)) << f;
    }
    std::ifstream is(spec.out_dir / r.reports[0].files[0]);
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, "step,t,truth_db,pred_db,silent");
    std::size_t lines = 0;
    for (std::string l; std::getline(is, l);) ++lines;
    EXPECT_EQ(lines, 400u);
    std::filesystem::remove_all(spec.out_dir);
}

TEST(Experiment, SilenceTruthNeverReachesPredictions) {
    const ExperimentSpec spec = quick_spec();
    const Trace trace = generate_trace(scenario_config("5G_5W_28GHz", 3), 800);
    Trace poisoned = trace;
    for (const Episode& ep : plan_episodes(trace.size(), spec.plan)) {
        for (std::size_t i = ep.silence_begin(); i < ep.silence_end; ++i) poisoned.csi[i] += 1000.0;
    }
    for (bool ctx : {true, false}) {
        const ArmRun a = run_arm(trace, spec, ctx, 3);
        const ArmRun b = run_arm(poisoned, spec, ctx, 3);
        EXPECT_EQ(a.silence_pred, b.silence_pred);
        EXPECT_NE(a.silence_truth, b.silence_truth);
        EXPECT_EQ(a.silence_pred.size(), 400u);
    }
}

TEST(Experiment, OverlappingEpisodesEachMaskTheirOwnSilence) {
    ExperimentSpec spec = quick_spec();
    spec.plan.stride = 200;
    const Trace trace = generate_trace(scenario_config("6G_100mW_95GHz", 4), 800);
    const ArmRun run = run_arm(trace, spec, true, 4);
    ASSERT_EQ(run.episodes.size(), 3u);
    EXPECT_EQ(run.silence_truth.size(), 600u);
    // Episode k's forecast depends only on samples before its own silence interval.
    Trace poisoned = trace;
    for (std::size_t i = 600; i < 800; ++i) poisoned.csi[i] += 1000.0;
    const ArmRun b = run_arm(poisoned, spec, true, 4);
    EXPECT_TRUE(std::equal(run.silence_pred.begin(), run.silence_pred.begin() + 400,
                           b.silence_pred.begin()));
}

TEST(Forecast, SilentRunsFollowTheLastObservation) {
    const Trace trace = apply_silence(generate_trace(scenario_config("5G_1W_28GHz", 5), 400), {});
    TrainConfig cfg;
    cfg.epochs_per_window = 20;
    const Trainer tr = train_on_trace(clear_silence(trace), {}, {1, 16, 8, 19, 32, 16}, cfg, {});
    const auto runs = forecast_silent_runs(tr.model(), tr.standardizer(), trace);
    ASSERT_EQ(runs.size(), 1u);
    EXPECT_EQ(runs[0].begin, 200u);
    ASSERT_EQ(runs[0].pred.size(), 200u);
    EXPECT_EQ(runs[0].pred, predict_silence(tr.model(), tr.standardizer(), trace.observed_csi(199),
                                            trace.context_matrix(199, 399)));
}
