#include "ctxkoop/harness.hpp"

#include "ctxkoop/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace ctxkoop {

using nlohmann::json;

double rmse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) {
        throw ShapeError("rmse: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " ground-truth values");
    }
    if (pred.empty()) throw ShapeError("rmse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

MeanStd mean_std(std::span<const double> xs) {
    if (xs.empty()) return {};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

void ExperimentSpec::validate() const {
    if (runs < 1) throw ParameterError("runs must be at least 1");
    if (scenarios.empty()) throw ParameterError("no scenarios given");
    for (const auto& s : scenarios) {
        if (std::find(kScenarioNames.begin(), kScenarioNames.end(), s) == kScenarioNames.end()) {
            throw ParameterError("unknown scenario '" + s + "'");
        }
    }
    plan.validate();
    train.validate();
    dims.validate();
    if (!(kalman_settings.q > 0.0) || !(kalman_settings.r_db > 0.0) ||
        !(kalman_settings.p0 > 0.0)) {
        throw ParameterError("Kalman variances must be positive");
    }
    (void)plan_episodes(trace_len, plan);
}

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string group_state(bool active) { return active ? "trained" : "frozen"; }

double reconstruct(const AnyModel& model, double h_std) {
    if (const auto* p = std::get_if<PiaeModel>(&model)) return decode_csi(*p, encode_csi(*p, h_std));
    const auto& v = std::get<VkaeModel>(model);
    return mlp_eval(v.csi_dec, encode_gaussian_csi(v, h_std).mean)(0);
}

Vector encode_h(const AnyModel& model, double h_std) {
    if (const auto* p = std::get_if<PiaeModel>(&model)) return encode_csi(*p, h_std);
    return encode_gaussian_csi(std::get<VkaeModel>(model), h_std).mean;
}

// Kalman-smoothed estimate over one episode; returns the silence part in dB.
std::vector<double> kalman_silence(const Trainer& tr, const Trace& masked, const Episode& ep,
                                   std::span<const double> observed, const KalmanSettings& ks) {
    const Standardizer& s = tr.standardizer();
    const AnyModel& model = tr.model();
    const std::size_t n = ep.silence_end - ep.train_begin;

    std::vector<std::optional<double>> obs(n);
    for (std::size_t i = 0; i < observed.size(); ++i) obs[i] = s.apply_csi(observed[i]);

    NoiseConfig noise;
    const LatentSystem sys =
        std::visit([](const auto& m) { return latent_system(m); }, model);
    const Eigen::Index nz = sys.state_dim();
    noise.Q = Matrix::Identity(nz, nz) * ks.q;
    noise.R = std::pow(ks.r_db / s.csi_std(), 2);

    const bool decoupled = std::visit([](const auto& m) { return m.context_decoupled(); }, model);
    const Matrix ctx = s.apply_ctx(masked.context_matrix(ep.train_begin, ep.silence_end));
    noise.ctx_mean.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        const Vector u = ctx.row(static_cast<Eigen::Index>(t)).transpose();
        if (decoupled) {
            noise.ctx_mean.push_back(Vector::Zero(sys.B->cols()));
        } else if (const auto* p = std::get_if<PiaeModel>(&model)) {
            noise.ctx_mean.push_back(encode_ctx(*p, u));
        } else {
            GaussianLatent g = encode_gaussian_ctx(std::get<VkaeModel>(model), u);
            noise.ctx_mean.push_back(std::move(g.mean));
            noise.ctx_var.push_back(g.log_var.array().exp().matrix());
        }
    }

    LatentBelief init{encode_h(model, *obs[0]), Matrix::Identity(nz, nz) * ks.p0};
    const SmoothedSeries sm = smooth_and_decode(init, obs, sys, noise);
    std::vector<double> out;
    out.reserve(ep.silence_end - ep.train_end);
    for (std::size_t i = observed.size(); i < n; ++i) out.push_back(s.invert_csi(sm.csi[i]));
    return out;
}

json plan_json(const EpisodePlan& p) {
    return {{"train_start", p.train_start},
            {"train_len", p.train_len},
            {"silence_len", p.silence_len},
            {"stride", p.stride}};
}

json spec_json(const ExperimentSpec& s) {
    const TrainConfig& t = s.train;
    return {
        {"scenarios", s.scenarios},
        {"runs", s.runs},
        {"seed_base", s.seed_base},
        {"trace_len", s.trace_len},
        {"plan", plan_json(s.plan)},
        {"train",
         {{"epochs_per_window", t.epochs_per_window},
          {"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},
          {"alpha", t.weights.alpha},
          {"beta", t.weights.beta},
          {"gamma", t.weights.gamma},
          {"lambda", t.weights.lambda},
          {"variant", variant_name(t.variant)},
          {"alt_update", t.alt_update},
          {"cold_start", t.cold_start}}},
        {"smoothing",
         {{"enabled", s.smoothing.enabled},
          {"window_len", s.smoothing.window_len},
          {"poly_order", s.smoothing.poly_order},
          {"smooth_context", s.smoothing.smooth_context}}},
        {"dims",
         {{"csi_in", s.dims.csi_in},
          {"csi_hidden", s.dims.csi_hidden},
          {"csi_latent", s.dims.csi_latent},
          {"ctx_in", s.dims.ctx_in},
          {"ctx_hidden", s.dims.ctx_hidden},
          {"ctx_latent", s.dims.ctx_latent}}},
        {"adversarial", s.adversarial},
        {"kalman", s.kalman},
        {"kalman_settings",
         {{"q", s.kalman_settings.q}, {"r_db", s.kalman_settings.r_db}, {"p0", s.kalman_settings.p0}}},
    };
}

std::string arm_name(bool context) { return context ? "context" : "no_context"; }

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
    os << text;
}

void finish(RunReport& r) {
    const MeanStd e = mean_std(r.rmse_per_run);
    r.rmse_mean = e.mean;
    r.rmse_std = e.std;
    r.horizon_rmse_mean = mean_std(r.horizon_rmse_per_run).mean;
    const MeanStd k = mean_std(r.kalman_rmse_per_run);
    r.kalman_rmse_mean = k.mean;
    r.kalman_rmse_std = k.std;
    const MeanStd w = mean_std(r.wall_time_per_prediction);
    r.wall_time_mean = w.mean;
    r.wall_time_std = w.std;
}

}  // namespace

std::vector<ConfigDiff> audit_baseline(const TrainConfig& a, const TrainConfig& b) {
    std::vector<ConfigDiff> diffs;
    auto cmp = [&](const char* field, const std::string& x, const std::string& y) {
        if (x != y) diffs.push_back({field, x, y});
    };
    const LossWeights wa = a.effective_weights();
    const LossWeights wb = b.effective_weights();
    const ParamGroups ga = a.active_groups();
    const ParamGroups gb = b.active_groups();
    cmp("variant", variant_name(a.variant), variant_name(b.variant));
    cmp("epochs_per_window", std::to_string(a.epochs_per_window),
        std::to_string(b.epochs_per_window));
    cmp("lr", fmt(a.adam.lr), fmt(b.adam.lr));
    cmp("beta1", fmt(a.adam.beta1), fmt(b.adam.beta1));
    cmp("beta2", fmt(a.adam.beta2), fmt(b.adam.beta2));
    cmp("eps", fmt(a.adam.eps), fmt(b.adam.eps));
    cmp("alpha", fmt(wa.alpha), fmt(wb.alpha));
    cmp("beta", fmt(wa.beta), fmt(wb.beta));
    cmp("gamma", fmt(wa.gamma), fmt(wb.gamma));
    cmp("lambda", fmt(wa.lambda), fmt(wb.lambda));
    cmp("alt_update", a.alt_update ? "true" : "false", b.alt_update ? "true" : "false");
    cmp("cold_start", a.cold_start ? "true" : "false", b.cold_start ? "true" : "false");
    cmp("seed", std::to_string(a.seed), std::to_string(b.seed));
    cmp("csi_networks", group_state(ga.csi), group_state(gb.csi));
    cmp("K", group_state(ga.koopman), group_state(gb.koopman));
    cmp("context_networks", group_state(ga.ctx), group_state(gb.ctx));
    cmp("B", ga.input ? "trained" : "held at 0", gb.input ? "trained" : "held at 0");
    cmp("context_losses", wa.beta != 0.0 ? "included" : "excluded",
        wb.beta != 0.0 ? "included" : "excluded");
    return diffs;
}

namespace {

// The trace with only this episode's silence interval masked, so that overlapping episodes
// may train on samples that were silent for an earlier episode.
Trace mask_episode(const Trace& trace, const Episode& ep) {
    Trace out = clear_silence(trace);
    for (std::size_t i = ep.silence_begin(); i < ep.silence_end; ++i) out.silence_mask[i] = true;
    return out;
}

}  // namespace

ArmRun run_arm(const Trace& trace, const ExperimentSpec& spec, bool use_context,
               std::uint64_t seed) {
    TrainConfig tc = spec.train;
    tc.use_context = use_context;
    tc.seed = seed;
    Trainer tr(spec.dims, tc, spec.smoothing);

    ArmRun out;
    out.episodes = plan_episodes(trace.size(), spec.plan);
    for (const Episode& ep : out.episodes) {
        const Trace masked = mask_episode(trace, ep);
        const std::vector<double> csi = masked.observed_csi(ep.train_begin, ep.train_end);
        const Matrix ctx = masked.context_matrix(ep.train_begin, ep.train_end);
        out.losses.push_back(tr.train_episode(csi, ctx));

        // Row 0 is the context at the last observed step.
        const Matrix fc = masked.context_matrix(ep.train_end - 1, ep.silence_end - 1);
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<double> pred = tr.predict(fc);
        const auto t1 = std::chrono::steady_clock::now();
        out.wall_times.push_back(std::chrono::duration<double>(t1 - t0).count());

        const std::vector<double> truth = masked.withheld_csi(ep.train_end, ep.silence_end);

        const Window w = tr.prepare_window(csi, ctx);
        for (Eigen::Index t = 0; t < w.length(); ++t) {
            out.horizon_pred.push_back(
                tr.standardizer().invert_csi(reconstruct(tr.model(), w.csi(t, 0))));
        }
        out.horizon_truth.insert(out.horizon_truth.end(), csi.begin(), csi.end());
        out.horizon_pred.insert(out.horizon_pred.end(), pred.begin(), pred.end());
        out.horizon_truth.insert(out.horizon_truth.end(), truth.begin(), truth.end());
        out.silence_pred.insert(out.silence_pred.end(), pred.begin(), pred.end());
        out.silence_truth.insert(out.silence_truth.end(), truth.begin(), truth.end());

        if (spec.kalman) {
            const std::vector<double> k = kalman_silence(tr, masked, ep, csi, spec.kalman_settings);
            out.kalman_pred.insert(out.kalman_pred.end(), k.begin(), k.end());
        }
    }
    return out;
}

ExperimentReport run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentReport report;
    report.spec = spec;

    TrainConfig with = spec.train;
    with.use_context = true;
    TrainConfig without = spec.train;
    without.use_context = false;
    report.baseline_audit = audit_baseline(with, without);
    report.baseline_parity = std::all_of(
        report.baseline_audit.begin(), report.baseline_audit.end(), [](const ConfigDiff& d) {
            return d.field == "beta" || d.field == "context_networks" || d.field == "B" ||
                   d.field == "context_losses";
        });

    if (!spec.out_dir.empty()) std::filesystem::create_directories(spec.out_dir);

    for (const std::string& name : spec.scenarios) {
        RunReport arms[2];
        for (int a = 0; a < 2; ++a) {
            arms[a].scenario = name;
            arms[a].variant = spec.train.variant;
            arms[a].context = (a == 0);
        }
        for (int i = 0; i < spec.runs; ++i) {
            const std::uint64_t seed = spec.seed_base + static_cast<std::uint64_t>(i);
            ScenarioConfig cfg = scenario_config(name, seed);
            cfg.adversarial = spec.adversarial;
            const Trace trace = generate_trace(cfg, spec.trace_len);

            for (int a = 0; a < 2; ++a) {
                RunReport& r = arms[a];
                const ArmRun run = run_arm(trace, spec, r.context, seed);
                r.rmse_per_run.push_back(rmse(run.silence_pred, run.silence_truth));
                r.horizon_rmse_per_run.push_back(rmse(run.horizon_pred, run.horizon_truth));
                if (spec.kalman) {
                    r.kalman_rmse_per_run.push_back(rmse(run.kalman_pred, run.silence_truth));
                }
                r.wall_time_per_prediction.insert(r.wall_time_per_prediction.end(),
                                                  run.wall_times.begin(), run.wall_times.end());
                if (spec.out_dir.empty()) continue;

                const std::string stem = name + "_" + variant_name(spec.train.variant) + "_" +
                                         arm_name(r.context) + "_run" + std::to_string(i);
                std::ostringstream preds;
                std::size_t offset = 0;
                for (const Episode& ep : run.episodes) {
                    const std::size_t n = ep.silence_end - ep.train_begin;
                    write_prediction_csv(
                        trace, ep,
                        std::span<const double>(run.horizon_pred).subspan(offset, n),
                        std::span<const double>(run.horizon_truth).subspan(offset, n), preds);
                    offset += n;
                }
                write_file(spec.out_dir / ("pred_" + stem + ".csv"), preds.str());
                r.files.push_back("pred_" + stem + ".csv");
                for (std::size_t e = 0; e < run.losses.size(); ++e) {
                    std::ostringstream ls;
                    write_loss_csv(run.losses[e], ls);
                    const std::string f = "loss_" + stem + "_ep" + std::to_string(e) + ".csv";
                    write_file(spec.out_dir / f, ls.str());
                    r.files.push_back(f);
                }
            }
        }
        for (auto& r : arms) {
            finish(r);
            report.reports.push_back(std::move(r));
        }
    }
    return report;
}

std::string report_json(const ExperimentReport& report, bool include_timing) {
    json doc;
    doc["schema"] = kReportSchema;
    doc["spec"] = spec_json(report.spec);
    json reports = json::array();
    json timing = json::array();
    for (const RunReport& r : report.reports) {
        json j = {{"scenario", r.scenario},
                  {"variant", variant_name(r.variant)},
                  {"context", r.context},
                  {"rmse_per_run", r.rmse_per_run},
                  {"rmse_mean", r.rmse_mean},
                  {"rmse_std", r.rmse_std},
                  {"horizon_rmse_per_run", r.horizon_rmse_per_run},
                  {"horizon_rmse_mean", r.horizon_rmse_mean},
                  {"files", r.files}};
        if (report.spec.kalman) {
            j["kalman_rmse_per_run"] = r.kalman_rmse_per_run;
            j["kalman_rmse_mean"] = r.kalman_rmse_mean;
            j["kalman_rmse_std"] = r.kalman_rmse_std;
        }
        reports.push_back(std::move(j));
        timing.push_back({{"scenario", r.scenario},
                          {"variant", variant_name(r.variant)},
                          {"context", r.context},
                          {"wall_time_per_prediction", r.wall_time_per_prediction},
                          {"wall_time_per_prediction_mean", r.wall_time_mean},
                          {"wall_time_per_prediction_std", r.wall_time_std}});
    }
    doc["reports"] = std::move(reports);
    json audit = json::array();
    for (const ConfigDiff& d : report.baseline_audit) {
        audit.push_back({{"field", d.field},
                         {"with_context", d.with_context},
                         {"without_context", d.without_context}});
    }
    doc["baseline_audit"] = {{"differences", std::move(audit)}, {"parity", report.baseline_parity}};
    if (include_timing) doc["timing"] = std::move(timing);
    return doc.dump(2) + "\n";
}

void write_summary_csv(const ExperimentReport& report, std::ostream& os) {
    os << "scenario,variant,context,runs,rmse_mean_db,rmse_std_db,horizon_rmse_mean_db,"
          "kalman_rmse_mean_db,kalman_rmse_std_db,time_per_prediction_mean_s,"
          "time_per_prediction_std_s\n";
    for (const RunReport& r : report.reports) {
        os << r.scenario << ',' << variant_name(r.variant) << ',' << (r.context ? 1 : 0) << ','
           << r.rmse_per_run.size() << ',' << fmt(r.rmse_mean) << ',' << fmt(r.rmse_std) << ','
           << fmt(r.horizon_rmse_mean) << ',';
        if (report.spec.kalman) {
            os << fmt(r.kalman_rmse_mean) << ',' << fmt(r.kalman_rmse_std);
        } else {
            os << ',';
        }
        os << ',' << fmt(r.wall_time_mean) << ',' << fmt(r.wall_time_std) << '\n';
    }
}

void write_summary_table(const ExperimentReport& report, std::ostream& os) {
    auto cell = [](double m, double s) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f +/- %.3f", m, s);
        return std::string(buf);
    };
    std::vector<std::array<std::string, 4>> rows;
    rows.push_back({"Scenario", "With context (dB)", "Without context (dB)", "Ratio"});
    for (std::size_t i = 0; i + 1 < report.reports.size(); i += 2) {
        const RunReport& c = report.reports[i];
        const RunReport& n = report.reports[i + 1];
        char ratio[32];
        std::snprintf(ratio, sizeof ratio, "%.1fx", c.rmse_mean > 0 ? n.rmse_mean / c.rmse_mean : 0.0);
        rows.push_back({c.scenario, cell(c.rmse_mean, c.rmse_std), cell(n.rmse_mean, n.rmse_std),
                        ratio});
    }
    std::array<std::size_t, 4> width{};
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < 4; ++k) width[k] = std::max(width[k], r[k].size());
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
            os << std::left << std::setw(static_cast<int>(width[k])) << rows[i][k]
               << (k + 1 < 4 ? "  " : "\n");
        }
        if (i == 0) {
            std::size_t total = width[0] + width[1] + width[2] + width[3] + 6;
            os << std::string(total, '-') << '\n';
        }
    }
}

void write_prediction_csv(const Trace& trace, const Episode& ep, std::span<const double> pred,
                          std::span<const double> truth, std::ostream& os) {
    const std::size_t n = ep.silence_end - ep.train_begin;
    if (pred.size() != n || truth.size() != n) {
        throw ShapeError("write_prediction_csv: expected " + std::to_string(n) + " values");
    }
    if (ep.train_begin == 0) os << "step,t,truth_db,pred_db,silent\n";
    char buf[160];
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t step = ep.train_begin + i;
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%d\n", step, trace.timestamps[step],
                      truth[i], pred[i], step >= ep.train_end ? 1 : 0);
        os << buf;
    }
}

Trainer train_on_trace(const Trace& trace, const EpisodePlan& plan, const ModelDims& dims,
                       const TrainConfig& cfg, const SmoothingConfig& smoothing) {
    Trainer tr(dims, cfg, smoothing);
    for (const Episode& ep : plan_episodes(trace.size(), plan)) {
        tr.train_episode(trace.observed_csi(ep.train_begin, ep.train_end),
                         trace.context_matrix(ep.train_begin, ep.train_end));
    }
    return tr;
}

std::vector<SilenceForecast> forecast_silent_runs(const AnyModel& model,
                                                  const Standardizer& standardizer,
                                                  const Trace& trace) {
    std::vector<SilenceForecast> out;
    std::size_t i = 0;
    while (i < trace.size()) {
        if (!trace.silence_mask[i]) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < trace.size() && trace.silence_mask[end]) ++end;
        if (i > 0) {
            const Matrix ctx = trace.context_matrix(i - 1, end - 1);
            out.push_back({i, predict_silence(model, standardizer, trace.observed_csi(i - 1), ctx)});
        }
        i = end;
    }
    return out;
}

}  // namespace ctxkoop
