// ctxkoop: generate traces, train, forecast silence intervals and evaluate.
//
// Exit codes: 0 ok, 1 internal, 2 usage / missing input, 3 schema or parse, 4 numeric.

#include "ctxkoop/checkpoint.hpp"
#include "ctxkoop/errors.hpp"
#include "ctxkoop/harness.hpp"
#include "ctxkoop/scenario.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ctxkoop;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kSchema = 3, kNumeric = 4 };

struct TrainFlags {
    std::string variant = "piae";
    bool no_context = false;
    int epochs = TrainConfig{}.epochs_per_window;
    double lr = AdamConfig{}.lr;
    double beta1 = AdamConfig{}.beta1;
    double beta2 = AdamConfig{}.beta2;
    double adam_eps = AdamConfig{}.eps;
    LossWeights weights;
    bool alt_update = false;
    bool cold_start = false;
    std::uint64_t seed = 0;
    SmoothingConfig smoothing;
    bool no_smoothing = false;

    TrainConfig config() const {
        TrainConfig c;
        c.variant = parse_variant(variant);
        c.use_context = !no_context;
        c.epochs_per_window = epochs;
        c.adam = {lr, beta1, beta2, adam_eps};
        c.weights = weights;
        c.alt_update = alt_update;
        c.cold_start = cold_start;
        c.seed = seed;
        c.validate();
        return c;
    }
    SmoothingConfig smoothing_config() const {
        SmoothingConfig s = smoothing;
        s.enabled = !no_smoothing;
        return s;
    }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_context_flag) {
    cmd->add_option("--variant", f.variant, "Model variant")
        ->check(CLI::IsMember({"piae", "vkae"}))
        ->capture_default_str();
    if (with_context_flag) cmd->add_flag("--no-context", f.no_context, "Train the no-context baseline");
    cmd->add_option("--epochs", f.epochs, "Gradient steps per training window")->capture_default_str();
    cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--adam-beta1", f.beta1, "Adam beta1")->capture_default_str();
    cmd->add_option("--adam-beta2", f.beta2, "Adam beta2")->capture_default_str();
    cmd->add_option("--adam-eps", f.adam_eps, "Adam epsilon")->capture_default_str();
    cmd->add_option("--alpha", f.weights.alpha, "CSI reconstruction weight")->capture_default_str();
    cmd->add_option("--beta", f.weights.beta, "Context reconstruction weight")->capture_default_str();
    cmd->add_option("--gamma", f.weights.gamma, "Koopman consistency weight")->capture_default_str();
    cmd->add_option("--lambda", f.weights.lambda, "KL weight (vkae)")->capture_default_str();
    cmd->add_flag("--alt-update", f.alt_update, "Alternate CSI-side and context-side updates");
    cmd->add_flag("--cold-start", f.cold_start, "Reinitialize the model for every episode");
    cmd->add_option("--seed", f.seed, "Seed (run i of eval uses seed + i)")->capture_default_str();
    cmd->add_flag("--no-smoothing", f.no_smoothing, "Disable Savitzky-Golay smoothing of CSI");
    cmd->add_option("--sg-window", f.smoothing.window_len, "Savitzky-Golay window")->capture_default_str();
    cmd->add_option("--sg-order", f.smoothing.poly_order, "Savitzky-Golay order")->capture_default_str();
    cmd->add_flag("--smooth-context", f.smoothing.smooth_context, "Also smooth context features");
}

void add_plan_flags(CLI::App* cmd, EpisodePlan& p) {
    cmd->add_option("--train-start", p.train_start, "First training sample")->capture_default_str();
    cmd->add_option("--train-len", p.train_len, "Training window length")->capture_default_str();
    cmd->add_option("--silence-len", p.silence_len, "Silence interval length")->capture_default_str();
    cmd->add_option("--stride", p.stride, "Episode stride")->capture_default_str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
    os << text;
}

fs::path ensure_dir(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

// --- generate ---------------------------------------------------------------------------

struct GenerateArgs {
    std::vector<std::string> scenarios;
    std::size_t len = 1000;
    std::uint64_t seed = 0;
    bool adversarial = false;
    bool persistence = false;
    bool mask = false;
    EpisodePlan plan;
    std::string out = ".";
};

int cmd_generate(const GenerateArgs& a) {
    const fs::path dir = ensure_dir(a.out);
    std::vector<ScenarioConfig> configs;
    if (a.persistence) {
        configs.push_back(persistence_config(a.seed));
    } else {
        std::vector<std::string> names = a.scenarios;
        if (names.empty()) names.assign(kScenarioNames.begin(), kScenarioNames.end());
        for (const auto& n : names) {
            ScenarioConfig c = scenario_config(n, a.seed);
            c.adversarial = a.adversarial;
            configs.push_back(c);
        }
    }
    for (const ScenarioConfig& c : configs) {
        Trace t = generate_trace(c, a.len);
        if (a.mask) t = apply_silence(t, a.plan);
        const fs::path path = dir / (c.name + "_seed" + std::to_string(a.seed) + ".csv");
        save_csv(t, path);
        std::cout << path.string() << '\n';
    }
    return kOk;
}

// --- train ------------------------------------------------------------------------------

struct TrainArgs {
    std::string trace;
    EpisodePlan plan;
    TrainFlags flags;
    std::string out = ".";
};

int cmd_train(const TrainArgs& a) {
    const Trace trace = load_csv(a.trace);
    const TrainConfig cfg = a.flags.config();
    const Trainer tr = train_on_trace(trace, a.plan, ModelDims{}, cfg, a.flags.smoothing_config());
    const fs::path dir = ensure_dir(a.out);
    save_checkpoint({tr.model(), cfg.effective_weights(), cfg.seed, tr.standardizer()},
                    dir / "checkpoint.json");
    for (std::size_t e = 0; e < tr.history().size(); ++e) {
        std::ostringstream os;
        write_loss_csv(tr.history()[e], os);
        write_text(dir / ("loss_ep" + std::to_string(e) + ".csv"), os.str());
    }
    const LossRecord& last = tr.history().back().back();
    std::printf("trained %d episode(s), final total loss %.6g\n", tr.episodes(), last.total);
    std::cout << (dir / "checkpoint.json").string() << '\n';
    return kOk;
}

// --- predict ----------------------------------------------------------------------------

struct PredictArgs {
    std::string checkpoint;
    std::string trace;
    bool mask = false;
    EpisodePlan plan;
    std::string output;
};

int cmd_predict(const PredictArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    if (!ckpt.standardizer) throw SchemaError("checkpoint has no standardizer; cannot map to dB");
    Trace trace = load_csv(a.trace);
    if (a.mask) trace = apply_silence(trace, a.plan);
    const auto forecasts = forecast_silent_runs(ckpt.model, *ckpt.standardizer, trace);
    if (forecasts.empty()) throw InputError("trace has no silent samples after an observation");

    std::ostringstream os;
    os << "step,t,pred_db\n";
    char buf[96];
    for (const auto& f : forecasts) {
        for (std::size_t k = 0; k < f.pred.size(); ++k) {
            const std::size_t step = f.begin + k;
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", step, trace.timestamps[step],
                          f.pred[k]);
            os << buf;
        }
    }
    if (a.output.empty()) {
        std::cout << os.str();
    } else {
        write_text(a.output, os.str());
    }
    return kOk;
}

// --- eval -------------------------------------------------------------------------------

struct EvalArgs {
    std::vector<std::string> scenarios;
    int runs = 10;
    std::size_t trace_len = 400;
    EpisodePlan plan;
    TrainFlags flags;
    bool kalman = false;
    KalmanSettings kalman_settings;
    bool adversarial = false;
    std::string out = "results";
};

int cmd_eval(const EvalArgs& a) {
    ExperimentSpec spec;
    if (!a.scenarios.empty()) spec.scenarios = a.scenarios;
    spec.runs = a.runs;
    spec.seed_base = a.flags.seed;
    spec.trace_len = a.trace_len;
    spec.plan = a.plan;
    spec.train = a.flags.config();
    spec.smoothing = a.flags.smoothing_config();
    spec.kalman = a.kalman;
    spec.kalman_settings = a.kalman_settings;
    spec.adversarial = a.adversarial;
    spec.out_dir = ensure_dir(a.out);

    const ExperimentReport report = run_experiment(spec);
    write_text(spec.out_dir / "report.json", report_json(report));
    std::ostringstream csv, table;
    write_summary_csv(report, csv);
    write_summary_table(report, table);
    write_text(spec.out_dir / "summary.csv", csv.str());
    write_text(spec.out_dir / "summary.txt", table.str());
    std::cout << table.str();
    if (!report.baseline_parity) {
        std::cerr << "warning: baseline differs from the context model beyond the context path\n";
    }
    return kOk;
}

int run(int argc, char** argv) {
    CLI::App app{"Context-aware Koopman forecasting of channel state through silence intervals"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write synthetic traces as CSV");
    g->add_option("--scenario", gen.scenarios, "Scenario name (repeatable; default: all)")
        ->check(CLI::IsMember(std::vector<std::string>(kScenarioNames.begin(), kScenarioNames.end())));
    g->add_option("--len", gen.len, "Samples per trace")->capture_default_str();
    g->add_option("--seed", gen.seed, "Seed")->capture_default_str();
    g->add_flag("--adversarial", gen.adversarial, "Add regime switches");
    g->add_flag("--persistence", gen.persistence, "Context-free random-walk trace instead");
    g->add_flag("--mask", gen.mask, "Mark the silence intervals of the episode plan");
    add_plan_flags(g, gen.plan);
    g->add_option("--out", gen.out, "Output directory")->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train on a trace and write a checkpoint");
    t->add_option("--trace", tr.trace, "Trace CSV")->required();
    add_plan_flags(t, tr.plan);
    add_train_flags(t, tr.flags, true);
    t->add_option("--out", tr.out, "Output directory")->capture_default_str();

    PredictArgs pr;
    auto* p = app.add_subcommand("predict", "Forecast the silent samples of a trace");
    p->add_option("--checkpoint", pr.checkpoint, "Checkpoint JSON")->required();
    p->add_option("--trace", pr.trace, "Trace CSV")->required();
    p->add_flag("--mask", pr.mask, "Mask the silence intervals of the episode plan first");
    add_plan_flags(p, pr.plan);
    p->add_option("--output", pr.output, "Prediction CSV (default: stdout)");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Repeated with/without-context evaluation");
    e->add_option("--scenario", ev.scenarios, "Scenario name (repeatable; default: all)")
        ->check(CLI::IsMember(std::vector<std::string>(kScenarioNames.begin(), kScenarioNames.end())));
    e->add_option("--runs", ev.runs, "Independent runs per scenario")->capture_default_str();
    e->add_option("--trace-len", ev.trace_len, "Samples per generated trace")->capture_default_str();
    add_plan_flags(e, ev.plan);
    add_train_flags(e, ev.flags, false);
    e->add_flag("--kalman", ev.kalman, "Also score latent Kalman smoothing");
    e->add_option("--kalman-q", ev.kalman_settings.q, "Latent process variance")->capture_default_str();
    e->add_option("--kalman-r-db", ev.kalman_settings.r_db, "Measurement noise sd [dB]")->capture_default_str();
    e->add_option("--kalman-p0", ev.kalman_settings.p0, "Initial latent variance")->capture_default_str();
    e->add_flag("--adversarial", ev.adversarial, "Use the regime-switching preset");
    e->add_option("--out", ev.out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kUsage;
    }

    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*p) return cmd_predict(pr);
    return cmd_eval(ev);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return kSchema;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kSchema;
    } catch (const ShapeError& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return kSchema;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const DomainError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    }
}
