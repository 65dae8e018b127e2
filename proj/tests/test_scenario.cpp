#include "ctxkoop/errors.hpp"
#include "ctxkoop/scenario.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace ctxkoop;

namespace {

ScenarioConfig static_free_space(std::uint64_t seed) {
    ScenarioConfig cfg = scenario_config("5G_5W_28GHz", seed);
    cfg.trajectory.radius_x = 0.0;
    cfg.trajectory.radius_y = 0.0;
    cfg.trajectory.altitude_swing = 0.0;
    cfg.rain_k = 0.0;
    cfg.humidity_coeff = 0.0;
    cfg.clutter_coeff = 0.0;
    cfg.shadow_sigma = 0.0;
    return cfg;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("ctxkoop_test_" + name);
}

}  // namespace

TEST(FreeSpace, ClosedForm) {
    EXPECT_NEAR(free_space_path_loss(1000.0, 1.0), 32.45 + 60.0, 1e-12);
    EXPECT_NEAR(free_space_path_loss(500.0, 28.0), 32.45 + 20.0 * std::log10(0.5 * 28000.0), 1e-12);
    for (double d : {10.0, 300.0, 4000.0}) {
        EXPECT_NEAR(free_space_path_loss(2 * d, 3.5) - free_space_path_loss(d, 3.5), 6.0206, 1e-4);
    }
}

TEST(Generator, StaticLinkWithoutImpairmentsIsFreeSpace) {
    const ScenarioConfig cfg = static_free_space(3);
    const Trace tr = generate_trace(cfg, 400);
    const double dz = cfg.trajectory.altitude - cfg.trajectory.rx[2];
    const double d = std::hypot(cfg.trajectory.center_x, cfg.trajectory.center_y, dz);
    const double want = free_space_path_loss(d, 28.0);
    for (double pl : tr.csi) EXPECT_NEAR(pl, want, 1e-9);
}

TEST(Generator, SeedDeterminism) {
    const Trace a = generate_trace(scenario_config("6G_100mW_95GHz", 7), 500);
    const Trace b = generate_trace(scenario_config("6G_100mW_95GHz", 7), 500);
    const Trace c = generate_trace(scenario_config("6G_100mW_95GHz", 8), 500);
    EXPECT_EQ(a.csi, b.csi);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.contexts[i].values, b.contexts[i].values);
    EXPECT_NE(a.csi, c.csi);
}

TEST(Generator, GeometryIsConsistent) {
    for (auto name : kScenarioNames) {
        const Trace tr = generate_trace(scenario_config(name, 1), 400);
        ASSERT_EQ(tr.size(), 400u);
        for (const ContextVector& c : tr.contexts) {
            const double dx = c[Feature::TxX] - c[Feature::RxX];
            const double dy = c[Feature::TxY] - c[Feature::RxY];
            const double dz = c[Feature::TxZ] - c[Feature::RxZ];
            const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
            EXPECT_NEAR(c[Feature::RelDist], d, 1e-9);
            EXPECT_NEAR(c[Feature::RelAzimuth], std::atan2(dy, dx), 1e-9);
            EXPECT_NEAR(c[Feature::RelElevation], std::asin(dz / d), 1e-9);
            EXPECT_GE(c[Feature::RainRate], 0.0);
            EXPECT_TRUE(std::isfinite(c[Feature::Temperature]));
        }
        for (double pl : tr.csi) EXPECT_TRUE(std::isfinite(pl));
    }
}

TEST(Generator, ScenarioPresets) {
    EXPECT_DOUBLE_EQ(scenario_config("5G_200mW_3.5GHz", 0).carrier_freq_ghz, 3.5);
    EXPECT_DOUBLE_EQ(scenario_config("6G_360mW_100GHz", 0).carrier_freq_ghz, 100.0);
    EXPECT_NEAR(scenario_config("5G_5W_28GHz", 0).tx_power_dbm, 10.0 * std::log10(5000.0), 1e-3);
    EXPECT_NEAR(scenario_config("6G_100mW_95GHz", 0).tx_power_dbm, 20.0, 1e-3);
    EXPECT_THROW((void)scenario_config("LTE", 0), ParameterError);
    EXPECT_THROW((void)generate_trace(scenario_config("5G_5W_28GHz", 0), 399), ParameterError);
    // Higher carrier frequency means more free-space loss along the same flight.
    const Trace low = generate_trace(scenario_config("5G_200mW_3.5GHz", 2), 400);
    const Trace high = generate_trace(scenario_config("6G_360mW_100GHz", 2), 400);
    EXPECT_GT(high.csi[0], low.csi[0] + 20.0);
}

TEST(Generator, PersistenceRegimeHasNoUsefulContext) {
    const Trace tr = generate_trace(persistence_config(4), 600);
    for (std::size_t i = 1; i < tr.size(); ++i) {
        EXPECT_EQ(tr.contexts[i][Feature::RelDist], tr.contexts[0][Feature::RelDist]);
    }
    // Increments of a random walk with the configured step size.
    double acc = 0;
    for (std::size_t i = 1; i < tr.size(); ++i) acc += std::pow(tr.csi[i] - tr.csi[i - 1], 2);
    EXPECT_NEAR(std::sqrt(acc / 599.0), 0.3, 0.05);
}

TEST(Mask, SilenceCoversTheProtocol) {
    const Trace tr = apply_silence(generate_trace(scenario_config("5G_1W_28GHz", 0), 400), {});
    std::size_t n = 0;
    for (bool m : tr.silence_mask) n += m ? 1 : 0;
    EXPECT_EQ(n, 200u);
    for (std::size_t i = 0; i < 200; ++i) EXPECT_FALSE(tr.silence_mask[i]);
    for (std::size_t i = 200; i < 400; ++i) EXPECT_TRUE(tr.silence_mask[i]);
    EXPECT_EQ(clear_silence(tr).silence_mask, std::vector<bool>(400, false));
}

TEST(Mask, WithheldSamplesCannotBeObserved) {
    const Trace tr = apply_silence(generate_trace(scenario_config("5G_1W_28GHz", 0), 400), {});
    EXPECT_NO_THROW((void)tr.observed_csi(199));
    EXPECT_THROW((void)tr.observed_csi(200), TaintError);
    EXPECT_THROW((void)tr.observed_csi(150, 201), TaintError);
    EXPECT_EQ(tr.observed_csi(0, 200).size(), 200u);
    EXPECT_EQ(tr.withheld_csi(200, 400).size(), 200u);
    EXPECT_EQ(tr.withheld_csi(200, 400)[0], tr.csi[200]);
    EXPECT_EQ(tr.context_matrix(0, 400).rows(), 400);
    EXPECT_THROW((void)tr.observed_csi(400), InputError);
}

TEST(Csv, RoundTripIsBitExact) {
    Trace tr = apply_silence(generate_trace(scenario_config("6G_360mW_100GHz", 9), 400), {});
    const auto path = temp_file("roundtrip.csv");
    save_csv(tr, path);
    const Trace back = load_csv(path);
    std::filesystem::remove(path);
    EXPECT_EQ(back.timestamps, tr.timestamps);
    EXPECT_EQ(back.csi, tr.csi);
    EXPECT_EQ(back.silence_mask, tr.silence_mask);
    for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_EQ(back.contexts[i].values, tr.contexts[i].values);
}

TEST(Csv, HandBuiltFixture) {
    std::ostringstream os;
    os << kCsvHeader << "\r\n";
    for (int r = 0; r < 3; ++r) {
        os << r << "," << 100.5 + r;
        for (int j = 0; j < 19; ++j) os << "," << (r * 19 + j) * 0.25;
        os << "," << (r == 2 ? 1 : 0) << "\r\n";
    }
    std::istringstream is(os.str());
    const Trace tr = read_csv(is);
    ASSERT_EQ(tr.size(), 3u);
    EXPECT_EQ(tr.csi, (std::vector<double>{100.5, 101.5, 102.5}));
    EXPECT_EQ(tr.silence_mask, (std::vector<bool>{false, false, true}));
    EXPECT_EQ(tr.contexts[1][Feature::TxX], 19 * 0.25);
    EXPECT_EQ(tr.contexts[2][Feature::TxPower], (2 * 19 + 18) * 0.25);
}

TEST(Csv, TruncatedFileNamesTheRow) {
    std::ostringstream full;
    write_csv(generate_trace(scenario_config("5G_5W_28GHz", 1), 400), full);
    const std::string text = full.str();
    // Cut in the middle of the fourth data row (file row 5).
    std::size_t pos = 0;
    for (int k = 0; k < 4; ++k) pos = text.find('\n', pos) + 1;
    std::istringstream is(text.substr(0, pos + 30));
    try {
        (void)read_csv(is);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("row 5"), std::string::npos) << e.what();
    }
}

TEST(Csv, BadCellsAndHeaders) {
    std::istringstream wrong(std::string("t,pl,tx_x\n0,1,2\n"));
    EXPECT_THROW((void)read_csv(wrong), SchemaError);
    std::istringstream empty("");
    EXPECT_THROW((void)read_csv(empty), SchemaError);

    std::ostringstream os;
    os << kCsvHeader << "\n0,abc";
    for (int j = 0; j < 19; ++j) os << ",0";
    os << ",0\n";
    std::istringstream bad_num(os.str());
    EXPECT_THROW((void)read_csv(bad_num), ParseError);

    std::ostringstream os2;
    os2 << kCsvHeader << "\n0,1";
    for (int j = 0; j < 19; ++j) os2 << ",0";
    os2 << ",2\n";
    std::istringstream bad_flag(os2.str());
    EXPECT_THROW((void)read_csv(bad_flag), ParseError);

    EXPECT_THROW((void)load_csv(temp_file("does_not_exist.csv")), InputError);
}
