#pragma once

// Synthetic UAV-to-ground channel traces and their CSV representation.

#include "ctxkoop/diffnet.hpp"
#include "ctxkoop/preprocess.hpp"
#include "ctxkoop/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ctxkoop {

/// Fixed layout of the 19 context features.
enum class Feature : int {
    TxX, TxY, TxZ,
    RxX, RxY, RxZ,
    RelDist, RelAzimuth, RelElevation,
    TxVx, TxVy, TxVz,
    Temperature, Pressure, WaterVapor, RainRate,
    ClutterHeight, CarrierFreq, TxPower,
};

struct ContextVector {
    std::array<double, kContextFeatures> values{};

    double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
    double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
    [[nodiscard]] Vector to_vector() const;
};

/// Time-aligned path loss, contexts and silence mask.
///
/// Masked CSI samples are ground truth withheld from every training and prediction path.
/// Read them only through `withheld_csi`; `observed_csi` throws TaintError on a masked index.
struct Trace {
    std::vector<double> timestamps;
    std::vector<double> csi;  // path loss, dB
    std::vector<ContextVector> contexts;
    std::vector<bool> silence_mask;

    [[nodiscard]] std::size_t size() const { return csi.size(); }
    void validate() const;

    double observed_csi(std::size_t i) const;
    std::vector<double> observed_csi(std::size_t begin, std::size_t end) const;
    /// Ground truth for scoring. Callers must be evaluation code.
    std::vector<double> withheld_csi(std::size_t begin, std::size_t end) const;
    Matrix context_matrix(std::size_t begin, std::size_t end) const;
};

inline constexpr std::array<std::string_view, 5> kScenarioNames = {
    "5G_5W_28GHz", "5G_1W_28GHz", "5G_200mW_3.5GHz", "6G_100mW_95GHz", "6G_360mW_100GHz"};

struct TrajectoryParams {
    double center_x = 600.0;  // m
    double center_y = 0.0;
    double radius_x = 300.0;
    double radius_y = 250.0;
    double altitude = 120.0;
    double altitude_swing = 30.0;
    double period = 100.0;  // samples per loop
    double dt = 1.0;        // s
    std::array<double, 3> rx = {0.0, 0.0, 1.5};
};

/// Stationary AR(1) process: v <- rho v + sd sqrt(1 - rho^2) e.
struct Ar1Params {
    double mean = 0.0;
    double sd = 0.0;
    double rho = 0.9;
};

struct WeatherParams {
    Ar1Params temperature{15.0, 0.5, 0.9};   // deg C
    Ar1Params pressure{1013.0, 1.0, 0.9};    // hPa
    Ar1Params water_vapor{7.5, 0.5, 0.9};    // g/m^3
    Ar1Params rain{5.0, 1.0, 0.9};           // mm/h, clipped at 0
};

struct ScenarioConfig {
    std::string name = "5G_5W_28GHz";
    double carrier_freq_ghz = 28.0;
    double tx_power_dbm = 36.9897;
    TrajectoryParams trajectory;
    WeatherParams weather;
    double rain_k = 0.0;      // filled from the frequency table by `scenario_config`
    double rain_alpha = 1.0;
    double humidity_coeff = 0.05;  // dB per g/m^3
    double clutter_height = 10.0;  // m
    double clutter_coeff = 0.02;   // dB per m of clutter, scaled by cos^2(elevation)
    double shadow_sigma = 0.05;    // dB
    double shadow_rho = 0.99;      // 1.0 gives a random walk with step sd shadow_sigma
    bool adversarial = false;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Power-law rain coefficients (k, alpha), interpolated in log-frequency.
std::pair<double, double> rain_coefficients(double freq_ghz);

/// Preset for one of the five named scenarios.
ScenarioConfig scenario_config(std::string_view name, std::uint64_t seed);

/// Static UAV, zero environmental coefficients, random-walk shadowing: nothing in the
/// context predicts the channel.
ScenarioConfig persistence_config(std::uint64_t seed, double walk_sd = 0.3);

/// Free-space loss 32.45 + 20 log10(d_km * f_MHz).
double free_space_path_loss(double distance_m, double freq_ghz);

/// Deterministic given cfg (including seed). Throws ParameterError if len < 400.
Trace generate_trace(const ScenarioConfig& cfg, std::size_t len);

/// Copy of the trace with the mask set exactly on the silence ranges of the plan.
Trace apply_silence(const Trace& trace, const EpisodePlan& plan);
/// Clears the mask.
Trace clear_silence(const Trace& trace);

inline constexpr std::string_view kCsvHeader =
    "t,pl_db,tx_x,tx_y,tx_z,rx_x,rx_y,rx_z,rel_dist,rel_az,rel_el,tx_vx,tx_vy,tx_vz,temp_c,"
    "pressure_hpa,wvd_g_m3,rain_mm_h,clutter_m,freq_ghz,txpow_dbm,silent";

void save_csv(const Trace& trace, const std::filesystem::path& path);
Trace load_csv(const std::filesystem::path& path);
void write_csv(const Trace& trace, std::ostream& os);
Trace read_csv(std::istream& is);

}  // namespace ctxkoop
