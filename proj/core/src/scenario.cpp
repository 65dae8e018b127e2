#include "ctxkoop/scenario.hpp"

#include "ctxkoop/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace ctxkoop {

Vector ContextVector::to_vector() const {
    return Eigen::Map<const Vector>(values.data(), kContextFeatures);
}

void Trace::validate() const {
    const std::size_t n = csi.size();
    if (timestamps.size() != n || contexts.size() != n || silence_mask.size() != n) {
        throw ShapeError("trace columns differ in length");
    }
}

double Trace::observed_csi(std::size_t i) const {
    if (i >= csi.size()) throw InputError("trace index out of range");
    if (silence_mask[i]) {
        throw TaintError("sample " + std::to_string(i) +
                         " is silence-masked ground truth and cannot be read here");
    }
    return csi[i];
}

std::vector<double> Trace::observed_csi(std::size_t begin, std::size_t end) const {
    if (begin > end || end > csi.size()) throw InputError("trace range out of bounds");
    std::vector<double> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) out.push_back(observed_csi(i));
    return out;
}

std::vector<double> Trace::withheld_csi(std::size_t begin, std::size_t end) const {
    if (begin > end || end > csi.size()) throw InputError("trace range out of bounds");
    return {csi.begin() + static_cast<std::ptrdiff_t>(begin),
            csi.begin() + static_cast<std::ptrdiff_t>(end)};
}

Matrix Trace::context_matrix(std::size_t begin, std::size_t end) const {
    if (begin > end || end > contexts.size()) throw InputError("trace range out of bounds");
    Matrix out(static_cast<Eigen::Index>(end - begin), kContextFeatures);
    for (std::size_t i = begin; i < end; ++i) {
        for (int j = 0; j < kContextFeatures; ++j) {
            out(static_cast<Eigen::Index>(i - begin), j) =
                contexts[i].values[static_cast<std::size_t>(j)];
        }
    }
    return out;
}

void ScenarioConfig::validate() const {
    if (!(carrier_freq_ghz > 0.0)) throw ParameterError("carrier frequency must be positive");
    if (!(trajectory.period > 0.0) || !(trajectory.dt > 0.0)) {
        throw ParameterError("trajectory period and dt must be positive");
    }
    if (shadow_sigma < 0.0 || shadow_rho < 0.0 || shadow_rho > 1.0) {
        throw ParameterError("shadowing requires sigma >= 0 and rho in [0, 1]");
    }
    for (const Ar1Params* p : {&weather.temperature, &weather.pressure, &weather.water_vapor,
                               &weather.rain}) {
        if (p->sd < 0.0 || p->rho < 0.0 || p->rho >= 1.0) {
            throw ParameterError("weather AR(1) requires sd >= 0 and rho in [0, 1)");
        }
    }
}

std::pair<double, double> rain_coefficients(double freq_ghz) {
    // (GHz, k, alpha), horizontal polarization, power-law specific attenuation k R^alpha dB/km
    static constexpr std::array<std::array<double, 3>, 11> table = {{
        {1.0, 0.0000259, 0.9691},
        {2.0, 0.0000847, 1.0664},
        {4.0, 0.0001071, 1.6009},
        {6.0, 0.0007056, 1.5900},
        {10.0, 0.01217, 1.2571},
        {20.0, 0.09164, 1.0568},
        {30.0, 0.2403, 0.9485},
        {40.0, 0.4431, 0.8673},
        {60.0, 0.8606, 0.7656},
        {80.0, 1.1704, 0.7115},
        {100.0, 1.3671, 0.6815},
    }};
    if (!(freq_ghz > 0.0)) throw ParameterError("rain_coefficients: frequency must be positive");
    if (freq_ghz <= table.front()[0]) return {table.front()[1], table.front()[2]};
    if (freq_ghz >= table.back()[0]) return {table.back()[1], table.back()[2]};
    for (std::size_t i = 1; i < table.size(); ++i) {
        if (freq_ghz <= table[i][0]) {
            const auto& a = table[i - 1];
            const auto& b = table[i];
            const double w = std::log(freq_ghz / a[0]) / std::log(b[0] / a[0]);
            const double k = std::exp(std::log(a[1]) + w * (std::log(b[1]) - std::log(a[1])));
            return {k, a[2] + w * (b[2] - a[2])};
        }
    }
    return {table.back()[1], table.back()[2]};
}

ScenarioConfig scenario_config(std::string_view name, std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.name = std::string(name);
    cfg.seed = seed;
    if (name == "5G_5W_28GHz") {
        cfg.carrier_freq_ghz = 28.0;
        cfg.tx_power_dbm = 10.0 * std::log10(5000.0);
    } else if (name == "5G_1W_28GHz") {
        cfg.carrier_freq_ghz = 28.0;
        cfg.tx_power_dbm = 30.0;
    } else if (name == "5G_200mW_3.5GHz") {
        cfg.carrier_freq_ghz = 3.5;
        cfg.tx_power_dbm = 10.0 * std::log10(200.0);
    } else if (name == "6G_100mW_95GHz") {
        cfg.carrier_freq_ghz = 95.0;
        cfg.tx_power_dbm = 20.0;
    } else if (name == "6G_360mW_100GHz") {
        cfg.carrier_freq_ghz = 100.0;
        cfg.tx_power_dbm = 10.0 * std::log10(360.0);
    } else {
        throw ParameterError("unknown scenario '" + std::string(name) + "'");
    }
    std::tie(cfg.rain_k, cfg.rain_alpha) = rain_coefficients(cfg.carrier_freq_ghz);
    return cfg;
}

ScenarioConfig persistence_config(std::uint64_t seed, double walk_sd) {
    ScenarioConfig cfg = scenario_config("5G_5W_28GHz", seed);
    cfg.name = "persistence";
    cfg.trajectory.radius_x = 0.0;
    cfg.trajectory.radius_y = 0.0;
    cfg.trajectory.altitude_swing = 0.0;
    cfg.rain_k = 0.0;
    cfg.humidity_coeff = 0.0;
    cfg.clutter_coeff = 0.0;
    cfg.shadow_sigma = walk_sd;
    cfg.shadow_rho = 1.0;
    return cfg;
}

double free_space_path_loss(double distance_m, double freq_ghz) {
    return 32.45 + 20.0 * std::log10(distance_m / 1000.0 * freq_ghz * 1000.0);
}

namespace {

class Ar1 {
public:
    Ar1(const Ar1Params& p, std::mt19937_64& rng, std::normal_distribution<double>& normal)
        : p_(p), rng_(rng), normal_(normal), v_(p.sd * normal(rng)) {}

    double next() {
        const double out = p_.mean + v_;
        v_ = p_.rho * v_ + p_.sd * std::sqrt(1.0 - p_.rho * p_.rho) * normal_(rng_);
        return out;
    }

private:
    Ar1Params p_;
    std::mt19937_64& rng_;
    std::normal_distribution<double>& normal_;
    double v_;
};

}  // namespace

Trace generate_trace(const ScenarioConfig& cfg, std::size_t len) {
    if (len < 400) throw ParameterError("generate_trace: length must be at least 400");
    cfg.validate();

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    const TrajectoryParams& tr = cfg.trajectory;
    const double phase = 2.0 * std::numbers::pi * uniform(rng);
    const double omega = 2.0 * std::numbers::pi / (tr.period * tr.dt);

    Ar1 temperature(cfg.weather.temperature, rng, normal);
    Ar1 pressure(cfg.weather.pressure, rng, normal);
    Ar1 water_vapor(cfg.weather.water_vapor, rng, normal);
    Ar1 rain(cfg.weather.rain, rng, normal);

    double shadow = cfg.shadow_rho < 1.0 ? cfg.shadow_sigma * normal(rng) : 0.0;
    double regime = 1.0;
    constexpr double kRegimeSwitchProb = 1.0 / 150.0;
    constexpr double kRegimeOffsetDb = 3.0;

    Trace out;
    out.timestamps.reserve(len);
    out.csi.reserve(len);
    out.contexts.reserve(len);
    out.silence_mask.assign(len, false);

    for (std::size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) * tr.dt;
        const double theta = omega * t + phase;

        ContextVector c;
        c[Feature::TxX] = tr.center_x + tr.radius_x * std::cos(theta);
        c[Feature::TxY] = tr.center_y + tr.radius_y * std::sin(theta);
        c[Feature::TxZ] = tr.altitude + tr.altitude_swing * std::sin(2.0 * theta);
        c[Feature::RxX] = tr.rx[0];
        c[Feature::RxY] = tr.rx[1];
        c[Feature::RxZ] = tr.rx[2];
        const double dx = c[Feature::TxX] - tr.rx[0];
        const double dy = c[Feature::TxY] - tr.rx[1];
        const double dz = c[Feature::TxZ] - tr.rx[2];
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        c[Feature::RelDist] = d;
        c[Feature::RelAzimuth] = std::atan2(dy, dx);
        c[Feature::RelElevation] = std::asin(dz / d);
        c[Feature::TxVx] = -tr.radius_x * omega * std::sin(theta);
        c[Feature::TxVy] = tr.radius_y * omega * std::cos(theta);
        c[Feature::TxVz] = 2.0 * tr.altitude_swing * omega * std::cos(2.0 * theta);
        c[Feature::Temperature] = temperature.next();
        c[Feature::Pressure] = pressure.next();
        c[Feature::WaterVapor] = water_vapor.next();
        c[Feature::RainRate] = std::max(0.0, rain.next());
        c[Feature::ClutterHeight] = cfg.clutter_height;
        c[Feature::CarrierFreq] = cfg.carrier_freq_ghz;
        c[Feature::TxPower] = cfg.tx_power_dbm;

        const double d_km = d / 1000.0;
        const double cos_el = std::cos(c[Feature::RelElevation]);
        double pl = free_space_path_loss(d, cfg.carrier_freq_ghz);
        if (c[Feature::RainRate] > 0.0) {
            pl += cfg.rain_k * std::pow(c[Feature::RainRate], cfg.rain_alpha) * d_km;
        }
        pl += cfg.humidity_coeff * c[Feature::WaterVapor];
        pl += cfg.clutter_coeff * cfg.clutter_height * cos_el * cos_el;
        pl += shadow;
        if (cfg.adversarial) {
            if (uniform(rng) < kRegimeSwitchProb) regime = -regime;
            pl += kRegimeOffsetDb * regime;
        }

        if (cfg.shadow_rho < 1.0) {
            shadow = cfg.shadow_rho * shadow +
                     cfg.shadow_sigma * std::sqrt(1.0 - cfg.shadow_rho * cfg.shadow_rho) *
                         normal(rng);
        } else {
            shadow += cfg.shadow_sigma * normal(rng);
        }

        out.timestamps.push_back(t);
        out.csi.push_back(pl);
        out.contexts.push_back(c);
    }
    return out;
}

Trace apply_silence(const Trace& trace, const EpisodePlan& plan) {
    trace.validate();
    Trace out = trace;
    out.silence_mask.assign(trace.size(), false);
    for (const Episode& e : plan_episodes(trace.size(), plan)) {
        for (std::size_t i = e.silence_begin(); i < e.silence_end; ++i) out.silence_mask[i] = true;
    }
    return out;
}

Trace clear_silence(const Trace& trace) {
    Trace out = trace;
    out.silence_mask.assign(trace.size(), false);
    return out;
}

// ---------------------------------------------------------------------------------------
// CSV

namespace {

constexpr int kCsvColumns = 22;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

double parse_cell(const std::string& cell, std::size_t row, std::string_view column) {
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || cell.empty()) {
        throw ParseError("row " + std::to_string(row) + ", column " + std::string(column) +
                         ": '" + cell + "' is not a number");
    }
    return v;
}

void append_number(std::string& out, double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

void write_csv(const Trace& trace, std::ostream& os) {
    trace.validate();
    os << kCsvHeader << '\n';
    std::string line;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        line.clear();
        append_number(line, trace.timestamps[i]);
        line += ',';
        append_number(line, trace.csi[i]);
        for (double v : trace.contexts[i].values) {
            line += ',';
            append_number(line, v);
        }
        line += trace.silence_mask[i] ? ",1\n" : ",0\n";
        os << line;
    }
}

Trace read_csv(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw SchemaError("CSV is empty; expected header " +
                                                     std::string(kCsvHeader));
    header = strip_cr(header);
    if (header != kCsvHeader) {
        throw SchemaError("CSV header mismatch\n  expected: " + std::string(kCsvHeader) +
                          "\n  found:    " + header);
    }
    const std::vector<std::string> names = split_csv_line(std::string(kCsvHeader));

    Trace out;
    std::string line;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != kCsvColumns) {
            throw ParseError("row " + std::to_string(row) + ": expected " +
                             std::to_string(kCsvColumns) + " cells, found " +
                             std::to_string(cells.size()));
        }
        out.timestamps.push_back(parse_cell(cells[0], row, names[0]));
        out.csi.push_back(parse_cell(cells[1], row, names[1]));
        ContextVector c;
        for (int j = 0; j < kContextFeatures; ++j) {
            c.values[static_cast<std::size_t>(j)] =
                parse_cell(cells[static_cast<std::size_t>(j + 2)], row,
                           names[static_cast<std::size_t>(j + 2)]);
        }
        out.contexts.push_back(c);
        const std::string& flag = cells[kCsvColumns - 1];
        if (flag != "0" && flag != "1") {
            throw ParseError("row " + std::to_string(row) + ", column silent: '" + flag +
                             "' is not 0 or 1");
        }
        out.silence_mask.push_back(flag == "1");
    }
    return out;
}

void save_csv(const Trace& trace, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
    write_csv(trace, os);
}

Trace load_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open '" + path.string() + "'");
    return read_csv(is);
}

}  // namespace ctxkoop
