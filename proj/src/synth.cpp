#include "gnnpp/synth.hpp"

#include <cmath>

namespace gnnpp {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBaseLat = 48.0;
// km per degree of longitude along the kBaseLat parallel, R = 6371 km
const double kKmPerDegLon = (kPi / 180.0) * 6371.0 * std::cos(kBaseLat * kPi / 180.0);

// counter streams; values are part of the output format
enum Stream : std::uint64_t {
    kStreamWeather = 1,
    kStreamBias = 2,
    kStreamMember = 3,
    kStreamObs = 4,
    kStreamAux = 5,
    kStreamNoise = 6,
};

double km_east(const Station& st) { return st.lon * kKmPerDegLon; }

}  // namespace

BiasField parse_bias_field(const std::string& name) {
    if (name == "per_station") return BiasField::PerStation;
    if (name == "spatially_correlated") return BiasField::SpatiallyCorrelated;
    if (name == "constant") return BiasField::Constant;
    throw ConfigError("unknown bias field '" + name +
                      "' (expected per_station, spatially_correlated, constant)");
}

std::string to_string(BiasField f) {
    switch (f) {
        case BiasField::PerStation: return "per_station";
        case BiasField::SpatiallyCorrelated: return "spatially_correlated";
        case BiasField::Constant: return "constant";
    }
    throw ConfigError("invalid bias field value");
}

void SynthConfig::validate() const {
    if (n_stations < 1) throw ConfigError("n_stations must be at least 1");
    if (n_days < 1) throw ConfigError("n_days must be at least 1");
    if (n_members < 1) throw ConfigError("n_members must be at least 1");
    if (n_features < 2)
        throw ConfigError("n_features must be at least 2 (lead forecast and noise column)");
    if (spread_error < 0.0) throw ConfigError("spread_error must be non-negative");
    if (spatial_corr_length <= 0.0) throw ConfigError("spatial_corr_length must be positive");
    if (sigma_true <= 0.0) throw ConfigError("sigma_true must be positive");
    if (sigma_weather < 0.0) throw ConfigError("sigma_weather must be non-negative");
    if (sigma_aux < 0.0) throw ConfigError("sigma_aux must be non-negative");
    if (bias_amplitude < 0.0) throw ConfigError("bias_amplitude must be non-negative");
}

std::vector<Station> place_stations(int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("need at least one station");
    Rng rng(splitmix64(seed ^ 0x53746174696f6eULL));
    std::vector<Station> out;
    out.reserve(static_cast<std::size_t>(n));
    double x_km = 0.0;
    for (int i = 0; i < n; ++i) {
        if (i > 0) x_km += rng.uniform(55.0, 85.0);
        Station st;
        st.id = 101 + 7 * i;
        st.lat = kBaseLat + rng.uniform(-0.05, 0.05);
        st.lon = x_km / kKmPerDegLon;
        st.alt = rng.uniform(0.0, 1500.0);
        st.orog = rng.uniform(-150.0, 150.0);
        out.push_back(st);
    }
    return out;
}

ForecastDataset generate(const SynthConfig& cfg) { return generate(cfg, nullptr); }

ForecastDataset generate(const SynthConfig& cfg, SynthTruth* truth) {
    cfg.validate();
    CounterRng crng(cfg.seed);

    ForecastDataset ds;
    ds.stations = place_stations(cfg.n_stations, cfg.seed);
    ds.days.resize(static_cast<std::size_t>(cfg.n_days));
    for (int t = 0; t < cfg.n_days; ++t) ds.days[static_cast<std::size_t>(t)] = t;
    ds.n_members = cfg.n_members;

    ds.feature_names.push_back("t2m_fc");
    for (int k = 1; k + 1 < cfg.n_features; ++k)
        ds.feature_names.push_back("aux" + std::to_string(k));
    ds.feature_names.push_back("noise");

    const int S = cfg.n_stations;
    const int N = cfg.n_members;
    const int P = cfg.n_features;
    ds.features.assign(static_cast<std::size_t>(cfg.n_days) * S * N * P, 0.0);
    ds.yday_sin.resize(static_cast<std::size_t>(cfg.n_days));
    ds.yday_cos.resize(static_cast<std::size_t>(cfg.n_days));
    ds.observations.assign(static_cast<std::size_t>(cfg.n_days) * S, 0.0);

    // station bias field
    std::vector<double> bias(static_cast<std::size_t>(S), 0.0);
    std::vector<double> theta(static_cast<std::size_t>(S), 0.0);
    for (int s = 0; s < S; ++s)
        theta[static_cast<std::size_t>(s)] =
            2.0 * kPi * km_east(ds.stations[static_cast<std::size_t>(s)]) /
            cfg.spatial_corr_length;
    switch (cfg.bias_field) {
        case BiasField::PerStation:
            for (int s = 0; s < S; ++s)
                bias[static_cast<std::size_t>(s)] =
                    cfg.bias_amplitude *
                    crng.gaussian(kStreamBias,
                                  static_cast<std::uint64_t>(
                                      ds.stations[static_cast<std::size_t>(s)].id));
            break;
        case BiasField::SpatiallyCorrelated: {
            const double d1 = crng.gaussian(kStreamBias, 0, 1);
            const double d2 = crng.gaussian(kStreamBias, 0, 2);
            for (int s = 0; s < S; ++s)
                bias[static_cast<std::size_t>(s)] =
                    cfg.bias_amplitude * (d1 * std::cos(theta[static_cast<std::size_t>(s)]) +
                                          d2 * std::sin(theta[static_cast<std::size_t>(s)]));
            break;
        }
        case BiasField::Constant:
            for (int s = 0; s < S; ++s) bias[static_cast<std::size_t>(s)] = cfg.bias_amplitude;
            break;
    }

    if (truth) {
        truth->bias = bias;
        truth->signal.assign(static_cast<std::size_t>(cfg.n_days) * S, 0.0);
    }

    for (int t = 0; t < cfg.n_days; ++t) {
        const std::uint64_t tu = static_cast<std::uint64_t>(t);
        const double yday = 2.0 * kPi * static_cast<double>(t % 365) / 365.0;
        const double ys = std::sin(yday);
        const double yc = std::cos(yday);
        ds.yday_sin[static_cast<std::size_t>(t)] = ys;
        ds.yday_cos[static_cast<std::size_t>(t)] = yc;
        const double seasonal = 10.0 * ys;
        // two coefficients shared by all stations give the weather field its
        // spatial correlation; theta varies slowly over spatial_corr_length
        const double c1 = crng.gaussian(kStreamWeather, tu, 1);
        const double c2 = crng.gaussian(kStreamWeather, tu, 2);
        for (int s = 0; s < S; ++s) {
            const Station& st = ds.stations[static_cast<std::size_t>(s)];
            const std::uint64_t su = static_cast<std::uint64_t>(st.id);
            const double th = theta[static_cast<std::size_t>(s)];
            const double weather = cfg.sigma_weather * (c1 * std::cos(th) + c2 * std::sin(th));
            const double lapse = -6.5 * st.alt / 1000.0;
            const double signal = seasonal + lapse + weather;
            if (truth) truth->signal[static_cast<std::size_t>(t) * S + s] = signal;
            ds.obs(t, s) = signal + cfg.sigma_true * crng.gaussian(kStreamObs, tu, su);
            const double center = signal + bias[static_cast<std::size_t>(s)];
            for (int n = 0; n < N; ++n) {
                const std::uint64_t nu = static_cast<std::uint64_t>(n);
                ds.feat(t, s, n, 0) = center + cfg.spread_error * cfg.sigma_true *
                                                   crng.gaussian(kStreamMember, tu, su, nu);
                for (int k = 1; k + 1 < P; ++k)
                    ds.feat(t, s, n, k) =
                        signal + cfg.sigma_aux * crng.gaussian(kStreamAux, tu, su, nu,
                                                               static_cast<std::uint64_t>(k));
                ds.feat(t, s, n, P - 1) = crng.gaussian(kStreamNoise, tu, su, nu);
            }
        }
    }

    ds.validate();
    return ds;
}

}  // namespace gnnpp
