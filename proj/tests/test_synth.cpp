#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "gnnpp/synth.hpp"

using namespace gnnpp;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

// independent great-circle oracle for the placement test
double haversine_km(const Station& a, const Station& b) {
    const double rad = 3.14159265358979323846 / 180.0;
    const double dlat = (b.lat - a.lat) * rad;
    const double dlon = (b.lon - a.lon) * rad;
    const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) *
                         std::sin(dlon / 2);
    return 2.0 * 6371.0 * std::asin(std::sqrt(h));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("generation is deterministic in the seed") {
    SynthConfig cfg;
    cfg.n_stations = 5;
    cfg.n_days = 20;
    cfg.n_members = 4;
    cfg.seed = 7;
    const ForecastDataset a = generate(cfg);
    const ForecastDataset b = generate(cfg);
    CHECK(bitwise_equal(a.features, b.features));
    CHECK(bitwise_equal(a.observations, b.observations));
    CHECK(a.stations[2].lon == b.stations[2].lon);

    cfg.seed = 8;
    const ForecastDataset c = generate(cfg);
    CHECK_FALSE(bitwise_equal(a.features, c.features));
}

TEST_CASE("station placement gives near and far neighbors") {
    const auto stations = place_stations(6, 42);
    REQUIRE(stations.size() == 6);
    for (std::size_t i = 1; i < stations.size(); ++i)
        CHECK(stations[i].id > stations[i - 1].id + 1);  // increasing, non-contiguous
    for (std::size_t i = 0; i < stations.size(); ++i) {
        double nearest = 1e30;
        double farthest = 0.0;
        for (std::size_t j = 0; j < stations.size(); ++j) {
            if (i == j) continue;
            const double d = haversine_km(stations[i], stations[j]);
            nearest = std::min(nearest, d);
            farthest = std::max(farthest, d);
        }
        CHECK(nearest < 100.0);
        CHECK(farthest > 100.0);
        CHECK(stations[i].lat == doctest::Approx(48.0).epsilon(0.01));
        CHECK(stations[i].alt >= 0.0);
        CHECK(stations[i].alt <= 1500.0);
    }
    CHECK_THROWS_AS(place_stations(0, 1), ConfigError);
}

TEST_CASE("yday encoding lies on the unit circle with period 365") {
    SynthConfig cfg;
    cfg.n_stations = 2;
    cfg.n_days = 400;
    cfg.n_members = 2;
    cfg.seed = 3;
    const ForecastDataset ds = generate(cfg);
    for (int t = 0; t < ds.n_days(); ++t) {
        const double s = ds.yday_sin[static_cast<std::size_t>(t)];
        const double c = ds.yday_cos[static_cast<std::size_t>(t)];
        CHECK(s * s + c * c == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(ds.yday_sin[365] == ds.yday_sin[0]);
    CHECK(ds.yday_cos[365] == ds.yday_cos[0]);
    CHECK(ds.days.front() == 0);
    CHECK(ds.days.back() == 399);
}

TEST_CASE("constant bias mode shifts every member by the amplitude") {
    SynthConfig cfg;
    cfg.n_stations = 5;
    cfg.n_days = 200;
    cfg.n_members = 8;
    cfg.bias_field = BiasField::Constant;
    cfg.bias_amplitude = 2.0;
    cfg.seed = 11;
    SynthTruth truth;
    const ForecastDataset ds = generate(cfg, &truth);
    for (double b : truth.bias) CHECK(b == 2.0);
    double mean_err = 0.0;
    std::size_t count = 0;
    for (int t = 0; t < ds.n_days(); ++t)
        for (int s = 0; s < ds.n_stations(); ++s)
            for (int n = 0; n < ds.n_members; ++n) {
                mean_err += ds.feat(t, s, n, 0) - ds.obs(t, s);
                ++count;
            }
    mean_err /= static_cast<double>(count);
    CHECK(mean_err == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("observation and member noise have the configured scales") {
    SynthConfig cfg;
    cfg.n_stations = 8;
    cfg.n_days = 500;
    cfg.n_members = 6;
    cfg.bias_amplitude = 0.0;
    cfg.sigma_true = 1.5;
    cfg.spread_error = 2.0;
    cfg.seed = 21;
    SynthTruth truth;
    const ForecastDataset ds = generate(cfg, &truth);
    double obs_ss = 0.0, mem_ss = 0.0;
    std::size_t n_obs = 0, n_mem = 0;
    for (int t = 0; t < ds.n_days(); ++t)
        for (int s = 0; s < ds.n_stations(); ++s) {
            const double sig = truth.signal[static_cast<std::size_t>(t) * ds.n_stations() + s];
            const double eo = ds.obs(t, s) - sig;
            obs_ss += eo * eo;
            ++n_obs;
            for (int n = 0; n < ds.n_members; ++n) {
                const double em = ds.feat(t, s, n, 0) - sig - truth.bias[static_cast<std::size_t>(s)];
                mem_ss += em * em;
                ++n_mem;
            }
        }
    CHECK(std::sqrt(obs_ss / static_cast<double>(n_obs)) ==
          doctest::Approx(1.5).epsilon(0.05));
    CHECK(std::sqrt(mem_ss / static_cast<double>(n_mem)) ==
          doctest::Approx(3.0).epsilon(0.05));  // spread_error * sigma_true
}

TEST_CASE("unit spread yields near-nominal ensemble coverage, half spread does not") {
    SynthConfig base;
    base.n_stations = 5;
    base.n_days = 500;
    base.n_members = 11;
    base.bias_amplitude = 0.0;
    base.seed = 31;

    auto coverage = [](const ForecastDataset& ds) {
        std::size_t hit = 0, total = 0;
        for (int t = 0; t < ds.n_days(); ++t)
            for (int s = 0; s < ds.n_stations(); ++s) {
                double lo = 1e300, hi = -1e300;
                for (int n = 0; n < ds.n_members; ++n) {
                    lo = std::min(lo, ds.feat(t, s, n, 0));
                    hi = std::max(hi, ds.feat(t, s, n, 0));
                }
                const double y = ds.obs(t, s);
                hit += (y >= lo && y <= hi) ? 1 : 0;
                ++total;
            }
        return 100.0 * static_cast<double>(hit) / static_cast<double>(total);
    };

    SynthConfig calibrated = base;
    calibrated.spread_error = 1.0;
    const double cov1 = coverage(generate(calibrated));
    // nominal for an 11-member min/max interval is 10/12 = 83.3%
    CHECK(cov1 > 80.0);
    CHECK(cov1 < 87.0);

    SynthConfig tight = base;
    tight.spread_error = 0.5;
    const double cov_half = coverage(generate(tight));
    CHECK(cov_half < 70.0);
}

TEST_CASE("aux columns track the signal while the noise column ignores it") {
    SynthConfig cfg;
    cfg.n_stations = 5;
    cfg.n_days = 400;
    cfg.n_members = 3;
    cfg.n_features = 4;
    cfg.seed = 17;
    const ForecastDataset ds = generate(cfg);
    REQUIRE(ds.feature_names ==
            std::vector<std::string>{"t2m_fc", "aux1", "aux2", "noise"});
    std::vector<double> obs, lead, aux, noise;
    for (int t = 0; t < ds.n_days(); ++t)
        for (int s = 0; s < ds.n_stations(); ++s)
            for (int n = 0; n < ds.n_members; ++n) {
                obs.push_back(ds.obs(t, s));
                lead.push_back(ds.feat(t, s, n, 0));
                aux.push_back(ds.feat(t, s, n, 1));
                noise.push_back(ds.feat(t, s, n, 3));
            }
    CHECK(pearson(lead, obs) > 0.9);
    CHECK(pearson(aux, obs) > 0.5);
    CHECK(std::abs(pearson(noise, obs)) < 0.05);
}

TEST_CASE("members are consistent across member counts and day ranges") {
    SynthConfig small;
    small.n_stations = 4;
    small.n_days = 30;
    small.n_members = 11;
    small.seed = 5;
    SynthConfig big = small;
    big.n_members = 51;
    const ForecastDataset a = generate(small);
    const ForecastDataset b = generate(big);
    for (int t = 0; t < a.n_days(); ++t)
        for (int s = 0; s < a.n_stations(); ++s) {
            CHECK(a.obs(t, s) == b.obs(t, s));
            for (int n = 0; n < a.n_members; ++n)
                for (int p = 0; p < a.n_features(); ++p)
                    CHECK(a.feat(t, s, n, p) == b.feat(t, s, n, p));
        }

    SynthConfig longer = small;
    longer.n_days = 60;
    const ForecastDataset c = generate(longer);
    for (int t = 0; t < a.n_days(); ++t)
        for (int s = 0; s < a.n_stations(); ++s)
            CHECK(a.feat(t, s, 0, 0) == c.feat(t, s, 0, 0));
}

TEST_CASE("spatially correlated bias varies smoothly between neighbors") {
    SynthConfig cfg;
    cfg.n_stations = 10;
    cfg.n_days = 1;
    cfg.n_members = 2;
    cfg.bias_field = BiasField::SpatiallyCorrelated;
    cfg.bias_amplitude = 1.0;
    cfg.spatial_corr_length = 2000.0;
    cfg.seed = 13;
    SynthTruth truth;
    const ForecastDataset ds = generate(cfg, &truth);
    // adjacent stations sit well inside the correlation length, so the
    // realized bias must change slowly along the line
    double max_adjacent_gap = 0.0;
    double spread = 0.0;
    for (std::size_t s = 1; s < truth.bias.size(); ++s)
        max_adjacent_gap = std::max(max_adjacent_gap,
                                    std::abs(truth.bias[s] - truth.bias[s - 1]));
    spread = *std::max_element(truth.bias.begin(), truth.bias.end()) -
             *std::min_element(truth.bias.begin(), truth.bias.end());
    CHECK(max_adjacent_gap < 0.5);
    CHECK(spread > 0.0);
    (void)ds;
}

TEST_CASE("configuration bounds are enforced") {
    SynthConfig cfg;
    cfg.n_stations = 0;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.n_features = 1;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.spread_error = -0.5;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.sigma_true = 0.0;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.spatial_corr_length = 0.0;
    CHECK_THROWS_AS(generate(cfg), ConfigError);

    CHECK(parse_bias_field("per_station") == BiasField::PerStation);
    CHECK(parse_bias_field("spatially_correlated") == BiasField::SpatiallyCorrelated);
    CHECK(parse_bias_field("constant") == BiasField::Constant);
    CHECK_THROWS_AS(parse_bias_field("gaussian"), ConfigError);
    CHECK(to_string(BiasField::Constant) == "constant");
}

}  // TEST_SUITE
