#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "gnnpp/dataset.hpp"
#include "gnnpp/synth.hpp"

using namespace gnnpp;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("gnnpp_ds_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    REQUIRE(out.good());
    out << content;
}

const char* kStations =
    "id,lat,lon,alt,orog\n"
    "7,48.1,10.0,500,25\n"
    "9,48.2,10.5,800,-40\n";

const char* kForecasts =
    "day,station_id,member,t2m_fc,cape,yday_sin,yday_cos\n"
    "3,7,0,1.5,10,0.1,0.2\n"
    "3,7,1,2.5,11,0.1,0.2\n"
    "3,9,0,0.5,12,0.1,0.2\n"
    "3,9,1,1.0,13,0.1,0.2\n"
    "5,7,0,2.0,14,0.3,0.4\n"
    "5,7,1,3.0,15,0.3,0.4\n"
    "5,9,0,1.25,16,0.3,0.4\n"
    "5,9,1,0.75,17,0.3,0.4\n";

const char* kObservations =
    "day,station_id,obs\n"
    "3,7,1.75\n"
    "3,9,0.5\n"
    "5,7,2.25\n"
    "5,9,1.0\n";

ForecastDataset load_standard(const TempDir& dir, const std::string& stations,
                              const std::string& forecasts, const std::string& observations) {
    write_file(dir.file("stations.csv"), stations);
    write_file(dir.file("forecasts.csv"), forecasts);
    write_file(dir.file("observations.csv"), observations);
    return load_dataset(dir.file("stations.csv"), dir.file("forecasts.csv"),
                        dir.file("observations.csv"));
}

template <typename Ex, typename Fn>
bool throws_containing(Fn&& fn, const std::string& needle) {
    try {
        fn();
    } catch (const Ex& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    } catch (...) {
        return false;
    }
    return false;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("loader fills the dense archive from row-ordered csv") {
    TempDir dir;
    const ForecastDataset ds = load_standard(dir, kStations, kForecasts, kObservations);
    CHECK(ds.n_days() == 2);
    CHECK(ds.n_stations() == 2);
    CHECK(ds.n_members == 2);
    CHECK(ds.feature_names == std::vector<std::string>{"t2m_fc", "cape"});
    CHECK(ds.days == std::vector<int>{3, 5});
    CHECK(ds.stations[0].id == 7);
    CHECK(ds.stations[1].alt == 800.0);
    CHECK(ds.feat(0, 0, 1, 0) == 2.5);
    CHECK(ds.feat(0, 1, 0, 1) == 12.0);
    CHECK(ds.feat(1, 1, 1, 0) == 0.75);
    CHECK(ds.obs(0, 0) == 1.75);
    CHECK(ds.obs(1, 1) == 1.0);
    CHECK(ds.yday_sin[0] == 0.1);
    CHECK(ds.yday_cos[1] == 0.4);
    CHECK(ds.day_pos(3) == 0);
    CHECK(ds.day_pos(5) == 1);
    CHECK(ds.day_pos(4) == -1);
    CHECK(ds.station_pos(9) == 1);
    CHECK(ds.station_pos(8) == -1);
    CHECK(ds.feature_pos("cape") == 1);
    CHECK(ds.feature_pos("t2m") == -1);
}

TEST_CASE("row order does not matter") {
    TempDir a;
    const ForecastDataset in_order = load_standard(a, kStations, kForecasts, kObservations);
    const char* shuffled =
        "day,station_id,member,t2m_fc,cape,yday_sin,yday_cos\n"
        "5,9,0,1.25,16,0.3,0.4\n"
        "3,7,1,2.5,11,0.1,0.2\n"
        "5,7,0,2.0,14,0.3,0.4\n"
        "3,9,1,1.0,13,0.1,0.2\n"
        "5,7,1,3.0,15,0.3,0.4\n"
        "3,7,0,1.5,10,0.1,0.2\n"
        "5,9,1,0.75,17,0.3,0.4\n"
        "3,9,0,0.5,12,0.1,0.2\n";
    const char* shuffled_obs =
        "day,station_id,obs\n"
        "5,9,1.0\n"
        "3,7,1.75\n"
        "5,7,2.25\n"
        "3,9,0.5\n";
    TempDir b;
    const ForecastDataset out_of_order = load_standard(b, kStations, shuffled, shuffled_obs);
    CHECK(bitwise_equal(in_order.features, out_of_order.features));
    CHECK(bitwise_equal(in_order.observations, out_of_order.observations));
    CHECK(in_order.days == out_of_order.days);
}

TEST_CASE("malformed rows raise parse errors with file and line") {
    TempDir dir;
    std::string bad_value = kForecasts;
    const auto pos = bad_value.find("2.5");
    bad_value.replace(pos, 3, "2.x");
    CHECK(throws_containing<ParseError>(
        [&] { load_standard(dir, kStations, bad_value, kObservations); }, "forecasts.csv:3:"));

    std::string short_row = kForecasts;
    const auto rpos = short_row.find("5,9,1,0.75,17,0.3,0.4");
    short_row.replace(rpos, 21, "5,9,1,0.75,17,0.3");
    CHECK(throws_containing<ParseError>(
        [&] { load_standard(dir, kStations, short_row, kObservations); }, ":9:"));

    CHECK(throws_containing<ParseError>(
        [&] {
            load_standard(dir, "id,lat,lon,alt\n7,48.1,10.0,500\n", kForecasts, kObservations);
        },
        "stations.csv:1:"));

    CHECK(throws_containing<ParseError>(
        [&] {
            load_standard(dir, kStations, kForecasts, "day,station_id,obs\n3,7,huh\n");
        },
        "observations.csv:2:"));
}

TEST_CASE("member gaps are schema errors") {
    TempDir dir;
    std::string missing = kForecasts;
    const auto pos = missing.find("3,9,1,1.0,13,0.1,0.2\n");
    missing.erase(pos, 21);
    CHECK(throws_containing<SchemaError>(
        [&] { load_standard(dir, kStations, missing, kObservations); }, "member"));

    std::string dup = kForecasts;
    dup += "3,7,0,1.5,10,0.1,0.2\n";
    CHECK(throws_containing<SchemaError>(
        [&] { load_standard(dir, kStations, dup, kObservations); }, "duplicate"));
}

TEST_CASE("alignment errors for unknown stations and missing observations") {
    TempDir dir;
    std::string unknown_fc = kForecasts;
    unknown_fc += "3,8,0,1.0,10,0.1,0.2\n";
    CHECK_THROWS_AS(load_standard(dir, kStations, unknown_fc, kObservations), AlignmentError);

    std::string unknown_obs = kObservations;
    unknown_obs += "3,8,2.0\n";
    CHECK_THROWS_AS(load_standard(dir, kStations, kForecasts, unknown_obs), AlignmentError);

    std::string missing_obs =
        "day,station_id,obs\n"
        "3,7,1.75\n"
        "3,9,0.5\n"
        "5,7,2.25\n";
    CHECK(throws_containing<AlignmentError>(
        [&] { load_standard(dir, kStations, kForecasts, missing_obs); }, "missing observation"));

    std::string dup_obs = kObservations;
    dup_obs += "3,7,9.9\n";
    CHECK_THROWS_AS(load_standard(dir, kStations, kForecasts, dup_obs), SchemaError);

    // observations outside the forecast archive are ignored
    std::string extra_obs = kObservations;
    extra_obs += "4,7,0.0\n";
    const ForecastDataset ds = load_standard(dir, kStations, kForecasts, extra_obs);
    CHECK(ds.n_days() == 2);
}

TEST_CASE("schema errors for station and yday inconsistencies") {
    TempDir dir;
    CHECK_THROWS_AS(
        load_standard(dir, "id,lat,lon,alt,orog\n7,48.1,10.0,500,25\n7,48.2,10.5,800,-40\n",
                      kForecasts, kObservations),
        SchemaError);
    CHECK_THROWS_AS(
        load_standard(dir, "id,lat,lon,alt,orog\n7,98.1,10.0,500,25\n9,48.2,10.5,800,-40\n",
                      kForecasts, kObservations),
        SchemaError);
    std::string bad_yday = kForecasts;
    const auto pos = bad_yday.find("3,9,1,1.0,13,0.1,0.2");
    bad_yday.replace(pos, 20, "3,9,1,1.0,13,0.1,0.7");
    CHECK(throws_containing<SchemaError>(
        [&] { load_standard(dir, kStations, bad_yday, kObservations); }, "yday"));
}

TEST_CASE("save then load reproduces the dataset bit for bit") {
    SynthConfig cfg;
    cfg.n_stations = 4;
    cfg.n_days = 7;
    cfg.n_members = 3;
    cfg.n_features = 3;
    cfg.seed = 99;
    const ForecastDataset ds = generate(cfg);
    TempDir dir;
    save_dataset(ds, dir.path.string());
    const ForecastDataset back = load_dataset(dir.file("stations.csv"), dir.file("forecasts.csv"),
                                              dir.file("observations.csv"));
    CHECK(back.days == ds.days);
    CHECK(back.feature_names == ds.feature_names);
    CHECK(back.n_members == ds.n_members);
    CHECK(bitwise_equal(back.features, ds.features));
    CHECK(bitwise_equal(back.observations, ds.observations));
    CHECK(bitwise_equal(back.yday_sin, ds.yday_sin));
    CHECK(bitwise_equal(back.yday_cos, ds.yday_cos));
    for (std::size_t i = 0; i < ds.stations.size(); ++i) {
        CHECK(back.stations[i].id == ds.stations[i].id);
        CHECK(back.stations[i].lat == ds.stations[i].lat);
        CHECK(back.stations[i].lon == ds.stations[i].lon);
        CHECK(back.stations[i].alt == ds.stations[i].alt);
        CHECK(back.stations[i].orog == ds.stations[i].orog);
    }
}

TEST_CASE("split ranges must be disjoint and well formed") {
    SplitSpec ok;
    ok.train = {0, 100};
    ok.valid = {100, 120};
    ok.test = {120, 150};
    CHECK_NOTHROW(ok.validate());
    ok.label = "R2F";
    CHECK_NOTHROW(ok.validate());
    ok.label = "weird";
    CHECK_THROWS_AS(ok.validate(), ConfigError);
    ok.label = "R2R";
    ok.valid = {90, 120};
    CHECK_THROWS_AS(ok.validate(), ConfigError);
    ok.valid = {100, 90};
    CHECK_THROWS_AS(ok.validate(), ConfigError);
    SplitSpec empty_valid;
    empty_valid.train = {0, 100};
    empty_valid.valid = {100, 100};
    empty_valid.test = {100, 150};
    CHECK_NOTHROW(empty_valid.validate());
    CHECK(DayRange{0, 100}.contains(0));
    CHECK(DayRange{0, 100}.contains(99));
    CHECK_FALSE(DayRange{0, 100}.contains(100));
    CHECK(DayRange{0, 100}.size() == 100);
}

TEST_CASE("day_positions maps ranges to positional indices") {
    TempDir dir;
    const ForecastDataset ds = load_standard(dir, kStations, kForecasts, kObservations);
    CHECK(ds.day_positions({0, 4}) == std::vector<int>{0});
    CHECK(ds.day_positions({3, 6}) == std::vector<int>{0, 1});
    CHECK(ds.day_positions({6, 9}).empty());
}

TEST_CASE("normalizer uses population stats and clamps constant columns") {
    TempDir dir;
    std::string fc =
        "day,station_id,member,t2m_fc,cape,yday_sin,yday_cos\n"
        "3,7,0,1.0,5,0.1,0.2\n"
        "3,7,1,2.0,5,0.1,0.2\n"
        "3,9,0,3.0,5,0.1,0.2\n"
        "3,9,1,4.0,5,0.1,0.2\n"
        "5,7,0,5.0,5,0.3,0.4\n"
        "5,7,1,6.0,5,0.3,0.4\n"
        "5,9,0,7.0,5,0.3,0.4\n"
        "5,9,1,8.0,5,0.3,0.4\n";
    const ForecastDataset ds = load_standard(dir, kStations, fc, kObservations);
    const Normalizer nz = fit_normalizer(ds, {0, 1});
    CHECK(nz.mean[0] == doctest::Approx(4.5).epsilon(1e-12));
    // population std of 1..8
    CHECK(nz.stdev[0] == doctest::Approx(std::sqrt(5.25)).epsilon(1e-12));
    CHECK_FALSE(nz.clamped[0]);
    CHECK(nz.mean[1] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(nz.stdev[1] == 1.0);
    CHECK(nz.clamped[1]);
    CHECK(nz.normalize(1, 5.0) == 0.0);
    const double z = nz.normalize(0, 7.25);
    CHECK(nz.denormalize(0, z) == doctest::Approx(7.25).epsilon(1e-14));

    // fitting on the first day only must ignore the second
    const Normalizer first = fit_normalizer(ds, {0});
    CHECK(first.mean[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK_THROWS_AS(fit_normalizer(ds, {}), ConfigError);
}

TEST_CASE("static stats standardize the station columns") {
    std::vector<Station> st = {{1, 48.0, 10.0, 0.0, -30.0}, {2, 50.0, 12.0, 1000.0, 30.0}};
    const StaticStats stat = fit_static_stats(st);
    CHECK(stat.mean[0] == 49.0);
    CHECK(stat.stdev[0] == 1.0);
    CHECK(stat.mean[2] == 500.0);
    CHECK(stat.stdev[2] == 500.0);
    CHECK(stat.mean[3] == 0.0);
    CHECK(stat.stdev[3] == 30.0);
    const StaticStats one = fit_static_stats({{1, 48.0, 10.0, 0.0, -30.0}});
    CHECK(one.stdev[0] == 1.0);  // zero variance clamps to 1
    CHECK_THROWS_AS(fit_static_stats({}), ConfigError);
}

TEST_CASE("member summaries match hand-computed mean and sample std") {
    TempDir dir;
    const ForecastDataset ds = load_standard(dir, kStations, kForecasts, kObservations);
    const ForecastDataset sm = summarize_members(ds);
    CHECK(sm.n_members == 1);
    CHECK(sm.feature_names ==
          std::vector<std::string>{"t2m_fc_mean", "t2m_fc_std", "cape_mean", "cape_std"});
    // members {1.5, 2.5}: mean 2, sample std sqrt(0.5)
    CHECK(sm.feat(0, 0, 0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(sm.feat(0, 0, 0, 1) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(sm.feat(0, 0, 0, 2) == doctest::Approx(10.5).epsilon(1e-15));
    CHECK(bitwise_equal(sm.observations, ds.observations));

    // the documented example: members {2, 4} summarize to mean 3, std 1.4142
    ForecastDataset tiny = ds;
    tiny.feat(0, 0, 0, 0) = 2.0;
    tiny.feat(0, 0, 1, 0) = 4.0;
    const ForecastDataset tiny_sm = summarize_members(tiny);
    CHECK(tiny_sm.feat(0, 0, 0, 0) == 3.0);
    CHECK(tiny_sm.feat(0, 0, 0, 1) == doctest::Approx(1.4142).epsilon(1e-4));
}

TEST_CASE("member summaries are bitwise invariant to member order") {
    SynthConfig cfg;
    cfg.n_stations = 3;
    cfg.n_days = 5;
    cfg.n_members = 7;
    cfg.seed = 12345;
    const ForecastDataset ds = generate(cfg);
    ForecastDataset reversed = ds;
    for (int t = 0; t < ds.n_days(); ++t)
        for (int s = 0; s < ds.n_stations(); ++s)
            for (int n = 0; n < ds.n_members; ++n)
                for (int p = 0; p < ds.n_features(); ++p)
                    reversed.feat(t, s, n, p) = ds.feat(t, s, ds.n_members - 1 - n, p);
    const ForecastDataset a = summarize_members(ds);
    const ForecastDataset b = summarize_members(reversed);
    CHECK(bitwise_equal(a.features, b.features));
}

}  // TEST_SUITE
