#pragma once

#include <string>
#include <vector>

#include "gnnpp/common.hpp"

namespace gnnpp {

struct Station {
    int id = 0;
    double lat = 0.0;
    double lon = 0.0;
    double alt = 0.0;
    double orog = 0.0;
};

// Half-open range of day identifiers.
struct DayRange {
    int lo = 0;
    int hi = 0;
    bool contains(int day) const { return day >= lo && day < hi; }
    int size() const { return hi - lo; }
};

struct SplitSpec {
    DayRange train;
    DayRange valid;
    DayRange test;
    std::string label = "R2R";  // R2R or R2F

    void validate() const;  // ranges must be well-formed and disjoint
};

// Dense per-day forecast archive. Features are indexed (day, station,
// member, feature) with the day/station/member orders fixed by the `days`
// and `stations` lists.
struct ForecastDataset {
    std::vector<Station> stations;
    std::vector<int> days;  // ascending day identifiers
    int n_members = 0;
    std::vector<std::string> feature_names;
    std::vector<double> features;      // n_days * n_stations * n_members * n_features
    std::vector<double> yday_sin;      // per day
    std::vector<double> yday_cos;      // per day
    std::vector<double> observations;  // n_days * n_stations

    int n_days() const { return static_cast<int>(days.size()); }
    int n_stations() const { return static_cast<int>(stations.size()); }
    int n_features() const { return static_cast<int>(feature_names.size()); }

    std::size_t feat_index(int t, int s, int n, int p) const {
        return ((static_cast<std::size_t>(t) * n_stations() + s) * n_members + n) *
                   n_features() +
               p;
    }
    double feat(int t, int s, int n, int p) const { return features[feat_index(t, s, n, p)]; }
    double& feat(int t, int s, int n, int p) { return features[feat_index(t, s, n, p)]; }
    double obs(int t, int s) const {
        return observations[static_cast<std::size_t>(t) * n_stations() + s];
    }
    double& obs(int t, int s) {
        return observations[static_cast<std::size_t>(t) * n_stations() + s];
    }

    int day_pos(int day_id) const;          // -1 when absent
    int station_pos(int station_id) const;  // -1 when absent
    int feature_pos(const std::string& name) const;

    // positional day indices whose ids fall into the range
    std::vector<int> day_positions(const DayRange& range) const;

    void validate() const;  // sizes consistent, station invariants
};

ForecastDataset load_dataset(const std::string& stations_path, const std::string& forecasts_path,
                             const std::string& observations_path);
// Writes stations.csv, forecasts.csv, observations.csv into dir.
void save_dataset(const ForecastDataset& ds, const std::string& dir);

// Per-feature standardization fitted on the training days. Constant
// features get their std clamped to 1 so they normalize to zero.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> stdev;
    std::vector<bool> clamped;

    double normalize(int p, double x) const { return (x - mean[p]) / stdev[p]; }
    double denormalize(int p, double z) const { return z * stdev[p] + mean[p]; }
};

Normalizer fit_normalizer(const ForecastDataset& ds, const std::vector<int>& train_day_positions);

// Standardization stats for the station static columns (lat, lon, alt, orog).
struct StaticStats {
    double mean[4] = {0, 0, 0, 0};
    double stdev[4] = {1, 1, 1, 1};
};

StaticStats fit_static_stats(const std::vector<Station>& stations);

// Collapse members to per-(day, station) summary statistics: each feature
// column becomes <name>_mean and <name>_std (sample std), n_members = 1.
// Exactly permutation invariant in the member order.
ForecastDataset summarize_members(const ForecastDataset& ds);

}  // namespace gnnpp
