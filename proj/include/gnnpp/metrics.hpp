#pragma once

#include <vector>

#include "gnnpp/normal.hpp"
#include "gnnpp/tensor.hpp"

namespace gnnpp {

// Scores laid out day-major: value(d, s) for d in [0, n_days), s in [0, n_stations).
struct ScoreSeries {
    int n_days = 0;
    int n_stations = 0;
    std::vector<int> day_ids;      // length n_days
    std::vector<int> station_ids;  // length n_stations
    std::vector<double> values;    // n_days * n_stations

    double& at(int d, int s) { return values[static_cast<std::size_t>(d) * n_stations + s]; }
    double at(int d, int s) const { return values[static_cast<std::size_t>(d) * n_stations + s]; }

    double mean() const;
    double station_mean(int s) const;
    std::vector<double> station_series(int s) const;  // per-day scores of one station
};

ScoreSeries make_series(int n_days, int n_stations, std::vector<int> day_ids,
                        std::vector<int> station_ids);

// Empirical-CDF CRPS: mean|x_i - y| - (1/2N^2) sum_ij |x_i - x_j|.
double crps_ensemble(const std::vector<double>& members, double y);

// Central prediction interval level used throughout: (N-1)/(N+1).
double nominal_level(int n_members);

struct PiMetrics {
    double mean_length = 0.0;
    double coverage_percent = 0.0;
};

// Gaussian central interval mu +- q sigma with q = Phi^-1((1+nominal)/2).
// Coverage counts closed-interval membership.
PiMetrics pi_gaussian(const std::vector<double>& mu, const std::vector<double>& sigma,
                      const std::vector<double>& y, double nominal);

// Raw-ensemble interval [min member, max member].
PiMetrics pi_ensemble(const std::vector<std::vector<double>>& members,
                      const std::vector<double>& y);

double pit_value(double mu, double sigma, double y);
std::vector<double> pit_series(const std::vector<double>& mu, const std::vector<double>& sigma,
                               const std::vector<double>& y);
std::vector<int> pit_histogram(const std::vector<double>& pit, int bins);

// Kolmogorov-Smirnov distance of a sample from Uniform(0,1), and the
// asymptotic critical value sqrt(-ln(alpha/2)/2)/sqrt(n).
double ks_uniform_distance(std::vector<double> sample);
double ks_critical(double alpha, int n);

// Per-station skill 1 - mean_model/mean_ref; NaN marks an undefined entry
// (reference mean zero).
std::vector<double> crpss_per_station(const ScoreSeries& model, const ScoreSeries& ref);

}  // namespace gnnpp
