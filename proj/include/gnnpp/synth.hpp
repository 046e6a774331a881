#pragma once

#include <string>
#include <vector>

#include "gnnpp/dataset.hpp"
#include "gnnpp/rng.hpp"

namespace gnnpp {

enum class BiasField {
    PerStation,           // independent draw per station
    SpatiallyCorrelated,  // smooth field sampled at the stations
    Constant,             // same offset everywhere
};

BiasField parse_bias_field(const std::string& name);
std::string to_string(BiasField f);

// Synthetic ensemble archive. The observable signal is a seasonal cycle
// plus an altitude lapse plus a spatially correlated daily weather field;
// members add a station bias and spread_error-scaled noise, observations
// add unit-free noise of std sigma_true around the signal.
struct SynthConfig {
    int n_stations = 10;
    int n_days = 365;
    int n_members = 11;
    int n_features = 4;  // lead forecast + aux columns + trailing noise column
    std::uint64_t seed = 1;
    BiasField bias_field = BiasField::PerStation;
    double bias_amplitude = 1.0;
    double spread_error = 1.0;  // ensemble spread as a multiple of the true error std
    double spatial_corr_length = 500.0;  // km
    double sigma_true = 1.0;             // observation error std around the signal
    double sigma_weather = 2.0;          // daily weather field std
    double sigma_aux = 3.0;              // noise std of the aux forecast columns

    void validate() const;
};

// What the generator actually realized, for tests that need ground truth.
struct SynthTruth {
    std::vector<double> bias;    // per station
    std::vector<double> signal;  // n_days * n_stations, before observation noise
};

// Stations on a jittered west-to-east line: consecutive gaps are 55..85 km,
// so every station has a neighbor within 100 km and (for 3+ stations) one
// farther than 100 km. Ids are increasing but not contiguous.
std::vector<Station> place_stations(int n, std::uint64_t seed);

ForecastDataset generate(const SynthConfig& cfg);
ForecastDataset generate(const SynthConfig& cfg, SynthTruth* truth);

}  // namespace gnnpp
