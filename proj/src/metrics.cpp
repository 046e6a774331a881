#include "gnnpp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gnnpp/common.hpp"

namespace gnnpp {

double ScoreSeries::mean() const {
    if (values.empty()) throw NumericError("score series is empty");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double ScoreSeries::station_mean(int s) const {
    if (n_days == 0) throw NumericError("score series is empty");
    double acc = 0.0;
    for (int d = 0; d < n_days; ++d) acc += at(d, s);
    return acc / static_cast<double>(n_days);
}

std::vector<double> ScoreSeries::station_series(int s) const {
    std::vector<double> out(static_cast<std::size_t>(n_days));
    for (int d = 0; d < n_days; ++d) out[static_cast<std::size_t>(d)] = at(d, s);
    return out;
}

ScoreSeries make_series(int n_days, int n_stations, std::vector<int> day_ids,
                        std::vector<int> station_ids) {
    if (static_cast<int>(day_ids.size()) != n_days ||
        static_cast<int>(station_ids.size()) != n_stations)
        throw ShapeError("score series id lists do not match dimensions");
    ScoreSeries s;
    s.n_days = n_days;
    s.n_stations = n_stations;
    s.day_ids = std::move(day_ids);
    s.station_ids = std::move(station_ids);
    s.values.assign(static_cast<std::size_t>(n_days) * n_stations, 0.0);
    return s;
}

double crps_ensemble(const std::vector<double>& members, double y) {
    const std::size_t n = members.size();
    if (n == 0) throw NumericError("crps_ensemble: empty member list");
    double term1 = 0.0;
    for (double x : members) term1 += std::fabs(x - y);
    term1 /= static_cast<double>(n);
    double term2 = 0.0;
    for (double a : members)
        for (double b : members) term2 += std::fabs(a - b);
    term2 /= 2.0 * static_cast<double>(n) * static_cast<double>(n);
    return term1 - term2;
}

double nominal_level(int n_members) {
    if (n_members < 2) throw ConfigError("interval level needs at least 2 members");
    return static_cast<double>(n_members - 1) / static_cast<double>(n_members + 1);
}

PiMetrics pi_gaussian(const std::vector<double>& mu, const std::vector<double>& sigma,
                      const std::vector<double>& y, double nominal) {
    if (mu.size() != sigma.size() || mu.size() != y.size())
        throw ShapeError("pi_gaussian: series lengths differ");
    if (mu.empty()) throw NumericError("pi_gaussian: empty series");
    if (!(nominal > 0.0 && nominal < 1.0)) throw ConfigError("nominal level must be in (0,1)");
    const double q = normal_inv_cdf(0.5 * (1.0 + nominal));
    PiMetrics m;
    std::size_t covered = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double half = q * sigma[i];
        m.mean_length += 2.0 * half;
        if (y[i] >= mu[i] - half && y[i] <= mu[i] + half) ++covered;
    }
    m.mean_length /= static_cast<double>(mu.size());
    m.coverage_percent = 100.0 * static_cast<double>(covered) / static_cast<double>(mu.size());
    return m;
}

PiMetrics pi_ensemble(const std::vector<std::vector<double>>& members,
                      const std::vector<double>& y) {
    if (members.size() != y.size()) throw ShapeError("pi_ensemble: series lengths differ");
    if (members.empty()) throw NumericError("pi_ensemble: empty series");
    PiMetrics m;
    std::size_t covered = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (members[i].empty()) throw NumericError("pi_ensemble: empty member list");
        const auto [lo_it, hi_it] = std::minmax_element(members[i].begin(), members[i].end());
        m.mean_length += *hi_it - *lo_it;
        if (y[i] >= *lo_it && y[i] <= *hi_it) ++covered;
    }
    m.mean_length /= static_cast<double>(members.size());
    m.coverage_percent =
        100.0 * static_cast<double>(covered) / static_cast<double>(members.size());
    return m;
}

double pit_value(double mu, double sigma, double y) {
    if (!(sigma > 0.0)) throw NumericError("pit: sigma must be positive");
    return normal_cdf((y - mu) / sigma);
}

std::vector<double> pit_series(const std::vector<double>& mu, const std::vector<double>& sigma,
                               const std::vector<double>& y) {
    if (mu.size() != sigma.size() || mu.size() != y.size())
        throw ShapeError("pit_series: series lengths differ");
    std::vector<double> out(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) out[i] = pit_value(mu[i], sigma[i], y[i]);
    return out;
}

std::vector<int> pit_histogram(const std::vector<double>& pit, int bins) {
    if (bins < 1) throw ConfigError("pit histogram needs at least 1 bin");
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double p : pit) {
        if (p < 0.0 || p > 1.0) throw NumericError("pit value outside [0,1]");
        int b = static_cast<int>(p * bins);
        if (b == bins) b = bins - 1;
        ++counts[static_cast<std::size_t>(b)];
    }
    return counts;
}

double ks_uniform_distance(std::vector<double> sample) {
    if (sample.empty()) throw NumericError("ks: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double u = sample[i];
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - u);
        d = std::max(d, u - static_cast<double>(i) / n);
    }
    return d;
}

double ks_critical(double alpha, int n) {
    if (!(alpha > 0.0 && alpha < 1.0) || n < 1) throw ConfigError("ks_critical: bad arguments");
    return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

std::vector<double> crpss_per_station(const ScoreSeries& model, const ScoreSeries& ref) {
    if (model.n_stations != ref.n_stations || model.station_ids != ref.station_ids)
        throw AlignmentError("crpss: station sets differ");
    std::vector<double> out(static_cast<std::size_t>(model.n_stations));
    for (int s = 0; s < model.n_stations; ++s) {
        const double rm = ref.station_mean(s);
        out[static_cast<std::size_t>(s)] =
            rm == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                      : 1.0 - model.station_mean(s) / rm;
    }
    return out;
}

}  // namespace gnnpp
