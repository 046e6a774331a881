#include "gnnpp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gnnpp/normal.hpp"

namespace gnnpp {

DmResult dm_test(const std::vector<double>& scores_f, const std::vector<double>& scores_g,
                 int station_id, bool demeaned) {
    if (scores_f.size() != scores_g.size())
        throw ShapeError("score series lengths differ");
    const std::size_t n = scores_f.size();
    if (n < 2) throw ConfigError("need at least two days for a significance test");

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += scores_f[i] - scores_g[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = scores_f[i] - scores_g[i];
        const double c = demeaned ? d - mean : d;
        ss += c * c;
    }
    const double sigma = std::sqrt(ss / static_cast<double>(n));

    DmResult r;
    r.station_id = station_id;
    if (sigma == 0.0) {
        r.degenerate = true;
        return r;
    }
    r.t = std::sqrt(static_cast<double>(n)) * mean / sigma;
    r.p = 2.0 * normal_cdf(-std::fabs(r.t));
    return r;
}

BhResult bh_correct(const std::vector<double>& p_values, double alpha) {
    if (p_values.empty()) throw ConfigError("no p values to correct");
    if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("alpha must lie in (0, 1)");
    for (double p : p_values)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p values must lie in [0, 1]");

    const std::size_t m = p_values.size();
    std::vector<double> sorted = p_values;
    std::sort(sorted.begin(), sorted.end());
    double p_star = -1.0;
    for (std::size_t i = m; i >= 1; --i)
        if (sorted[i - 1] <= alpha * static_cast<double>(i) / static_cast<double>(m)) {
            p_star = sorted[i - 1];
            break;
        }

    BhResult r;
    r.rejected.assign(m, false);
    if (p_star < 0.0) return r;
    r.p_star = p_star;
    for (std::size_t i = 0; i < m; ++i)
        if (p_values[i] <= p_star) {
            r.rejected[i] = true;
            ++r.n_rejected;
        }
    return r;
}

DmReport dm_station_tests(const ScoreSeries& f, const ScoreSeries& g, double alpha,
                          bool demeaned) {
    if (f.station_ids != g.station_ids || f.n_days != g.n_days)
        throw ShapeError("score series must cover the same stations and days");
    DmReport report;
    std::vector<double> ps;
    for (int s = 0; s < f.n_stations; ++s) {
        report.stations.push_back(dm_test(f.station_series(s), g.station_series(s),
                                          f.station_ids[static_cast<std::size_t>(s)], demeaned));
        ps.push_back(report.stations.back().p);
    }
    // degenerate stations enter with p = 1, which no threshold can reject
    report.bh = bh_correct(ps, alpha);
    return report;
}

void write_dm_csv(const DmReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "station,t,p,rejected\n";
    for (std::size_t s = 0; s < report.stations.size(); ++s) {
        const DmResult& r = report.stations[s];
        out << r.station_id << ',' << format_double(r.t) << ',' << format_double(r.p) << ','
            << (report.bh.rejected[s] ? 1 : 0) << '\n';
    }
}

ForecastDataset apply_permutation(const ForecastDataset& ds,
                                  const std::vector<int>& day_positions, int feature_pos,
                                  const std::vector<int>& day_map,
                                  const std::vector<std::vector<int>>& within) {
    if (feature_pos < 0 || feature_pos >= ds.n_features())
        throw LookupError("feature index out of range");
    if (day_map.size() != day_positions.size() || within.size() != day_positions.size())
        throw ShapeError("permutation maps must cover the selected days");
    const int cells = ds.n_stations() * ds.n_members;

    ForecastDataset out = ds;
    for (std::size_t j = 0; j < day_positions.size(); ++j) {
        const int t_dst = day_positions[j];
        const int t_src = day_positions[static_cast<std::size_t>(day_map[j])];
        const std::vector<int>& pi = within[j];
        if (static_cast<int>(pi.size()) != cells)
            throw ShapeError("within-day permutation must cover station x member");
        for (int flat = 0; flat < cells; ++flat) {
            const int s_dst = flat / ds.n_members;
            const int n_dst = flat % ds.n_members;
            const int s_src = pi[static_cast<std::size_t>(flat)] / ds.n_members;
            const int n_src = pi[static_cast<std::size_t>(flat)] % ds.n_members;
            out.feat(t_dst, s_dst, n_dst, feature_pos) =
                ds.feat(t_src, s_src, n_src, feature_pos);
        }
    }
    return out;
}

ForecastDataset permute_feature(const ForecastDataset& ds, const std::vector<int>& day_positions,
                                int feature_pos, Rng& rng) {
    std::vector<int> day_map(day_positions.size());
    std::iota(day_map.begin(), day_map.end(), 0);
    rng.shuffle(day_map);
    const int cells = ds.n_stations() * ds.n_members;
    std::vector<std::vector<int>> within(day_positions.size());
    for (std::vector<int>& pi : within) {
        pi.resize(static_cast<std::size_t>(cells));
        std::iota(pi.begin(), pi.end(), 0);
        rng.shuffle(pi);
    }
    return apply_permutation(ds, day_positions, feature_pos, day_map, within);
}

ForecastDataset shuffle_station_ids(const ForecastDataset& ds, Rng& rng) {
    std::vector<int> ids;
    for (const Station& st : ds.stations) ids.push_back(st.id);
    rng.shuffle(ids);
    ForecastDataset out = ds;
    for (std::size_t s = 0; s < out.stations.size(); ++s)
        out.stations[s].id = ids[s];
    return out;
}

namespace {

double crps_of(const std::vector<PostModel>& members, const ForecastDataset& ds,
               const DayRange& test) {
    return evaluate_ensemble(members, ds, test).crps.mean();
}

}  // namespace

ImportanceReport permutation_importance(const std::vector<PostModel>& members,
                                        const ForecastDataset& raw, const DayRange& test,
                                        int repetitions, std::uint64_t seed) {
    if (repetitions < 1) throw ConfigError("need at least one repetition");
    if (members.empty()) throw ConfigError("ensemble has no members");
    raw.validate();

    std::vector<int> day_positions;
    for (std::size_t i = 0; i < raw.days.size(); ++i)
        if (test.contains(raw.days[i])) day_positions.push_back(static_cast<int>(i));
    if (day_positions.empty()) throw ConfigError("test range selects no dataset days");

    ImportanceReport report;
    report.base_crps = crps_of(members, raw, test);
    if (!(report.base_crps > 0.0))
        throw NumericError("baseline CRPS is zero, importance is undefined");

    const int P = raw.n_features();
    for (int p = 0; p <= P; ++p) {  // last row is the station-id assignment
        FeatureImportance row;
        row.feature = p < P ? raw.feature_names[static_cast<std::size_t>(p)] : "station_id";
        std::vector<double> imps;
        for (int rep = 0; rep < repetitions; ++rep) {
            Rng rng(splitmix64(seed ^ (static_cast<std::uint64_t>(p) * 2654435761ULL +
                                       static_cast<std::uint64_t>(rep) + 1)));
            const ForecastDataset permuted =
                p < P ? permute_feature(raw, day_positions, p, rng)
                      : shuffle_station_ids(raw, rng);
            imps.push_back((crps_of(members, permuted, test) - report.base_crps) /
                           report.base_crps);
        }
        double mean = 0.0;
        for (double v : imps) mean += v;
        mean /= static_cast<double>(repetitions);
        double ss = 0.0;
        for (double v : imps) ss += (v - mean) * (v - mean);
        row.imp_mean = mean;
        row.imp_std =
            repetitions > 1 ? std::sqrt(ss / static_cast<double>(repetitions - 1)) : 0.0;
        report.rows.push_back(row);
    }

    double positive = 0.0;
    for (const FeatureImportance& r : report.rows)
        if (r.imp_mean > 0.0) positive += r.imp_mean;
    for (const FeatureImportance& r : report.rows)
        report.normalized.push_back(r.imp_mean > 0.0 && positive > 0.0 ? r.imp_mean / positive
                                                                       : 0.0);
    return report;
}

void write_importance_csv(const ImportanceReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "feature,imp_mean,imp_std,imp_normalized\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i)
        out << report.rows[i].feature << ',' << format_double(report.rows[i].imp_mean) << ','
            << format_double(report.rows[i].imp_std) << ','
            << format_double(report.normalized[i]) << '\n';
}

}  // namespace gnnpp
