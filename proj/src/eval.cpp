#include "gnnpp/eval.hpp"

#include <fstream>
#include <functional>

#include "gnnpp/training.hpp"

namespace gnnpp {

namespace {

std::vector<int> test_day_ids(const ForecastDataset& raw, const DayRange& test) {
    std::vector<int> day_ids;
    for (int d : raw.days)
        if (test.contains(d)) day_ids.push_back(d);
    if (day_ids.empty()) throw ConfigError("test range selects no dataset days");
    return day_ids;
}

ScoreSeries empty_series(const ForecastDataset& raw, const std::vector<int>& day_ids) {
    std::vector<int> station_ids;
    for (const Station& st : raw.stations) station_ids.push_back(st.id);
    return make_series(static_cast<int>(day_ids.size()), raw.n_stations(), day_ids,
                       std::move(station_ids));
}

// CRPS/PIT/PI bookkeeping shared by the single-model and ensemble paths
EvalResult score_gaussian(const ForecastDataset& raw, const std::vector<int>& day_ids,
                          double nominal, std::vector<int> group_sizes,
                          const std::function<DayPrediction(int)>& predict) {
    EvalResult r;
    r.crps = empty_series(raw, day_ids);
    r.nominal = nominal;
    r.group_sizes = std::move(group_sizes);
    const int S = raw.n_stations();
    std::vector<double> mu_all, sigma_all, y_all;
    for (int d = 0; d < r.crps.n_days; ++d) {
        const int day = day_ids[static_cast<std::size_t>(d)];
        const int t = raw.day_pos(day);
        DayPrediction p = predict(day);
        for (int s = 0; s < S; ++s) {
            const double y = raw.obs(t, s);
            const double mu = p.mu[static_cast<std::size_t>(s)];
            const double sigma = p.sigma[static_cast<std::size_t>(s)];
            r.crps.at(d, s) = crps_gaussian(mu, sigma, y);
            r.pit.push_back(pit_value(mu, sigma, y));
            mu_all.push_back(mu);
            sigma_all.push_back(sigma);
            y_all.push_back(y);
        }
        r.predictions.push_back(std::move(p));
    }
    r.pi = pi_gaussian(mu_all, sigma_all, y_all, r.nominal);
    return r;
}

}  // namespace

EvalResult evaluate_model(const PostModel& model, const ForecastDataset& raw,
                          const DayRange& test, const EvalOptions& opts) {
    raw.validate();
    const std::vector<int> day_ids = test_day_ids(raw, test);
    const double nominal = opts.nominal < 0.0 ? nominal_level(raw.n_members) : opts.nominal;

    if (model.is_ensemble()) {
        EvalResult r;
        r.crps = empty_series(raw, day_ids);
        r.nominal = nominal;
        r.group_sizes = {raw.n_members};
        std::vector<std::vector<double>> members_all;
        std::vector<double> y_all;
        for (int d = 0; d < r.crps.n_days; ++d) {
            const int day = day_ids[static_cast<std::size_t>(d)];
            const int t = raw.day_pos(day);
            DayPrediction p = model.predict_day(raw, day);
            for (int s = 0; s < raw.n_stations(); ++s) {
                const double y = raw.obs(t, s);
                std::vector<double> m(p.members.row(s), p.members.row(s) + p.members.n_cols);
                r.crps.at(d, s) = crps_ensemble(m, y);
                members_all.push_back(std::move(m));
                y_all.push_back(y);
            }
            r.predictions.push_back(std::move(p));
        }
        r.pi = pi_ensemble(members_all, y_all);
        return r;
    }

    if (opts.force_single_group) {
        ForecastDataset storage;
        const ForecastDataset& view = model_view(model, raw, storage);
        return score_gaussian(raw, day_ids, nominal, {raw.n_members},
                              [&](int day) { return model.predict_day(view, day); });
    }
    return score_gaussian(raw, day_ids, nominal,
                          member_groups(raw.n_members, model.n_members_train()),
                          [&](int day) { return model.predict_grouped(raw, day); });
}

EvalResult evaluate_ensemble(const std::vector<PostModel>& members, const ForecastDataset& raw,
                             const DayRange& test, const EvalOptions& opts) {
    if (members.empty()) throw ConfigError("ensemble has no members");
    raw.validate();
    const std::vector<int> day_ids = test_day_ids(raw, test);
    const double nominal = opts.nominal < 0.0 ? nominal_level(raw.n_members) : opts.nominal;

    if (opts.force_single_group) {
        // each member sees the whole member set at once
        std::vector<ForecastDataset> storages(members.size());
        std::vector<const ForecastDataset*> views;
        for (std::size_t k = 0; k < members.size(); ++k)
            views.push_back(&model_view(members[k], raw, storages[k]));
        return score_gaussian(raw, day_ids, nominal, {raw.n_members}, [&](int day) {
            DayPrediction avg;
            avg.day_id = day;
            avg.mu.assign(static_cast<std::size_t>(raw.n_stations()), 0.0);
            avg.sigma.assign(static_cast<std::size_t>(raw.n_stations()), 0.0);
            for (std::size_t k = 0; k < members.size(); ++k) {
                const DayPrediction p = members[k].predict_day(*views[k], day);
                for (std::size_t s = 0; s < avg.mu.size(); ++s) {
                    avg.mu[s] += p.mu[s];
                    avg.sigma[s] += p.sigma[s];
                }
            }
            for (std::size_t s = 0; s < avg.mu.size(); ++s) {
                avg.mu[s] /= static_cast<double>(members.size());
                avg.sigma[s] /= static_cast<double>(members.size());
            }
            return avg;
        });
    }
    return score_gaussian(raw, day_ids, nominal,
                          member_groups(raw.n_members, members[0].n_members_train()),
                          [&](int day) { return ensemble_predict(members, raw, day); });
}

void write_predictions_csv(const std::vector<DayPrediction>& predictions,
                           const std::vector<int>& station_ids, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "day,station_id,mu,sigma\n";
    for (const DayPrediction& p : predictions) {
        if (p.mu.size() != station_ids.size())
            throw ShapeError("prediction rows do not match the station list");
        for (std::size_t s = 0; s < station_ids.size(); ++s)
            out << p.day_id << ',' << station_ids[s] << ',' << format_double(p.mu[s]) << ','
                << format_double(p.sigma[s]) << '\n';
    }
}

void write_station_crps_csv(const ScoreSeries& crps, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "station_id,crps\n";
    for (int s = 0; s < crps.n_stations; ++s)
        out << crps.station_ids[static_cast<std::size_t>(s)] << ','
            << format_double(crps.station_mean(s)) << '\n';
}

void write_scores_csv(const ScoreSeries& scores, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "day,station_id,crps\n";
    for (int d = 0; d < scores.n_days; ++d)
        for (int s = 0; s < scores.n_stations; ++s)
            out << scores.day_ids[static_cast<std::size_t>(d)] << ','
                << scores.station_ids[static_cast<std::size_t>(s)] << ','
                << format_double(scores.at(d, s)) << '\n';
}

ScoreSeries read_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || split_csv(line).size() != 3)
        throw ParseError(path + ": expected header day,station_id,crps");
    std::vector<int> day_ids, station_ids;
    std::vector<double> values;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        long long day = 0, station = 0;
        double v = 0.0;
        if (fields.size() != 3 || !try_parse_int(fields[0], day) ||
            !try_parse_int(fields[1], station) || !try_parse_double(fields[2], v))
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad score row");
        if (day_ids.empty() || day_ids.back() != static_cast<int>(day))
            day_ids.push_back(static_cast<int>(day));
        if (day_ids.size() == 1) station_ids.push_back(static_cast<int>(station));
        values.push_back(v);
    }
    if (day_ids.empty()) throw ParseError(path + ": no score rows");
    const int n_days = static_cast<int>(day_ids.size());
    const int n_stations = static_cast<int>(station_ids.size());
    ScoreSeries out = make_series(n_days, n_stations, std::move(day_ids),
                                  std::move(station_ids));
    if (values.size() != out.values.size())
        throw ParseError(path + ": ragged day blocks");
    out.values = std::move(values);
    return out;
}

}  // namespace gnnpp
