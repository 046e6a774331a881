#include "gnnpp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace gnnpp {

namespace {

std::string loc(const std::string& path, int line) {
    return path + ":" + std::to_string(line) + ": ";
}

// getline with \r\n tolerance; returns false at EOF
bool next_line(std::ifstream& in, std::string& out) {
    if (!std::getline(in, out)) return false;
    if (!out.empty() && out.back() == '\r') out.pop_back();
    return true;
}

double field_double(const std::string& path, int line, std::string_view s, const char* what) {
    double v;
    if (!try_parse_double(s, v))
        throw ParseError(loc(path, line) + "bad " + what + " value '" + std::string(s) + "'");
    return v;
}

long long field_int(const std::string& path, int line, std::string_view s, const char* what) {
    long long v;
    if (!try_parse_int(s, v))
        throw ParseError(loc(path, line) + "bad " + what + " value '" + std::string(s) + "'");
    return v;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return in;
}

}  // namespace

void SplitSpec::validate() const {
    for (const DayRange* r : {&train, &valid, &test})
        if (r->hi < r->lo) throw ConfigError("split range upper bound below lower bound");
    auto overlap = [](const DayRange& a, const DayRange& b) {
        return a.lo < b.hi && b.lo < a.hi && a.size() > 0 && b.size() > 0;
    };
    if (overlap(train, valid) || overlap(train, test) || overlap(valid, test))
        throw ConfigError("split ranges overlap");
    if (label != "R2R" && label != "R2F")
        throw ConfigError("split label must be R2R or R2F, got " + label);
}

int ForecastDataset::day_pos(int day_id) const {
    const auto it = std::lower_bound(days.begin(), days.end(), day_id);
    if (it == days.end() || *it != day_id) return -1;
    return static_cast<int>(it - days.begin());
}

int ForecastDataset::station_pos(int station_id) const {
    for (std::size_t i = 0; i < stations.size(); ++i)
        if (stations[i].id == station_id) return static_cast<int>(i);
    return -1;
}

int ForecastDataset::feature_pos(const std::string& name) const {
    for (std::size_t i = 0; i < feature_names.size(); ++i)
        if (feature_names[i] == name) return static_cast<int>(i);
    return -1;
}

std::vector<int> ForecastDataset::day_positions(const DayRange& range) const {
    std::vector<int> out;
    for (int t = 0; t < n_days(); ++t)
        if (range.contains(days[static_cast<std::size_t>(t)])) out.push_back(t);
    return out;
}

void ForecastDataset::validate() const {
    if (stations.empty()) throw SchemaError("dataset has no stations");
    if (days.empty()) throw SchemaError("dataset has no days");
    if (n_members < 1) throw SchemaError("dataset has no members");
    if (feature_names.empty()) throw SchemaError("dataset has no features");
    std::set<int> ids;
    for (const Station& st : stations) {
        if (st.lat < -90.0 || st.lat > 90.0)
            throw SchemaError("station " + std::to_string(st.id) + " latitude out of range");
        if (st.lon < -180.0 || st.lon > 180.0)
            throw SchemaError("station " + std::to_string(st.id) + " longitude out of range");
        if (!ids.insert(st.id).second)
            throw SchemaError("duplicate station id " + std::to_string(st.id));
    }
    for (std::size_t i = 1; i < days.size(); ++i)
        if (days[i] <= days[i - 1]) throw SchemaError("day ids must be strictly increasing");
    std::set<std::string> names(feature_names.begin(), feature_names.end());
    if (names.size() != feature_names.size()) throw SchemaError("duplicate feature names");
    const std::size_t expect = static_cast<std::size_t>(n_days()) * n_stations() * n_members *
                               static_cast<std::size_t>(n_features());
    if (features.size() != expect) throw ShapeError("feature tensor size mismatch");
    if (observations.size() != static_cast<std::size_t>(n_days()) * n_stations())
        throw ShapeError("observation tensor size mismatch");
    if (yday_sin.size() != days.size() || yday_cos.size() != days.size())
        throw ShapeError("yday encoding size mismatch");
}

ForecastDataset load_dataset(const std::string& stations_path, const std::string& forecasts_path,
                             const std::string& observations_path) {
    ForecastDataset ds;

    {
        std::ifstream in = open_or_throw(stations_path);
        std::string line;
        int lineno = 1;
        if (!next_line(in, line) || line != "id,lat,lon,alt,orog")
            throw ParseError(loc(stations_path, 1) + "expected header id,lat,lon,alt,orog");
        while (next_line(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto f = split_csv(line);
            if (f.size() != 5)
                throw ParseError(loc(stations_path, lineno) + "expected 5 fields, got " +
                                 std::to_string(f.size()));
            Station st;
            st.id = static_cast<int>(field_int(stations_path, lineno, f[0], "id"));
            st.lat = field_double(stations_path, lineno, f[1], "lat");
            st.lon = field_double(stations_path, lineno, f[2], "lon");
            st.alt = field_double(stations_path, lineno, f[3], "alt");
            st.orog = field_double(stations_path, lineno, f[4], "orog");
            ds.stations.push_back(st);
        }
        if (ds.stations.empty()) throw SchemaError(stations_path + ": no stations");
        std::set<int> ids;
        for (const Station& st : ds.stations) {
            if (st.lat < -90.0 || st.lat > 90.0)
                throw SchemaError(stations_path + ": station " + std::to_string(st.id) +
                                  " latitude out of range");
            if (st.lon < -180.0 || st.lon > 180.0)
                throw SchemaError(stations_path + ": station " + std::to_string(st.id) +
                                  " longitude out of range");
            if (!ids.insert(st.id).second)
                throw SchemaError(stations_path + ": duplicate station id " +
                                  std::to_string(st.id));
        }
    }

    // forecasts: single pass into temporary row storage, then assembly
    struct FcRow {
        int day;
        int s_pos;
        int member;
        std::vector<double> values;  // features + yday_sin + yday_cos
    };
    std::vector<FcRow> rows;
    {
        std::ifstream in = open_or_throw(forecasts_path);
        std::string line;
        int lineno = 1;
        if (!next_line(in, line))
            throw ParseError(loc(forecasts_path, 1) + "missing header");
        {
            const auto h = split_csv(line);
            if (h.size() < 6 || h[0] != "day" || h[1] != "station_id" || h[2] != "member" ||
                h[h.size() - 2] != "yday_sin" || h[h.size() - 1] != "yday_cos")
                throw ParseError(loc(forecasts_path, 1) +
                                 "expected header day,station_id,member,<features...>,"
                                 "yday_sin,yday_cos");
            for (std::size_t i = 3; i + 2 < h.size(); ++i) {
                if (h[i].empty())
                    throw ParseError(loc(forecasts_path, 1) + "empty feature name");
                ds.feature_names.emplace_back(h[i]);
            }
            if (ds.feature_names.empty())
                throw ParseError(loc(forecasts_path, 1) + "no feature columns");
        }
        const std::size_t n_fields = 3 + ds.feature_names.size() + 2;
        while (next_line(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto f = split_csv(line);
            if (f.size() != n_fields)
                throw ParseError(loc(forecasts_path, lineno) + "expected " +
                                 std::to_string(n_fields) + " fields, got " +
                                 std::to_string(f.size()));
            FcRow row;
            row.day = static_cast<int>(field_int(forecasts_path, lineno, f[0], "day"));
            const int sid =
                static_cast<int>(field_int(forecasts_path, lineno, f[1], "station_id"));
            row.s_pos = -1;
            for (std::size_t i = 0; i < ds.stations.size(); ++i)
                if (ds.stations[i].id == sid) row.s_pos = static_cast<int>(i);
            if (row.s_pos < 0)
                throw AlignmentError(loc(forecasts_path, lineno) + "station id " +
                                     std::to_string(sid) + " not in stations file");
            row.member = static_cast<int>(field_int(forecasts_path, lineno, f[2], "member"));
            if (row.member < 0)
                throw ParseError(loc(forecasts_path, lineno) + "negative member index");
            row.values.reserve(f.size() - 3);
            for (std::size_t i = 3; i < f.size(); ++i)
                row.values.push_back(
                    field_double(forecasts_path, lineno, f[i], "feature"));
            rows.push_back(std::move(row));
        }
        if (rows.empty()) throw SchemaError(forecasts_path + ": no forecast rows");
    }

    {
        std::set<int> day_set;
        int max_member = 0;
        for (const FcRow& r : rows) {
            day_set.insert(r.day);
            max_member = std::max(max_member, r.member);
        }
        ds.days.assign(day_set.begin(), day_set.end());
        ds.n_members = max_member + 1;
        const int P = ds.n_features();
        const int S = ds.n_stations();
        const int N = ds.n_members;
        ds.features.assign(static_cast<std::size_t>(ds.n_days()) * S * N * P, 0.0);
        ds.yday_sin.assign(ds.days.size(), 0.0);
        ds.yday_cos.assign(ds.days.size(), 0.0);
        std::vector<bool> seen(static_cast<std::size_t>(ds.n_days()) * S * N, false);
        std::vector<bool> day_seen(ds.days.size(), false);
        for (const FcRow& r : rows) {
            const int t = ds.day_pos(r.day);
            const std::size_t cell = (static_cast<std::size_t>(t) * S + r.s_pos) * N + r.member;
            if (seen[cell])
                throw SchemaError(forecasts_path + ": duplicate row for day " +
                                  std::to_string(r.day) + ", station " +
                                  std::to_string(ds.stations[static_cast<std::size_t>(r.s_pos)].id) +
                                  ", member " + std::to_string(r.member));
            seen[cell] = true;
            for (int p = 0; p < P; ++p)
                ds.features[ds.feat_index(t, r.s_pos, r.member, p)] =
                    r.values[static_cast<std::size_t>(p)];
            const double ys = r.values[static_cast<std::size_t>(P)];
            const double yc = r.values[static_cast<std::size_t>(P) + 1];
            if (!day_seen[static_cast<std::size_t>(t)]) {
                day_seen[static_cast<std::size_t>(t)] = true;
                ds.yday_sin[static_cast<std::size_t>(t)] = ys;
                ds.yday_cos[static_cast<std::size_t>(t)] = yc;
            } else if (ds.yday_sin[static_cast<std::size_t>(t)] != ys ||
                       ds.yday_cos[static_cast<std::size_t>(t)] != yc) {
                throw SchemaError(forecasts_path + ": inconsistent yday encoding on day " +
                                  std::to_string(r.day));
            }
        }
        for (int t = 0; t < ds.n_days(); ++t)
            for (int s = 0; s < S; ++s)
                for (int n = 0; n < N; ++n)
                    if (!seen[(static_cast<std::size_t>(t) * S + s) * N + n])
                        throw SchemaError(
                            forecasts_path + ": inconsistent member count: day " +
                            std::to_string(ds.days[static_cast<std::size_t>(t)]) + ", station " +
                            std::to_string(ds.stations[static_cast<std::size_t>(s)].id) +
                            " is missing member " + std::to_string(n));
    }

    {
        std::ifstream in = open_or_throw(observations_path);
        std::string line;
        int lineno = 1;
        if (!next_line(in, line) || line != "day,station_id,obs")
            throw ParseError(loc(observations_path, 1) + "expected header day,station_id,obs");
        ds.observations.assign(static_cast<std::size_t>(ds.n_days()) * ds.n_stations(), 0.0);
        std::vector<bool> seen(ds.observations.size(), false);
        while (next_line(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto f = split_csv(line);
            if (f.size() != 3)
                throw ParseError(loc(observations_path, lineno) + "expected 3 fields, got " +
                                 std::to_string(f.size()));
            const int day =
                static_cast<int>(field_int(observations_path, lineno, f[0], "day"));
            const int sid =
                static_cast<int>(field_int(observations_path, lineno, f[1], "station_id"));
            const double value = field_double(observations_path, lineno, f[2], "obs");
            const int t = ds.day_pos(day);
            if (t < 0) continue;  // observation outside the forecast archive
            const int s = ds.station_pos(sid);
            if (s < 0)
                throw AlignmentError(loc(observations_path, lineno) + "station id " +
                                     std::to_string(sid) + " not in stations file");
            const std::size_t cell = static_cast<std::size_t>(t) * ds.n_stations() + s;
            if (seen[cell])
                throw SchemaError(loc(observations_path, lineno) + "duplicate observation");
            seen[cell] = true;
            ds.observations[cell] = value;
        }
        for (int t = 0; t < ds.n_days(); ++t)
            for (int s = 0; s < ds.n_stations(); ++s)
                if (!seen[static_cast<std::size_t>(t) * ds.n_stations() + s])
                    throw AlignmentError(
                        observations_path + ": missing observation for day " +
                        std::to_string(ds.days[static_cast<std::size_t>(t)]) + ", station " +
                        std::to_string(ds.stations[static_cast<std::size_t>(s)].id));
    }

    ds.validate();
    return ds;
}

void save_dataset(const ForecastDataset& ds, const std::string& dir) {
    ds.validate();
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/stations.csv");
        if (!out) throw ParseError("cannot write " + dir + "/stations.csv");
        out << "id,lat,lon,alt,orog\n";
        for (const Station& st : ds.stations)
            out << st.id << ',' << format_double(st.lat) << ',' << format_double(st.lon) << ','
                << format_double(st.alt) << ',' << format_double(st.orog) << '\n';
    }
    {
        std::ofstream out(dir + "/forecasts.csv");
        if (!out) throw ParseError("cannot write " + dir + "/forecasts.csv");
        out << "day,station_id,member";
        for (const std::string& name : ds.feature_names) out << ',' << name;
        out << ",yday_sin,yday_cos\n";
        for (int t = 0; t < ds.n_days(); ++t)
            for (int s = 0; s < ds.n_stations(); ++s)
                for (int n = 0; n < ds.n_members; ++n) {
                    out << ds.days[static_cast<std::size_t>(t)] << ','
                        << ds.stations[static_cast<std::size_t>(s)].id << ',' << n;
                    for (int p = 0; p < ds.n_features(); ++p)
                        out << ',' << format_double(ds.feat(t, s, n, p));
                    out << ',' << format_double(ds.yday_sin[static_cast<std::size_t>(t)]) << ','
                        << format_double(ds.yday_cos[static_cast<std::size_t>(t)]) << '\n';
                }
    }
    {
        std::ofstream out(dir + "/observations.csv");
        if (!out) throw ParseError("cannot write " + dir + "/observations.csv");
        out << "day,station_id,obs\n";
        for (int t = 0; t < ds.n_days(); ++t)
            for (int s = 0; s < ds.n_stations(); ++s)
                out << ds.days[static_cast<std::size_t>(t)] << ','
                    << ds.stations[static_cast<std::size_t>(s)].id << ','
                    << format_double(ds.obs(t, s)) << '\n';
    }
}

Normalizer fit_normalizer(const ForecastDataset& ds,
                          const std::vector<int>& train_day_positions) {
    if (train_day_positions.empty())
        throw ConfigError("normalizer needs a non-empty training range");
    const int P = ds.n_features();
    Normalizer nz;
    nz.mean.assign(static_cast<std::size_t>(P), 0.0);
    nz.stdev.assign(static_cast<std::size_t>(P), 1.0);
    nz.clamped.assign(static_cast<std::size_t>(P), false);
    const double count = static_cast<double>(train_day_positions.size()) * ds.n_stations() *
                         ds.n_members;
    for (int p = 0; p < P; ++p) {
        double m = 0.0;
        for (int t : train_day_positions)
            for (int s = 0; s < ds.n_stations(); ++s)
                for (int n = 0; n < ds.n_members; ++n) m += ds.feat(t, s, n, p);
        m /= count;
        double var = 0.0;
        for (int t : train_day_positions)
            for (int s = 0; s < ds.n_stations(); ++s)
                for (int n = 0; n < ds.n_members; ++n) {
                    const double d = ds.feat(t, s, n, p) - m;
                    var += d * d;
                }
        var /= count;
        nz.mean[static_cast<std::size_t>(p)] = m;
        const double sd = std::sqrt(var);
        if (sd < 1e-12) {
            nz.stdev[static_cast<std::size_t>(p)] = 1.0;
            nz.clamped[static_cast<std::size_t>(p)] = true;
        } else {
            nz.stdev[static_cast<std::size_t>(p)] = sd;
        }
    }
    return nz;
}

StaticStats fit_static_stats(const std::vector<Station>& stations) {
    if (stations.empty()) throw ConfigError("no stations for static stats");
    StaticStats st;
    const double n = static_cast<double>(stations.size());
    for (const Station& s : stations) {
        st.mean[0] += s.lat;
        st.mean[1] += s.lon;
        st.mean[2] += s.alt;
        st.mean[3] += s.orog;
    }
    for (double& m : st.mean) m /= n;
    double var[4] = {0, 0, 0, 0};
    for (const Station& s : stations) {
        const double d[4] = {s.lat - st.mean[0], s.lon - st.mean[1], s.alt - st.mean[2],
                             s.orog - st.mean[3]};
        for (int i = 0; i < 4; ++i) var[i] += d[i] * d[i];
    }
    for (int i = 0; i < 4; ++i) {
        const double sd = std::sqrt(var[i] / n);
        st.stdev[i] = sd < 1e-12 ? 1.0 : sd;
    }
    return st;
}

ForecastDataset summarize_members(const ForecastDataset& ds) {
    ForecastDataset out;
    out.stations = ds.stations;
    out.days = ds.days;
    out.n_members = 1;
    out.yday_sin = ds.yday_sin;
    out.yday_cos = ds.yday_cos;
    out.observations = ds.observations;
    for (const std::string& name : ds.feature_names) {
        out.feature_names.push_back(name + "_mean");
        out.feature_names.push_back(name + "_std");
    }
    out.features.assign(static_cast<std::size_t>(ds.n_days()) * ds.n_stations() *
                            out.feature_names.size(),
                        0.0);
    const int N = ds.n_members;
    std::vector<double> buf(static_cast<std::size_t>(N));
    for (int t = 0; t < ds.n_days(); ++t)
        for (int s = 0; s < ds.n_stations(); ++s)
            for (int p = 0; p < ds.n_features(); ++p) {
                for (int n = 0; n < N; ++n) buf[static_cast<std::size_t>(n)] = ds.feat(t, s, n, p);
                // sort by value so the result is independent of member order
                std::sort(buf.begin(), buf.end());
                // identical members summarize to exactly (member, 0)
                if (buf.front() == buf.back()) {
                    out.feat(t, s, 0, 2 * p) = buf.front();
                    continue;
                }
                double sum = 0.0;
                for (double x : buf) sum += x;
                const double mean = sum / static_cast<double>(N);
                double ss = 0.0;
                for (double x : buf) ss += (x - mean) * (x - mean);
                const double sd = N > 1 ? std::sqrt(ss / static_cast<double>(N - 1)) : 0.0;
                out.feat(t, s, 0, 2 * p) = mean;
                out.feat(t, s, 0, 2 * p + 1) = sd;
            }
    return out;
}

}  // namespace gnnpp
