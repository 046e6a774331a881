#include "gnnpp/graph.hpp"

#include <cmath>
#include <fstream>

namespace gnnpp {

double geodesic_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double kRad = 3.14159265358979323846 / 180.0;
    constexpr double kRadiusKm = 6371.0;
    const double p1 = lat1 * kRad;
    const double p2 = lat2 * kRad;
    const double dp = (lat2 - lat1) * kRad;
    const double dl = (lon2 - lon1) * kRad;
    const double a = std::sin(dp / 2) * std::sin(dp / 2) +
                     std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
    return 2.0 * kRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

ForecastGraph build_graph(const ForecastDataset& ds, int day_id, double d_max, double eps,
                          const Normalizer& nz, const StaticStats& stats, Topology topo) {
    if (d_max <= 0.0) throw ConfigError("d_max must be positive");
    if (eps <= 0.0) throw ConfigError("eps must be positive");
    const int t = ds.day_pos(day_id);
    if (t < 0) throw LookupError("day " + std::to_string(day_id) + " not in dataset");
    if (nz.mean.size() != static_cast<std::size_t>(ds.n_features()))
        throw ShapeError("normalizer does not match dataset feature count");

    const int S = ds.n_stations();
    const int N = ds.n_members;
    const int P = ds.n_features();

    ForecastGraph g;
    g.day_id = day_id;
    g.day_pos = t;
    g.n_stations = S;
    g.n_members = N;

    const int base_dim = P + 4 + 2;
    g.node_features = Tensor(S * N, base_dim);
    g.node_station.resize(static_cast<std::size_t>(S) * N);
    const double ys = ds.yday_sin[static_cast<std::size_t>(t)];
    const double yc = ds.yday_cos[static_cast<std::size_t>(t)];
    for (int s = 0; s < S; ++s) {
        const Station& st = ds.stations[static_cast<std::size_t>(s)];
        const double statics[4] = {
            (st.lat - stats.mean[0]) / stats.stdev[0], (st.lon - stats.mean[1]) / stats.stdev[1],
            (st.alt - stats.mean[2]) / stats.stdev[2], (st.orog - stats.mean[3]) / stats.stdev[3]};
        for (int n = 0; n < N; ++n) {
            const int node = s * N + n;
            g.node_station[static_cast<std::size_t>(node)] = s;
            double* row = g.node_features.row(node);
            for (int p = 0; p < P; ++p) row[p] = nz.normalize(p, ds.feat(t, s, n, p));
            for (int k = 0; k < 4; ++k) row[P + k] = statics[k];
            row[P + 4] = ys;
            row[P + 5] = yc;
        }
    }

    // station adjacency under the strict threshold
    std::vector<double> dist(static_cast<std::size_t>(S) * S, 0.0);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j)
            dist[static_cast<std::size_t>(i) * S + j] =
                geodesic_km(ds.stations[static_cast<std::size_t>(i)],
                            ds.stations[static_cast<std::size_t>(j)]);

    const int n_nodes = S * N;
    g.in_plan.offsets.assign(static_cast<std::size_t>(n_nodes) + 1, 0);
    // dst-major enumeration keeps edges sorted by (dst, src)
    for (int dst = 0; dst < n_nodes; ++dst) {
        const int ds_station = dst / N;
        for (int src = 0; src < n_nodes; ++src) {
            const int ss = src / N;
            double dn;
            if (topo == Topology::SelfLoopsOnly) {
                if (src != dst) continue;
                dn = eps;
            } else if (ss == ds_station) {
                dn = eps;
            } else {
                const double d = dist[static_cast<std::size_t>(ss) * S + ds_station];
                if (d >= d_max) continue;
                dn = d / d_max;
            }
            g.edge_src.push_back(src);
            g.edge_dst.push_back(dst);
            g.edge_features.v.push_back(dn);
        }
        g.in_plan.offsets[static_cast<std::size_t>(dst) + 1] =
            static_cast<int>(g.edge_src.size());
    }
    g.edge_features.n_rows = static_cast<int>(g.edge_src.size());
    g.edge_features.n_cols = 1;

    // src-grouped plan for the backward scatter of gathers by edge_src
    g.src_plan.offsets.assign(static_cast<std::size_t>(n_nodes) + 1, 0);
    for (int src : g.edge_src) ++g.src_plan.offsets[static_cast<std::size_t>(src) + 1];
    for (int i = 0; i < n_nodes; ++i)
        g.src_plan.offsets[static_cast<std::size_t>(i) + 1] +=
            g.src_plan.offsets[static_cast<std::size_t>(i)];
    g.src_plan.perm.resize(g.edge_src.size());
    {
        std::vector<int> cursor(g.src_plan.offsets.begin(), g.src_plan.offsets.end() - 1);
        for (std::size_t e = 0; e < g.edge_src.size(); ++e)
            g.src_plan.perm[static_cast<std::size_t>(
                cursor[static_cast<std::size_t>(g.edge_src[e])]++)] = static_cast<int>(e);
    }

    g.station_plan.offsets.resize(static_cast<std::size_t>(S) + 1);
    for (int s = 0; s <= S; ++s) g.station_plan.offsets[static_cast<std::size_t>(s)] = s * N;

    return g;
}

Tensor materialize_features(const ForecastGraph& g, const Tensor& embeddings) {
    require_shape(embeddings, g.n_stations, embeddings.n_cols, "station embeddings");
    Tensor out(g.n_nodes(), g.node_features.n_cols + embeddings.n_cols);
    for (int i = 0; i < g.n_nodes(); ++i) {
        double* row = out.row(i);
        const double* base = g.node_features.row(i);
        for (int c = 0; c < g.node_features.n_cols; ++c) row[c] = base[c];
        const double* emb = embeddings.row(g.node_station[static_cast<std::size_t>(i)]);
        for (int c = 0; c < embeddings.n_cols; ++c) row[g.node_features.n_cols + c] = emb[c];
    }
    return out;
}

void write_edge_csv(const ForecastGraph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "day,src_s,src_n,dst_s,dst_n,dist_norm\n";
    for (int e = 0; e < g.n_edges(); ++e) {
        const int src = g.edge_src[static_cast<std::size_t>(e)];
        const int dst = g.edge_dst[static_cast<std::size_t>(e)];
        out << g.day_id << ',' << src / g.n_members << ',' << src % g.n_members << ','
            << dst / g.n_members << ',' << dst % g.n_members << ','
            << format_double(g.edge_features.v[static_cast<std::size_t>(e)]) << '\n';
    }
}

}  // namespace gnnpp
