#pragma once

#include <string>
#include <vector>

#include "gnnpp/dataset.hpp"
#include "gnnpp/kernels.hpp"
#include "gnnpp/tensor.hpp"

namespace gnnpp {

// Great-circle distance, haversine on a sphere of radius 6371 km.
double geodesic_km(double lat1, double lon1, double lat2, double lon2);
inline double geodesic_km(const Station& a, const Station& b) {
    return geodesic_km(a.lat, a.lon, b.lat, b.lon);
}

enum class Topology {
    Full,           // same-station cliques plus sub-threshold cross-station edges
    SelfLoopsOnly,  // each node connected to itself only
};

// One day of forecasts as a graph. Node (s, n) has id s * n_members + n.
// Edges are directed, stored sorted by (dst, src), and closed under
// reversal. Same-station cliques include u = v self-loops.
struct ForecastGraph {
    int day_id = 0;
    int day_pos = 0;
    int n_stations = 0;
    int n_members = 0;

    // normalized member features + standardized statics + yday encodings
    Tensor node_features;
    std::vector<int> node_station;  // station position per node

    std::vector<int> edge_src;
    std::vector<int> edge_dst;
    Tensor edge_features;  // one column: dist_norm

    // edges grouped by dst in storage order (identity permutation)
    kernels::ScatterPlan in_plan;
    // edges grouped by src, perm gives storage indices in (src, pos) order
    kernels::ScatterPlan src_plan;
    // nodes grouped by station: offsets {0, N, 2N, ...}
    kernels::ScatterPlan station_plan;

    int n_nodes() const { return n_stations * n_members; }
    int n_edges() const { return static_cast<int>(edge_src.size()); }
};

// Node features hold everything except the station embedding, which the
// models gather through the tape so it stays trainable; node_station plus
// station_plan carry the assignment.
ForecastGraph build_graph(const ForecastDataset& ds, int day_id, double d_max, double eps,
                          const Normalizer& nz, const StaticStats& stats,
                          Topology topo = Topology::Full);

// Node features with the per-station embedding rows appended, as the
// models see them after the gather.
Tensor materialize_features(const ForecastGraph& g, const Tensor& embeddings);

// Edge-list dump: day,src_s,src_n,dst_s,dst_n,dist_norm
void write_edge_csv(const ForecastGraph& g, const std::string& path);

}  // namespace gnnpp
