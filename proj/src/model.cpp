#include "gnnpp/model.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace gnnpp {

using nlohmann::json;

ModelKind parse_model_kind(const std::string& name) {
    if (name == "gat") return ModelKind::Gat;
    if (name == "smry") return ModelKind::Smry;
    if (name == "ds") return ModelKind::Ds;
    if (name == "drn") return ModelKind::Drn;
    if (name == "ens") return ModelKind::Ens;
    throw ConfigError("unknown model '" + name + "' (expected gat, smry, ds, drn, ens)");
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Gat: return "gat";
        case ModelKind::Smry: return "smry";
        case ModelKind::Ds: return "ds";
        case ModelKind::Drn: return "drn";
        case ModelKind::Ens: return "ens";
    }
    throw ConfigError("invalid model kind value");
}

void ModelConfig::validate() const {
    if (kind == ModelKind::Ens) return;  // no learnable structure
    if (hidden < 1) throw ConfigError("hidden width must be at least 1");
    if (heads < 1) throw ConfigError("need at least one attention head");
    if (k_blocks < 1) throw ConfigError("need at least one block");
    if (embed_dim < 1) throw ConfigError("embedding dimension must be at least 1");
    if (d_max <= 0.0) throw ConfigError("d_max must be positive");
    if (eps <= 0.0) throw ConfigError("eps must be positive");
    if (target_feature < 0) throw ConfigError("target feature index must be non-negative");
}

std::vector<int> member_groups(int n_test, int n_train) {
    if (n_test < 1) throw ConfigError("need at least one member to predict");
    if (n_train <= 1 || n_test <= n_train) return {n_test};
    std::vector<int> sizes;
    int rem = n_test;
    while (rem > n_train) {
        sizes.push_back(n_train - 1);
        rem -= n_train - 1;
    }
    sizes.push_back(rem);
    return sizes;
}

PostModel PostModel::create(const ModelConfig& cfg, const ForecastDataset& ds,
                            const std::vector<int>& train_day_positions, std::uint64_t seed) {
    cfg.validate();
    ds.validate();
    PostModel m;
    m.cfg_ = cfg;
    m.n_members_train_ = ds.n_members;
    for (const Station& st : ds.stations) m.station_ids_.push_back(st.id);
    m.stats_ = fit_static_stats(ds.stations);
    if (cfg.kind == ModelKind::Ens) {
        if (cfg.target_feature >= ds.n_features())
            throw ConfigError("target feature index out of range");
        m.schema_ = ds.feature_names;
        return m;
    }
    ForecastDataset storage;
    const ForecastDataset& view =
        (cfg.kind == ModelKind::Smry || cfg.kind == ModelKind::Drn) ? (storage = summarize_members(ds))
                                                                    : ds;
    m.schema_ = view.feature_names;
    m.nz_ = fit_normalizer(view, train_day_positions);
    Rng rng(seed);
    m.build_components(true, &rng);
    return m;
}

void PostModel::build_components(bool fresh, Rng* rng) {
    const int base_dim = static_cast<int>(schema_.size()) + 4 + 2;
    const int in_dim = base_dim + cfg_.embed_dim;
    if (fresh)
        emb_param_ = store_.add("embed", embedding_init(static_cast<int>(station_ids_.size()),
                                                        cfg_.embed_dim, *rng));
    else {
        emb_param_ = store_.find("embed");
        if (emb_param_ < 0) throw SchemaError("checkpoint lacks the station embedding");
        const Tensor& e = store_.value(emb_param_);
        if (e.n_rows != static_cast<int>(station_ids_.size()) || e.n_cols != cfg_.embed_dim)
            throw SchemaError("station embedding shape does not match checkpoint metadata");
    }
    if (cfg_.kind == ModelKind::Drn) {
        const int dims[4] = {in_dim, cfg_.hidden, cfg_.hidden, 2};
        for (int i = 0; i < 3; ++i) {
            const std::string stem = "mlp.fc" + std::to_string(i);
            if (fresh) {
                mlp_w_[i] = store_.add(stem + ".w", dense_init(dims[i], dims[i + 1], *rng));
                mlp_b_[i] = store_.add(stem + ".b", zeros_init(1, dims[i + 1]));
            } else {
                mlp_w_[i] = store_.find(stem + ".w");
                mlp_b_[i] = store_.find(stem + ".b");
                if (mlp_w_[i] < 0 || mlp_b_[i] < 0)
                    throw SchemaError("checkpoint lacks dense layer " + stem);
            }
        }
        return;
    }
    StackConfig sc;
    sc.in_dim = in_dim;
    sc.hidden = cfg_.hidden;
    sc.heads = cfg_.heads;
    sc.k_blocks = cfg_.k_blocks;
    DeepSetConfig dc;
    dc.in_dim = cfg_.hidden;
    if (fresh) {
        stack_ = GnnStack::create(store_, "gnn", sc, *rng);
        head_ = DeepSetHead::create(store_, "head", dc, *rng);
    } else {
        stack_ = GnnStack::bind(store_, "gnn", sc);
        head_ = DeepSetHead::bind(store_, "head", dc);
    }
}

int PostModel::output_bias_param() const {
    if (cfg_.kind == ModelKind::Ens) return -1;
    if (cfg_.kind == ModelKind::Drn) return mlp_b_[2];
    return head_.final_bias_param();
}

int PostModel::embedding_row(int station_id) const {
    for (std::size_t i = 0; i < station_ids_.size(); ++i)
        if (station_ids_[i] == station_id) return static_cast<int>(i);
    throw LookupError("station id " + std::to_string(station_id) +
                      " was not present at training time");
}

namespace {

kernels::ScatterPlan plan_by_row(const std::vector<int>& idx, int n_rows) {
    kernels::ScatterPlan plan;
    plan.offsets.assign(static_cast<std::size_t>(n_rows) + 1, 0);
    for (int r : idx) ++plan.offsets[static_cast<std::size_t>(r) + 1];
    for (int i = 0; i < n_rows; ++i)
        plan.offsets[static_cast<std::size_t>(i) + 1] += plan.offsets[static_cast<std::size_t>(i)];
    plan.perm.resize(idx.size());
    std::vector<int> cursor(plan.offsets.begin(), plan.offsets.end() - 1);
    for (std::size_t i = 0; i < idx.size(); ++i)
        plan.perm[static_cast<std::size_t>(cursor[static_cast<std::size_t>(idx[i])]++)] =
            static_cast<int>(i);
    return plan;
}

}  // namespace

DayBatch PostModel::make_batch(const ForecastDataset& view, int day_id) const {
    if (cfg_.kind == ModelKind::Ens)
        throw ConfigError("the ensemble baseline has no forward pass");
    if (view.feature_names != schema_)
        throw SchemaError("dataset features do not match the model schema");

    DayBatch b;
    b.day_id = day_id;
    const int S = view.n_stations();
    if (cfg_.kind == ModelKind::Drn) {
        const int t = view.day_pos(day_id);
        if (t < 0) throw LookupError("day " + std::to_string(day_id) + " not in dataset");
        if (view.n_members != 1) throw SchemaError("dense model expects summarized members");
        const int P = view.n_features();
        b.mlp_input = Tensor(S, P + 6);
        for (int s = 0; s < S; ++s) {
            double* row = b.mlp_input.row(s);
            for (int p = 0; p < P; ++p) row[p] = nz_.normalize(p, view.feat(t, s, 0, p));
            const Station& st = view.stations[static_cast<std::size_t>(s)];
            row[P + 0] = (st.lat - stats_.mean[0]) / stats_.stdev[0];
            row[P + 1] = (st.lon - stats_.mean[1]) / stats_.stdev[1];
            row[P + 2] = (st.alt - stats_.mean[2]) / stats_.stdev[2];
            row[P + 3] = (st.orog - stats_.mean[3]) / stats_.stdev[3];
            row[P + 4] = view.yday_sin[static_cast<std::size_t>(t)];
            row[P + 5] = view.yday_cos[static_cast<std::size_t>(t)];
            b.emb_idx.push_back(embedding_row(st.id));
            b.y.push_back(view.obs(t, s));
        }
    } else {
        const Topology topo =
            cfg_.kind == ModelKind::Ds ? Topology::SelfLoopsOnly : Topology::Full;
        b.graph = build_graph(view, day_id, cfg_.d_max, cfg_.eps, nz_, stats_, topo);
        b.emb_idx.reserve(static_cast<std::size_t>(b.graph.n_nodes()));
        for (int v = 0; v < b.graph.n_nodes(); ++v)
            b.emb_idx.push_back(embedding_row(
                view.stations[static_cast<std::size_t>(b.graph.node_station[static_cast<std::size_t>(v)])]
                    .id));
        for (int s = 0; s < S; ++s) b.y.push_back(view.obs(b.graph.day_pos, s));
    }
    b.emb_plan = plan_by_row(b.emb_idx, static_cast<int>(station_ids_.size()));
    return b;
}

int PostModel::build_mu_sigma(Tape& tape, const DayBatch& batch) const {
    const int emb = tape.gather(tape.param(emb_param_), &batch.emb_idx, &batch.emb_plan);
    if (cfg_.kind == ModelKind::Drn) {
        int h = tape.concat_cols(tape.constant(batch.mlp_input), emb);
        for (int i = 0; i < 2; ++i)
            h = tape.unary(kernels::Unary::Elu,
                           tape.dense(h, tape.param(mlp_w_[i]), tape.param(mlp_b_[i])));
        const int out = tape.dense(h, tape.param(mlp_w_[2]), tape.param(mlp_b_[2]));
        const int mu = tape.slice_cols(out, 0, 1);
        const int sigma = tape.add_scalar(
            tape.unary(kernels::Unary::Softplus, tape.slice_cols(out, 1, 2)), 1e-12);
        return tape.concat_cols(mu, sigma);
    }
    const int x = tape.concat_cols(tape.constant(batch.graph.node_features), emb);
    const int h = stack_.forward(tape, batch.graph, x);
    return head_.forward(tape, h, &batch.graph.station_plan.offsets);
}

int PostModel::build_loss(Tape& tape, const DayBatch& batch) const {
    const int ms = build_mu_sigma(tape, batch);
    return tape.crps_gaussian_mean(tape.slice_cols(ms, 0, 1), tape.slice_cols(ms, 1, 2),
                                   &batch.y);
}

DayPrediction PostModel::predict_day(const ForecastDataset& view, int day_id) const {
    DayPrediction p;
    p.day_id = day_id;
    if (cfg_.kind == ModelKind::Ens) {
        const int t = view.day_pos(day_id);
        if (t < 0) throw LookupError("day " + std::to_string(day_id) + " not in dataset");
        if (cfg_.target_feature >= view.n_features())
            throw SchemaError("target feature missing from dataset");
        p.members = Tensor(view.n_stations(), view.n_members);
        for (int s = 0; s < view.n_stations(); ++s)
            for (int n = 0; n < view.n_members; ++n)
                p.members.at(s, n) = view.feat(t, s, n, cfg_.target_feature);
        return p;
    }
    const DayBatch batch = make_batch(view, day_id);
    ParameterStore& store = const_cast<ParameterStore&>(store_);
    GradBuffer buf(store);
    Tape tape(&store, &buf);
    const Tensor out = tape.val(build_mu_sigma(tape, batch));
    p.mu.resize(static_cast<std::size_t>(out.n_rows));
    p.sigma.resize(static_cast<std::size_t>(out.n_rows));
    for (int s = 0; s < out.n_rows; ++s) {
        p.mu[static_cast<std::size_t>(s)] = out.at(s, 0);
        p.sigma[static_cast<std::size_t>(s)] = out.at(s, 1);
    }
    return p;
}

namespace {

// one-day dataset restricted to members [lo, hi)
ForecastDataset member_slice(const ForecastDataset& raw, int day_id, int lo, int hi) {
    const int t = raw.day_pos(day_id);
    if (t < 0) throw LookupError("day " + std::to_string(day_id) + " not in dataset");
    ForecastDataset out;
    out.stations = raw.stations;
    out.days = {day_id};
    out.n_members = hi - lo;
    out.feature_names = raw.feature_names;
    const int S = raw.n_stations();
    const int P = raw.n_features();
    out.features.resize(static_cast<std::size_t>(S) * (hi - lo) * P);
    for (int s = 0; s < S; ++s)
        for (int n = lo; n < hi; ++n)
            for (int p = 0; p < P; ++p)
                out.feat(0, s, n - lo, p) = raw.feat(t, s, n, p);
    out.yday_sin = {raw.yday_sin[static_cast<std::size_t>(t)]};
    out.yday_cos = {raw.yday_cos[static_cast<std::size_t>(t)]};
    out.observations.resize(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) out.observations[static_cast<std::size_t>(s)] = raw.obs(t, s);
    return out;
}

}  // namespace

DayPrediction PostModel::predict_grouped(const ForecastDataset& raw, int day_id) const {
    if (cfg_.kind == ModelKind::Ens) return predict_day(raw, day_id);
    const std::vector<int> sizes = member_groups(raw.n_members, n_members_train_);
    DayPrediction avg;
    avg.day_id = day_id;
    avg.mu.assign(static_cast<std::size_t>(raw.n_stations()), 0.0);
    avg.sigma.assign(static_cast<std::size_t>(raw.n_stations()), 0.0);
    int lo = 0;
    for (int size : sizes) {
        const ForecastDataset slice = member_slice(raw, day_id, lo, lo + size);
        lo += size;
        ForecastDataset storage;
        const ForecastDataset& view = model_view(*this, slice, storage);
        const DayPrediction p = predict_day(view, day_id);
        for (std::size_t s = 0; s < avg.mu.size(); ++s) {
            avg.mu[s] += p.mu[s];
            avg.sigma[s] += p.sigma[s];
        }
    }
    const double g = static_cast<double>(sizes.size());
    for (std::size_t s = 0; s < avg.mu.size(); ++s) {
        avg.mu[s] /= g;
        avg.sigma[s] /= g;
    }
    return avg;
}

const ForecastDataset& model_view(const PostModel& model, const ForecastDataset& raw,
                                  ForecastDataset& storage) {
    if (!model.needs_summary()) return raw;
    storage = summarize_members(raw);
    return storage;
}

void save_checkpoint(const PostModel& model, const std::string& path) {
    if (model.kind() == ModelKind::Ens)
        throw ConfigError("the ensemble baseline has no checkpoint");
    json j;
    j["format"] = "gnnpp-checkpoint";
    j["version"] = 1;
    j["model"] = {{"kind", to_string(model.kind())},
                  {"hidden", model.config().hidden},
                  {"heads", model.config().heads},
                  {"k_blocks", model.config().k_blocks},
                  {"embed_dim", model.config().embed_dim},
                  {"d_max", model.config().d_max},
                  {"eps", model.config().eps},
                  {"target_feature", model.config().target_feature}};
    j["n_members_train"] = model.n_members_train();
    j["feature_names"] = model.schema();
    j["station_ids"] = model.station_ids();
    j["normalizer"] = {{"mean", model.normalizer().mean},
                       {"stdev", model.normalizer().stdev},
                       {"clamped", model.normalizer().clamped}};
    j["statics"] = {
        {"mean", std::vector<double>(model.statics().mean, model.statics().mean + 4)},
        {"stdev", std::vector<double>(model.statics().stdev, model.statics().stdev + 4)}};
    json params = json::array();
    const ParameterStore& store = model.params();
    for (int pid = 0; pid < store.count(); ++pid) {
        const Tensor& v = store.value(pid);
        params.push_back({{"name", store.name(pid)},
                          {"rows", v.n_rows},
                          {"cols", v.n_cols},
                          {"values", v.v}});
    }
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << j.dump();
    out << '\n';
}

PostModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        if (j.at("format") != "gnnpp-checkpoint") throw SchemaError("not a model checkpoint");
        if (j.at("version") != 1) throw SchemaError("unsupported checkpoint version");
        PostModel m;
        const json& mc = j.at("model");
        m.cfg_.kind = parse_model_kind(mc.at("kind").get<std::string>());
        m.cfg_.hidden = mc.at("hidden").get<int>();
        m.cfg_.heads = mc.at("heads").get<int>();
        m.cfg_.k_blocks = mc.at("k_blocks").get<int>();
        m.cfg_.embed_dim = mc.at("embed_dim").get<int>();
        m.cfg_.d_max = mc.at("d_max").get<double>();
        m.cfg_.eps = mc.at("eps").get<double>();
        m.cfg_.target_feature = mc.at("target_feature").get<int>();
        m.cfg_.validate();
        m.n_members_train_ = j.at("n_members_train").get<int>();
        m.schema_ = j.at("feature_names").get<std::vector<std::string>>();
        m.station_ids_ = j.at("station_ids").get<std::vector<int>>();
        const json& nz = j.at("normalizer");
        m.nz_.mean = nz.at("mean").get<std::vector<double>>();
        m.nz_.stdev = nz.at("stdev").get<std::vector<double>>();
        m.nz_.clamped = nz.at("clamped").get<std::vector<bool>>();
        if (m.nz_.mean.size() != m.schema_.size() || m.nz_.stdev.size() != m.schema_.size())
            throw SchemaError("normalizer size does not match the feature schema");
        const json& st = j.at("statics");
        for (int i = 0; i < 4; ++i) {
            m.stats_.mean[i] = st.at("mean").at(static_cast<std::size_t>(i)).get<double>();
            m.stats_.stdev[i] = st.at("stdev").at(static_cast<std::size_t>(i)).get<double>();
        }
        for (const json& p : j.at("params")) {
            Tensor t(p.at("rows").get<int>(), p.at("cols").get<int>());
            const auto vals = p.at("values").get<std::vector<double>>();
            if (vals.size() != t.v.size())
                throw SchemaError("parameter '" + p.at("name").get<std::string>() +
                                  "' has inconsistent shape");
            t.v = vals;
            m.store_.add(p.at("name").get<std::string>(), std::move(t));
        }
        m.build_components(false, nullptr);
        return m;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

}  // namespace gnnpp
