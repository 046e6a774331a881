#pragma once

#include <string>
#include <vector>

#include "gnnpp/graph.hpp"
#include "gnnpp/layers.hpp"
#include "gnnpp/synth.hpp"

namespace gnnpp {

enum class ModelKind {
    Gat,   // attention stack on the full member graph
    Smry,  // attention stack on the member-summarized graph (one node per station)
    Ds,    // attention stack on the self-loop-only member graph
    Drn,   // dense network on summary features plus station embedding
    Ens,   // raw ensemble passthrough
};

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind k);

struct ModelConfig {
    ModelKind kind = ModelKind::Gat;
    int hidden = 64;
    int heads = 4;
    int k_blocks = 2;
    int embed_dim = 20;
    double d_max = 100.0;  // km
    double eps = 1e-6;
    int target_feature = 0;  // raw forecast column the ENS baseline reads

    void validate() const;
};

// Per-day model output: Gaussian parameters per station, or the raw member
// matrix for the ensemble baseline.
struct DayPrediction {
    int day_id = 0;
    std::vector<double> mu;
    std::vector<double> sigma;
    Tensor members;  // (n_stations, n_members), ENS only
};

// Partition of N_test members predicted with a model trained on N_train:
// groups of N_train - 1 while more than N_train members remain, then the
// rest as one group; a test set no larger than the training count stays
// whole. (51, 11) -> [10, 10, 10, 10, 11].
std::vector<int> member_groups(int n_test, int n_train);

// Everything one day's forward pass needs; owns the buffers tape ops point
// into, so it must outlive any tape built from it.
struct DayBatch {
    int day_id = 0;
    ForecastGraph graph;        // graph models
    Tensor mlp_input;           // dense model input rows
    std::vector<int> emb_idx;   // embedding row per node (or per station)
    kernels::ScatterPlan emb_plan;
    std::vector<double> y;
};

class PostModel {
  public:
    // Fresh model. Fits the normalizer on the training days of ds (on the
    // member summary for the summary-input kinds) and seeds the parameters.
    static PostModel create(const ModelConfig& cfg, const ForecastDataset& ds,
                            const std::vector<int>& train_day_positions, std::uint64_t seed);

    ModelKind kind() const { return cfg_.kind; }
    const ModelConfig& config() const { return cfg_; }
    bool needs_summary() const { return cfg_.kind == ModelKind::Smry || cfg_.kind == ModelKind::Drn; }
    bool is_ensemble() const { return cfg_.kind == ModelKind::Ens; }
    int n_members_train() const { return n_members_train_; }
    const std::vector<std::string>& schema() const { return schema_; }
    const Normalizer& normalizer() const { return nz_; }
    const StaticStats& statics() const { return stats_; }
    const std::vector<int>& station_ids() const { return station_ids_; }

    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    // bias of the output layer, exposed for climatological priming
    int output_bias_param() const;
    int embedding_param() const { return emb_param_; }

    // view: the dataset as this model consumes it (see model_view below)
    DayBatch make_batch(const ForecastDataset& view, int day_id) const;
    // (n_stations, 2) tape node; sigma already softplus-positive
    int build_mu_sigma(Tape& tape, const DayBatch& batch) const;
    // mean CRPS over the day's stations, scalar tape node
    int build_loss(Tape& tape, const DayBatch& batch) const;

    DayPrediction predict_day(const ForecastDataset& view, int day_id) const;
    // slices raw members per the grouping rule, predicts each group on its
    // own (summarized when applicable), averages mu and sigma
    DayPrediction predict_grouped(const ForecastDataset& raw, int day_id) const;

  private:
    friend PostModel load_checkpoint(const std::string& path);
    PostModel() = default;
    void build_components(bool fresh, Rng* rng);
    int embedding_row(int station_id) const;  // LookupError when unknown

    ModelConfig cfg_;
    ParameterStore store_;
    Normalizer nz_;
    StaticStats stats_;
    std::vector<std::string> schema_;  // feature names of the consumed view
    std::vector<int> station_ids_;     // embedding row order
    int n_members_train_ = 0;
    int emb_param_ = -1;
    GnnStack stack_;
    DeepSetHead head_;
    int mlp_w_[3] = {-1, -1, -1}, mlp_b_[3] = {-1, -1, -1};
};

// The dataset a model consumes: the member summary for summary-input kinds
// (stored in `storage`), the raw dataset otherwise.
const ForecastDataset& model_view(const PostModel& model, const ForecastDataset& raw,
                                  ForecastDataset& storage);

// JSON checkpoint: config, schema, normalization stats, ordered parameters.
void save_checkpoint(const PostModel& model, const std::string& path);
PostModel load_checkpoint(const std::string& path);

}  // namespace gnnpp
