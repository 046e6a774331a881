// Command-line front end: synthetic data generation, training, evaluation,
// model comparison, and permutation importance. Every command writes its
// outputs plus one manifest.json into --out and never modifies its inputs.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gnnpp/common.hpp"
#include "gnnpp/eval.hpp"
#include "gnnpp/kernels.hpp"
#include "gnnpp/manifest.hpp"
#include "gnnpp/model.hpp"
#include "gnnpp/stats.hpp"
#include "gnnpp/synth.hpp"
#include "gnnpp/training.hpp"

namespace fs = std::filesystem;
using namespace gnnpp;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// decimal form for config echo and manifests: the shortest fixed-point
// string that parses back to the same double, scientific only for extremes
std::string decimal_str(double x) {
    if (x == static_cast<long long>(x) && std::fabs(x) < 1e15)
        return std::to_string(static_cast<long long>(x));
    for (int prec = 1; prec <= 17; ++prec) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f", prec, x);
        if (std::strtod(buf, nullptr) == x) return buf;
    }
    return format_double(x);
}

ForecastDataset load_data_dir(const std::string& dir) {
    return load_dataset(dir + "/stations.csv", dir + "/forecasts.csv",
                        dir + "/observations.csv");
}

void add_data_checksums(RunManifest& m, const std::string& dir) {
    for (const char* name : {"stations.csv", "forecasts.csv", "observations.csv"})
        m.dataset_checksums[dir + "/" + name] = fnv1a64_file(dir + "/" + name);
}

void prepare_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ParseError("cannot create output directory " + dir + ": " + ec.message());
}

DayRange parse_day_range(const std::string& text) {
    const auto colon = text.find(':');
    long long lo = 0, hi = 0;
    if (colon == std::string::npos ||
        !try_parse_int(std::string_view(text).substr(0, colon), lo) ||
        !try_parse_int(std::string_view(text).substr(colon + 1), hi))
        throw ConfigError("day range must be lo:hi, got '" + text + "'");
    return DayRange{static_cast<int>(lo), static_cast<int>(hi)};
}

std::string range_str(const DayRange& r) {
    return std::to_string(r.lo) + ":" + std::to_string(r.hi);
}

// threads, then an optional flat key = value settings file whose keys are
// the snake_case option aliases; command-line flags win over file values
void add_common(CLI::App* sub, int& threads, std::string& config_path) {
    sub->add_option("--threads", threads, "worker thread count (0 keeps the default)");
    sub->add_option("--config", config_path,
                    "flat key = value settings file; explicit flags win");
}

// settings file applied on top of the defaults but under explicit flags
class ConfigOverlay {
  public:
    ConfigOverlay(const CLI::App* sub, const std::string& path) : sub_(sub) {
        if (!path.empty()) kv_ = parse_config_file(path);
    }

    bool cli_given(const std::string& key) const { return sub_->count("--" + key) > 0; }
    bool provided(const std::string& key) const {
        return cli_given(key) || kv_.count(key) > 0;
    }

    template <typename T>
    void apply(const std::string& key, T& dst) {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return;
        used_.insert(key);
        if (cli_given(key)) return;
        parse_into(key, it->second, dst);
    }

    // every config key must name a known setting
    void finish() const {
        for (const auto& [k, v] : kv_)
            if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }

  private:
    static void parse_into(const std::string& key, const std::string& text, std::string& dst) {
        dst = text;
    }
    static void parse_into(const std::string& key, const std::string& text, bool& dst) {
        if (text == "true" || text == "1")
            dst = true;
        else if (text == "false" || text == "0")
            dst = false;
        else
            throw ConfigError("config key '" + key + "' expects true or false, got '" + text +
                              "'");
    }
    static void parse_into(const std::string& key, const std::string& text, double& dst) {
        if (!try_parse_double(text, dst))
            throw ConfigError("config key '" + key + "' expects a number, got '" + text + "'");
    }
    template <typename Int>
    static void parse_into(const std::string& key, const std::string& text, Int& dst) {
        long long v = 0;
        if (!try_parse_int(text, v))
            throw ConfigError("config key '" + key + "' expects an integer, got '" + text +
                              "'");
        dst = static_cast<Int>(v);
    }

    const CLI::App* sub_;
    std::map<std::string, std::string> kv_;
    std::set<std::string> used_;
};

void apply_threads(int threads) {
    if (threads > 0) kernels::set_thread_count(threads);
}

void write_stations_csv(const std::vector<Station>& stations, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "id,lat,lon,alt,orog\n";
    for (const Station& st : stations)
        out << st.id << ',' << format_double(st.lat) << ',' << format_double(st.lon) << ','
            << format_double(st.alt) << ',' << format_double(st.orog) << '\n';
}

std::vector<Station> read_stations_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": missing header");
    std::vector<Station> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        long long id = 0;
        Station st;
        if (f.size() != 5 || !try_parse_int(f[0], id) || !try_parse_double(f[1], st.lat) ||
            !try_parse_double(f[2], st.lon) || !try_parse_double(f[3], st.alt) ||
            !try_parse_double(f[4], st.orog))
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad station row");
        st.id = static_cast<int>(id);
        out.push_back(st);
    }
    return out;
}

void write_pit_csv(const std::vector<double>& pit, int bins, const std::string& path) {
    const std::vector<int> counts = pit_histogram(pit, bins);
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "bin_lo,bin_hi,count\n";
    for (int b = 0; b < bins; ++b)
        out << format_double(static_cast<double>(b) / bins) << ','
            << format_double(static_cast<double>(b + 1) / bins) << ','
            << counts[static_cast<std::size_t>(b)] << '\n';
}

// baseline predictions are the raw member values, one row per member
void write_member_predictions_csv(const std::vector<DayPrediction>& predictions,
                                  const std::vector<int>& station_ids,
                                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "day,station_id,member,value\n";
    for (const DayPrediction& p : predictions)
        for (int s = 0; s < p.members.n_rows; ++s)
            for (int n = 0; n < p.members.n_cols; ++n)
                out << p.day_id << ',' << station_ids[static_cast<std::size_t>(s)] << ',' << n
                    << ',' << format_double(p.members.at(s, n)) << '\n';
}

void write_crpss_csv(const ScoreSeries& model, const ScoreSeries& ref,
                     const std::vector<Station>& stations, const std::string& path) {
    const std::vector<double> skill = crpss_per_station(model, ref);
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "station,lat,lon,crpss\n";
    for (int s = 0; s < model.n_stations; ++s) {
        const int id = model.station_ids[static_cast<std::size_t>(s)];
        double lat = 0.0, lon = 0.0;
        for (const Station& st : stations)
            if (st.id == id) {
                lat = st.lat;
                lon = st.lon;
                break;
            }
        out << id << ',' << format_double(lat) << ',' << format_double(lon) << ','
            << format_double(skill[static_cast<std::size_t>(s)]) << '\n';
    }
}

// ---------------------------------------------------------------- synth --

struct SynthArgs {
    CLI::App* sub = nullptr;
    std::string out, config_path;
    std::string bias_field = "per_station";
    SynthConfig cfg;
    int threads = 0;
};

void add_synth(CLI::App& app, SynthArgs& a) {
    a.sub = app.add_subcommand("synth", "generate a synthetic ensemble forecast archive");
    a.sub->add_option("--out", a.out, "output directory")->required();
    a.sub->add_option("--n-stations,--n_stations", a.cfg.n_stations, "station count")
        ->capture_default_str();
    a.sub->add_option("--n-days,--n_days", a.cfg.n_days, "day count")->capture_default_str();
    a.sub->add_option("--n-members,--n_members", a.cfg.n_members, "ensemble member count")
        ->capture_default_str();
    a.sub->add_option("--n-features,--n_features", a.cfg.n_features,
                      "forecast feature count (last column is pure noise)")
        ->capture_default_str();
    a.sub->add_option("--seed", a.cfg.seed, "generator seed")->capture_default_str();
    a.sub->add_option("--bias-field,--bias_field", a.bias_field,
                      "station bias structure: per_station, spatially_correlated, constant")
        ->capture_default_str();
    a.sub->add_option("--bias-amplitude,--bias_amplitude", a.cfg.bias_amplitude,
                      "station bias std or offset")
        ->capture_default_str();
    a.sub->add_option("--spread-error,--spread_error", a.cfg.spread_error,
                      "ensemble spread as a multiple of the true error std")
        ->capture_default_str();
    a.sub->add_option("--spatial-corr-length,--spatial_corr_length", a.cfg.spatial_corr_length,
                      "correlation length of the weather and bias fields (km)")
        ->capture_default_str();
    a.sub->add_option("--sigma-true,--sigma_true", a.cfg.sigma_true,
                      "observation noise std around the signal")
        ->capture_default_str();
    a.sub->add_option("--sigma-weather,--sigma_weather", a.cfg.sigma_weather,
                      "daily weather field std")
        ->capture_default_str();
    a.sub->add_option("--sigma-aux,--sigma_aux", a.cfg.sigma_aux,
                      "noise std of the aux forecast columns")
        ->capture_default_str();
    add_common(a.sub, a.threads, a.config_path);
}

int run_synth(SynthArgs& a) {
    Timer timer;
    ConfigOverlay overlay(a.sub, a.config_path);
    overlay.apply("n_stations", a.cfg.n_stations);
    overlay.apply("n_days", a.cfg.n_days);
    overlay.apply("n_members", a.cfg.n_members);
    overlay.apply("n_features", a.cfg.n_features);
    overlay.apply("seed", a.cfg.seed);
    overlay.apply("bias_field", a.bias_field);
    overlay.apply("bias_amplitude", a.cfg.bias_amplitude);
    overlay.apply("spread_error", a.cfg.spread_error);
    overlay.apply("spatial_corr_length", a.cfg.spatial_corr_length);
    overlay.apply("sigma_true", a.cfg.sigma_true);
    overlay.apply("sigma_weather", a.cfg.sigma_weather);
    overlay.apply("sigma_aux", a.cfg.sigma_aux);
    overlay.finish();
    apply_threads(a.threads);
    a.cfg.bias_field = parse_bias_field(a.bias_field);
    a.cfg.validate();
    prepare_out_dir(a.out);
    const ForecastDataset ds = generate(a.cfg);
    save_dataset(ds, a.out);

    RunManifest m;
    m.command = "synth";
    m.seed = a.cfg.seed;
    m.config = {
        {"n_stations", std::to_string(a.cfg.n_stations)},
        {"n_days", std::to_string(a.cfg.n_days)},
        {"n_members", std::to_string(a.cfg.n_members)},
        {"n_features", std::to_string(a.cfg.n_features)},
        {"seed", std::to_string(a.cfg.seed)},
        {"bias_field", to_string(a.cfg.bias_field)},
        {"bias_amplitude", decimal_str(a.cfg.bias_amplitude)},
        {"spread_error", decimal_str(a.cfg.spread_error)},
        {"spatial_corr_length", decimal_str(a.cfg.spatial_corr_length)},
        {"sigma_true", decimal_str(a.cfg.sigma_true)},
        {"sigma_weather", decimal_str(a.cfg.sigma_weather)},
        {"sigma_aux", decimal_str(a.cfg.sigma_aux)},
    };
    m.outputs = {"stations.csv", "forecasts.csv", "observations.csv"};
    for (const std::string& name : m.outputs)
        m.dataset_checksums[name] = fnv1a64_file(a.out + "/" + name);
    m.elapsed_seconds = timer.seconds();
    write_manifest(m, a.out);
    std::cout << "synth: " << ds.n_days() << " days, " << ds.n_stations() << " stations, "
              << ds.n_members << " members, " << ds.n_features() << " features -> " << a.out
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- train --

struct TrainArgs {
    CLI::App* sub = nullptr;
    std::string model = "gat";
    std::string preset_name;
    std::string data, out, config_path;
    std::string train_days, valid_days;
    ModelConfig md;  // staging values; only flags the user set override the preset
    TrainConfig td;
    bool dry_run = false;
    int threads = 0;
};

void add_train(CLI::App& app, TrainArgs& a) {
    a.sub = app.add_subcommand("train", "train a post-processing model ensemble");
    a.sub->add_option("--model", a.model, "model kind: gat, smry, ds, drn")
        ->capture_default_str();
    a.sub->add_option("--preset", a.preset_name,
                      "hyperparameter preset by forecast lead time: 24h, 72h, 120h");
    a.sub->add_option("--data", a.data, "dataset directory")->required();
    a.sub->add_option("--out", a.out, "output directory")->required();
    a.sub->add_option("--train-days,--train_days", a.train_days,
                      "training day-id range lo:hi (default: first 75% of days)");
    a.sub->add_option("--valid-days,--valid_days", a.valid_days,
                      "validation day-id range lo:hi (default: next 15% of days)");
    a.sub->add_option("--hidden", a.md.hidden, "hidden channels")->capture_default_str();
    a.sub->add_option("--heads", a.md.heads, "attention heads")->capture_default_str();
    a.sub->add_option("--k-blocks,--k_blocks", a.md.k_blocks, "attention blocks")
        ->capture_default_str();
    a.sub->add_option("--embed-dim,--embed_dim", a.md.embed_dim, "station embedding width")
        ->capture_default_str();
    a.sub->add_option("--d-max,--d_max", a.md.d_max, "graph neighbor cutoff (km)")
        ->capture_default_str();
    a.sub->add_option("--batch-size,--batch_size", a.td.batch_size, "days per optimizer step")
        ->capture_default_str();
    a.sub->add_option("--max-epochs,--max_epochs", a.td.max_epochs, "epoch cap")
        ->capture_default_str();
    a.sub->add_option("--lr,--learning-rate,--learning_rate", a.td.learning_rate,
                      "AdamW learning rate")
        ->capture_default_str();
    a.sub->add_option("--weight-decay,--weight_decay", a.td.weight_decay,
                      "decoupled weight decay")
        ->capture_default_str();
    a.sub->add_option("--patience", a.td.patience, "early-stopping patience in epochs")
        ->capture_default_str();
    a.sub->add_option("--ensemble-size,--ensemble_size", a.td.ensemble_size,
                      "independently trained members")
        ->capture_default_str();
    a.sub->add_option("--seed", a.td.seed, "base seed; member k trains with seed+k")
        ->capture_default_str();
    a.sub->add_flag("--retrain-on-valid,--retrain_on_valid", a.td.retrain_on_valid,
                    "fold the validation days into the training set");
    a.sub->add_flag("--dry-run,--dry_run", a.dry_run,
                    "print the effective configuration and exit");
    add_common(a.sub, a.threads, a.config_path);
}

// preset values lose to settings the user provided via flag or config file
template <typename T>
void override_if_set(const ConfigOverlay& overlay, const std::string& key, T& dst,
                     const T& staged) {
    if (overlay.provided(key)) dst = staged;
}

void resolve_train_config(TrainArgs& a, ConfigOverlay& overlay, ModelConfig& mc,
                          TrainConfig& tc) {
    overlay.apply("model", a.model);
    overlay.apply("preset", a.preset_name);
    overlay.apply("train_days", a.train_days);
    overlay.apply("valid_days", a.valid_days);
    overlay.apply("hidden", a.md.hidden);
    overlay.apply("heads", a.md.heads);
    overlay.apply("k_blocks", a.md.k_blocks);
    overlay.apply("embed_dim", a.md.embed_dim);
    overlay.apply("d_max", a.md.d_max);
    overlay.apply("batch_size", a.td.batch_size);
    overlay.apply("max_epochs", a.td.max_epochs);
    overlay.apply("learning_rate", a.td.learning_rate);
    overlay.apply("weight_decay", a.td.weight_decay);
    overlay.apply("patience", a.td.patience);
    overlay.apply("ensemble_size", a.td.ensemble_size);
    overlay.apply("seed", a.td.seed);
    overlay.apply("retrain_on_valid", a.td.retrain_on_valid);
    overlay.finish();

    if (!a.preset_name.empty()) {
        const Preset p = preset(a.preset_name);
        mc = p.model;
        tc = p.train;
    }
    mc.kind = parse_model_kind(a.model);
    override_if_set(overlay, "hidden", mc.hidden, a.md.hidden);
    override_if_set(overlay, "heads", mc.heads, a.md.heads);
    override_if_set(overlay, "k_blocks", mc.k_blocks, a.md.k_blocks);
    override_if_set(overlay, "embed_dim", mc.embed_dim, a.md.embed_dim);
    override_if_set(overlay, "d_max", mc.d_max, a.md.d_max);
    override_if_set(overlay, "batch_size", tc.batch_size, a.td.batch_size);
    override_if_set(overlay, "max_epochs", tc.max_epochs, a.td.max_epochs);
    override_if_set(overlay, "learning_rate", tc.learning_rate, a.td.learning_rate);
    override_if_set(overlay, "weight_decay", tc.weight_decay, a.td.weight_decay);
    override_if_set(overlay, "patience", tc.patience, a.td.patience);
    override_if_set(overlay, "ensemble_size", tc.ensemble_size, a.td.ensemble_size);
    override_if_set(overlay, "seed", tc.seed, a.td.seed);
    tc.retrain_on_valid = a.td.retrain_on_valid;
    mc.validate();
    tc.validate();
}

SplitSpec resolve_split(const TrainArgs& a, const ForecastDataset& ds) {
    SplitSpec split;
    split.label = "R2R";
    if (!a.train_days.empty() != !a.valid_days.empty())
        throw ConfigError("--train-days and --valid-days must be given together");
    if (!a.train_days.empty()) {
        split.train = parse_day_range(a.train_days);
        split.valid = parse_day_range(a.valid_days);
    } else {
        const int n = ds.n_days();
        const int it = n * 3 / 4, iv = n * 9 / 10;
        if (it < 1 || iv <= it || iv >= n)
            throw ConfigError("dataset too small to derive a split, pass "
                              "--train-days and --valid-days");
        split.train = {ds.days.front(), ds.days[static_cast<std::size_t>(it)]};
        split.valid = {ds.days[static_cast<std::size_t>(it)],
                       ds.days[static_cast<std::size_t>(iv)]};
    }
    split.test = {0, 0};
    split.validate();
    return split;
}

std::map<std::string, std::string> train_config_snapshot(const ModelConfig& mc,
                                                         const TrainConfig& tc,
                                                         const SplitSpec& split,
                                                         const std::string& preset_name) {
    std::map<std::string, std::string> c = {
        {"model", to_string(mc.kind)},
        {"hidden", std::to_string(mc.hidden)},
        {"heads", std::to_string(mc.heads)},
        {"k_blocks", std::to_string(mc.k_blocks)},
        {"embed_dim", std::to_string(mc.embed_dim)},
        {"d_max", decimal_str(mc.d_max)},
        {"batch_size", std::to_string(tc.batch_size)},
        {"max_epochs", std::to_string(tc.max_epochs)},
        {"learning_rate", decimal_str(tc.learning_rate)},
        {"weight_decay", decimal_str(tc.weight_decay)},
        {"patience", std::to_string(tc.patience)},
        {"ensemble_size", std::to_string(tc.ensemble_size)},
        {"seed", std::to_string(tc.seed)},
        {"retrain_on_valid", tc.retrain_on_valid ? "true" : "false"},
        {"train_days", range_str(split.train)},
        {"valid_days", range_str(split.valid)},
    };
    if (!preset_name.empty()) c["preset"] = preset_name;
    return c;
}

int run_train(TrainArgs& a) {
    Timer timer;
    ConfigOverlay overlay(a.sub, a.config_path);
    apply_threads(a.threads);
    ModelConfig mc;
    TrainConfig tc;
    resolve_train_config(a, overlay, mc, tc);
    const ForecastDataset ds = load_data_dir(a.data);
    const SplitSpec split = resolve_split(a, ds);

    const auto config = train_config_snapshot(mc, tc, split, a.preset_name);
    std::cout << "config:\n";
    for (const auto& [k, v] : config) std::cout << "  " << k << " = " << v << "\n";
    if (a.dry_run) return 0;

    const EnsembleModel ens = train_ensemble(mc, ds, split, tc);
    prepare_out_dir(a.out);
    save_ensemble(ens, a.out);

    RunManifest m;
    m.command = "train";
    m.seed = tc.seed;
    m.config = config;
    add_data_checksums(m, a.data);
    for (std::size_t k = 0; k < ens.logs.size(); ++k) {
        const std::string name = "train_log_" + std::to_string(k) + ".csv";
        write_training_log(ens.logs[k], a.out + "/" + name);
        m.outputs.push_back(name);
    }
    for (std::size_t k = 0; k < ens.members.size(); ++k)
        m.outputs.push_back("member_" + std::to_string(k) + ".json");
    m.elapsed_seconds = timer.seconds();
    write_manifest(m, a.out);

    for (std::size_t k = 0; k < ens.logs.size(); ++k) {
        std::cout << "member " << k << ": ";
        if (std::find(ens.aborted.begin(), ens.aborted.end(), static_cast<int>(k)) !=
            ens.aborted.end())
            std::cout << "aborted on a non-finite loss\n";
        else
            std::cout << "best epoch " << ens.logs[k].best_epoch + 1 << ", valid CRPS "
                      << format_double(ens.logs[k].best_valid) << "\n";
    }
    std::cout << "train: " << ens.members.size() << " of " << ens.logs.size()
              << " members kept -> " << a.out << "\n";
    return 0;
}

// ------------------------------------------------------------- evaluate --

struct EvalArgs {
    CLI::App* sub = nullptr;
    std::string checkpoint, data, out, reference, config_path;
    std::string model;  // only "ens": the baseline needs no checkpoint
    std::string split = "r2r";
    std::string test_days;
    double nominal = -1.0;
    int target_feature = 0;
    int pit_bins = 20;
    bool single_group = false;
    int threads = 0;
};

void add_evaluate(CLI::App& app, EvalArgs& a) {
    a.sub = app.add_subcommand("evaluate", "score a trained ensemble or the raw baseline");
    a.sub->add_option("--checkpoint", a.checkpoint, "trained ensemble directory");
    a.sub->add_option("--model", a.model, "checkpoint-free baseline; only 'ens' is valid")
        ->check(CLI::IsMember({"ens"}));
    a.sub->add_option("--data", a.data, "dataset directory")->required();
    a.sub->add_option("--out", a.out, "output directory")->required();
    a.sub->add_option("--split", a.split, "evaluation regime label: r2r, r2f")
        ->check(CLI::IsMember({"r2r", "r2f"}))
        ->capture_default_str();
    a.sub->add_option("--test-days,--test_days", a.test_days,
                      "day-id range lo:hi (default: every dataset day)");
    a.sub->add_option("--nominal", a.nominal,
                      "central interval level; negative derives (N-1)/(N+1)")
        ->capture_default_str();
    a.sub->add_option("--target-feature,--target_feature", a.target_feature,
                      "forecast column the ens baseline reads")
        ->capture_default_str();
    a.sub->add_option("--pit-bins,--pit_bins", a.pit_bins, "PIT histogram bins")
        ->capture_default_str();
    a.sub->add_flag("--single-group,--single_group", a.single_group,
                    "skip member grouping and predict each day on the full member set");
    a.sub->add_option("--reference", a.reference,
                      "report directory to compute CRPSS against (needs its scores.csv)");
    add_common(a.sub, a.threads, a.config_path);
}

// model schema vs the feature names the data would present to it
void check_schema(const PostModel& model, const ForecastDataset& raw) {
    std::vector<std::string> presented;
    if (model.needs_summary())
        for (const std::string& name : raw.feature_names) {
            presented.push_back(name + "_mean");
            presented.push_back(name + "_std");
        }
    else
        presented = raw.feature_names;
    if (presented == model.schema()) return;
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const std::string& x : v) s += (s.empty() ? "" : ", ") + x;
        return s;
    };
    throw SchemaError("dataset features do not match the model schema\n  model expects:  " +
                      join(model.schema()) + "\n  data provides:  " + join(presented));
}

int run_evaluate(EvalArgs& a) {
    Timer timer;
    ConfigOverlay overlay(a.sub, a.config_path);
    overlay.apply("split", a.split);
    overlay.apply("test_days", a.test_days);
    overlay.apply("nominal", a.nominal);
    overlay.apply("target_feature", a.target_feature);
    overlay.apply("pit_bins", a.pit_bins);
    overlay.apply("single_group", a.single_group);
    overlay.finish();
    if (a.split != "r2r" && a.split != "r2f")
        throw ConfigError("split must be r2r or r2f, got '" + a.split + "'");
    apply_threads(a.threads);
    const bool baseline = !a.model.empty();
    if (baseline == !a.checkpoint.empty())
        throw ConfigError("pass exactly one of --checkpoint and --model ens");
    const ForecastDataset ds = load_data_dir(a.data);
    const DayRange test = a.test_days.empty()
                              ? DayRange{ds.days.front(), ds.days.back() + 1}
                              : parse_day_range(a.test_days);

    EvalOptions opts;
    opts.nominal = a.nominal;
    opts.force_single_group = a.single_group;

    std::vector<PostModel> members;
    EvalResult res;
    if (baseline) {
        ModelConfig mc;
        mc.kind = ModelKind::Ens;
        mc.target_feature = a.target_feature;
        members.push_back(PostModel::create(mc, ds, {}, 1));
        res = evaluate_model(members.front(), ds, test, opts);
    } else {
        members = load_ensemble(a.checkpoint);
        for (const PostModel& mdl : members) check_schema(mdl, ds);
        res = evaluate_ensemble(members, ds, test, opts);
    }

    std::cout << "split " << a.split << ", member groups:";
    for (int g : res.group_sizes) std::cout << ' ' << g;
    std::cout << "\nmean CRPS " << format_double(res.crps.mean()) << ", PI length "
              << format_double(res.pi.mean_length) << ", PI cover "
              << format_double(res.pi.coverage_percent) << "% (nominal "
              << format_double(100.0 * res.nominal) << "%)\n";

    prepare_out_dir(a.out);
    RunManifest m;
    m.command = "evaluate";
    m.seed = 0;
    m.config = {
        {"split", a.split},
        {"test_days", range_str(test)},
        {"nominal", decimal_str(res.nominal)},
        {"single_group", a.single_group ? "true" : "false"},
        {"pit_bins", std::to_string(a.pit_bins)},
    };
    if (baseline) {
        m.config["model"] = "ens";
        m.config["target_feature"] = std::to_string(a.target_feature);
    } else {
        m.config["checkpoint"] = a.checkpoint;
    }
    add_data_checksums(m, a.data);

    nlohmann::json j;
    j["crps_mean"] = res.crps.mean();
    j["pi_length"] = res.pi.mean_length;
    j["pi_cover"] = res.pi.coverage_percent;
    j["nominal"] = res.nominal;
    j["n_days"] = res.crps.n_days;
    j["n_stations"] = res.crps.n_stations;
    j["group_sizes"] = res.group_sizes;
    j["per_station"] = nlohmann::json::array();
    for (int s = 0; s < res.crps.n_stations; ++s)
        j["per_station"].push_back(
            {{"station_id", res.crps.station_ids[static_cast<std::size_t>(s)]},
             {"crps", res.crps.station_mean(s)}});
    {
        std::ofstream out(a.out + "/metrics.json");
        if (!out) throw ParseError("cannot write " + a.out + "/metrics.json");
        out << j.dump(2) << "\n";
    }
    m.outputs = {"metrics.json", "crps.csv", "scores.csv", "predictions.csv", "stations.csv"};
    write_station_crps_csv(res.crps, a.out + "/crps.csv");
    write_scores_csv(res.crps, a.out + "/scores.csv");
    if (baseline)
        write_member_predictions_csv(res.predictions, res.crps.station_ids,
                                     a.out + "/predictions.csv");
    else
        write_predictions_csv(res.predictions, res.crps.station_ids,
                              a.out + "/predictions.csv");
    write_stations_csv(ds.stations, a.out + "/stations.csv");
    if (!res.pit.empty()) {
        write_pit_csv(res.pit, a.pit_bins, a.out + "/pit.csv");
        m.outputs.push_back("pit.csv");
    }
    if (!a.reference.empty()) {
        const ScoreSeries ref = read_scores_csv(a.reference + "/scores.csv");
        write_crpss_csv(res.crps, ref, ds.stations, a.out + "/crpss.csv");
        m.outputs.push_back("crpss.csv");
        m.config["reference"] = a.reference;
    }
    m.elapsed_seconds = timer.seconds();
    write_manifest(m, a.out);
    std::cout << "evaluate: " << res.crps.n_days << " days x " << res.crps.n_stations
              << " stations -> " << a.out << "\n";
    return 0;
}

// -------------------------------------------------------------- compare --

struct CompareArgs {
    CLI::App* sub = nullptr;
    std::string report_a, report_b, out, config_path;
    double alpha = 0.05;
    bool demeaned = false;
    int threads = 0;
};

void add_compare(CLI::App& app, CompareArgs& a) {
    a.sub = app.add_subcommand(
        "compare", "station-wise significance tests between two evaluation reports");
    a.sub->add_option("--report-a,--report_a", a.report_a, "first evaluation directory")
        ->required();
    a.sub->add_option("--report-b,--report_b", a.report_b, "second evaluation directory")
        ->required();
    a.sub->add_option("--out", a.out, "output directory")->required();
    a.sub->add_option("--alpha", a.alpha, "false discovery rate across stations")
        ->capture_default_str();
    a.sub->add_flag("--demeaned", a.demeaned, "center the score differences in the variance");
    add_common(a.sub, a.threads, a.config_path);
}

void check_aligned(const ScoreSeries& f, const ScoreSeries& g) {
    if (f.station_ids != g.station_ids) {
        auto diff = [](const std::vector<int>& x, const std::vector<int>& y) {
            std::set<int> ys(y.begin(), y.end());
            std::string s;
            for (int id : x)
                if (!ys.count(id)) s += (s.empty() ? "" : ", ") + std::to_string(id);
            return s.empty() ? std::string("none") : s;
        };
        throw AlignmentError("reports cover different station sets\n  only in A: " +
                             diff(f.station_ids, g.station_ids) +
                             "\n  only in B: " + diff(g.station_ids, f.station_ids));
    }
    if (f.day_ids != g.day_ids)
        throw AlignmentError("reports cover different day ranges (" +
                             std::to_string(f.n_days) + " vs " + std::to_string(g.n_days) +
                             " days)");
}

int run_compare(CompareArgs& a) {
    Timer timer;
    ConfigOverlay overlay(a.sub, a.config_path);
    overlay.apply("alpha", a.alpha);
    overlay.apply("demeaned", a.demeaned);
    overlay.finish();
    apply_threads(a.threads);
    const ScoreSeries f = read_scores_csv(a.report_a + "/scores.csv");
    const ScoreSeries g = read_scores_csv(a.report_b + "/scores.csv");
    check_aligned(f, g);
    const DmReport report = dm_station_tests(f, g, a.alpha, a.demeaned);

    int favor_a = 0, favor_b = 0;
    for (std::size_t s = 0; s < report.stations.size(); ++s)
        if (report.bh.rejected[s]) (report.stations[s].t < 0 ? favor_a : favor_b)++;
    const double fraction =
        static_cast<double>(report.bh.n_rejected) / static_cast<double>(f.n_stations);

    prepare_out_dir(a.out);
    write_dm_csv(report, a.out + "/dm_results.csv");
    nlohmann::json j;
    j["n_stations"] = f.n_stations;
    j["n_days"] = f.n_days;
    j["alpha"] = a.alpha;
    j["n_rejected"] = report.bh.n_rejected;
    j["fraction_rejected"] = fraction;
    j["favor_a"] = favor_a;
    j["favor_b"] = favor_b;
    j["p_star"] = report.bh.p_star;
    j["crps_mean_a"] = f.mean();
    j["crps_mean_b"] = g.mean();
    {
        std::ofstream out(a.out + "/summary.json");
        if (!out) throw ParseError("cannot write " + a.out + "/summary.json");
        out << j.dump(2) << "\n";
    }

    RunManifest m;
    m.command = "compare";
    m.seed = 0;
    m.config = {{"report_a", a.report_a},
                {"report_b", a.report_b},
                {"alpha", decimal_str(a.alpha)},
                {"demeaned", a.demeaned ? "true" : "false"}};
    m.dataset_checksums["report_a/scores.csv"] = fnv1a64_file(a.report_a + "/scores.csv");
    m.dataset_checksums["report_b/scores.csv"] = fnv1a64_file(a.report_b + "/scores.csv");
    m.outputs = {"dm_results.csv", "summary.json"};

    // CRPSS of A against B, with coordinates when report A carries them
    const std::string stations_path = a.report_a + "/stations.csv";
    if (fs::exists(stations_path)) {
        write_crpss_csv(f, g, read_stations_csv(stations_path), a.out + "/crpss.csv");
        m.outputs.push_back("crpss.csv");
    }
    m.elapsed_seconds = timer.seconds();
    write_manifest(m, a.out);

    std::cout << "compare: rejected at " << report.bh.n_rejected << " of " << f.n_stations
              << " stations (" << format_double(100.0 * fraction) << "%), " << favor_a
              << " favoring A, " << favor_b << " favoring B\n";
    return 0;
}

// ----------------------------------------------------------- importance --

struct ImportanceArgs {
    CLI::App* sub = nullptr;
    std::string checkpoint, data, out, config_path;
    std::string test_days;
    int reps = 10;
    std::uint64_t seed = 1;
    int threads = 0;
};

void add_importance(CLI::App& app, ImportanceArgs& a) {
    a.sub = app.add_subcommand("importance",
                               "permutation importance of every input feature");
    a.sub->add_option("--checkpoint", a.checkpoint, "trained ensemble directory")->required();
    a.sub->add_option("--data", a.data, "dataset directory")->required();
    a.sub->add_option("--out", a.out, "output directory")->required();
    a.sub->add_option("--test-days,--test_days", a.test_days,
                      "day-id range lo:hi (default: every dataset day)");
    a.sub->add_option("--reps", a.reps, "permutation repetitions per feature")
        ->capture_default_str();
    a.sub->add_option("--seed", a.seed, "permutation seed")->capture_default_str();
    add_common(a.sub, a.threads, a.config_path);
}

int run_importance(ImportanceArgs& a) {
    Timer timer;
    ConfigOverlay overlay(a.sub, a.config_path);
    overlay.apply("test_days", a.test_days);
    overlay.apply("reps", a.reps);
    overlay.apply("seed", a.seed);
    overlay.finish();
    apply_threads(a.threads);
    const ForecastDataset ds = load_data_dir(a.data);
    const std::vector<PostModel> members = load_ensemble(a.checkpoint);
    for (const PostModel& mdl : members) check_schema(mdl, ds);
    const DayRange test = a.test_days.empty()
                              ? DayRange{ds.days.front(), ds.days.back() + 1}
                              : parse_day_range(a.test_days);
    const ImportanceReport report = permutation_importance(members, ds, test, a.reps, a.seed);

    prepare_out_dir(a.out);
    write_importance_csv(report, a.out + "/importance.csv");
    RunManifest m;
    m.command = "importance";
    m.seed = a.seed;
    m.config = {{"checkpoint", a.checkpoint},
                {"test_days", range_str(test)},
                {"reps", std::to_string(a.reps)},
                {"seed", std::to_string(a.seed)}};
    add_data_checksums(m, a.data);
    m.outputs = {"importance.csv"};
    m.elapsed_seconds = timer.seconds();
    write_manifest(m, a.out);

    std::cout << "base CRPS " << format_double(report.base_crps) << "\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i)
        std::cout << "  " << report.rows[i].feature << ": "
                  << format_double(report.rows[i].imp_mean) << " +- "
                  << format_double(report.rows[i].imp_std) << " (normalized "
                  << format_double(report.normalized[i]) << ")\n";
    std::cout << "importance: " << report.rows.size() << " inputs x " << a.reps << " reps -> "
              << a.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemble forecast post-processing at stations"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    SynthArgs synth_args;
    TrainArgs train_args;
    EvalArgs eval_args;
    CompareArgs compare_args;
    ImportanceArgs importance_args;
    add_synth(app, synth_args);
    add_train(app, train_args);
    add_evaluate(app, eval_args);
    add_compare(app, compare_args);
    add_importance(app, importance_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth_args.sub->parsed()) return run_synth(synth_args);
        if (train_args.sub->parsed()) return run_train(train_args);
        if (eval_args.sub->parsed()) return run_evaluate(eval_args);
        if (compare_args.sub->parsed()) return run_compare(compare_args);
        if (importance_args.sub->parsed()) return run_importance(importance_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\nrun with --help for usage\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
