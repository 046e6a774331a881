#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "gnnpp/eval.hpp"
#include "gnnpp/model.hpp"
#include "gnnpp/synth.hpp"
#include "gradcheck.hpp"

using namespace gnnpp;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("gnnpp_mdl_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

SynthConfig small_synth(int n_stations, int n_days, int n_members, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_stations = n_stations;
    cfg.n_days = n_days;
    cfg.n_members = n_members;
    cfg.seed = seed;
    return cfg;
}

ModelConfig small_model(ModelKind kind) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.hidden = 6;
    cfg.heads = 2;
    cfg.k_blocks = 1;
    cfg.embed_dim = 3;
    cfg.d_max = 150.0;
    return cfg;
}

std::vector<int> first_days(const ForecastDataset& ds, int count) {
    std::vector<int> pos;
    for (int t = 0; t < count; ++t) pos.push_back(t);
    (void)ds;
    return pos;
}

bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// independent re-slice of one day's members [lo, hi) into a one-day dataset
ForecastDataset slice_members(const ForecastDataset& raw, int day_id, int lo, int hi) {
    const int t = raw.day_pos(day_id);
    ForecastDataset out;
    out.stations = raw.stations;
    out.days = {day_id};
    out.n_members = hi - lo;
    out.feature_names = raw.feature_names;
    out.features.resize(static_cast<std::size_t>(raw.n_stations()) * (hi - lo) *
                        raw.n_features());
    for (int s = 0; s < raw.n_stations(); ++s)
        for (int n = lo; n < hi; ++n)
            for (int p = 0; p < raw.n_features(); ++p)
                out.feat(0, s, n - lo, p) = raw.feat(t, s, n, p);
    out.yday_sin = {raw.yday_sin[static_cast<std::size_t>(t)]};
    out.yday_cos = {raw.yday_cos[static_cast<std::size_t>(t)]};
    out.observations.resize(static_cast<std::size_t>(raw.n_stations()));
    for (int s = 0; s < raw.n_stations(); ++s)
        out.observations[static_cast<std::size_t>(s)] = raw.obs(t, s);
    return out;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("member grouping splits wide ensembles into near-training-size groups") {
    CHECK(member_groups(51, 11) == std::vector<int>{10, 10, 10, 10, 11});
    CHECK(member_groups(11, 11) == std::vector<int>{11});
    CHECK(member_groups(5, 11) == std::vector<int>{5});
    CHECK(member_groups(12, 11) == std::vector<int>{10, 2});
    CHECK(member_groups(23, 11) == std::vector<int>{10, 10, 3});
    CHECK(member_groups(7, 1) == std::vector<int>{7});
    CHECK_THROWS_AS(member_groups(0, 11), ConfigError);

    for (int n_test = 1; n_test <= 60; ++n_test)
        for (int n_train : {1, 2, 5, 11}) {
            const std::vector<int> sizes = member_groups(n_test, n_train);
            int total = 0;
            for (std::size_t i = 0; i < sizes.size(); ++i) {
                CHECK(sizes[i] >= 1);
                if (i + 1 < sizes.size()) CHECK(sizes[i] == n_train - 1);
                total += sizes[i];
            }
            CHECK(total == n_test);
        }
}

TEST_CASE("fresh models emit finite mu and positive sigma") {
    const ForecastDataset ds = generate(small_synth(4, 12, 5, 21));
    for (ModelKind kind : {ModelKind::Gat, ModelKind::Smry, ModelKind::Ds, ModelKind::Drn}) {
        const PostModel m = PostModel::create(small_model(kind), ds, first_days(ds, 8), 5);
        ForecastDataset storage;
        const ForecastDataset& view = model_view(m, ds, storage);
        for (int day : {ds.days[0], ds.days[9]}) {
            const DayPrediction p = m.predict_day(view, day);
            REQUIRE(p.mu.size() == 4);
            for (int s = 0; s < 4; ++s) {
                CHECK(std::isfinite(p.mu[static_cast<std::size_t>(s)]));
                CHECK(p.sigma[static_cast<std::size_t>(s)] > 0.0);
            }
        }
    }
}

TEST_CASE("self-loop topology makes stations independent") {
    ForecastDataset ds = generate(small_synth(3, 6, 4, 33));
    const PostModel m = PostModel::create(small_model(ModelKind::Ds), ds, first_days(ds, 4), 7);
    const DayPrediction before = m.predict_day(ds, ds.days[5]);

    for (int n = 0; n < ds.n_members; ++n)
        for (int p = 0; p < ds.n_features(); ++p) ds.feat(5, 2, n, p) += 50.0;
    const DayPrediction after = m.predict_day(ds, ds.days[5]);

    CHECK(before.mu[0] == after.mu[0]);
    CHECK(before.mu[1] == after.mu[1]);
    CHECK(before.sigma[0] == after.sigma[0]);
    CHECK(before.sigma[1] == after.sigma[1]);
    CHECK(before.mu[2] != after.mu[2]);
}

TEST_CASE("attention lets a neighbor perturbation reach a station") {
    // synthetic stations sit 55-85 km apart, inside the 150 km threshold
    ForecastDataset ds = generate(small_synth(2, 6, 4, 34));
    const PostModel m = PostModel::create(small_model(ModelKind::Gat), ds, first_days(ds, 4), 9);
    const DayPrediction before = m.predict_day(ds, ds.days[5]);

    for (int n = 0; n < ds.n_members; ++n)
        for (int p = 0; p < ds.n_features(); ++p) ds.feat(5, 1, n, p) += 1.0;
    const DayPrediction after = m.predict_day(ds, ds.days[5]);

    CHECK(std::fabs(after.mu[0] - before.mu[0]) > 1e-10);
}

TEST_CASE("identical members predict like their one-member summary") {
    ForecastDataset wide = generate(small_synth(3, 8, 5, 44));
    for (int t = 0; t < 8; ++t)
        for (int s = 0; s < 3; ++s)
            for (int n = 1; n < 5; ++n)
                for (int p = 0; p < wide.n_features(); ++p)
                    wide.feat(t, s, n, p) = wide.feat(t, s, 0, p);

    ForecastDataset narrow = wide;
    narrow.n_members = 1;
    narrow.features.clear();
    for (int t = 0; t < 8; ++t)
        for (int s = 0; s < 3; ++s)
            for (int p = 0; p < wide.n_features(); ++p)
                narrow.features.push_back(wide.feat(t, s, 0, p));

    // the summary of identical members is (mean = member, std = 0), which is
    // also the summary of the single-member dataset
    const ForecastDataset sw = summarize_members(wide);
    const ForecastDataset sn = summarize_members(narrow);
    REQUIRE(sw.feature_names == sn.feature_names);
    CHECK(same_values(sw.features, sn.features));

    const PostModel m =
        PostModel::create(small_model(ModelKind::Smry), wide, first_days(wide, 6), 11);
    ForecastDataset storage_w, storage_n;
    const DayPrediction pw = m.predict_day(model_view(m, wide, storage_w), wide.days[7]);
    const DayPrediction pn = m.predict_day(model_view(m, narrow, storage_n), wide.days[7]);
    CHECK(same_values(pw.mu, pn.mu));
    CHECK(same_values(pw.sigma, pn.sigma));
}

TEST_CASE("summary-input models ignore member order bitwise") {
    const ForecastDataset ds = generate(small_synth(3, 6, 7, 55));
    ForecastDataset shuffled = ds;
    const int perm[7] = {4, 0, 6, 2, 5, 1, 3};
    for (int t = 0; t < 6; ++t)
        for (int s = 0; s < 3; ++s)
            for (int n = 0; n < 7; ++n)
                for (int p = 0; p < ds.n_features(); ++p)
                    shuffled.feat(t, s, n, p) = ds.feat(t, s, perm[n], p);

    for (ModelKind kind : {ModelKind::Drn, ModelKind::Smry}) {
        const PostModel m = PostModel::create(small_model(kind), ds, first_days(ds, 4), 13);
        ForecastDataset sa, sb;
        const DayPrediction pa = m.predict_day(model_view(m, ds, sa), ds.days[5]);
        const DayPrediction pb = m.predict_day(model_view(m, shuffled, sb), ds.days[5]);
        CHECK(same_values(pa.mu, pb.mu));
        CHECK(same_values(pa.sigma, pb.sigma));
    }
}

TEST_CASE("grouped prediction averages per-group outputs") {
    const ForecastDataset train = generate(small_synth(3, 10, 11, 66));
    const ForecastDataset test = generate(small_synth(3, 10, 25, 66));
    const PostModel m =
        PostModel::create(small_model(ModelKind::Gat), train, first_days(train, 8), 15);
    REQUIRE(m.n_members_train() == 11);

    const int day = test.days[9];
    const DayPrediction grouped = m.predict_grouped(test, day);

    // independent slicing oracle: groups of 10, 10, 5
    std::vector<double> mu(3, 0.0), sigma(3, 0.0);
    const int bounds[4] = {0, 10, 20, 25};
    for (int g = 0; g < 3; ++g) {
        const ForecastDataset part = slice_members(test, day, bounds[g], bounds[g + 1]);
        ForecastDataset storage;
        const DayPrediction p = m.predict_day(model_view(m, part, storage), day);
        for (int s = 0; s < 3; ++s) {
            mu[static_cast<std::size_t>(s)] += p.mu[static_cast<std::size_t>(s)] / 3.0;
            sigma[static_cast<std::size_t>(s)] += p.sigma[static_cast<std::size_t>(s)] / 3.0;
        }
    }
    for (int s = 0; s < 3; ++s) {
        CHECK(grouped.mu[static_cast<std::size_t>(s)] ==
              doctest::Approx(mu[static_cast<std::size_t>(s)]).epsilon(1e-12));
        CHECK(grouped.sigma[static_cast<std::size_t>(s)] ==
              doctest::Approx(sigma[static_cast<std::size_t>(s)]).epsilon(1e-12));
    }
}

TEST_CASE("a test ensemble no wider than training stays one group") {
    const ForecastDataset ds = generate(small_synth(3, 6, 11, 77));
    const PostModel m = PostModel::create(small_model(ModelKind::Smry), ds, first_days(ds, 4), 17);
    ForecastDataset storage;
    const DayPrediction plain = m.predict_day(model_view(m, ds, storage), ds.days[5]);
    const DayPrediction grouped = m.predict_grouped(ds, ds.days[5]);
    CHECK(same_values(plain.mu, grouped.mu));
    CHECK(same_values(plain.sigma, grouped.sigma));
}

TEST_CASE("identical groups average to the common value") {
    ForecastDataset test = generate(small_synth(3, 4, 12, 88));
    for (int t = 0; t < 4; ++t)
        for (int s = 0; s < 3; ++s)
            for (int n = 1; n < 12; ++n)
                for (int p = 0; p < test.n_features(); ++p)
                    test.feat(t, s, n, p) = test.feat(t, s, 0, p);
    const ForecastDataset train = generate(small_synth(3, 4, 11, 88));
    const PostModel m =
        PostModel::create(small_model(ModelKind::Drn), train, first_days(train, 3), 19);

    // groups [10, 2] both summarize to (member, 0), so the average equals
    // the common per-group prediction
    const DayPrediction grouped = m.predict_grouped(test, test.days[3]);
    const ForecastDataset one = slice_members(test, test.days[3], 0, 10);
    ForecastDataset storage;
    const DayPrediction single = m.predict_day(model_view(m, one, storage), test.days[3]);
    for (int s = 0; s < 3; ++s) {
        CHECK(grouped.mu[static_cast<std::size_t>(s)] ==
              doctest::Approx(single.mu[static_cast<std::size_t>(s)]).epsilon(1e-13));
        CHECK(grouped.sigma[static_cast<std::size_t>(s)] ==
              doctest::Approx(single.sigma[static_cast<std::size_t>(s)]).epsilon(1e-13));
    }
}

TEST_CASE("inference on a station unseen in training raises a lookup error") {
    const ForecastDataset ds = generate(small_synth(3, 4, 4, 99));
    const PostModel m = PostModel::create(small_model(ModelKind::Gat), ds, first_days(ds, 3), 23);

    ForecastDataset other = generate(small_synth(3, 4, 4, 99));
    other.stations[1].id = 9999;
    CHECK_THROWS_AS(m.predict_day(other, other.days[0]), LookupError);

    ForecastDataset renamed = ds;
    renamed.feature_names[0] = "wrong_name";
    CHECK_THROWS_AS(m.predict_day(renamed, renamed.days[0]), SchemaError);
}

TEST_CASE("checkpoints restore predictions bitwise") {
    const ForecastDataset ds = generate(small_synth(3, 6, 5, 111));
    TempDir tmp;
    for (ModelKind kind : {ModelKind::Gat, ModelKind::Drn}) {
        const PostModel m = PostModel::create(small_model(kind), ds, first_days(ds, 4), 29);
        ForecastDataset sa;
        const ForecastDataset& view = model_view(m, ds, sa);
        const DayPrediction before = m.predict_day(view, ds.days[5]);

        const std::string path = tmp.file(to_string(kind) + ".json");
        save_checkpoint(m, path);
        const PostModel loaded = load_checkpoint(path);
        CHECK(loaded.kind() == kind);
        CHECK(loaded.n_members_train() == m.n_members_train());
        CHECK(loaded.schema() == m.schema());
        CHECK(loaded.params().count() == m.params().count());

        ForecastDataset sb;
        const DayPrediction after = loaded.predict_day(model_view(loaded, ds, sb), ds.days[5]);
        CHECK(same_values(before.mu, after.mu));
        CHECK(same_values(before.sigma, after.sigma));
    }
}

TEST_CASE("broken checkpoint files are rejected") {
    TempDir tmp;
    CHECK_THROWS_AS(load_checkpoint(tmp.file("missing.json")), ParseError);

    std::ofstream(tmp.file("garbage.json")) << "not json at all {";
    CHECK_THROWS_AS(load_checkpoint(tmp.file("garbage.json")), ParseError);

    std::ofstream(tmp.file("wrong.json")) << "{\"format\":\"something-else\",\"version\":1}";
    CHECK_THROWS_AS(load_checkpoint(tmp.file("wrong.json")), SchemaError);
}

TEST_CASE("the ensemble baseline passes raw members through") {
    const ForecastDataset ds = generate(small_synth(3, 4, 6, 122));
    ModelConfig cfg;
    cfg.kind = ModelKind::Ens;
    const PostModel m = PostModel::create(cfg, ds, first_days(ds, 3), 31);
    CHECK(m.params().count() == 0);

    const DayPrediction p = m.predict_day(ds, ds.days[2]);
    REQUIRE(p.members.n_rows == 3);
    REQUIRE(p.members.n_cols == 6);
    for (int s = 0; s < 3; ++s)
        for (int n = 0; n < 6; ++n) CHECK(p.members.at(s, n) == ds.feat(2, s, n, 0));

    CHECK_THROWS_AS(m.make_batch(ds, ds.days[0]), ConfigError);
    CHECK_THROWS_AS(save_checkpoint(m, "unused.json"), ConfigError);
}

TEST_CASE("model losses match finite differences") {
    const ForecastDataset ds = generate(small_synth(3, 3, 2, 133));
    for (ModelKind kind : {ModelKind::Gat, ModelKind::Smry, ModelKind::Ds, ModelKind::Drn}) {
        ModelConfig cfg = small_model(kind);
        cfg.hidden = 4;
        PostModel m = PostModel::create(cfg, ds, first_days(ds, 2), 37);
        ForecastDataset storage;
        const ForecastDataset& view = model_view(m, ds, storage);
        const DayBatch batch = m.make_batch(view, ds.days[2]);
        const double err = max_gradcheck_error(
            m.params(), [&](Tape& tape) { return m.build_loss(tape, batch); });
        CHECK(err < 1e-5);
    }
}

TEST_CASE("evaluation scores every test day and station") {
    const ForecastDataset ds = generate(small_synth(3, 10, 5, 144));
    const PostModel m = PostModel::create(small_model(ModelKind::Gat), ds, first_days(ds, 6), 41);
    const EvalResult r = evaluate_model(m, ds, DayRange{6, 10});

    CHECK(r.crps.n_days == 4);
    CHECK(r.crps.n_stations == 3);
    CHECK(r.crps.day_ids == std::vector<int>{6, 7, 8, 9});
    CHECK(r.pit.size() == 12);
    for (double u : r.pit) {
        CHECK(u >= 0.0);
        CHECK(u <= 1.0);
    }
    for (double v : r.crps.values) CHECK(v >= 0.0);
    CHECK(r.nominal == doctest::Approx(4.0 / 6.0));
    CHECK(r.group_sizes == std::vector<int>{5});
    CHECK(r.pi.coverage_percent >= 0.0);
    CHECK(r.pi.coverage_percent <= 100.0);
    CHECK(r.pi.mean_length > 0.0);
    REQUIRE(r.predictions.size() == 4);
    CHECK(r.predictions[0].day_id == 6);

    CHECK_THROWS_AS(evaluate_model(m, ds, DayRange{50, 60}), ConfigError);
}

TEST_CASE("evaluating the ensemble baseline uses raw members") {
    const ForecastDataset ds = generate(small_synth(3, 8, 11, 155));
    ModelConfig cfg;
    cfg.kind = ModelKind::Ens;
    const PostModel m = PostModel::create(cfg, ds, first_days(ds, 4), 43);
    const EvalResult r = evaluate_model(m, ds, DayRange{4, 8});

    CHECK(r.pit.empty());
    CHECK(r.nominal == doctest::Approx(10.0 / 12.0));
    CHECK(r.group_sizes == std::vector<int>{11});
    for (double v : r.crps.values) CHECK(v >= 0.0);
    // interval [min, max] of the members must contain the members themselves
    CHECK(r.pi.mean_length > 0.0);
}

TEST_CASE("grouped evaluation records the member split") {
    const ForecastDataset train = generate(small_synth(3, 8, 11, 166));
    const ForecastDataset wide = generate(small_synth(3, 8, 51, 166));
    const PostModel m =
        PostModel::create(small_model(ModelKind::Smry), train, first_days(train, 6), 47);

    const EvalResult grouped = evaluate_model(m, wide, DayRange{6, 8});
    CHECK(grouped.group_sizes == std::vector<int>{10, 10, 10, 10, 11});

    EvalOptions single;
    single.force_single_group = true;
    const EvalResult whole = evaluate_model(m, wide, DayRange{6, 8}, single);
    CHECK(whole.group_sizes == std::vector<int>{51});
    CHECK(whole.crps.mean() >= 0.0);
}

TEST_CASE("prediction files round trip through CSV") {
    const ForecastDataset ds = generate(small_synth(3, 6, 4, 177));
    const PostModel m = PostModel::create(small_model(ModelKind::Drn), ds, first_days(ds, 4), 53);
    const EvalResult r = evaluate_model(m, ds, DayRange{4, 6});

    TempDir tmp;
    std::vector<int> ids;
    for (const Station& st : ds.stations) ids.push_back(st.id);
    write_predictions_csv(r.predictions, ids, tmp.file("preds.csv"));
    write_station_crps_csv(r.crps, tmp.file("crps.csv"));

    std::ifstream in(tmp.file("preds.csv"));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "day,station_id,mu,sigma");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 6);

    std::ifstream cin(tmp.file("crps.csv"));
    REQUIRE(std::getline(cin, line));
    CHECK(line == "station_id,crps");
}

TEST_CASE("model configs reject out-of-range values") {
    CHECK_THROWS_AS(parse_model_kind("boosted"), ConfigError);
    CHECK(parse_model_kind("gat") == ModelKind::Gat);
    CHECK(parse_model_kind("ens") == ModelKind::Ens);
    CHECK(to_string(ModelKind::Ds) == "ds");

    ModelConfig bad = small_model(ModelKind::Gat);
    bad.hidden = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_model(ModelKind::Gat);
    bad.d_max = -5.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_model(ModelKind::Drn);
    bad.embed_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}  // TEST_SUITE
