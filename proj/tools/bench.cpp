// Wall-clock comparison of the serial reference kernels against the OpenMP
// variants, plus an end-to-end model forward/backward timing. The two
// kernel families must agree bitwise; this target only measures speed.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "gnnpp/autodiff.hpp"
#include "gnnpp/kernels.hpp"
#include "gnnpp/model.hpp"
#include "gnnpp/rng.hpp"
#include "gnnpp/synth.hpp"
#include "gnnpp/training.hpp"

using namespace gnnpp;
using kernels::ScatterPlan;
using kernels::Unary;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const std::chrono::duration<double, std::milli> dt =
        std::chrono::steady_clock::now() - start;
    return dt.count() / reps;
}

void report(const char* name, double ref_ms, double omp_ms) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, ref_ms, omp_ms,
                omp_ms > 0 ? ref_ms / omp_ms : 0.0);
}

Tensor random_tensor(int rows, int cols, Rng& rng) {
    Tensor t(rows, cols);
    for (double& x : t.v) x = rng.gaussian();
    return t;
}

// contiguous segments of width `per`, identity permutation
std::vector<int> even_offsets(int n_segments, int per) {
    std::vector<int> offsets(static_cast<std::size_t>(n_segments) + 1);
    for (int s = 0; s <= n_segments; ++s) offsets[static_cast<std::size_t>(s)] = s * per;
    return offsets;
}

void bench_kernels() {
    Rng rng(7);
    std::printf("%-28s %13s %13s %9s\n", "kernel", "ref", "omp", "speedup");

    {
        const Tensor a = random_tensor(256, 256, rng), b = random_tensor(256, 256, rng);
        Tensor c(256, 256);
        report("matmul 256^3",
               time_ms([&] { kernels::ref::matmul(a, b, c, false); }, 20),
               time_ms([&] { kernels::omp::matmul(a, b, c, false); }, 20));
    }
    {
        const Tensor a = random_tensor(4096, 64, rng), b = random_tensor(4096, 64, rng);
        Tensor c(64, 64);
        report("matmul_tn 4096x64",
               time_ms([&] { kernels::ref::matmul_tn(a, b, c, false); }, 20),
               time_ms([&] { kernels::omp::matmul_tn(a, b, c, false); }, 20));
    }
    {
        const Tensor x = random_tensor(20000, 64, rng);
        Tensor y(20000, 64);
        report("unary elu 20000x64",
               time_ms([&] { kernels::ref::unary_forward(Unary::Elu, x, y); }, 50),
               time_ms([&] { kernels::omp::unary_forward(Unary::Elu, x, y); }, 50));
    }
    {
        const Tensor x = random_tensor(2000, 64, rng);
        std::vector<int> idx(20000);
        for (std::size_t i = 0; i < idx.size(); ++i)
            idx[i] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(x.n_rows)));
        Tensor y(20000, 64);
        report("gather_rows 20000x64",
               time_ms([&] { kernels::ref::gather_rows(x, idx, y); }, 50),
               time_ms([&] { kernels::omp::gather_rows(x, idx, y); }, 50));
    }
    {
        const int segments = 500, per = 40;
        const Tensor src = random_tensor(segments * per, 64, rng);
        ScatterPlan plan;
        plan.offsets = even_offsets(segments, per);
        Tensor out(segments, 64);
        report("segment_sum 500x40x64",
               time_ms([&] { kernels::ref::segment_sum_rows(src, plan, out, false); }, 50),
               time_ms([&] { kernels::omp::segment_sum_rows(src, plan, out, false); }, 50));
    }
    {
        const int segments = 500, per = 40;
        const Tensor scores = random_tensor(segments * per, 8, rng);
        const std::vector<int> offsets = even_offsets(segments, per);
        Tensor alpha(segments * per, 8);
        report("segment_softmax 500x40x8",
               time_ms([&] { kernels::ref::segment_softmax(scores, offsets, alpha); }, 50),
               time_ms([&] { kernels::omp::segment_softmax(scores, offsets, alpha); }, 50));
    }
    {
        const Tensor alpha = random_tensor(20000, 8, rng);
        const Tensor v = random_tensor(20000, 8 * 16, rng);
        Tensor out(20000, 8 * 16);
        report("head_scale 20000x8x16",
               time_ms([&] { kernels::ref::head_scale(alpha, v, out); }, 50),
               time_ms([&] { kernels::omp::head_scale(alpha, v, out); }, 50));
    }
    {
        const int n = 100000;
        std::vector<double> mu(n), sigma(n), y(n), crps(n), dmu(n), dsigma(n);
        for (int i = 0; i < n; ++i) {
            mu[static_cast<std::size_t>(i)] = rng.gaussian();
            sigma[static_cast<std::size_t>(i)] = 0.5 + rng.uniform01();
            y[static_cast<std::size_t>(i)] = rng.gaussian();
        }
        report("crps_gaussian 100000",
               time_ms([&] {
                   kernels::ref::crps_gaussian_batch(mu.data(), sigma.data(), y.data(), n,
                                                     crps.data(), dmu.data(), dsigma.data());
               }, 20),
               time_ms([&] {
                   kernels::omp::crps_gaussian_batch(mu.data(), sigma.data(), y.data(), n,
                                                     crps.data(), dmu.data(), dsigma.data());
               }, 20));
    }
}

void bench_model() {
    SynthConfig sc;
    sc.n_stations = 20;
    sc.n_days = 40;
    sc.n_members = 11;
    sc.seed = 11;
    const ForecastDataset ds = generate(sc);

    ModelConfig mc;
    mc.kind = ModelKind::Gat;
    mc.hidden = 64;
    mc.heads = 4;
    mc.k_blocks = 2;
    const PostModel model =
        PostModel::create(mc, ds, ds.day_positions({0, sc.n_days}), 1);

    std::vector<DayBatch> batches;
    for (int d : ds.days) batches.push_back(model.make_batch(ds, d));

    ParameterStore& store = const_cast<ParameterStore&>(model.params());
    GradBuffer grads(store);
    const double fwd = time_ms(
        [&] {
            for (const DayBatch& b : batches) {
                Tape tape(&store, &grads);
                model.build_loss(tape, b);
            }
        },
        3);
    const double fwd_bwd = time_ms(
        [&] {
            for (const DayBatch& b : batches) {
                grads.zero();
                Tape tape(&store, &grads);
                tape.backward(model.build_loss(tape, b));
            }
        },
        3);
    std::printf("\nattention model, %d days of %d stations x %d members, hidden %d:\n",
                ds.n_days(), ds.n_stations(), ds.n_members, mc.hidden);
    std::printf("  forward           %10.3f ms/day\n", fwd / ds.n_days());
    std::printf("  forward+backward  %10.3f ms/day\n", fwd_bwd / ds.n_days());
}

}  // namespace

int main(int argc, char** argv) {
    int threads = 0;
    if (argc > 1) threads = std::atoi(argv[1]);
    if (threads > 0) kernels::set_thread_count(threads);
    std::printf("openmp %s, %d thread(s)\n\n", kernels::openmp_compiled() ? "on" : "off",
                kernels::thread_count());
    bench_kernels();
    bench_model();
    return 0;
}
