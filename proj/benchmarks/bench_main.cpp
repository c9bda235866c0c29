#include <benchmark/benchmark.h>

#include <random>

#include "tracegan/encoding.hpp"
#include "tracegan/gan.hpp"
#include "tracegan/gnn.hpp"
#include "tracegan/metrics.hpp"

using namespace tracegan;
using diff::Matrix;
using diff::Tensor;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(gen);
    return m;
}

struct Fixture {
    TraceDataset real = generate_reference(ReferenceSpec::correlated(2000, 7));
    FieldSchema schema = fit_schema(real, SchemaOptions{});
    EmbeddingTable table = train_embeddings(real, schema, EmbeddingOptions{}).table;
    EncodedBatch data = encode_embedding(real.records, schema, table);
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

GanSession make_session(bool with_gnn) {
    const auto& f = fixture();
    TrainConfig cfg;
    cfg.use_gnn = with_gnn;
    Rng rng(cfg.seed);
    auto gnn = with_gnn ? std::make_shared<GnnModel>(GnnConfig{}, rng) : nullptr;
    const std::size_t extra = with_gnn ? gnn->output_dim() : 0;
    return GanSession(make_generator(cfg, f.data.layout), make_discriminator(cfg, f.data.layout.total_width, extra),
                      gnn, cfg);
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<Eigen::Index>(state.range(0));
    const Tensor a(random_matrix(64, n, 1)), b(random_matrix(n, n, 2));
    for (auto _ : state) benchmark::DoNotOptimize(diff::matmul(a, b).value().data());
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

static void BM_GnnForward(benchmark::State& state) {
    Rng rng(3);
    GnnModel model(GnnConfig{}, rng);
    const Tensor rows(random_matrix(64, 320, 4));
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(rows).value().data());
}
BENCHMARK(BM_GnnForward);

static void BM_CriticStep(benchmark::State& state) {
    auto session = make_session(state.range(0) != 0);
    const auto& data = fixture().data.data;
    for (auto _ : state) benchmark::DoNotOptimize(session.critic_step(session.sample_real(data)));
}
BENCHMARK(BM_CriticStep)->Arg(0)->Arg(1);

static void BM_GeneratorStep(benchmark::State& state) {
    auto session = make_session(state.range(0) != 0);
    for (auto _ : state) benchmark::DoNotOptimize(session.generator_step());
}
BENCHMARK(BM_GeneratorStep)->Arg(0)->Arg(1);

static void BM_Evaluate(benchmark::State& state) {
    const auto& real = fixture().real;
    const auto synth = generate_reference(ReferenceSpec::correlated(2000, 8));
    for (auto _ : state) benchmark::DoNotOptimize(evaluate(real, synth, "bench"));
}
BENCHMARK(BM_Evaluate);

static void BM_JsEmd(benchmark::State& state) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> a(1000), b(1000);
    for (auto& v : a) v = u(gen);
    for (auto& v : b) v = u(gen);
    const auto p = continuous_histogram(a, 0.0, 1.0, 100);
    const auto q = continuous_histogram(b, 0.0, 1.0, 100);
    for (auto _ : state) {
        benchmark::DoNotOptimize(js_divergence(p, q));
        benchmark::DoNotOptimize(emd_normalized(p, q));
    }
}
BENCHMARK(BM_JsEmd);
BENCHMARK_MAIN();
