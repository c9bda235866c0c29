#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tracegan/error.hpp"
#include "tracegan/gan.hpp"

using namespace tracegan;
using diff::Matrix;
using diff::Tensor;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.batch_size = 8;
    c.noise_dim = 4;
    c.generator_hidden = {8};
    c.discriminator_hidden = {8};
    c.generator_steps = 5;
    c.seed = 3;
    return c;
}

struct Rig {
    TrainConfig config = tiny_config();
    std::shared_ptr<GnnModel> gnn;
    std::unique_ptr<GanSession> session;
    Matrix real;

    explicit Rig(bool with_gnn = true, LossKind loss = LossKind::wasserstein) {
        config.use_gnn = with_gnn;
        config.loss = loss;
        Rng rng(9);
        if (with_gnn) gnn = std::make_shared<GnnModel>(GnnConfig{2, 4, 2, 3}, rng);
        const Layout layout = embedding_layout(2);
        session = std::make_unique<GanSession>(make_generator(config, layout),
                                               make_discriminator(config, 20, with_gnn ? 3 : 0), gnn, config);
        std::mt19937_64 gen(1);
        std::normal_distribution<double> n(0.0, 1.0);
        real = Matrix(32, 20);
        for (Eigen::Index i = 0; i < real.size(); ++i) real.data()[i] = n(gen);
    }

    std::vector<diff::Parameter> g() const { return session->generator().parameters(); }
    std::vector<diff::Parameter> d() const { return session->discriminator().parameters(); }
    std::vector<diff::Parameter> n() const { return gnn ? gnn->parameters() : std::vector<diff::Parameter>{}; }
};

void zero_all(std::vector<diff::Parameter> ps) {
    for (auto& p : ps) p.mutable_value().setZero();
}

struct SmallTrace {
    TraceDataset data;
    FieldSchema schema;
    EmbeddingTable table;
    std::shared_ptr<GnnModel> gnn;
};

SmallTrace small_trace() {
    SmallTrace t;
    t.data = generate_reference(ReferenceSpec::correlated(300, 5));
    t.schema = fit_schema(t.data, SchemaOptions{16, 6, BucketMode::equal_width});
    t.table = train_embeddings(t.data, t.schema, EmbeddingOptions{4, 2, 3, 0.025, 5}).table;
    Rng rng(5);
    t.gnn = std::make_shared<GnnModel>(GnnConfig{4, 8, 2, 4}, rng);
    return t;
}

}  // namespace

TEST_SUITE("gan") {

TEST_CASE("feature concatenation") {
    std::mt19937_64 gen(1);
    Matrix x = Matrix::Random(5, 320);
    Matrix f = Matrix::Random(5, 16);
    const Tensor raw(x), deep(f);
    const Tensor c = concat_features(raw, &deep);
    CHECK(c.cols() == 336);
    CHECK(diff::slice_cols(c, 0, 320).value() == x);
    CHECK(concat_features(raw, nullptr).value() == x);
    const Tensor short_deep(Matrix::Random(4, 16));
    CHECK_THROWS_AS(concat_features(raw, &short_deep), ShapeError);
}

TEST_CASE("constant critic gives zero loss and zero gradients") {
    Rig rig;
    zero_all(rig.d());
    const Tensor fake = rig.session->generator()(Tensor(rig.session->sample_noise(8))).detach();
    const Tensor loss = rig.session->critic_objective(Tensor(rig.real.topRows(8)), fake);
    CHECK(loss.item() == 0.0);
    diff::backward(loss);
    for (const auto& p : rig.d()) CHECK((!p.has_grad() || p.grad().isZero()));

    const auto before = diff::snapshot(rig.g());
    rig.session->generator_step();
    CHECK(diff::snapshot(rig.g()) == before);
}

TEST_CASE("identical real and fake rows give zero critic loss") {
    Rig rig;
    const Tensor batch(rig.real.topRows(8));
    CHECK(rig.session->critic_objective(batch, batch).item() == 0.0);
}

TEST_CASE("critic step clips and leaves generator and GNN untouched") {
    Rig rig;
    const auto g0 = diff::snapshot(rig.g());
    const auto n0 = diff::snapshot(rig.n());
    for (int i = 0; i < 10; ++i) {
        rig.session->critic_step(rig.session->sample_real(rig.real));
        CHECK(diff::max_abs_weight(rig.d()) <= rig.config.clip);
    }
    CHECK(diff::snapshot(rig.g()) == g0);
    CHECK(diff::snapshot(rig.n()) == n0);
}

TEST_CASE("generator step leaves critic and GNN untouched") {
    Rig rig;
    rig.session->critic_step(rig.session->sample_real(rig.real));
    const auto d0 = diff::snapshot(rig.d());
    const auto n0 = diff::snapshot(rig.n());
    const auto g0 = diff::snapshot(rig.g());
    rig.session->generator_step();
    CHECK(diff::snapshot(rig.d()) == d0);
    CHECK(diff::snapshot(rig.n()) == n0);
    CHECK(diff::snapshot(rig.g()) != g0);
    for (const auto& p : rig.d()) CHECK(p.requires_grad());
}

TEST_CASE("same noise gives the same generator loss") {
    Rig rig;
    const Matrix z = rig.session->sample_noise(8);
    CHECK(rig.session->generator_objective(Tensor(z)).item() == rig.session->generator_objective(Tensor(z)).item());
}

TEST_CASE("generator gradients through critic, concat and GNN match finite differences") {
    for (LossKind loss : {LossKind::wasserstein, LossKind::vanilla}) {
        Rig rig(true, loss);
        // Unclipped critic weights give gradients well above finite-difference noise.
        Rng rng(17);
        for (auto& p : rig.d()) {
            auto h = p;
            for (Eigen::Index i = 0; i < h.mutable_value().size(); ++i) h.mutable_value().data()[i] = rng.normal(0.0, 0.5);
        }
        const Matrix z = rig.session->sample_noise(8);
        const auto f = [&] { return rig.session->generator_objective(Tensor(z)).item(); };
        auto gp = rig.g();
        diff::zero_grads(gp);
        diff::backward(rig.session->generator_objective(Tensor(z)));
        for (auto& p : gp) {
            const Matrix analytic = p.grad();
            CHECK(support::worst_relative_error(analytic, support::numeric_gradient(f, p.mutable_value())) < 1e-3);
        }
    }
}

TEST_CASE("vanilla loss trains without clipping") {
    Rig rig(false, LossKind::vanilla);
    for (int i = 0; i < 5; ++i) {
        CHECK(std::isfinite(rig.session->critic_step(rig.session->sample_real(rig.real))));
        CHECK(std::isfinite(rig.session->generator_step()));
    }
}

TEST_CASE("config validation and session wiring") {
    auto c = tiny_config();
    c.n_critic = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config();
    c.clip = -1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);

    c = tiny_config();
    c.use_gnn = false;
    CHECK_THROWS_AS(GanSession(make_generator(c, embedding_layout(2)), make_discriminator(c, 21, 0), nullptr, c),
                    ShapeError);
    CHECK(variant_from_name("word2vec-gnn-wgan") == Variant::word2vec_gnn_wgan);
    CHECK_FALSE(variant_from_name("bogus").has_value());
    for (Variant v : kAllVariants) CHECK(variant_from_name(variant_name(v)) == v);
}

TEST_CASE("training loop structure and determinism") {
    const auto t = small_trace();
    auto c = tiny_config();
    c.n_critic = 5;
    std::vector<std::size_t> hook_steps;
    const auto a = train(t.data, t.schema, &t.table, t.gnn, c,
                         [&](std::size_t step, const GeneratorModel&) { hook_steps.push_back(step); });
    CHECK(a.report.generator_losses.size() == 5);
    CHECK(a.report.critic_losses.size() == 25);
    CHECK(hook_steps == std::vector<std::size_t>{0, 5});

    const auto b = train(t.data, t.schema, &t.table, t.gnn, c);
    CHECK(a.report.critic_losses == b.report.critic_losses);
    CHECK(a.report.generator_losses == b.report.generator_losses);

    support::TempDir dir;
    a.report.write_csv(dir / "r.csv", c.n_critic);
    const auto text = support::read_text(dir / "r.csv");
    CHECK(text.rfind("step,critic_loss,gen_loss,elapsed_ms\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6);
}

TEST_CASE("periodic checkpoints land in the checkpoint directory") {
    const auto t = small_trace();
    support::TempDir dir;
    auto c = tiny_config();
    c.generator_steps = 4;
    c.checkpoint_every = 2;
    c.checkpoint_dir = dir.path();
    const auto r = train(t.data, t.schema, &t.table, t.gnn, c);
    CHECK(r.report.checkpoints.size() == 3);
    for (const auto& p : r.report.checkpoints) CHECK(std::filesystem::exists(p));
}

TEST_CASE("sampled traces stay inside the schema and are seed-deterministic") {
    const auto t = small_trace();
    for (Variant v : kAllVariants) {
        CAPTURE(variant_name(v));
        auto c = with_variant(tiny_config(), v);
        c.generator_steps = 2;
        const EmbeddingTable* table = c.encoding == EncodingKind::embedding ? &t.table : nullptr;
        const auto r = train(t.data, t.schema, table, c.use_gnn ? t.gnn : nullptr, c);
        CHECK(sample_trace(r.generator, 0, t.schema, table, 1).empty());
        const auto s = sample_trace(r.generator, 300, t.schema, table, 1);
        REQUIRE(s.size() == 300);
        CHECK(sample_trace(r.generator, 300, t.schema, table, 1).records == s.records);
        for (const auto& rec : s.records) {
            for (Field f : kAllFields) {
                const auto& spec = t.schema[f];
                if (spec.is_discrete()) {
                    const auto tok = discrete_token(rec, f);
                    const auto& vocab = spec.vocab();
                    CHECK((std::find(vocab.begin(), vocab.end(), tok) != vocab.end() || tok == spec.oov_value()));
                } else if (f != Field::ttl) {
                    CHECK(continuous_value(rec, f) == spec.bucket_midpoint(spec.bucket_index(continuous_value(rec, f))));
                }
            }
        }
    }
}

TEST_CASE("training inputs are checked") {
    const auto t = small_trace();
    auto c = tiny_config();
    CHECK_THROWS_AS(train(TraceDataset{}, t.schema, &t.table, t.gnn, c), DataError);
    CHECK_THROWS_AS(train(t.data, t.schema, nullptr, t.gnn, c), DataError);
    CHECK_THROWS_AS(train(t.data, t.schema, &t.table, nullptr, c), DataError);
}

}  // TEST_SUITE
