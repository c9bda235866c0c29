#include <doctest.h>

#include <numeric>
#include <random>

#include "support.hpp"
#include "tracegan/error.hpp"
#include "tracegan/gnn.hpp"

using namespace tracegan;
using diff::Matrix;
using diff::Tensor;

namespace {

Matrix random_rows(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(gen);
    return m;
}

GnnLayer identity_layer(std::size_t d) {
    Rng rng(1);
    GnnLayer layer("id", d, d, rng);
    layer.neighbor_weight.mutable_value() = Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    layer.self_weight.mutable_value() = Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    layer.bias.mutable_value().setZero();
    return layer;
}

void dyadic_model(GnnModel& model, std::mt19937_64& gen) {
    for (auto& p : model.parameters()) {
        Matrix m = p.value();
        support::dyadic_fill(m, gen);
        auto handle = p;
        handle.mutable_value() = m;
    }
}

}  // namespace

TEST_SUITE("gnn") {

TEST_CASE("record graph is complete over the ten fields") {
    std::mt19937_64 gen(1);
    const Matrix row = random_rows(1, 40, gen);
    const auto g = build_record_graph(std::span(row.data(), 40), embedding_layout(4));
    CHECK(g.node_count() == 10);
    CHECK(g.undirected_edge_count() == 45);
    CHECK(g.node_features.cols() == 4);
    CHECK(g.node_features.row(0) == row.block(0, 0, 1, 4));
}

TEST_CASE("records differing in one field differ at one node") {
    std::mt19937_64 gen(2);
    Matrix a = random_rows(1, 40, gen);
    Matrix b = a;
    b(0, 13) += 1.0;  // inside the dst_port slice
    const auto ga = build_record_graph(std::span(a.data(), 40), embedding_layout(4));
    const auto gb = build_record_graph(std::span(b.data(), 40), embedding_layout(4));
    for (Eigen::Index i = 0; i < 10; ++i) {
        if (i == 3) CHECK(ga.node_features.row(i) != gb.node_features.row(i));
        else CHECK(ga.node_features.row(i) == gb.node_features.row(i));
    }
}

TEST_CASE("unequal slice widths are rejected") {
    Layout layout;
    layout.slices = {{Field::src_ip, 0, 2}, {Field::dst_ip, 2, 3}};
    layout.total_width = 5;
    std::vector<double> row(5, 0.0);
    CHECK_THROWS_AS(build_record_graph(row, layout), ShapeError);
}

TEST_CASE("identity-weight message passing") {
    RecordGraph g;
    g.node_features = Matrix(2, 2);
    g.node_features << 1, 2, 3, 4;
    g.adjacency = diff::Adjacency::complete(2);
    const auto layer = identity_layer(2);
    const Matrix pre = layer.pre_activation(Tensor(g.node_features), g.adjacency).value();
    CHECK(pre(0, 0) == 4.0);
    CHECK(pre(0, 1) == 6.0);
    CHECK(message_pass(g, layer) == pre);  // all positive, relu is a no-op
}

TEST_CASE("isolated node only sees its own state") {
    RecordGraph g;
    g.node_features = Matrix(2, 2);
    g.node_features << 1, -2, 3, 4;
    g.adjacency.nodes = 2;
    g.adjacency.neighbors = {{}, {0}};
    const auto layer = identity_layer(2);
    const Matrix out = message_pass(g, layer);
    CHECK(out(0, 0) == 1.0);
    CHECK(out(0, 1) == 0.0);
}

TEST_CASE("message passing is permutation equivariant") {
    std::mt19937_64 gen(3);
    Rng rng(3);
    GnnLayer layer("l", 4, 5, rng);
    RecordGraph g;
    g.node_features = random_rows(10, 4, gen);
    g.adjacency = diff::Adjacency::complete(10);
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    RecordGraph h = g;
    h.node_features = support::permute_blocks(g.node_features, perm);
    const Matrix expect = support::permute_blocks(message_pass(g, layer), perm);
    CHECK((message_pass(h, layer) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("equivariance and invariance are exact on dyadic values") {
    std::mt19937_64 gen(4);
    Rng rng(4);
    GnnModel model(GnnConfig{4, 6, 2, 3}, rng);
    dyadic_model(model, gen);
    Matrix nodes(10, 4);
    support::dyadic_fill(nodes, gen);
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    const auto adj = diff::Adjacency::complete(10);
    const Matrix states = model.node_states(Tensor(nodes), adj).value();
    const Matrix permuted = model.node_states(Tensor(support::permute_blocks(nodes, perm)), adj).value();
    CHECK(permuted == support::permute_blocks(states, perm));
    CHECK(readout(permuted, model) == readout(states, model));
}

TEST_CASE("readout is the mean followed by the affine map") {
    Rng rng(5);
    GnnModel model(GnnConfig{2, 2, 1, 2}, rng);
    model.readout_layer().weight.mutable_value() = Matrix::Identity(2, 2);
    model.readout_layer().bias.mutable_value().setZero();
    Matrix f(2, 2);
    f << 1, 2, 3, 4;
    const Matrix r = readout(f, model);
    CHECK(r(0, 0) == 2.0);
    CHECK(r(0, 1) == 3.0);

    Matrix same(5, 2);
    same.rowwise() = Eigen::RowVector2d(0.25, -0.5);
    CHECK(readout(same, model).row(0) == same.row(0));
}

TEST_CASE("extract_features: width, batch-of-one consistency and per-row determinism") {
    std::mt19937_64 gen(6);
    Rng rng(6);
    GnnModel model(GnnConfig{4, 8, 2, 16}, rng);
    Matrix rows = random_rows(3, 40, gen);
    rows.row(2) = rows.row(0);
    const Matrix all = extract_features(EncodedBatch{rows, embedding_layout(4)}, model);
    CHECK(all.cols() == 16);
    CHECK(all.row(2) == all.row(0));
    const Matrix one = extract_features(EncodedBatch{rows.topRows(1), embedding_layout(4)}, model);
    CHECK((one.row(0) - all.row(0)).cwiseAbs().maxCoeff() < 1e-12);

    // Same thing through the single-graph pipeline.
    const auto g = build_record_graph(std::span(rows.data(), 40), embedding_layout(4));
    const Matrix single = readout(model.node_states(Tensor(g.node_features), g.adjacency).value(), model);
    CHECK((single.row(0) - all.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("autoencoder pretraining halves the reconstruction loss") {
    const auto d = generate_reference(ReferenceSpec::correlated(200, 7));
    const auto schema = fit_schema(d, SchemaOptions{});
    const auto table = train_embeddings(d, schema, EmbeddingOptions{8, 5, 5, 0.025, 7}).table;
    AutoencoderConfig cfg;
    cfg.gnn = GnnConfig{8, 16, 2, 8};
    cfg.seed = 7;
    const auto a = pretrain_autoencoder(d, schema, table, cfg);
    REQUIRE(a.loss_history.size() == 50);
    CHECK(a.loss_history.back() <= 0.5 * a.loss_history.front());

    const auto b = pretrain_autoencoder(d, schema, table, cfg);
    CHECK(a.loss_history == b.loss_history);

    cfg.epochs = 0;
    CHECK_THROWS_AS(pretrain_autoencoder(d, schema, table, cfg), std::invalid_argument);
}

}  // TEST_SUITE
