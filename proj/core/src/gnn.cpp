#include "tracegan/gnn.hpp"

#include <cmath>
#include <numeric>

#include "tracegan/error.hpp"

namespace tracegan {

using diff::Matrix;
using diff::Tensor;

RecordGraph build_record_graph(std::span<const double> row, const Layout& layout) {
    if (layout.slices.empty()) throw ShapeError("build_record_graph: empty layout");
    const std::size_t width = layout.slices.front().width;
    for (const auto& s : layout.slices)
        if (s.width != width) throw ShapeError("build_record_graph: field slices have unequal widths");
    if (row.size() != layout.total_width) throw ShapeError("build_record_graph: row width does not match layout");

    RecordGraph g;
    const auto n = static_cast<Eigen::Index>(layout.slices.size());
    g.node_features.resize(n, static_cast<Eigen::Index>(width));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = layout.slices[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < width; ++k) g.node_features(i, static_cast<Eigen::Index>(k)) = row[s.offset + k];
    }
    g.adjacency = diff::Adjacency::complete(layout.slices.size());
    return g;
}

GnnLayer::GnnLayer(const std::string& id, std::size_t in, std::size_t out, Rng& rng)
    : neighbor_weight(id + ".neighbor", diff::glorot_uniform(in, out, rng)),
      self_weight(id + ".self", diff::glorot_uniform(in, out, rng)),
      bias(id + ".bias", Matrix::Zero(1, static_cast<Eigen::Index>(out))) {}

Tensor GnnLayer::pre_activation(const Tensor& nodes, const diff::Adjacency& adj) const {
    if (nodes.cols() != in_features())
        throw ShapeError("gnn layer: node width " + std::to_string(nodes.cols()) + " but layer expects " +
                         std::to_string(in_features()));
    const Tensor message = matmul(diff::neighbor_sum(nodes, adj), neighbor_weight);
    return add(add(matmul(nodes, self_weight), message), bias);
}

Tensor GnnLayer::operator()(const Tensor& nodes, const diff::Adjacency& adj) const {
    return relu(pre_activation(nodes, adj));
}

GnnModel::GnnModel(const GnnConfig& config, Rng& rng) : config_(config) {
    if (config.layers == 0) throw std::invalid_argument("gnn: need at least one layer");
    std::size_t width = config.input_dim;
    for (std::size_t k = 0; k < config.layers; ++k) {
        layers_.emplace_back("gnn.layer" + std::to_string(k), width, config.hidden_dim, rng);
        width = config.hidden_dim;
    }
    readout_ = diff::Linear("gnn.readout", width, config.output_dim, rng);
    adjacency_ = diff::Adjacency::complete(kFieldCount);
}

Tensor GnnModel::node_states(const Tensor& nodes, const diff::Adjacency& adj) const {
    Tensor h = nodes;
    for (const auto& layer : layers_) h = layer(h, adj);
    return h;
}

Tensor GnnModel::readout(const Tensor& states, std::size_t nodes_per_graph) const {
    return readout_(diff::block_mean(states, nodes_per_graph));
}

Tensor GnnModel::forward(const Tensor& rows) const {
    const std::size_t d = config_.input_dim;
    if (rows.cols() != kFieldCount * d)
        throw ShapeError("gnn: encoded width " + std::to_string(rows.cols()) + " is not 10 x " + std::to_string(d));
    // Row-major (batch x 10d) is bit-identical to (10*batch x d): one node per row.
    const Tensor nodes = diff::reshape(rows, rows.rows() * kFieldCount, d);
    return readout(node_states(nodes, adjacency_), kFieldCount);
}

std::vector<diff::Parameter> GnnModel::parameters() const {
    std::vector<diff::Parameter> out;
    for (const auto& l : layers_) {
        out.push_back(l.neighbor_weight);
        out.push_back(l.self_weight);
        out.push_back(l.bias);
    }
    readout_.collect(out);
    return out;
}

Matrix message_pass(const RecordGraph& graph, const GnnLayer& layer) {
    return layer(Tensor(graph.node_features), graph.adjacency).value();
}

Matrix readout(const Matrix& node_features, const GnnModel& model) {
    return model.readout(Tensor(node_features), static_cast<std::size_t>(node_features.rows())).value();
}

Matrix extract_features(const EncodedBatch& batch, const GnnModel& model) {
    if (batch.layout.kind != EncodingKind::embedding)
        throw ShapeError("extract_features: batch must use the embedding layout");
    return model.forward(Tensor(batch.data)).value();
}

std::vector<diff::Parameter> AutoencoderModel::parameters() const {
    auto out = encoder.parameters();
    for (auto& p : decoder.parameters()) out.push_back(p);
    return out;
}

AutoencoderModel make_autoencoder(const AutoencoderConfig& config, std::size_t encoded_width) {
    Rng rng = Rng::derive(config.seed, 0x6e6e);
    AutoencoderModel m;
    m.encoder = GnnModel(config.gnn, rng);
    m.decoder = diff::Mlp("decoder", config.gnn.output_dim, config.decoder_hidden, encoded_width,
                          diff::Activation::relu, rng);
    return m;
}

AutoencoderModel pretrain_autoencoder(const TraceDataset& dataset, const FieldSchema& schema,
                                      const EmbeddingTable& table, const AutoencoderConfig& config) {
    if (config.epochs == 0) throw std::invalid_argument("pretrain_autoencoder: epochs must be at least 1");
    if (dataset.empty()) throw DataError("pretrain_autoencoder: dataset is empty");
    if (config.batch_size == 0) throw std::invalid_argument("pretrain_autoencoder: batch_size must be positive");
    if (config.gnn.input_dim != table.dim())
        throw ShapeError("pretrain_autoencoder: gnn input_dim " + std::to_string(config.gnn.input_dim) +
                         " does not match embedding dim " + std::to_string(table.dim()));

    const EncodedBatch encoded = encode_embedding(dataset.records, schema, table);
    AutoencoderModel model = make_autoencoder(config, encoded.layout.total_width);
    auto params = model.parameters();
    diff::check_unique_ids(params);
    diff::RmsProp opt(config.learning_rate);
    Rng shuffle = Rng::derive(config.seed, 0x5f5f);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.uniform_index(i)]);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            Matrix x(static_cast<Eigen::Index>(count), encoded.data.cols());
            for (std::size_t k = 0; k < count; ++k)
                x.row(static_cast<Eigen::Index>(k)) = encoded.data.row(static_cast<Eigen::Index>(order[start + k]));
            const Tensor input(std::move(x));
            const Tensor loss = diff::mse(model.reconstruct(input), input);
            const double value = loss.item();
            if (!std::isfinite(value))
                throw NumericError("pretrain_autoencoder: non-finite loss at epoch " + std::to_string(epoch));
            diff::backward(loss);
            opt.step(params);
            total += value;
            ++batches;
        }
        model.loss_history.push_back(total / static_cast<double>(batches));
    }
    return model;
}

}  // namespace tracegan
