#pragma once

#include <span>
#include <vector>

#include "tracegan/encoding.hpp"
#include "tracegan/nn.hpp"

namespace tracegan {

/// One record as a graph: a node per header field, features from the field's slice.
struct RecordGraph {
    diff::Matrix node_features;  ///< n_nodes x d
    diff::Adjacency adjacency;

    std::size_t node_count() const { return static_cast<std::size_t>(node_features.rows()); }
    std::size_t undirected_edge_count() const { return adjacency.edge_count() / 2; }
};

/// Complete graph over the field slices of one encoded row. The layout's slices
/// must all have the same width.
RecordGraph build_record_graph(std::span<const double> row, const Layout& layout);

/// h_i' = relu(h_i U + (sum_{j in N(i)} h_j) W + b)
struct GnnLayer {
    diff::Parameter neighbor_weight;  ///< W, in x out
    diff::Parameter self_weight;      ///< U, in x out
    diff::Parameter bias;             ///< 1 x out

    GnnLayer() = default;
    GnnLayer(const std::string& id, std::size_t in, std::size_t out, Rng& rng);

    std::size_t in_features() const { return self_weight.rows(); }
    std::size_t out_features() const { return self_weight.cols(); }
    /// Pre-activation messages plus self term, for stacked graphs.
    diff::Tensor pre_activation(const diff::Tensor& nodes, const diff::Adjacency& adj) const;
    diff::Tensor operator()(const diff::Tensor& nodes, const diff::Adjacency& adj) const;
};

struct GnnConfig {
    std::size_t input_dim = 32;   ///< node feature width (embedding dim)
    std::size_t hidden_dim = 32;
    std::size_t layers = 2;
    std::size_t output_dim = 16;  ///< deep-feature width m'
};

class GnnModel {
public:
    GnnModel() = default;
    GnnModel(const GnnConfig& config, Rng& rng);

    const GnnConfig& config() const { return config_; }
    std::size_t output_dim() const { return readout_.out_features(); }
    std::vector<GnnLayer>& layers() { return layers_; }
    const std::vector<GnnLayer>& layers() const { return layers_; }
    diff::Linear& readout_layer() { return readout_; }

    /// Node states after all message-passing layers; `nodes` stacks graphs of adj.nodes rows.
    diff::Tensor node_states(const diff::Tensor& nodes, const diff::Adjacency& adj) const;
    /// Mean over each graph's nodes followed by the affine readout.
    diff::Tensor readout(const diff::Tensor& states, std::size_t nodes_per_graph) const;
    /// Deep features for encoded rows (batch x kFieldCount*d) -> (batch x m').
    diff::Tensor forward(const diff::Tensor& rows) const;

    std::vector<diff::Parameter> parameters() const;

private:
    GnnConfig config_;
    std::vector<GnnLayer> layers_;
    diff::Linear readout_;
    diff::Adjacency adjacency_;
};

/// One message-passing layer on one graph.
diff::Matrix message_pass(const RecordGraph& graph, const GnnLayer& layer);
/// Readout of one graph's final node features.
diff::Matrix readout(const diff::Matrix& node_features, const GnnModel& model);

/// Deep features for every row of an embedding-layout batch; rows are independent.
diff::Matrix extract_features(const EncodedBatch& batch, const GnnModel& model);

struct AutoencoderConfig {
    GnnConfig gnn;
    std::vector<std::size_t> decoder_hidden = {64};
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;
};

/// GNN encoder (Z = GNN(X)) plus MLP decoder (X' = Decoder(Z)).
struct AutoencoderModel {
    GnnModel encoder;
    diff::Mlp decoder;
    std::vector<double> loss_history;  ///< epoch-mean reconstruction MSE

    diff::Tensor reconstruct(const diff::Tensor& rows) const { return decoder(encoder.forward(rows)); }
    std::vector<diff::Parameter> parameters() const;
};

AutoencoderModel make_autoencoder(const AutoencoderConfig& config, std::size_t encoded_width);

/// Minimizes mse(Decoder(GNN(X)), X) over the embedding-encoded dataset with RMSProp.
AutoencoderModel pretrain_autoencoder(const TraceDataset& dataset, const FieldSchema& schema,
                                      const EmbeddingTable& table, const AutoencoderConfig& config);

}  // namespace tracegan
