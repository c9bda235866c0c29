#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tracegan/encoding.hpp"
#include "tracegan/gnn.hpp"
#include "tracegan/nn.hpp"

namespace tracegan {

enum class LossKind { wasserstein, vanilla };

/// The three generator variants compared by the experiment driver.
enum class Variant { onehot_wgan, word2vec_wgan, word2vec_gnn_wgan };

inline constexpr std::array<Variant, 3> kAllVariants = {Variant::onehot_wgan, Variant::word2vec_wgan,
                                                        Variant::word2vec_gnn_wgan};

std::string_view variant_name(Variant v);
std::optional<Variant> variant_from_name(std::string_view name);

struct TrainConfig {
    EncodingKind encoding = EncodingKind::embedding;
    bool use_gnn = true;
    LossKind loss = LossKind::wasserstein;

    std::size_t batch_size = 64;
    std::size_t n_critic = 5;
    double clip = 0.01;
    double critic_lr = 5e-5;
    double generator_lr = 5e-5;
    std::size_t generator_steps = 2000;
    std::uint64_t seed = 7;

    std::size_t noise_dim = 64;
    std::vector<std::size_t> generator_hidden = {256, 256};
    std::vector<std::size_t> discriminator_hidden = {256, 256};

    /// Train the GNN together with the critic instead of keeping it frozen.
    bool finetune_gnn = false;

    std::size_t checkpoint_every = 0;  ///< 0 disables periodic checkpoints
    std::filesystem::path checkpoint_dir;

    /// Throws std::invalid_argument on an inconsistent configuration.
    void validate() const;
};

/// Sets encoding and GNN switches for a variant, leaving every other knob alone.
TrainConfig with_variant(TrainConfig config, Variant v);

/// Noise -> encoded row. One-hot mode ends in a per-field softmax; embedding mode is linear.
struct GeneratorModel {
    diff::Mlp net;
    Layout layout;
    std::size_t noise_dim = 0;

    diff::Tensor operator()(const diff::Tensor& noise) const;
    std::vector<diff::Parameter> parameters() const { return net.parameters(); }
};

/// Scores [X, F_GNN] rows; the output is a raw score (critic) or a logit (vanilla).
struct DiscriminatorModel {
    diff::Mlp net;
    std::size_t raw_width = 0;
    std::size_t feature_width = 0;  ///< m' when the GNN branch is enabled, else 0

    std::size_t input_width() const { return raw_width + feature_width; }
    diff::Tensor operator()(const diff::Tensor& concat) const;
    std::vector<diff::Parameter> parameters() const { return net.parameters(); }
};

GeneratorModel make_generator(const TrainConfig& config, const Layout& layout);
DiscriminatorModel make_discriminator(const TrainConfig& config, std::size_t raw_width, std::size_t feature_width);

/// Rowwise [X, F]; with no deep features the raw rows pass through unchanged.
diff::Tensor concat_features(const diff::Tensor& raw, const diff::Tensor* deep);

/// Owns one adversarial training run: models, optimizers and random streams.
class GanSession {
public:
    GanSession(GeneratorModel generator, DiscriminatorModel discriminator, std::shared_ptr<GnnModel> gnn,
               TrainConfig config);

    /// D(concat(X, GNN(X))) for encoded rows.
    diff::Tensor discriminate(const diff::Tensor& rows) const;
    /// Wasserstein: mean D(fake) - mean D(real). Vanilla: -mean log s(D(real)) - mean log(1 - s(D(fake))).
    diff::Tensor critic_objective(const diff::Tensor& real, const diff::Tensor& fake) const;
    /// Wasserstein: -mean D(G(z)). Vanilla: -mean log s(D(G(z))).
    diff::Tensor generator_objective(const diff::Tensor& noise) const;

    /// One RMSProp step on D (then clipping under Wasserstein loss). Returns the loss before the step.
    double critic_step(const diff::Matrix& real_batch);
    /// One RMSProp step on G through D and the GNN. Returns the loss before the step.
    double generator_step();

    diff::Matrix sample_noise(std::size_t rows);
    diff::Matrix sample_real(const diff::Matrix& data);

    const GeneratorModel& generator() const { return generator_; }
    GeneratorModel& generator() { return generator_; }
    const DiscriminatorModel& discriminator() const { return discriminator_; }
    DiscriminatorModel& discriminator() { return discriminator_; }
    const GnnModel* gnn() const { return gnn_.get(); }
    const TrainConfig& config() const { return config_; }

private:
    GeneratorModel generator_;
    DiscriminatorModel discriminator_;
    std::shared_ptr<GnnModel> gnn_;
    TrainConfig config_;
    std::vector<diff::Parameter> g_params_;
    std::vector<diff::Parameter> d_params_;
    std::vector<diff::Parameter> gnn_params_;
    diff::RmsProp g_opt_;
    diff::RmsProp d_opt_;
    Rng noise_rng_;
    Rng batch_rng_;
};

struct TrainReport {
    std::vector<double> critic_losses;     ///< n_critic entries per generator step
    std::vector<double> generator_losses;  ///< one per generator step
    std::vector<double> elapsed_ms;        ///< wall clock at the end of each generator step
    std::vector<std::filesystem::path> checkpoints;

    /// Columns: step,critic_loss,gen_loss,elapsed_ms (critic_loss is the step's mean).
    void write_csv(const std::filesystem::path& path, std::size_t n_critic) const;
};

struct TrainResult {
    GeneratorModel generator;
    TrainReport report;
};

/// Called with the generator at step 0, at every checkpoint and after the final step.
using CheckpointHook = std::function<void(std::size_t step, const GeneratorModel&)>;

/// Runs config.generator_steps iterations of (n_critic critic steps, one generator step).
TrainResult train(const TraceDataset& dataset, const FieldSchema& schema, const EmbeddingTable* table,
                  std::shared_ptr<GnnModel> gnn, const TrainConfig& config, const CheckpointHook& hook = {});

/// Draws `count` noise rows, runs G and decodes back into header records.
TraceDataset sample_trace(const GeneratorModel& generator, std::size_t count, const FieldSchema& schema,
                          const EmbeddingTable* table, std::uint64_t seed);

}  // namespace tracegan
