#include "tracegan/gan.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "detail/text.hpp"
#include "tracegan/error.hpp"

namespace tracegan {

using diff::Matrix;
using diff::Tensor;

namespace {

constexpr std::array<std::string_view, 3> kVariantNames = {"onehot-wgan", "word2vec-wgan", "word2vec-gnn-wgan"};

// Streams derived from the run seed.
enum Stream : std::uint64_t { kGeneratorInit = 1, kDiscriminatorInit, kNoise, kBatches };

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite loss");
}

/// Marks parameters as constants for the lifetime of the guard.
class FreezeGuard {
public:
    explicit FreezeGuard(std::span<diff::Parameter> params) : params_(params) { diff::set_trainable(params_, false); }
    ~FreezeGuard() { diff::set_trainable(params_, true); }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    std::span<diff::Parameter> params_;
};

}  // namespace

std::string_view variant_name(Variant v) { return kVariantNames[static_cast<std::size_t>(v)]; }

std::optional<Variant> variant_from_name(std::string_view name) {
    for (Variant v : kAllVariants)
        if (variant_name(v) == name) return v;
    return std::nullopt;
}

void TrainConfig::validate() const {
    if (n_critic == 0) throw std::invalid_argument("train config: n_critic must be at least 1");
    if (!(clip > 0.0)) throw std::invalid_argument("train config: clip must be positive");
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (noise_dim == 0) throw std::invalid_argument("train config: noise_dim must be positive");
    if (!(critic_lr > 0.0) || !(generator_lr > 0.0)) throw std::invalid_argument("train config: learning rates must be positive");
    if (use_gnn && encoding != EncodingKind::embedding)
        throw std::invalid_argument("train config: the GNN branch requires the embedding encoding");
}

TrainConfig with_variant(TrainConfig config, Variant v) {
    config.encoding = v == Variant::onehot_wgan ? EncodingKind::onehot : EncodingKind::embedding;
    config.use_gnn = v == Variant::word2vec_gnn_wgan;
    config.loss = LossKind::wasserstein;
    return config;
}

Tensor GeneratorModel::operator()(const Tensor& noise) const {
    Tensor out = net(noise);
    if (layout.kind == EncodingKind::onehot) {
        const auto ranges = layout.ranges();
        out = diff::softmax_slices(out, ranges);
    }
    return out;
}

Tensor DiscriminatorModel::operator()(const Tensor& concat) const {
    if (concat.cols() != input_width())
        throw ShapeError("discriminator: input width " + std::to_string(concat.cols()) + " but expects " +
                         std::to_string(input_width()));
    return net(concat);
}

GeneratorModel make_generator(const TrainConfig& config, const Layout& layout) {
    Rng rng = Rng::derive(config.seed, kGeneratorInit);
    GeneratorModel g;
    g.net = diff::Mlp("generator", config.noise_dim, config.generator_hidden, layout.total_width,
                      diff::Activation::leaky_relu, rng);
    g.layout = layout;
    g.noise_dim = config.noise_dim;
    return g;
}

DiscriminatorModel make_discriminator(const TrainConfig& config, std::size_t raw_width, std::size_t feature_width) {
    Rng rng = Rng::derive(config.seed, kDiscriminatorInit);
    DiscriminatorModel d;
    d.raw_width = raw_width;
    d.feature_width = feature_width;
    d.net = diff::Mlp("discriminator", raw_width + feature_width, config.discriminator_hidden, 1,
                      diff::Activation::leaky_relu, rng);
    return d;
}

Tensor concat_features(const Tensor& raw, const Tensor* deep) {
    if (!deep) return raw;
    if (deep->rows() != raw.rows())
        throw ShapeError("concat_features: " + std::to_string(raw.rows()) + " raw rows but " +
                         std::to_string(deep->rows()) + " feature rows");
    return diff::concat_rows(raw, *deep);
}

// ---- session ----------------------------------------------------------------------

GanSession::GanSession(GeneratorModel generator, DiscriminatorModel discriminator, std::shared_ptr<GnnModel> gnn,
                       TrainConfig config)
    : generator_(std::move(generator)),
      discriminator_(std::move(discriminator)),
      gnn_(std::move(gnn)),
      config_(std::move(config)),
      g_opt_(config_.generator_lr),
      d_opt_(config_.critic_lr),
      noise_rng_(Rng::derive(config_.seed, kNoise)),
      batch_rng_(Rng::derive(config_.seed, kBatches)) {
    config_.validate();
    if (config_.use_gnn != static_cast<bool>(gnn_))
        throw std::invalid_argument("gan: use_gnn is set but no GNN model was supplied (or the reverse)");
    if (generator_.layout.total_width != discriminator_.raw_width)
        throw ShapeError("gan: generator emits " + std::to_string(generator_.layout.total_width) +
                         " columns but the discriminator expects raw width " +
                         std::to_string(discriminator_.raw_width));
    const std::size_t deep = gnn_ ? gnn_->output_dim() : 0;
    if (discriminator_.feature_width != deep)
        throw ShapeError("gan: discriminator feature width " + std::to_string(discriminator_.feature_width) +
                         " does not match the GNN output width " + std::to_string(deep));
    if (gnn_ && generator_.layout.total_width != kFieldCount * gnn_->config().input_dim)
        throw ShapeError("gan: GNN input dim does not match the embedding layout");

    g_params_ = generator_.parameters();
    d_params_ = discriminator_.parameters();
    if (gnn_) {
        gnn_params_ = gnn_->parameters();
        diff::set_trainable(gnn_params_, config_.finetune_gnn);
    }
    diff::check_unique_ids(g_params_);
    diff::check_unique_ids(d_params_);
}

Tensor GanSession::discriminate(const Tensor& rows) const {
    if (!gnn_) return discriminator_(rows);
    const Tensor deep = gnn_->forward(rows);
    return discriminator_(concat_features(rows, &deep));
}

Tensor GanSession::critic_objective(const Tensor& real, const Tensor& fake) const {
    const Tensor d_real = discriminate(real);
    const Tensor d_fake = discriminate(fake);
    if (config_.loss == LossKind::wasserstein) return diff::sub(diff::mean(d_fake), diff::mean(d_real));
    return diff::add(diff::mean(diff::softplus(diff::scale(d_real, -1.0))), diff::mean(diff::softplus(d_fake)));
}

Tensor GanSession::generator_objective(const Tensor& noise) const {
    const Tensor d_fake = discriminate(generator_(noise));
    if (config_.loss == LossKind::wasserstein) return diff::scale(diff::mean(d_fake), -1.0);
    return diff::mean(diff::softplus(diff::scale(d_fake, -1.0)));
}

Matrix GanSession::sample_noise(std::size_t rows) {
    Matrix z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(generator_.noise_dim));
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = noise_rng_.normal();
    return z;
}

Matrix GanSession::sample_real(const Matrix& data) {
    if (data.rows() == 0) throw DataError("gan: no real rows to sample");
    Matrix batch(static_cast<Eigen::Index>(config_.batch_size), data.cols());
    for (Eigen::Index i = 0; i < batch.rows(); ++i)
        batch.row(i) = data.row(static_cast<Eigen::Index>(batch_rng_.uniform_index(static_cast<std::uint64_t>(data.rows()))));
    return batch;
}

double GanSession::critic_step(const Matrix& real_batch) {
    const Tensor fake = generator_(Tensor(sample_noise(static_cast<std::size_t>(real_batch.rows())))).detach();
    const Tensor loss = critic_objective(Tensor(real_batch), fake);
    const double value = loss.item();
    check_finite(value, "critic_step");
    diff::backward(loss);
    d_opt_.step(d_params_);
    if (config_.finetune_gnn && gnn_) d_opt_.step(gnn_params_);
    if (config_.loss == LossKind::wasserstein) diff::clip_weights(d_params_, config_.clip);
    return value;
}

double GanSession::generator_step() {
    FreezeGuard freeze_d(d_params_);
    std::optional<FreezeGuard> freeze_gnn;
    if (config_.finetune_gnn && gnn_) freeze_gnn.emplace(gnn_params_);
    const Tensor loss = generator_objective(Tensor(sample_noise(config_.batch_size)));
    const double value = loss.item();
    check_finite(value, "generator_step");
    diff::backward(loss);
    g_opt_.step(g_params_);
    return value;
}

// ---- training loop ------------------------------------------------------------------

void TrainReport::write_csv(const std::filesystem::path& path, std::size_t n_critic) const {
    std::ostringstream out;
    out << "step,critic_loss,gen_loss,elapsed_ms\n";
    for (std::size_t s = 0; s < generator_losses.size(); ++s) {
        double c = 0.0;
        for (std::size_t k = 0; k < n_critic; ++k) c += critic_losses[s * n_critic + k];
        out << s + 1 << ',' << detail::format_double(c / static_cast<double>(n_critic)) << ','
            << detail::format_double(generator_losses[s]) << ',' << detail::format_double(elapsed_ms[s]) << '\n';
    }
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw IoError("cannot write " + path.string());
    file << out.str();
}

TrainResult train(const TraceDataset& dataset, const FieldSchema& schema, const EmbeddingTable* table,
                  std::shared_ptr<GnnModel> gnn, const TrainConfig& config, const CheckpointHook& hook) {
    config.validate();
    if (dataset.empty()) throw DataError("train: dataset is empty");
    if (config.encoding == EncodingKind::embedding && !table)
        throw DataError("train: embedding mode needs an embedding table");
    if (config.use_gnn && !gnn) throw DataError("train: GNN mode needs a pretrained GNN");
    if (!config.use_gnn) gnn.reset();
    if (table) table->check_against(schema);

    const EncodedBatch real = config.encoding == EncodingKind::onehot
                                  ? encode_onehot(dataset.records, schema)
                                  : encode_embedding(dataset.records, schema, *table);
    GanSession session(make_generator(config, real.layout),
                       make_discriminator(config, real.layout.total_width, gnn ? gnn->output_dim() : 0), gnn,
                       config);

    TrainResult result;
    auto& report = result.report;
    report.critic_losses.reserve(config.generator_steps * config.n_critic);
    report.generator_losses.reserve(config.generator_steps);

    const auto checkpoint = [&](std::size_t step) {
        if (hook) hook(step, session.generator());
        if (!config.checkpoint_dir.empty()) {
            const auto path = config.checkpoint_dir / ("generator_step" + std::to_string(step) + ".ckpt");
            diff::save_checkpoint(path, session.generator().parameters());
            report.checkpoints.push_back(path);
        }
    };

    const auto start = std::chrono::steady_clock::now();
    if (config.checkpoint_every > 0) checkpoint(0);
    else if (hook) hook(0, session.generator());
    for (std::size_t step = 1; step <= config.generator_steps; ++step) {
        for (std::size_t k = 0; k < config.n_critic; ++k)
            report.critic_losses.push_back(session.critic_step(session.sample_real(real.data)));
        report.generator_losses.push_back(session.generator_step());
        report.elapsed_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
        if (config.checkpoint_every > 0 && (step % config.checkpoint_every == 0 || step == config.generator_steps))
            checkpoint(step);
        else if (step == config.generator_steps && hook)
            hook(step, session.generator());
    }
    result.generator = session.generator();
    return result;
}

TraceDataset sample_trace(const GeneratorModel& generator, std::size_t count, const FieldSchema& schema,
                          const EmbeddingTable* table, std::uint64_t seed) {
    TraceDataset out;
    out.source_label = "generated";
    if (count == 0) return out;
    if (generator.layout.kind == EncodingKind::embedding && !table)
        throw DataError("sample_trace: embedding generator needs its embedding table");

    Rng noise = Rng::derive(seed, 1);
    Rng pick = Rng::derive(seed, 2);
    constexpr std::size_t kChunk = 256;
    out.records.reserve(count);
    for (std::size_t done = 0; done < count; done += kChunk) {
        const std::size_t n = std::min(kChunk, count - done);
        Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(generator.noise_dim));
        for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = noise.normal();
        const Matrix rows = generator(Tensor(std::move(z))).value();
        if (!rows.allFinite()) throw NumericError("sample_trace: generator produced non-finite values");

        if (generator.layout.kind == EncodingKind::embedding) {
            auto decoded = decode_embedding(EncodedBatch{rows, generator.layout}, schema, *table);
            for (auto& r : decoded) out.records.push_back(std::move(r));
            continue;
        }
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            HeaderRecord r;
            for (const auto& slice : generator.layout.slices) {
                const double* p = rows.row(i).data() + slice.offset;
                schema[slice.field].assign(r, pick.categorical(std::span(p, slice.width)));
            }
            out.records.push_back(std::move(r));
        }
    }
    return out;
}

}  // namespace tracegan
