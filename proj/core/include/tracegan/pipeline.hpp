#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tracegan/encoding.hpp"
#include "tracegan/error.hpp"
#include "tracegan/gan.hpp"
#include "tracegan/gnn.hpp"
#include "tracegan/metrics.hpp"

namespace tracegan::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

/// Bad flag, unknown config key or malformed config line.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Every knob of every stage.
struct PipelineConfig {
    std::uint64_t seed = 7;

    std::size_t reference_records = 2000;

    std::size_t max_vocab = 64;
    std::size_t buckets = 32;
    BucketMode bucket_mode = BucketMode::equal_width;

    std::size_t embed_dim = 32;
    std::size_t embed_epochs = 5;
    std::size_t embed_negatives = 5;
    double embed_lr = 0.025;

    std::size_t gnn_hidden = 32;
    std::size_t gnn_layers = 2;
    std::size_t gnn_output = 16;
    std::vector<std::size_t> decoder_hidden = {64};
    std::size_t ae_epochs = 50;
    std::size_t ae_batch = 32;
    double ae_lr = 1e-3;

    TrainConfig gan;

    std::size_t sample_count = 0;  ///< 0 = same size as the input trace
    std::size_t metric_bins = 100;

    SchemaOptions schema_options() const;
    EmbeddingOptions embedding_options() const;
    AutoencoderConfig autoencoder_config() const;
    /// GAN settings for one variant; the seed is offset by the variant index.
    TrainConfig train_config(Variant v) const;
};

/// Names (snake_case) of every configuration key, in documentation order.
std::vector<std::string> config_keys();
std::string config_help(const std::string& key);
/// Throws UsageError on an unknown key or unparsable value.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const PipelineConfig& config, const std::string& key);

/// `key = value` lines; `#` starts a comment. Errors name the line number.
void apply_config_text(PipelineConfig& config, const std::string& text, const std::string& origin = "config");
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);
/// Fully-resolved configuration as `key = value` lines.
std::string dump_config(const PipelineConfig& config);

std::string sha256_file(const std::filesystem::path& path);

/// Loads a trace; `.pcap` files go through the PCAP reader, everything else through CSV.
TraceDataset load_trace(const std::filesystem::path& path);

// Artifact names inside --out.
inline constexpr const char* kReferenceFile = "reference.csv";
inline constexpr const char* kSchemaFile = "schema.json";
inline constexpr const char* kEmbeddingFile = "embeddings.bin";
inline constexpr const char* kAutoencoderFile = "autoencoder.ckpt";
inline constexpr const char* kAutoencoderLossFile = "autoencoder_loss.csv";
inline constexpr const char* kGeneratorFile = "generator.ckpt";
inline constexpr const char* kTrainReportFile = "train_report.csv";
inline constexpr const char* kSyntheticFile = "synthetic.csv";

/// Path of the manifest written next to `artifact`.
std::filesystem::path manifest_path(const std::filesystem::path& artifact);

std::filesystem::path synth_reference(const PipelineConfig& config, const std::filesystem::path& out);
std::filesystem::path fit_schema_stage(const PipelineConfig& config, const std::filesystem::path& input,
                                       const std::filesystem::path& out);
std::filesystem::path train_embeddings_stage(const PipelineConfig& config, const std::filesystem::path& input,
                                             const std::filesystem::path& out);
std::filesystem::path pretrain_gnn_stage(const PipelineConfig& config, const std::filesystem::path& input,
                                         const std::filesystem::path& out);
std::filesystem::path train_stage(const PipelineConfig& config, const std::filesystem::path& input,
                                  const std::filesystem::path& out, Variant variant);
std::filesystem::path generate_stage(const PipelineConfig& config, const std::filesystem::path& out,
                                     Variant variant, std::size_t count);
std::vector<FidelityRow> evaluate_stage(const PipelineConfig& config, const std::filesystem::path& real,
                                        const std::filesystem::path& synth, const std::string& label,
                                        const std::optional<std::filesystem::path>& out);

/// All stages for the three variants on one input trace; writes metrics.csv and report.svg in `out`.
/// Existing intermediates are reused only when their manifests match; any mismatch aborts.
std::vector<FidelityRow> experiment(const PipelineConfig& config, const std::filesystem::path& input,
                                    const std::filesystem::path& out);

/// Process exit code for an exception: 1 usage, 2 bad data, 3 numeric, 4 I/O.
int exit_code_for(const std::exception& e);

}  // namespace tracegan::pipeline
