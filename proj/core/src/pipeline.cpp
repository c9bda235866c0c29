#include "tracegan/pipeline.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

#include "detail/text.hpp"

namespace tracegan::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- configuration ---------------------------------------------------------------

SchemaOptions PipelineConfig::schema_options() const { return {max_vocab, buckets, bucket_mode}; }

EmbeddingOptions PipelineConfig::embedding_options() const {
    return {embed_dim, embed_epochs, embed_negatives, embed_lr, seed};
}

AutoencoderConfig PipelineConfig::autoencoder_config() const {
    AutoencoderConfig c;
    c.gnn = GnnConfig{embed_dim, gnn_hidden, gnn_layers, gnn_output};
    c.decoder_hidden = decoder_hidden;
    c.epochs = ae_epochs;
    c.batch_size = ae_batch;
    c.learning_rate = ae_lr;
    c.seed = seed;
    return c;
}

TrainConfig PipelineConfig::train_config(Variant v) const {
    TrainConfig c = with_variant(gan, v);
    c.seed = seed + static_cast<std::uint64_t>(v);
    return c;
}

namespace {

struct ConfigKey {
    const char* name;
    const char* help;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
T parse_or_throw(const std::string& key, const std::string& value) {
    const auto v = detail::parse_number<T>(value);
    if (!v) throw UsageError("config key '" + key + "': cannot parse '" + value + "'");
    return *v;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    if (detail::trim(value).empty()) return out;
    for (auto part : detail::split(value, ',')) {
        const auto v = detail::parse_number<std::size_t>(part);
        if (!v || *v == 0) throw UsageError("config key '" + key + "': bad width list '" + value + "'");
        out.push_back(*v);
    }
    return out;
}

std::string format_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw UsageError("config key '" + key + "': expected true/false, got '" + value + "'");
}

#define TG_SIZE(field, help)                                                                                  \
    ConfigKey {                                                                                               \
        #field, help, [](PipelineConfig& c, const std::string& v) { c.field = parse_or_throw<std::size_t>(#field, v); }, \
            [](const PipelineConfig& c) { return std::to_string(c.field); }                                   \
    }
#define TG_REAL(field, help)                                                                                   \
    ConfigKey {                                                                                                \
        #field, help, [](PipelineConfig& c, const std::string& v) { c.field = parse_or_throw<double>(#field, v); }, \
            [](const PipelineConfig& c) { return detail::format_double(c.field); }                             \
    }
#define TG_GAN_SIZE(field, help)                                                                                   \
    ConfigKey {                                                                                                    \
        #field, help, [](PipelineConfig& c, const std::string& v) { c.gan.field = parse_or_throw<std::size_t>(#field, v); }, \
            [](const PipelineConfig& c) { return std::to_string(c.gan.field); }                                    \
    }
#define TG_GAN_REAL(field, help)                                                                                    \
    ConfigKey {                                                                                                     \
        #field, help, [](PipelineConfig& c, const std::string& v) { c.gan.field = parse_or_throw<double>(#field, v); }, \
            [](const PipelineConfig& c) { return detail::format_double(c.gan.field); }                              \
    }

const std::vector<ConfigKey>& registry() {
    static const std::vector<ConfigKey> keys = {
        ConfigKey{"seed", "master seed; variants use seed + variant index",
                  [](PipelineConfig& c, const std::string& v) { c.seed = parse_or_throw<std::uint64_t>("seed", v); },
                  [](const PipelineConfig& c) { return std::to_string(c.seed); }},
        TG_SIZE(reference_records, "records produced by synth-reference"),
        TG_SIZE(max_vocab, "vocabulary cap per discrete field (plus OOV)"),
        TG_SIZE(buckets, "buckets per continuous field"),
        ConfigKey{"bucket_mode", "equal_width or quantile",
                  [](PipelineConfig& c, const std::string& v) {
                      if (v == "equal_width") c.bucket_mode = BucketMode::equal_width;
                      else if (v == "quantile") c.bucket_mode = BucketMode::quantile;
                      else throw UsageError("config key 'bucket_mode': expected equal_width or quantile");
                  },
                  [](const PipelineConfig& c) {
                      return std::string(c.bucket_mode == BucketMode::quantile ? "quantile" : "equal_width");
                  }},
        TG_SIZE(embed_dim, "embedding dimension m"),
        TG_SIZE(embed_epochs, "skip-gram epochs"),
        TG_SIZE(embed_negatives, "negative samples per pair"),
        TG_REAL(embed_lr, "skip-gram initial learning rate (linear decay)"),
        TG_SIZE(gnn_hidden, "GNN hidden width"),
        TG_SIZE(gnn_layers, "message-passing layers"),
        TG_SIZE(gnn_output, "deep-feature width m'"),
        ConfigKey{"decoder_hidden", "autoencoder decoder hidden widths, comma separated",
                  [](PipelineConfig& c, const std::string& v) { c.decoder_hidden = parse_list("decoder_hidden", v); },
                  [](const PipelineConfig& c) { return format_list(c.decoder_hidden); }},
        TG_SIZE(ae_epochs, "autoencoder pretraining epochs"),
        TG_SIZE(ae_batch, "autoencoder minibatch size"),
        TG_REAL(ae_lr, "autoencoder RMSProp learning rate"),
        TG_GAN_SIZE(batch_size, "GAN minibatch size"),
        TG_GAN_SIZE(n_critic, "critic steps per generator step"),
        TG_GAN_REAL(clip, "critic weight clip constant"),
        TG_GAN_REAL(critic_lr, "critic RMSProp learning rate"),
        TG_GAN_REAL(generator_lr, "generator RMSProp learning rate"),
        TG_GAN_SIZE(generator_steps, "generator steps"),
        TG_GAN_SIZE(noise_dim, "generator noise width"),
        ConfigKey{"generator_hidden", "generator hidden widths, comma separated",
                  [](PipelineConfig& c, const std::string& v) { c.gan.generator_hidden = parse_list("generator_hidden", v); },
                  [](const PipelineConfig& c) { return format_list(c.gan.generator_hidden); }},
        ConfigKey{"discriminator_hidden", "discriminator hidden widths, comma separated",
                  [](PipelineConfig& c, const std::string& v) {
                      c.gan.discriminator_hidden = parse_list("discriminator_hidden", v);
                  },
                  [](const PipelineConfig& c) { return format_list(c.gan.discriminator_hidden); }},
        ConfigKey{"loss", "wasserstein or vanilla",
                  [](PipelineConfig& c, const std::string& v) {
                      if (v == "wasserstein") c.gan.loss = LossKind::wasserstein;
                      else if (v == "vanilla") c.gan.loss = LossKind::vanilla;
                      else throw UsageError("config key 'loss': expected wasserstein or vanilla");
                  },
                  [](const PipelineConfig& c) {
                      return std::string(c.gan.loss == LossKind::vanilla ? "vanilla" : "wasserstein");
                  }},
        ConfigKey{"finetune_gnn", "train the GNN with the critic instead of freezing it",
                  [](PipelineConfig& c, const std::string& v) { c.gan.finetune_gnn = parse_bool("finetune_gnn", v); },
                  [](const PipelineConfig& c) { return std::string(c.gan.finetune_gnn ? "true" : "false"); }},
        TG_GAN_SIZE(checkpoint_every, "generator checkpoint interval in steps (0 = final only)"),
        TG_SIZE(sample_count, "records produced by generate (0 = input size)"),
        TG_SIZE(metric_bins, "shared bins for continuous-field EMD"),
    };
    return keys;
}

#undef TG_SIZE
#undef TG_REAL
#undef TG_GAN_SIZE
#undef TG_GAN_REAL

const ConfigKey& find_key(const std::string& key) {
    for (const auto& k : registry())
        if (key == k.name) return k;
    throw UsageError("unknown config key '" + key + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : registry()) out.emplace_back(k.name);
    return out;
}

std::string config_help(const std::string& key) { return find_key(key).help; }

void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value) {
    find_key(key).set(config, std::string(detail::trim(value)));
}

std::string get_config_value(const PipelineConfig& config, const std::string& key) { return find_key(key).get(config); }

void apply_config_text(PipelineConfig& config, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        body = detail::trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw UsageError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
        const std::string key(detail::trim(body.substr(0, eq)));
        const std::string value(detail::trim(body.substr(eq + 1)));
        try {
            set_config_value(config, key, value);
        } catch (const UsageError& e) {
            throw UsageError(origin + ":" + std::to_string(n) + ": " + e.what());
        }
    }
}

void apply_config_file(PipelineConfig& config, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    apply_config_text(config, std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()),
                      path.string());
}

std::string dump_config(const PipelineConfig& config) {
    std::string out;
    for (const auto& k : registry()) out += std::string(k.name) + " = " + k.get(config) + "\n";
    return out;
}

// ---- hashing, loading ------------------------------------------------------------------

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256: init failed");
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return hex.str();
}

TraceDataset load_trace(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("input trace not found: " + path.string());
    if (path.extension() == ".pcap") {
        PcapStats stats;
        auto d = read_pcap(path, &stats);
        spdlog::info("{}: {} packets, {} decoded, {} skipped", path.string(), stats.packets, stats.decoded,
                     stats.skipped);
        if (d.empty()) throw DataError(path.string() + ": no IPv4 TCP/UDP packets");
        return d;
    }
    return read_csv(path);
}

// ---- manifests ------------------------------------------------------------------------

fs::path manifest_path(const fs::path& artifact) {
    auto p = artifact;
    p += ".manifest.json";
    return p;
}

namespace {

const std::vector<std::string> kSchemaKeys = {"max_vocab", "buckets", "bucket_mode"};
const std::vector<std::string> kEmbeddingKeys = {"seed", "embed_dim", "embed_epochs", "embed_negatives", "embed_lr"};
const std::vector<std::string> kAutoencoderKeys = {"gnn_hidden", "gnn_layers", "gnn_output", "decoder_hidden",
                                                   "ae_epochs",  "ae_batch",   "ae_lr"};
const std::vector<std::string> kGanKeys = {"seed",          "batch_size",       "n_critic",         "clip",
                                           "critic_lr",     "generator_lr",     "generator_steps",  "noise_dim",
                                           "generator_hidden", "discriminator_hidden", "loss",       "finetune_gnn"};

std::vector<std::string> keys_for_variant(Variant v) {
    std::vector<std::string> keys = kSchemaKeys;
    if (v != Variant::onehot_wgan) keys.insert(keys.end(), kEmbeddingKeys.begin(), kEmbeddingKeys.end());
    if (v == Variant::word2vec_gnn_wgan) keys.insert(keys.end(), kAutoencoderKeys.begin(), kAutoencoderKeys.end());
    keys.insert(keys.end(), kGanKeys.begin(), kGanKeys.end());
    return keys;
}

struct StageIdentity {
    std::string stage;
    std::vector<std::string> keys;
    std::string input_sha256;  ///< empty when the stage has no trace input
};

json config_subset(const PipelineConfig& config, const std::vector<std::string>& keys) {
    json j = json::object();
    for (const auto& k : keys) j[k] = get_config_value(config, k);
    return j;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const fs::path& artifact, const PipelineConfig& config, const StageIdentity& id,
                    const json& upstream = json::object()) {
    json m;
    m["artifact"] = artifact.filename().string();
    m["stage"] = id.stage;
    m["tool_version"] = kToolVersion;
    m["seed"] = config.seed;
    m["input_sha256"] = id.input_sha256;
    m["config"] = config_subset(config, id.keys);
    m["upstream"] = upstream;
    m["artifact_sha256"] = sha256_file(artifact);
    m["created_at"] = utc_now();
    std::ofstream out(manifest_path(artifact), std::ios::trunc);
    if (!out) throw IoError("cannot write " + manifest_path(artifact).string());
    out << m.dump(2) << '\n';
}

/// Throws DataError unless `artifact` exists with a manifest matching `id` under `config`.
void verify_artifact(const fs::path& artifact, const PipelineConfig& config, const StageIdentity& id) {
    if (!fs::exists(artifact))
        throw DataError("missing artifact " + artifact.string() + " (run `" + id.stage + "` first)");
    const auto mpath = manifest_path(artifact);
    std::ifstream in(mpath);
    if (!in) throw DataError("missing manifest " + mpath.string());
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(mpath.string() + ": " + e.what());
    }
    const auto stale = [&](const std::string& why) {
        throw DataError("stale artifact " + artifact.string() + ": " + why);
    };
    if (m.value("stage", "") != id.stage) stale("produced by stage '" + m.value("stage", "") + "'");
    if (!id.input_sha256.empty() && m.value("input_sha256", "") != id.input_sha256)
        stale("it was built from a different input trace");
    if (m.value("artifact_sha256", "") != sha256_file(artifact)) stale("file changed after it was written");
    const json& recorded = m.contains("config") ? m["config"] : json::object();
    for (const auto& key : id.keys) {
        const std::string now = get_config_value(config, key);
        const std::string then = recorded.value(key, std::string("<unset>"));
        if (now != then) stale("config key '" + key + "' was " + then + ", now " + now);
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

StageIdentity schema_identity(const std::string& input_sha) { return {"fit-schema", kSchemaKeys, input_sha}; }

StageIdentity embedding_identity(const std::string& input_sha) {
    auto keys = kSchemaKeys;
    keys.insert(keys.end(), kEmbeddingKeys.begin(), kEmbeddingKeys.end());
    return {"train-embeddings", keys, input_sha};
}

StageIdentity autoencoder_identity(const std::string& input_sha) {
    auto id = embedding_identity(input_sha);
    id.stage = "pretrain-gnn";
    id.keys.insert(id.keys.end(), kAutoencoderKeys.begin(), kAutoencoderKeys.end());
    return id;
}

StageIdentity generator_identity(const std::string& input_sha, Variant v) {
    return {"train", keys_for_variant(v), input_sha};
}

StageIdentity synthetic_identity(Variant v) {
    auto keys = keys_for_variant(v);
    keys.push_back("sample_count");
    return {"generate", keys, ""};
}

fs::path variant_dir(const fs::path& out, Variant v) { return out / std::string(variant_name(v)); }

/// Reads the input hash recorded by a generator manifest, so downstream stages can check it.
std::string recorded_input(const fs::path& artifact) {
    std::ifstream in(manifest_path(artifact));
    if (!in) throw DataError("missing manifest for " + artifact.string());
    return json::parse(in).value("input_sha256", "");
}

void log_config(const char* stage, const PipelineConfig& config) {
    spdlog::info("{}: resolved configuration\n{}", stage, dump_config(config));
}

}  // namespace

// ---- stages ------------------------------------------------------------------------------

fs::path synth_reference(const PipelineConfig& config, const fs::path& out) {
    log_config("synth-reference", config);
    ensure_dir(out);
    const auto path = out / kReferenceFile;
    write_csv(generate_reference(ReferenceSpec::correlated(config.reference_records, config.seed)), path);
    write_manifest(path, config, {"synth-reference", {"seed", "reference_records"}, ""});
    return path;
}

fs::path fit_schema_stage(const PipelineConfig& config, const fs::path& input, const fs::path& out) {
    log_config("fit-schema", config);
    const auto data = load_trace(input);
    ensure_dir(out);
    const auto path = out / kSchemaFile;
    save_schema(fit_schema(data, config.schema_options()), path);
    write_manifest(path, config, schema_identity(sha256_file(input)));
    return path;
}

fs::path train_embeddings_stage(const PipelineConfig& config, const fs::path& input, const fs::path& out) {
    log_config("train-embeddings", config);
    const auto sha = sha256_file(input);
    verify_artifact(out / kSchemaFile, config, schema_identity(sha));
    const auto data = load_trace(input);
    const auto schema = load_schema(out / kSchemaFile);
    const auto result = train_embeddings(data, schema, config.embedding_options());
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
        spdlog::info("train-embeddings: epoch {} loss {:.6f}", e + 1, result.epoch_loss[e]);
    const auto path = out / kEmbeddingFile;
    save_embeddings(result.table, path);
    write_manifest(path, config, embedding_identity(sha), {{kSchemaFile, sha256_file(out / kSchemaFile)}});
    return path;
}

fs::path pretrain_gnn_stage(const PipelineConfig& config, const fs::path& input, const fs::path& out) {
    log_config("pretrain-gnn", config);
    const auto sha = sha256_file(input);
    verify_artifact(out / kSchemaFile, config, schema_identity(sha));
    verify_artifact(out / kEmbeddingFile, config, embedding_identity(sha));
    const auto data = load_trace(input);
    const auto schema = load_schema(out / kSchemaFile);
    const auto table = load_embeddings(out / kEmbeddingFile);
    const auto model = pretrain_autoencoder(data, schema, table, config.autoencoder_config());

    std::ofstream loss(out / kAutoencoderLossFile, std::ios::trunc);
    if (!loss) throw IoError("cannot write " + (out / kAutoencoderLossFile).string());
    loss << "epoch,reconstruction_loss\n";
    for (std::size_t e = 0; e < model.loss_history.size(); ++e)
        loss << e + 1 << ',' << detail::format_double(model.loss_history[e]) << '\n';
    loss.close();
    spdlog::info("pretrain-gnn: reconstruction loss {:.6f} -> {:.6f}", model.loss_history.front(),
                 model.loss_history.back());

    const auto path = out / kAutoencoderFile;
    diff::save_checkpoint(path, model.parameters());
    write_manifest(path, config, autoencoder_identity(sha), {{kEmbeddingFile, sha256_file(out / kEmbeddingFile)}});
    return path;
}

namespace {

struct VariantAssets {
    FieldSchema schema;
    std::optional<EmbeddingTable> table;
    std::shared_ptr<GnnModel> gnn;
};

VariantAssets load_assets(const PipelineConfig& config, const fs::path& out, Variant v, const std::string& sha) {
    VariantAssets a;
    verify_artifact(out / kSchemaFile, config, schema_identity(sha));
    a.schema = load_schema(out / kSchemaFile);
    if (v != Variant::onehot_wgan) {
        verify_artifact(out / kEmbeddingFile, config, embedding_identity(sha));
        a.table = load_embeddings(out / kEmbeddingFile);
        a.table->check_against(a.schema);
    }
    if (v == Variant::word2vec_gnn_wgan) {
        verify_artifact(out / kAutoencoderFile, config, autoencoder_identity(sha));
        auto ae = make_autoencoder(config.autoencoder_config(), kFieldCount * config.embed_dim);
        auto params = ae.parameters();
        diff::load_checkpoint(out / kAutoencoderFile, params);
        a.gnn = std::make_shared<GnnModel>(ae.encoder);
    }
    return a;
}

GeneratorModel load_generator(const PipelineConfig& config, const fs::path& out, Variant v,
                              const VariantAssets& assets) {
    const auto tc = config.train_config(v);
    const Layout layout = v == Variant::onehot_wgan ? onehot_layout(assets.schema) : embedding_layout(config.embed_dim);
    GeneratorModel g = make_generator(tc, layout);
    auto params = g.parameters();
    diff::load_checkpoint(variant_dir(out, v) / kGeneratorFile, params);
    return g;
}

}  // namespace

fs::path train_stage(const PipelineConfig& config, const fs::path& input, const fs::path& out, Variant variant) {
    log_config("train", config);
    const auto sha = sha256_file(input);
    const auto data = load_trace(input);
    const auto assets = load_assets(config, out, variant, sha);
    const auto dir = variant_dir(out, variant);
    ensure_dir(dir);

    auto tc = config.train_config(variant);
    if (tc.checkpoint_every > 0) tc.checkpoint_dir = dir;
    const auto result =
        train(data, assets.schema, assets.table ? &*assets.table : nullptr, assets.gnn, tc);
    result.report.write_csv(dir / kTrainReportFile, tc.n_critic);
    if (!result.report.generator_losses.empty())
        spdlog::info("train[{}]: {} steps, final critic loss {:.6g}, generator loss {:.6g}", variant_name(variant),
                     tc.generator_steps, result.report.critic_losses.back(), result.report.generator_losses.back());

    const auto path = dir / kGeneratorFile;
    diff::save_checkpoint(path, result.generator.parameters());
    write_manifest(path, config, generator_identity(sha, variant));
    return path;
}

fs::path generate_stage(const PipelineConfig& config, const fs::path& out, Variant variant, std::size_t count) {
    log_config("generate", config);
    const auto ckpt = variant_dir(out, variant) / kGeneratorFile;
    if (!fs::exists(ckpt)) throw DataError("missing artifact " + ckpt.string() + " (run `train` first)");
    const auto sha = recorded_input(ckpt);
    verify_artifact(ckpt, config, generator_identity(sha, variant));
    const auto assets = load_assets(config, out, variant, sha);
    const auto generator = load_generator(config, out, variant, assets);
    const auto trace = sample_trace(generator, count, assets.schema, assets.table ? &*assets.table : nullptr,
                                    config.train_config(variant).seed);
    if (trace.empty()) throw DataError("generate: count must be positive");
    const auto path = variant_dir(out, variant) / kSyntheticFile;
    write_csv(trace, path);
    write_manifest(path, config, synthetic_identity(variant), {{kGeneratorFile, sha256_file(ckpt)}});
    return path;
}

std::vector<FidelityRow> evaluate_stage(const PipelineConfig& config, const fs::path& real, const fs::path& synth,
                                        const std::string& label, const std::optional<fs::path>& out) {
    const auto rows = evaluate(load_trace(real), load_trace(synth), label, MetricOptions{config.metric_bins});
    if (out) emit_report(rows, *out);
    return rows;
}

std::vector<FidelityRow> experiment(const PipelineConfig& config, const fs::path& input, const fs::path& out) {
    log_config("experiment", config);
    ensure_dir(out);
    const auto sha = sha256_file(input);

    // Reuse an intermediate only when its manifest matches; a mismatch aborts instead of overwriting.
    const auto stage = [&](const fs::path& artifact, const StageIdentity& id, const std::function<void()>& run) {
        if (fs::exists(artifact)) {
            verify_artifact(artifact, config, id);
            spdlog::info("experiment: reusing {}", artifact.string());
            return;
        }
        run();
    };

    stage(out / kSchemaFile, schema_identity(sha), [&] { fit_schema_stage(config, input, out); });
    stage(out / kEmbeddingFile, embedding_identity(sha), [&] { train_embeddings_stage(config, input, out); });
    stage(out / kAutoencoderFile, autoencoder_identity(sha), [&] { pretrain_gnn_stage(config, input, out); });

    const auto real = load_trace(input);
    const std::size_t count = config.sample_count > 0 ? config.sample_count : real.size();
    std::vector<FidelityRow> rows;
    for (Variant v : kAllVariants) {
        const auto dir = variant_dir(out, v);
        stage(dir / kGeneratorFile, generator_identity(sha, v), [&] { train_stage(config, input, out, v); });
        stage(dir / kSyntheticFile, synthetic_identity(v), [&] { generate_stage(config, out, v, count); });
        auto variant_rows = evaluate(real, read_csv(dir / kSyntheticFile), std::string(variant_name(v)),
                                     MetricOptions{config.metric_bins});
        spdlog::info("experiment[{}]: mean JS {:.4f}", variant_name(v), mean_js(variant_rows));
        rows.insert(rows.end(), variant_rows.begin(), variant_rows.end());
    }
    emit_report(rows, out);
    return rows;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return 1;
    if (dynamic_cast<const NumericError*>(&e)) return 3;
    if (dynamic_cast<const IoError*>(&e)) return 4;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 2;
    if (dynamic_cast<const std::invalid_argument*>(&e)) return 1;
    return 2;
}

}  // namespace tracegan::pipeline
