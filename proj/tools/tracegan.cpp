#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>

#include "tracegan/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tracegan;
using namespace tracegan::pipeline;

namespace {

std::string kebab(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

/// Options every subcommand accepts: --config plus one flag per configuration key.
struct CommonOptions {
    std::string config_file;
    std::map<std::string, std::string> overrides;

    void attach(CLI::App& cmd) {
        cmd.add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
        for (const auto& key : config_keys()) {
            cmd.add_option_function<std::string>(
                "--" + kebab(key), [this, key](const std::string& v) { overrides[key] = v; }, config_help(key));
        }
    }

    PipelineConfig resolve() const {
        PipelineConfig config;
        if (!config_file.empty()) apply_config_file(config, config_file);
        for (const auto& [key, value] : overrides) {
            try {
                set_config_value(config, key, value);
            } catch (const UsageError& e) {
                throw UsageError("--" + kebab(key) + ": " + e.what());
            }
        }
        return config;
    }
};

Variant parse_variant(const std::string& name) {
    if (const auto v = variant_from_name(name)) return *v;
    throw UsageError("unknown variant '" + name + "' (expected onehot-wgan, word2vec-wgan or word2vec-gnn-wgan)");
}

void print_rows(const std::vector<FidelityRow>& rows) {
    std::printf("%-20s %-9s %-9s %s\n", "variant", "field", "metric", "value");
    for (const auto& r : rows)
        std::printf("%-20s %-9s %-9s %.6f\n", r.variant.c_str(), std::string(field_name(r.field)).c_str(),
                    std::string(metric_name(r.metric)).c_str(), r.value);
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("tracegan"));
    spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

    CLI::App app{"Synthetic packet-header trace generation with embedding-aware GANs"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "only log warnings and errors");

    CommonOptions common;
    std::string input, out = ".", variant_name_arg = "word2vec-gnn-wgan", real, synth, label = "synthetic";
    std::size_t count = 0;
    std::optional<std::string> eval_out;

    auto* synth_ref = app.add_subcommand("synth-reference", "generate the correlated reference trace");
    auto* fit = app.add_subcommand("fit-schema", "fit vocabularies and bucket edges");
    auto* embed = app.add_subcommand("train-embeddings", "train skip-gram field embeddings");
    auto* pretrain = app.add_subcommand("pretrain-gnn", "pretrain the GNN autoencoder");
    auto* train_cmd = app.add_subcommand("train", "train one GAN variant");
    auto* gen = app.add_subcommand("generate", "sample a synthetic trace from a trained generator");
    auto* eval = app.add_subcommand("evaluate", "per-field fidelity of a synthetic trace");
    auto* exp = app.add_subcommand("experiment", "all stages for the three variants on one trace");

    for (auto* cmd : {synth_ref, fit, embed, pretrain, train_cmd, gen, eval, exp}) common.attach(*cmd);
    for (auto* cmd : {synth_ref, fit, embed, pretrain, train_cmd, gen, exp})
        cmd->add_option("--out", out, "artifact directory")->capture_default_str();
    for (auto* cmd : {fit, embed, pretrain, train_cmd, exp})
        cmd->add_option("--input", input, "input trace (.csv or .pcap)")->required()->check(CLI::ExistingFile);
    for (auto* cmd : {train_cmd, gen})
        cmd->add_option("--variant", variant_name_arg, "onehot-wgan, word2vec-wgan or word2vec-gnn-wgan")
            ->capture_default_str();
    gen->add_option("--count", count, "records to sample (default: sample_count, else reference_records)");
    eval->add_option("--real", real, "real trace")->required()->check(CLI::ExistingFile);
    eval->add_option("--synth", synth, "synthetic trace")->required()->check(CLI::ExistingFile);
    eval->add_option("--label", label, "variant label for the output rows")->capture_default_str();
    eval->add_option("--out", eval_out, "write metrics.csv and report.svg here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    if (quiet) spdlog::set_level(spdlog::level::warn);

    try {
        const PipelineConfig config = common.resolve();
        if (synth_ref->parsed()) {
            std::cout << synth_reference(config, out).string() << '\n';
        } else if (fit->parsed()) {
            std::cout << fit_schema_stage(config, input, out).string() << '\n';
        } else if (embed->parsed()) {
            std::cout << train_embeddings_stage(config, input, out).string() << '\n';
        } else if (pretrain->parsed()) {
            std::cout << pretrain_gnn_stage(config, input, out).string() << '\n';
        } else if (train_cmd->parsed()) {
            std::cout << train_stage(config, input, out, parse_variant(variant_name_arg)).string() << '\n';
        } else if (gen->parsed()) {
            if (count == 0) count = config.sample_count > 0 ? config.sample_count : config.reference_records;
            std::cout << generate_stage(config, out, parse_variant(variant_name_arg), count).string() << '\n';
        } else if (eval->parsed()) {
            std::optional<fs::path> dir;
            if (eval_out) dir = *eval_out;
            print_rows(evaluate_stage(config, real, synth, label, dir));
        } else if (exp->parsed()) {
            const auto rows = experiment(config, input, out);
            print_rows(rows);
            for (Variant v : kAllVariants) {
                std::vector<FidelityRow> subset;
                std::copy_if(rows.begin(), rows.end(), std::back_inserter(subset),
                             [&](const FidelityRow& r) { return r.variant == variant_name(v); });
                std::printf("mean JS %-20s %.6f\n", std::string(variant_name(v)).c_str(), mean_js(subset));
            }
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return exit_code_for(e);
    }
    return 0;
}
