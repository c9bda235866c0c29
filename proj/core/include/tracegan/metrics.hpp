#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tracegan/trace_io.hpp"

namespace tracegan {

/// Normalized histogram of one field: token masses (discrete) or bin masses over [lo, hi] (continuous).
struct FieldHistogram {
    bool discrete = true;
    std::vector<std::string> support;  ///< discrete tokens, sorted
    std::vector<double> mass;          ///< one entry per token or bin, sums to 1
    double lo = 0.0;
    double hi = 0.0;
};

/// Token frequencies over `support` (tokens absent from the values get mass 0).
/// Every value must appear in `support`.
FieldHistogram discrete_histogram(std::span<const std::string> values, std::span<const std::string> support);
/// Equal-width bins over [lo, hi]; values equal to hi land in the last bin; lo == hi puts all mass in bin 0.
FieldHistogram continuous_histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

/// Jensen-Shannon divergence in bits, in [0, 1].
double js_divergence(const FieldHistogram& p, const FieldHistogram& q);
double js_divergence(std::span<const double> p, std::span<const double> q);

/// 1-D earth mover's distance over shared bins divided by the value range (hi - lo).
double emd_normalized(const FieldHistogram& p, const FieldHistogram& q);

enum class MetricKind { js, emd_norm };
std::string_view metric_name(MetricKind m);

struct FidelityRow {
    std::string variant;
    Field field;
    MetricKind metric;
    double value;
};

struct MetricOptions {
    std::size_t bins = 100;
};

/// JS for the seven discrete fields, normalized EMD for the three continuous ones, canonical field order.
std::vector<FidelityRow> evaluate(const TraceDataset& real, const TraceDataset& synth, const std::string& variant,
                                  const MetricOptions& options = {});

/// Mean JS over the discrete-field rows of `rows`.
double mean_js(std::span<const FidelityRow> rows);

void write_metrics_csv(std::span<const FidelityRow> rows, const std::filesystem::path& path);
std::vector<FidelityRow> read_metrics_csv(const std::filesystem::path& path);
/// Two-panel grouped bar chart (JS left, normalized EMD right), one bar per row.
std::string render_report_svg(std::span<const FidelityRow> rows);

/// Writes metrics.csv and report.svg into `out_dir` (created if missing).
void emit_report(std::span<const FidelityRow> rows, const std::filesystem::path& out_dir);

}  // namespace tracegan
