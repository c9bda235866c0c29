#include "tracegan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "detail/text.hpp"
#include "tracegan/error.hpp"

namespace tracegan {

FieldHistogram discrete_histogram(std::span<const std::string> values, std::span<const std::string> support) {
    if (values.empty()) throw DataError("histogram: no values");
    FieldHistogram h;
    h.discrete = true;
    h.support.assign(support.begin(), support.end());
    std::unordered_map<std::string_view, std::size_t> slot;
    for (std::size_t i = 0; i < h.support.size(); ++i) slot.emplace(h.support[i], i);
    h.mass.assign(h.support.size(), 0.0);
    for (const auto& v : values) {
        const auto it = slot.find(v);
        if (it == slot.end()) throw DataError("histogram: token '" + v + "' is outside the support");
        h.mass[it->second] += 1.0;
    }
    for (double& m : h.mass) m /= static_cast<double>(values.size());
    return h;
}

FieldHistogram continuous_histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
    if (values.empty()) throw DataError("histogram: no values");
    if (bins == 0) throw DataError("histogram: need at least one bin");
    if (hi < lo) throw DataError("histogram: hi < lo");
    FieldHistogram h;
    h.discrete = false;
    h.lo = lo;
    h.hi = hi;
    h.mass.assign(bins, 0.0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double v : values) {
        std::size_t b = 0;
        if (width > 0.0) {
            const double pos = std::floor((v - lo) / width);
            b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
        }
        h.mass[b] += 1.0;
    }
    for (double& m : h.mass) m /= static_cast<double>(values.size());
    return h;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw DataError("js_divergence: support sizes differ");
    double js = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) js += 0.5 * p[i] * std::log2(p[i] / m);
        if (q[i] > 0.0) js += 0.5 * q[i] * std::log2(q[i] / m);
    }
    return std::clamp(js, 0.0, 1.0);
}

double js_divergence(const FieldHistogram& p, const FieldHistogram& q) {
    if (p.discrete != q.discrete || p.support != q.support || p.mass.size() != q.mass.size())
        throw DataError("js_divergence: histograms do not share a support");
    return js_divergence(p.mass, q.mass);
}

double emd_normalized(const FieldHistogram& p, const FieldHistogram& q) {
    if (p.discrete || q.discrete) throw DataError("emd_normalized: needs continuous histograms");
    if (p.mass.size() != q.mass.size() || p.lo != q.lo || p.hi != q.hi)
        throw DataError("emd_normalized: histograms do not share bins");
    if (!(p.hi > p.lo)) return 0.0;
    // EMD / (hi - lo) with bin width (hi - lo) / B reduces to sum|cdf diff| / B.
    double cp = 0.0, cq = 0.0, total = 0.0;
    for (std::size_t i = 0; i < p.mass.size(); ++i) {
        cp += p.mass[i];
        cq += q.mass[i];
        total += std::abs(cp - cq);
    }
    return std::clamp(total / static_cast<double>(p.mass.size()), 0.0, 1.0);
}

std::string_view metric_name(MetricKind m) { return m == MetricKind::js ? "js" : "emd_norm"; }

std::vector<FidelityRow> evaluate(const TraceDataset& real, const TraceDataset& synth, const std::string& variant,
                                  const MetricOptions& options) {
    if (real.empty() || synth.empty()) throw DataError("evaluate: both datasets must be non-empty");
    std::vector<FidelityRow> rows;
    for (Field f : kAllFields) {
        if (is_discrete(f)) {
            std::vector<std::string> a, b;
            a.reserve(real.size());
            b.reserve(synth.size());
            for (const auto& r : real.records) a.push_back(discrete_token(r, f));
            for (const auto& r : synth.records) b.push_back(discrete_token(r, f));
            std::set<std::string> union_set(a.begin(), a.end());
            union_set.insert(b.begin(), b.end());
            const std::vector<std::string> support(union_set.begin(), union_set.end());
            rows.push_back({variant, f, MetricKind::js,
                            js_divergence(discrete_histogram(a, support), discrete_histogram(b, support))});
            continue;
        }
        std::vector<double> a, b;
        for (const auto& r : real.records) a.push_back(continuous_value(r, f));
        for (const auto& r : synth.records) b.push_back(continuous_value(r, f));
        const double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
        const double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
        rows.push_back({variant, f, MetricKind::emd_norm,
                        emd_normalized(continuous_histogram(a, lo, hi, options.bins),
                                       continuous_histogram(b, lo, hi, options.bins))});
    }
    return rows;
}

double mean_js(std::span<const FidelityRow> rows) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
        if (r.metric == MetricKind::js) {
            total += r.value;
            ++n;
        }
    if (n == 0) throw DataError("mean_js: no JS rows");
    return total / static_cast<double>(n);
}

void write_metrics_csv(std::span<const FidelityRow> rows, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "variant,field,metric,value\n";
    for (const auto& r : rows)
        out << r.variant << ',' << field_name(r.field) << ',' << metric_name(r.metric) << ','
            << detail::format_double(r.value) << '\n';
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw IoError("cannot write " + path.string());
    file << out.str();
    if (!file) throw IoError("write failed: " + path.string());
}

std::vector<FidelityRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "variant,field,metric,value")
        throw DataError(path.string() + ": unexpected metrics header");
    std::vector<FidelityRow> rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split(detail::trim(line), ',');
        const auto where = path.string() + ": row " + std::to_string(n);
        if (cells.size() != 4) throw DataError(where + ": expected 4 columns");
        const auto field = field_from_name(cells[1]);
        const auto value = detail::parse_number<double>(cells[3]);
        if (!field || !value || (cells[2] != "js" && cells[2] != "emd_norm")) throw DataError(where + ": bad cell");
        rows.push_back({std::string(cells[0]), *field, cells[2] == "js" ? MetricKind::js : MetricKind::emd_norm, *value});
    }
    return rows;
}

std::string render_report_svg(std::span<const FidelityRow> rows) {
    std::vector<std::string> variants;
    for (const auto& r : rows)
        if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);

    static constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948"};
    constexpr double kPanelWidth = 520.0, kPanelHeight = 300.0, kTop = 50.0, kLeft = 50.0, kGap = 80.0;

    std::ostringstream svg;
    svg << R"(<?xml version="1.0" encoding="UTF-8"?>)" << '\n'
        << R"(<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width=")"
        << kLeft * 2 + kPanelWidth * 2 + kGap << R"(" height=")" << kTop + kPanelHeight + 110 << R"(">)" << '\n'
        << R"(<rect x="0" y="0" width="100%" height="100%" fill="white"/>)" << '\n';

    const auto panel = [&](MetricKind metric, double x0, const char* title) {
        std::vector<Field> fields;
        for (Field f : kAllFields)
            if (is_discrete(f) == (metric == MetricKind::js)) fields.push_back(f);
        const double group_w = kPanelWidth / static_cast<double>(fields.size());
        const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, variants.size()));
        svg << "<g class=\"panel\" data-metric=\"" << metric_name(metric) << "\">\n"
            << "<text x=\"" << x0 + kPanelWidth / 2 << "\" y=\"" << kTop - 20
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n"
            << "<line x1=\"" << x0 << "\" y1=\"" << kTop + kPanelHeight << "\" x2=\"" << x0 + kPanelWidth
            << "\" y2=\"" << kTop + kPanelHeight << "\" stroke=\"black\"/>\n"
            << "<line x1=\"" << x0 << "\" y1=\"" << kTop << "\" x2=\"" << x0 << "\" y2=\"" << kTop + kPanelHeight
            << "\" stroke=\"black\"/>\n";
        for (int t = 0; t <= 4; ++t) {
            const double y = kTop + kPanelHeight * (1.0 - t / 4.0);
            svg << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << t / 4.0 << "</text>\n";
        }
        for (std::size_t g = 0; g < fields.size(); ++g) {
            const double gx = x0 + group_w * static_cast<double>(g) + group_w * 0.1;
            svg << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << kTop + kPanelHeight + 16
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << field_name(fields[g])
                << "</text>\n";
            for (const auto& r : rows) {
                if (r.metric != metric || r.field != fields[g]) continue;
                const auto vi = static_cast<std::size_t>(
                    std::find(variants.begin(), variants.end(), r.variant) - variants.begin());
                const double h = kPanelHeight * std::clamp(r.value, 0.0, 1.0);
                svg << "<rect class=\"bar\" data-variant=\"" << r.variant << "\" data-field=\""
                    << field_name(r.field) << "\" data-value=\"" << detail::format_double(r.value) << "\" x=\""
                    << gx + bar_w * static_cast<double>(vi) << "\" y=\"" << kTop + kPanelHeight - h << "\" width=\""
                    << bar_w << "\" height=\"" << h << "\" fill=\"" << kPalette[vi % std::size(kPalette)]
                    << "\"><title>" << r.variant << " " << field_name(r.field) << " = "
                    << detail::format_double(r.value) << "</title></rect>\n";
            }
        }
        svg << "</g>\n";
    };
    panel(MetricKind::js, kLeft, "JS divergence (discrete fields)");
    panel(MetricKind::emd_norm, kLeft + kPanelWidth + kGap, "Normalized EMD (continuous fields)");

    for (std::size_t v = 0; v < variants.size(); ++v) {
        const double x = kLeft + 200.0 * static_cast<double>(v);
        const double y = kTop + kPanelHeight + 50;
        svg << "<rect class=\"legend\" x=\"" << x << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\""
            << kPalette[v % std::size(kPalette)] << "\"/>\n"
            << "<text x=\"" << x + 18 << "\" y=\"" << y + 10 << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << variants[v] << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void emit_report(std::span<const FidelityRow> rows, const std::filesystem::path& out_dir) {
    if (rows.empty()) throw DataError("emit_report: no metric rows");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    write_metrics_csv(rows, out_dir / "metrics.csv");
    std::ofstream svg(out_dir / "report.svg", std::ios::trunc);
    if (!svg) throw IoError("cannot write " + (out_dir / "report.svg").string());
    svg << render_report_svg(rows);
    if (!svg) throw IoError("write failed: " + (out_dir / "report.svg").string());
}

}  // namespace tracegan
