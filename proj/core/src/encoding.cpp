#include "tracegan/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <unordered_set>

#include "tracegan/error.hpp"
#include "tracegan/rng.hpp"

namespace tracegan {

// ---- FieldSpec -------------------------------------------------------------

FieldSpec FieldSpec::discrete(Field f, std::vector<std::string> vocab, std::string oov_value) {
    if (!tracegan::is_discrete(f)) throw DataError(std::string(field_name(f)) + " is not a discrete field");
    if (vocab.empty()) throw DataError(std::string(field_name(f)) + ": vocabulary must not be empty");
    FieldSpec s;
    s.field_ = f;
    for (std::size_t i = 0; i < vocab.size(); ++i)
        if (!s.lookup_.emplace(vocab[i], i).second)
            throw DataError(std::string(field_name(f)) + ": duplicate vocabulary token '" + vocab[i] + "'");
    s.vocab_ = std::move(vocab);
    s.oov_value_ = oov_value.empty() ? s.vocab_.front() : std::move(oov_value);
    return s;
}

FieldSpec FieldSpec::continuous(Field f, std::vector<double> edges) {
    if (tracegan::is_discrete(f)) throw DataError(std::string(field_name(f)) + " is not a continuous field");
    if (edges.size() < 2) throw DataError(std::string(field_name(f)) + ": need at least two bucket edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (!std::isfinite(edges[i])) throw DataError(std::string(field_name(f)) + ": non-finite bucket edge");
        if (i > 0 && !(edges[i] > edges[i - 1]))
            throw DataError(std::string(field_name(f)) + ": bucket edges must be strictly ascending");
    }
    FieldSpec s;
    s.field_ = f;
    s.edges_ = std::move(edges);
    return s;
}

std::size_t FieldSpec::cardinality() const { return is_discrete() ? vocab_.size() + 1 : edges_.size() - 1; }

std::size_t FieldSpec::token_index(const std::string& token) const {
    const auto it = lookup_.find(token);
    return it == lookup_.end() ? oov_index() : it->second;
}

std::size_t FieldSpec::bucket_index(double value) const {
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), value);
    const auto pos = static_cast<std::ptrdiff_t>(it - edges_.begin()) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(pos, 0, static_cast<std::ptrdiff_t>(cardinality()) - 1));
}

double FieldSpec::bucket_midpoint(std::size_t bucket) const { return 0.5 * (edges_[bucket] + edges_[bucket + 1]); }

std::size_t FieldSpec::index_of(const HeaderRecord& r) const {
    return is_discrete() ? token_index(discrete_token(r, field_)) : bucket_index(continuous_value(r, field_));
}

void FieldSpec::assign(HeaderRecord& r, std::size_t index) const {
    if (index >= cardinality())
        throw std::out_of_range(std::string(field_name(field_)) + ": slot " + std::to_string(index) + " out of range");
    if (is_discrete())
        set_discrete(r, field_, index == oov_index() ? oov_value_ : vocab_[index]);
    else
        set_continuous(r, field_, bucket_midpoint(index));
}

std::string FieldSpec::slot_token(std::size_t index) const {
    std::string prefix = std::string(field_name(field_)) + ":";
    if (!is_discrete()) return prefix + "#" + std::to_string(index);
    return prefix + (index == oov_index() ? std::string("<oov>") : vocab_[index]);
}

// ---- FieldSchema --------------------------------------------------------------

FieldSchema::FieldSchema(std::vector<FieldSpec> fields) : fields_(std::move(fields)) {
    if (fields_.size() != kFieldCount) throw DataError("schema must describe exactly 10 fields");
    for (std::size_t i = 0; i < kFieldCount; ++i)
        if (fields_[i].field() != kAllFields[i]) throw DataError("schema fields are not in canonical order");
}

bool FieldSchema::operator==(const FieldSchema& other) const {
    if (fields_.size() != other.fields_.size()) return false;
    for (std::size_t i = 0; i < fields_.size(); ++i) {
        const auto& a = fields_[i];
        const auto& b = other.fields_[i];
        if (a.field() != b.field() || a.vocab() != b.vocab() || a.oov_value() != b.oov_value() ||
            a.edges() != b.edges())
            return false;
    }
    return true;
}

namespace {

std::vector<double> equal_width_edges(double lo, double hi, std::size_t buckets) {
    std::vector<double> edges(buckets + 1);
    for (std::size_t i = 0; i <= buckets; ++i)
        edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(buckets);
    edges.back() = hi;
    return edges;
}

std::vector<double> quantile_edges(std::vector<double> values, std::size_t buckets) {
    std::sort(values.begin(), values.end());
    std::vector<double> edges;
    for (std::size_t i = 0; i <= buckets; ++i) {
        const auto pos = static_cast<std::size_t>(
            std::llround(static_cast<double>(i) / static_cast<double>(buckets) * static_cast<double>(values.size() - 1)));
        const double e = values[pos];
        if (edges.empty() || e > edges.back()) edges.push_back(e);
    }
    return edges;
}

}  // namespace

FieldSchema fit_schema(const TraceDataset& dataset, const SchemaOptions& options) {
    if (dataset.empty()) throw DataError("fit_schema: dataset is empty");
    if (options.max_vocab == 0) throw DataError("fit_schema: max_vocab must be at least 1");
    if (options.buckets_per_field == 0) throw DataError("fit_schema: buckets_per_field must be at least 1");

    std::vector<FieldSpec> specs;
    for (Field f : kAllFields) {
        if (is_discrete(f)) {
            std::map<std::string, std::size_t> counts;
            for (const auto& r : dataset.records) ++counts[discrete_token(r, f)];
            std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const auto& a, const auto& b) { return a.second > b.second; });
            std::vector<std::string> vocab;
            const std::size_t keep = std::min(options.max_vocab, ranked.size());
            for (std::size_t i = 0; i < keep; ++i) vocab.push_back(ranked[i].first);
            std::string oov = keep < ranked.size() ? ranked[keep].first : vocab.front();
            specs.push_back(FieldSpec::discrete(f, std::move(vocab), std::move(oov)));
            continue;
        }
        std::vector<double> values;
        values.reserve(dataset.size());
        for (const auto& r : dataset.records) values.push_back(continuous_value(r, f));
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        std::vector<double> edges;
        if (*hi > *lo) {
            edges = options.bucket_mode == BucketMode::quantile ? quantile_edges(values, options.buckets_per_field)
                                                                : equal_width_edges(*lo, *hi, options.buckets_per_field);
        }
        if (edges.size() < 2) {
            spdlog::warn("fit_schema: field {} is constant ({}); using a single bucket", field_name(f), *lo);
            edges = {*lo - 0.5, *lo + 0.5};
        }
        specs.push_back(FieldSpec::continuous(f, std::move(edges)));
    }
    return FieldSchema(std::move(specs));
}

std::size_t total_onehot_dim(const FieldSchema& schema) {
    std::size_t total = 0;
    for (const auto& s : schema.fields()) total += s.cardinality();
    return total;
}

// ---- schema JSON -------------------------------------------------------------------

std::string schema_to_json(const FieldSchema& schema) {
    nlohmann::json fields = nlohmann::json::array();
    for (const auto& s : schema.fields()) {
        nlohmann::json f;
        f["name"] = field_name(s.field());
        if (s.is_discrete()) {
            f["kind"] = "discrete";
            f["vocab"] = s.vocab();
            f["oov_value"] = s.oov_value();
        } else {
            f["kind"] = "continuous";
            f["edges"] = s.edges();
        }
        fields.push_back(std::move(f));
    }
    return nlohmann::json{{"version", 1}, {"fields", std::move(fields)}}.dump(2);
}

FieldSchema schema_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
        std::vector<FieldSpec> specs;
        for (const auto& f : doc.at("fields")) {
            const auto name = f.at("name").get<std::string>();
            const auto field = field_from_name(name);
            if (!field) throw DataError("schema: unknown field '" + name + "'");
            const auto kind = f.at("kind").get<std::string>();
            if (kind == "discrete")
                specs.push_back(FieldSpec::discrete(*field, f.at("vocab").get<std::vector<std::string>>(),
                                                    f.value("oov_value", std::string{})));
            else if (kind == "continuous")
                specs.push_back(FieldSpec::continuous(*field, f.at("edges").get<std::vector<double>>()));
            else
                throw DataError("schema: unknown kind '" + kind + "'");
        }
        return FieldSchema(std::move(specs));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("schema: ") + e.what());
    }
}

void save_schema(const FieldSchema& schema, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << schema_to_json(schema) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

FieldSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return schema_from_json(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

// ---- layouts and one-hot --------------------------------------------------------------

std::vector<std::array<std::size_t, 2>> Layout::ranges() const {
    std::vector<std::array<std::size_t, 2>> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back({s.offset, s.width});
    return out;
}

Layout onehot_layout(const FieldSchema& schema) {
    Layout l;
    l.kind = EncodingKind::onehot;
    for (const auto& s : schema.fields()) {
        l.slices.push_back({s.field(), l.total_width, s.cardinality()});
        l.total_width += s.cardinality();
    }
    return l;
}

EncodedBatch encode_onehot(std::span<const HeaderRecord> records, const FieldSchema& schema) {
    EncodedBatch b{diff::Matrix(), onehot_layout(schema)};
    b.data = diff::Matrix::Zero(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(b.layout.total_width));
    for (std::size_t r = 0; r < records.size(); ++r)
        for (const auto& slice : b.layout.slices)
            b.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(slice.offset + schema[slice.field].index_of(records[r]))) = 1.0;
    return b;
}

// ---- embeddings -------------------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::size_t dim, std::vector<diff::Matrix> per_field)
    : dim_(dim), tables_(std::move(per_field)) {
    if (tables_.size() != kFieldCount) throw DataError("embedding table must hold 10 field matrices");
    for (const auto& t : tables_) {
        if (static_cast<std::size_t>(t.cols()) != dim_ || t.rows() == 0)
            throw DataError("embedding table: matrix shape does not match dimension " + std::to_string(dim_));
        if (!t.allFinite()) throw DataError("embedding table: non-finite entry");
    }
}

bool EmbeddingTable::operator==(const EmbeddingTable& other) const {
    if (dim_ != other.dim_ || tables_.size() != other.tables_.size()) return false;
    for (std::size_t i = 0; i < tables_.size(); ++i)
        if (tables_[i].rows() != other.tables_[i].rows() || tables_[i] != other.tables_[i]) return false;
    return true;
}

void EmbeddingTable::check_against(const FieldSchema& schema) const {
    for (const auto& s : schema.fields())
        if (static_cast<std::size_t>(field(s.field()).rows()) != s.cardinality())
            throw DataError("embedding table does not match schema for field " + std::string(field_name(s.field())));
}

namespace {

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

EmbeddingResult train_embeddings(const TraceDataset& dataset, const FieldSchema& schema,
                                 const EmbeddingOptions& options) {
    if (dataset.empty()) throw DataError("train_embeddings: dataset is empty");
    if (options.dim < 2) throw DataError("train_embeddings: dimension must be at least 2");
    if (options.epochs == 0) throw DataError("train_embeddings: epochs must be at least 1");

    // One vocabulary over all fields: field f occupies ids [offset[f], offset[f] + K_f).
    std::array<std::size_t, kFieldCount> offset{};
    std::size_t vocab_size = 0;
    for (Field f : kAllFields) {
        offset[field_index(f)] = vocab_size;
        vocab_size += schema[f].cardinality();
    }

    std::vector<std::array<std::size_t, kFieldCount>> sentences(dataset.size());
    std::vector<double> counts(vocab_size, 0.0);
    for (std::size_t r = 0; r < dataset.size(); ++r)
        for (Field f : kAllFields) {
            const std::size_t id = offset[field_index(f)] + schema[f].index_of(dataset.records[r]);
            sentences[r][field_index(f)] = id;
            counts[id] += 1.0;
        }

    // Negative distribution: unigram^0.75 over observed tokens.
    std::vector<double> cumulative(vocab_size);
    std::size_t observed = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < vocab_size; ++i) {
        if (counts[i] > 0.0) ++observed;
        acc += std::pow(counts[i], 0.75);
        cumulative[i] = acc;
    }
    std::size_t negatives = options.negatives;
    if (observed < negatives + 1) {
        const std::size_t reduced = observed > 0 ? observed - 1 : 0;
        spdlog::warn("train_embeddings: only {} distinct tokens; reducing negatives from {} to {}", observed,
                     negatives, reduced);
        negatives = reduced;
    }

    Rng rng(options.seed);
    const auto dim = static_cast<Eigen::Index>(options.dim);
    diff::Matrix input(static_cast<Eigen::Index>(vocab_size), dim);
    for (Eigen::Index i = 0; i < input.size(); ++i)
        input.data()[i] = (rng.uniform() - 0.5) / static_cast<double>(options.dim);
    diff::Matrix output = diff::Matrix::Zero(static_cast<Eigen::Index>(vocab_size), dim);

    const auto draw_negative = [&] {
        const double u = rng.uniform() * acc;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cumulative.begin(), static_cast<std::ptrdiff_t>(vocab_size) - 1));
    };

    const double total_pairs = static_cast<double>(options.epochs * dataset.size() * kFieldCount * (kFieldCount - 1));
    double processed = 0.0;
    Eigen::RowVectorXd update(dim);

    EmbeddingResult result;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t pairs = 0;
        for (const auto& sentence : sentences) {
            for (std::size_t c = 0; c < kFieldCount; ++c) {
                const auto center = static_cast<Eigen::Index>(sentence[c]);
                for (std::size_t o = 0; o < kFieldCount; ++o) {
                    if (o == c) continue;
                    const double lr = options.learning_rate * std::max(1e-4, 1.0 - processed / total_pairs);
                    processed += 1.0;
                    update.setZero();
                    const std::size_t target = sentence[o];
                    for (std::size_t d = 0; d <= negatives; ++d) {
                        std::size_t sample = target;
                        double label = 1.0;
                        if (d > 0) {
                            sample = draw_negative();
                            if (sample == target) continue;
                            label = 0.0;
                        }
                        const auto s = static_cast<Eigen::Index>(sample);
                        const double score = input.row(center).dot(output.row(s));
                        epoch_loss -= label > 0.0 ? log_sigmoid(score) : log_sigmoid(-score);
                        const double g = (label - sigmoid(score)) * lr;
                        update += g * output.row(s);
                        output.row(s) += g * input.row(center);
                    }
                    input.row(center) += update;
                    ++pairs;
                }
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(pairs));
    }
    if (!input.allFinite()) throw NumericError("train_embeddings: non-finite embedding");

    // Stored values are rounded to float32 so the on-disk table reloads exactly.
    std::vector<diff::Matrix> per_field;
    for (Field f : kAllFields) {
        const auto rows = static_cast<Eigen::Index>(schema[f].cardinality());
        diff::Matrix m = input.middleRows(static_cast<Eigen::Index>(offset[field_index(f)]), rows);
        m = m.cast<float>().cast<double>();
        per_field.push_back(std::move(m));
    }
    result.table = EmbeddingTable(options.dim, std::move(per_field));
    return result;
}

Layout embedding_layout(std::size_t dim) {
    Layout l;
    l.kind = EncodingKind::embedding;
    for (Field f : kAllFields) {
        l.slices.push_back({f, l.total_width, dim});
        l.total_width += dim;
    }
    return l;
}

EncodedBatch encode_embedding(std::span<const HeaderRecord> records, const FieldSchema& schema,
                              const EmbeddingTable& table) {
    EncodedBatch b{diff::Matrix(), embedding_layout(table.dim())};
    b.data.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(b.layout.total_width));
    const auto dim = static_cast<Eigen::Index>(table.dim());
    for (std::size_t r = 0; r < records.size(); ++r)
        for (const auto& slice : b.layout.slices)
            b.data.row(static_cast<Eigen::Index>(r)).segment(static_cast<Eigen::Index>(slice.offset), dim) =
                table.row(slice.field, schema[slice.field].index_of(records[r]));
    return b;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::size_t nearest_slot(std::span<const double> query, const diff::Matrix& rows) {
    if (static_cast<std::size_t>(rows.cols()) != query.size() || rows.rows() == 0)
        throw ShapeError("nearest_slot: query width does not match table");
    const Eigen::Map<const Eigen::RowVectorXd> q(query.data(), static_cast<Eigen::Index>(query.size()));
    std::size_t best = 0;
    if (q.squaredNorm() == 0.0) {
        double best_dist = (rows.row(0) - q).squaredNorm();
        for (Eigen::Index i = 1; i < rows.rows(); ++i) {
            const double d = (rows.row(i) - q).squaredNorm();
            if (d < best_dist) {
                best_dist = d;
                best = static_cast<std::size_t>(i);
            }
        }
        return best;
    }
    const double qn = q.norm();
    double best_cos = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const double rn = rows.row(i).norm();
        const double c = rn > 0.0 ? rows.row(i).dot(q) / (rn * qn) : 0.0;
        if (c > best_cos) {
            best_cos = c;
            best = static_cast<std::size_t>(i);
        }
    }
    return best;
}

std::vector<HeaderRecord> decode_embedding(const EncodedBatch& batch, const FieldSchema& schema,
                                           const EmbeddingTable& table) {
    if (batch.layout.kind != EncodingKind::embedding || batch.layout.total_width != kFieldCount * table.dim() ||
        static_cast<std::size_t>(batch.data.cols()) != batch.layout.total_width)
        throw ShapeError("decode_embedding: batch does not use the table's embedding layout");
    std::vector<HeaderRecord> out(static_cast<std::size_t>(batch.data.rows()));
    for (std::size_t r = 0; r < out.size(); ++r) {
        const double* row = batch.data.row(static_cast<Eigen::Index>(r)).data();
        for (const auto& slice : batch.layout.slices) {
            const std::size_t slot =
                nearest_slot(std::span(row + slice.offset, slice.width), table.field(slice.field));
            schema[slice.field].assign(out[r], slot);
        }
    }
    return out;
}

// ---- embedding file ------------------------------------------------------------

namespace {
constexpr char kEmbeddingMagic[4] = {'T', 'G', 'E', 'M'};
constexpr std::uint32_t kEmbeddingVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError(path.string() + ": truncated embedding file");
    return v;
}
}  // namespace

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kEmbeddingMagic, 4);
    write_le<std::uint32_t>(out, kEmbeddingVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.tables().size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
    for (const auto& m : table.tables()) {
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
        for (Eigen::Index i = 0; i < m.size(); ++i) write_le<float>(out, static_cast<float>(m.data()[i]));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kEmbeddingMagic))
        throw DataError(path.string() + ": not an embedding file");
    if (read_le<std::uint32_t>(in, path) != kEmbeddingVersion)
        throw DataError(path.string() + ": unsupported embedding file version");
    const auto fields = read_le<std::uint32_t>(in, path);
    const auto dim = read_le<std::uint32_t>(in, path);
    if (fields != kFieldCount) throw DataError(path.string() + ": expected 10 field matrices");
    std::vector<diff::Matrix> tables;
    for (std::uint32_t f = 0; f < fields; ++f) {
        const auto rows = read_le<std::uint32_t>(in, path);
        diff::Matrix m(rows, dim);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = read_le<float>(in, path);
        tables.push_back(std::move(m));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes");
    return EmbeddingTable(dim, std::move(tables));
}

}  // namespace tracegan
