#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "tracegan/diff.hpp"
#include "tracegan/trace_io.hpp"

namespace tracegan {

/// Vocabulary of a discrete field (OOV is the implicit last slot) or bucket
/// edges of a continuous field.
class FieldSpec {
public:
    FieldSpec() = default;
    /// Discrete: `vocab` must be duplicate-free and non-empty. `oov_value` is the
    /// token emitted when a generated row selects the OOV slot.
    static FieldSpec discrete(Field f, std::vector<std::string> vocab, std::string oov_value);
    /// Continuous: at least two strictly ascending edges.
    static FieldSpec continuous(Field f, std::vector<double> edges);

    Field field() const { return field_; }
    bool is_discrete() const { return tracegan::is_discrete(field_); }

    /// K (vocabulary + OOV) for discrete fields, m (bucket count) for continuous.
    std::size_t cardinality() const;
    std::size_t oov_index() const { return vocab_.size(); }

    const std::vector<std::string>& vocab() const { return vocab_; }
    const std::string& oov_value() const { return oov_value_; }
    const std::vector<double>& edges() const { return edges_; }

    /// Slot of a record's value: vocab position or OOV; bucket with clamping.
    std::size_t index_of(const HeaderRecord& r) const;
    std::size_t token_index(const std::string& token) const;
    std::size_t bucket_index(double value) const;
    double bucket_midpoint(std::size_t bucket) const;

    /// Writes slot `index` back into `r` (token, OOV replacement, or bucket midpoint).
    void assign(HeaderRecord& r, std::size_t index) const;
    /// Namespaced word2vec token for a slot, e.g. "dst_port:80", "ttl:#3", "flag:<oov>".
    std::string slot_token(std::size_t index) const;

private:
    Field field_ = Field::src_ip;
    std::vector<std::string> vocab_;
    std::string oov_value_;
    std::unordered_map<std::string, std::size_t> lookup_;
    std::vector<double> edges_;
};

class FieldSchema {
public:
    FieldSchema() = default;
    /// `fields` must list every field once in canonical order.
    explicit FieldSchema(std::vector<FieldSpec> fields);

    const FieldSpec& operator[](Field f) const { return fields_[field_index(f)]; }
    const std::vector<FieldSpec>& fields() const { return fields_; }
    bool operator==(const FieldSchema& other) const;

private:
    std::vector<FieldSpec> fields_;
};

enum class BucketMode { equal_width, quantile };

struct SchemaOptions {
    std::size_t max_vocab = 64;
    std::size_t buckets_per_field = 32;
    BucketMode bucket_mode = BucketMode::equal_width;
};

/// Top-`max_vocab` tokens by frequency (ties lexicographic) per discrete field,
/// buckets over the observed [min, max] per continuous field.
FieldSchema fit_schema(const TraceDataset& dataset, const SchemaOptions& options);
inline FieldSchema fit_schema(const TraceDataset& dataset, std::size_t max_vocab, std::size_t buckets) {
    return fit_schema(dataset, SchemaOptions{max_vocab, buckets, BucketMode::equal_width});
}

/// Sum of K_i over discrete fields plus m_j over continuous fields.
std::size_t total_onehot_dim(const FieldSchema& schema);

std::string schema_to_json(const FieldSchema& schema);
FieldSchema schema_from_json(const std::string& text);
void save_schema(const FieldSchema& schema, const std::filesystem::path& path);
FieldSchema load_schema(const std::filesystem::path& path);

enum class EncodingKind { onehot, embedding };

struct FieldSlice {
    Field field;
    std::size_t offset;
    std::size_t width;
};

/// Column slice of every field, in canonical order, covering [0, total_width).
struct Layout {
    EncodingKind kind = EncodingKind::onehot;
    std::vector<FieldSlice> slices;
    std::size_t total_width = 0;

    const FieldSlice& slice(Field f) const { return slices[field_index(f)]; }
    /// {offset, width} pairs for the ops that work on column ranges.
    std::vector<std::array<std::size_t, 2>> ranges() const;
};

struct EncodedBatch {
    diff::Matrix data;  ///< rows x layout.total_width
    Layout layout;
};

Layout onehot_layout(const FieldSchema& schema);
EncodedBatch encode_onehot(std::span<const HeaderRecord> records, const FieldSchema& schema);

/// Per-field embedding matrices (rows = slots including OOV, cols = dim).
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t dim, std::vector<diff::Matrix> per_field);

    std::size_t dim() const { return dim_; }
    const diff::Matrix& field(Field f) const { return tables_[field_index(f)]; }
    auto row(Field f, std::size_t slot) const { return tables_[field_index(f)].row(static_cast<Eigen::Index>(slot)); }
    const std::vector<diff::Matrix>& tables() const { return tables_; }
    bool operator==(const EmbeddingTable& other) const;

    /// Throws DataError when row counts disagree with the schema's cardinalities.
    void check_against(const FieldSchema& schema) const;

private:
    std::size_t dim_ = 0;
    std::vector<diff::Matrix> tables_;
};

struct EmbeddingOptions {
    std::size_t dim = 32;
    std::size_t epochs = 5;
    std::size_t negatives = 5;
    double learning_rate = 0.025;
    std::uint64_t seed = 7;
};

struct EmbeddingResult {
    EmbeddingTable table;
    std::vector<double> epoch_loss;  ///< mean negative-sampling loss per (center, context) pair
};

/// Skip-gram with negative sampling over one shared vocabulary of field-namespaced
/// tokens. Each record is one sentence; the window spans the whole record.
EmbeddingResult train_embeddings(const TraceDataset& dataset, const FieldSchema& schema,
                                 const EmbeddingOptions& options);

Layout embedding_layout(std::size_t dim);
EncodedBatch encode_embedding(std::span<const HeaderRecord> records, const FieldSchema& schema,
                              const EmbeddingTable& table);
/// Nearest row per field slice by cosine similarity (lower index wins ties);
/// zero slices fall back to Euclidean distance.
std::vector<HeaderRecord> decode_embedding(const EncodedBatch& batch, const FieldSchema& schema,
                                           const EmbeddingTable& table);
std::size_t nearest_slot(std::span<const double> query, const diff::Matrix& rows);

// Binary layout: "TGEM", u32 version, u32 field count, u32 dim, then per field
// u32 row count followed by rows x dim little-endian float32 values.
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace tracegan
