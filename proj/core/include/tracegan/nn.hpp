#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tracegan/diff.hpp"
#include "tracegan/rng.hpp"

namespace tracegan::diff {

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

enum class Activation { none, relu, leaky_relu, tanh };

Tensor activate(const Tensor& x, Activation act);

/// y = x W + b with W of shape (in x out).
struct Linear {
    Parameter weight;
    Parameter bias;

    Linear() = default;
    Linear(const std::string& id, std::size_t in, std::size_t out, Rng& rng);

    std::size_t in_features() const { return weight.rows(); }
    std::size_t out_features() const { return weight.cols(); }
    Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
    void collect(std::vector<Parameter>& out) const;
};

/// Stack of Linear layers: hidden layers use `hidden_act`, the last layer is affine.
class Mlp {
public:
    Mlp() = default;
    Mlp(const std::string& id, std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
        Activation hidden_act, Rng& rng);

    Tensor operator()(const Tensor& x) const;
    std::size_t in_features() const { return layers_.front().in_features(); }
    std::size_t out_features() const { return layers_.back().out_features(); }
    std::vector<Parameter> parameters() const;
    const std::vector<Linear>& layers() const { return layers_; }

private:
    std::vector<Linear> layers_;
    Activation hidden_act_ = Activation::relu;
};

/// RMSProp: avg = decay*avg + (1-decay)*g^2; p -= lr * g / sqrt(avg + eps).
/// Running averages are keyed by Parameter::id.
class RmsProp {
public:
    explicit RmsProp(double lr, double decay = 0.9, double eps = 1e-8) : lr_(lr), decay_(decay), eps_(eps) {}

    /// Applies one update to every parameter that has a gradient, then clears all gradients.
    void step(std::span<Parameter> params);
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    double lr_;
    double decay_;
    double eps_;
    std::unordered_map<std::string, Matrix> avg_;
};

/// Clamps every entry of every parameter into [-c, c].
void clip_weights(std::span<Parameter> params, double c);
void zero_grads(std::span<Parameter> params);
void set_trainable(std::span<Parameter> params, bool on);
double max_abs_weight(std::span<const Parameter> params);

/// Deep copy of parameter values, in order, for before/after comparisons.
std::vector<Matrix> snapshot(std::span<const Parameter> params);

/// Throws std::invalid_argument when two parameters share an identifier.
void check_unique_ids(std::span<const Parameter> params);

// Checkpoint file: "TGCK" magic, u32 format version, u32 entry count, then per
// entry: u32 id length, id bytes, u32 rank (always 2), u64 dims, f64 data.
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedMatrix {
    std::string id;
    Matrix value;
};

/// Writes atomically: temp file in the same directory, then rename.
void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter> params);
std::vector<NamedMatrix> read_checkpoint(const std::filesystem::path& path);
/// Copies matching entries into `params`; every parameter must be present with the same shape.
void load_checkpoint(const std::filesystem::path& path, std::span<Parameter> params);

}  // namespace tracegan::diff
