#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tracegan::diff {

/// Row-major dense matrix of doubles; the storage type of every tensor.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// {rows, cols}. Scalars are 1x1.
using Shape = std::array<std::size_t, 2>;

std::string to_string(const Shape& s);

namespace detail {
struct Node {
    Matrix value;
    Matrix grad;  // empty until a backward pass reaches this node
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
};
}  // namespace detail

/// Handle to a node of the recorded computation graph. Copies share the node.
class Tensor {
public:
    Tensor() = default;
    /// Leaf holding `value`; gradients are only tracked when `requires_grad`.
    explicit Tensor(Matrix value, bool requires_grad = false);

    static Tensor scalar(double v);
    static Tensor zeros(std::size_t rows, std::size_t cols);

    Shape shape() const { return {rows(), cols()}; }
    std::size_t rows() const { return static_cast<std::size_t>(node_->value.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(node_->value.cols()); }
    std::size_t size() const { return static_cast<std::size_t>(node_->value.size()); }

    const Matrix& value() const { return node_->value; }
    /// Mutable access for leaves (parameters, inputs). Never mutate an interior node.
    Matrix& mutable_value() { return node_->value; }
    double item() const;

    bool has_grad() const { return node_->grad.size() != 0; }
    const Matrix& grad() const { return node_->grad; }
    Matrix& mutable_grad() { return node_->grad; }
    void zero_grad();

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    /// Value copy that is cut off from the graph.
    Tensor detach() const { return Tensor(node_->value); }

    bool defined() const { return static_cast<bool>(node_); }

    static Tensor from_op(Matrix value, std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward);
    detail::Node& node() const { return *node_; }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Named trainable leaf. The identifier keys optimizer state and checkpoints.
class Parameter : public Tensor {
public:
    Parameter() = default;
    Parameter(std::string id, Matrix value) : Tensor(std::move(value), true), id_(std::move(id)) {}
    const std::string& id() const { return id_; }

private:
    std::string id_;
};

/// Neighbor lists for one graph; applied blockwise to stacked node rows.
struct Adjacency {
    std::size_t nodes = 0;
    std::vector<std::vector<std::size_t>> neighbors;

    static Adjacency complete(std::size_t n);
    std::size_t edge_count() const;  ///< directed edges
    bool symmetric() const;
};

// ---- forward ops --------------------------------------------------------
// Every op checks shapes and throws ShapeError naming both operands.

Tensor matmul(const Tensor& a, const Tensor& b);
/// Elementwise sum; `b` may also be a 1 x cols row broadcast over the rows of `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor square(const Tensor& a);

/// Joins operands row by row: output row i is [a_i, b_i].
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
/// Row-major reinterpretation (no data movement).
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor sigmoid(const Tensor& a);
/// log(1 + exp(x)), evaluated without overflow.
Tensor softplus(const Tensor& a);
/// Softmax applied independently inside each column range [offset, offset+width).
Tensor softmax_slices(const Tensor& a, std::span<const std::array<std::size_t, 2>> slices);

/// axis 0 collapses rows (result 1 x cols); axis 1 collapses columns (rows x 1).
Tensor sum_over_axis(const Tensor& a, int axis);
Tensor mean_over_axis(const Tensor& a, int axis);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);

/// For stacked graphs of `adj.nodes` rows each: out_i = sum of rows j in N(i).
Tensor neighbor_sum(const Tensor& nodes, const Adjacency& adj);
/// Mean of each consecutive block of `block` rows; result has rows/block rows.
Tensor block_mean(const Tensor& nodes, std::size_t block);

/// Reverse pass from a 1x1 loss. Parameter gradients accumulate across calls;
/// interior gradients are recomputed from scratch each time.
void backward(const Tensor& loss);

}  // namespace tracegan::diff
