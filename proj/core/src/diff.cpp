#include "tracegan/diff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tracegan/error.hpp"

namespace tracegan::diff {

std::string to_string(const Shape& s) { return "[" + std::to_string(s[0]) + "x" + std::to_string(s[1]) + "]"; }

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const std::string& why) {
    throw ShapeError(std::string(op) + ": shape " + to_string(a.shape()) + " " + why);
}

void accumulate(detail::Node& target, const Matrix& contribution) {
    if (!target.requires_grad) return;
    if (target.grad.size() == 0)
        target.grad = contribution;
    else
        target.grad += contribution;
}

template <typename F>
Matrix map(const Matrix& m, F f) {
    return m.unaryExpr(f);
}

}  // namespace

// ---- Tensor --------------------------------------------------------------

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
    return Tensor(Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)));
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item: tensor " + to_string(shape()) + " is not a scalar");
    return node_->value(0, 0);
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

Tensor Tensor::from_op(Matrix value, std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
    Tensor out;
    out.node_ = std::make_shared<detail::Node>();
    out.node_->value = std::move(value);
    out.node_->is_leaf = false;
    const bool track = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (track) {
        out.node_->requires_grad = true;
        out.node_->parents.reserve(inputs.size());
        for (auto& in : inputs) out.node_->parents.push_back(in.node_);
        out.node_->backward = std::move(backward);
    }
    return out;
}

// ---- Adjacency -------------------------------------------------------------

Adjacency Adjacency::complete(std::size_t n) {
    Adjacency a;
    a.nodes = n;
    a.neighbors.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) a.neighbors[i].push_back(j);
    return a;
}

std::size_t Adjacency::edge_count() const {
    std::size_t n = 0;
    for (const auto& nb : neighbors) n += nb.size();
    return n;
}

bool Adjacency::symmetric() const {
    for (std::size_t i = 0; i < neighbors.size(); ++i)
        for (std::size_t j : neighbors[i]) {
            if (j >= neighbors.size()) return false;
            const auto& back = neighbors[j];
            if (std::find(back.begin(), back.end(), i) == back.end()) return false;
        }
    return true;
}

// ---- ops -----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    return Tensor::from_op(a.value() * b.value(), {a, b}, [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) accumulate(pa, self.grad * pb.value.transpose());
        if (pb.requires_grad) accumulate(pb, pa.value.transpose() * self.grad);
    });
}

namespace {

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
    return b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
}

Tensor add_or_sub(const Tensor& a, const Tensor& b, double sign, const char* op) {
    if (a.shape() == b.shape()) {
        Matrix v = sign > 0 ? Matrix(a.value() + b.value()) : Matrix(a.value() - b.value());
        return Tensor::from_op(std::move(v), {a, b}, [sign](detail::Node& self) {
            accumulate(*self.parents[0], self.grad);
            accumulate(*self.parents[1], sign * self.grad);
        });
    }
    if (!is_row_broadcast(a, b)) shape_error(op, a, b);
    Matrix v = a.value();
    v.rowwise() += sign * b.value().row(0);
    return Tensor::from_op(std::move(v), {a, b}, [sign](detail::Node& self) {
        accumulate(*self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) accumulate(*self.parents[1], sign * self.grad.colwise().sum());
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_or_sub(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_or_sub(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("mul", a, b);
    return Tensor::from_op(a.value().cwiseProduct(b.value()), {a, b}, [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) accumulate(pa, self.grad.cwiseProduct(pb.value));
        if (pb.requires_grad) accumulate(pb, self.grad.cwiseProduct(pa.value));
    });
}

Tensor scale(const Tensor& a, double factor) {
    return Tensor::from_op(a.value() * factor, {a},
                           [factor](detail::Node& self) { accumulate(*self.parents[0], self.grad * factor); });
}

Tensor square(const Tensor& a) {
    return Tensor::from_op(a.value().cwiseAbs2(), {a}, [](detail::Node& self) {
        auto& p = *self.parents[0];
        accumulate(p, 2.0 * self.grad.cwiseProduct(p.value));
    });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) shape_error("concat_rows", a, b);
    Matrix v(a.rows(), a.cols() + b.cols());
    v << a.value(), b.value();
    const auto ca = static_cast<Eigen::Index>(a.cols());
    const auto cb = static_cast<Eigen::Index>(b.cols());
    return Tensor::from_op(std::move(v), {a, b}, [ca, cb](detail::Node& self) {
        if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad.leftCols(ca));
        if (self.parents[1]->requires_grad) accumulate(*self.parents[1], self.grad.rightCols(cb));
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.cols())
        shape_error("slice_cols", a, "cannot supply columns [" + std::to_string(begin) + ", " +
                                         std::to_string(begin + count) + ")");
    const auto b = static_cast<Eigen::Index>(begin);
    const auto c = static_cast<Eigen::Index>(count);
    return Tensor::from_op(a.value().middleCols(b, c), {a}, [b, c](detail::Node& self) {
        auto& p = *self.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleCols(b, c) = self.grad;
        accumulate(p, g);
    });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a.size())
        shape_error("reshape", a, "cannot become " + to_string({rows, cols}));
    Matrix v = Eigen::Map<const Matrix>(a.value().data(), static_cast<Eigen::Index>(rows),
                                        static_cast<Eigen::Index>(cols));
    return Tensor::from_op(std::move(v), {a}, [](detail::Node& self) {
        auto& p = *self.parents[0];
        accumulate(p, Eigen::Map<const Matrix>(self.grad.data(), p.value.rows(), p.value.cols()));
    });
}

Tensor relu(const Tensor& a) {
    return Tensor::from_op(a.value().cwiseMax(0.0), {a}, [](detail::Node& self) {
        auto& p = *self.parents[0];
        accumulate(p, self.grad.cwiseProduct(map(p.value, [](double x) { return x > 0.0 ? 1.0 : 0.0; })));
    });
}

Tensor tanh(const Tensor& a) {
    return Tensor::from_op(map(a.value(), [](double x) { return std::tanh(x); }), {a}, [](detail::Node& self) {
        accumulate(*self.parents[0],
                   self.grad.cwiseProduct(map(self.value, [](double y) { return 1.0 - y * y; })));
    });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return Tensor::from_op(map(a.value(), [slope](double x) { return x > 0.0 ? x : slope * x; }), {a},
                           [slope](detail::Node& self) {
                               auto& p = *self.parents[0];
                               accumulate(p, self.grad.cwiseProduct(map(
                                                 p.value, [slope](double x) { return x > 0.0 ? 1.0 : slope; })));
                           });
}

namespace {
double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
    return Tensor::from_op(map(a.value(), stable_sigmoid), {a}, [](detail::Node& self) {
        accumulate(*self.parents[0],
                   self.grad.cwiseProduct(map(self.value, [](double y) { return y * (1.0 - y); })));
    });
}

Tensor softplus(const Tensor& a) {
    return Tensor::from_op(
        map(a.value(), [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }), {a},
        [](detail::Node& self) {
            auto& p = *self.parents[0];
            accumulate(p, self.grad.cwiseProduct(map(p.value, stable_sigmoid)));
        });
}

Tensor softmax_slices(const Tensor& a, std::span<const std::array<std::size_t, 2>> slices) {
    for (const auto& s : slices)
        if (s[1] == 0 || s[0] + s[1] > a.cols()) shape_error("softmax_slices", a, "has no room for a slice");
    Matrix v = a.value();
    for (const auto& s : slices) {
        auto block = v.middleCols(static_cast<Eigen::Index>(s[0]), static_cast<Eigen::Index>(s[1]));
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            const double top = block.row(r).maxCoeff();
            block.row(r) = (block.row(r).array() - top).exp().matrix();
            block.row(r) /= block.row(r).sum();
        }
    }
    std::vector<std::array<std::size_t, 2>> kept(slices.begin(), slices.end());
    return Tensor::from_op(std::move(v), {a}, [kept = std::move(kept)](detail::Node& self) {
        Matrix g = self.grad;
        for (const auto& s : kept) {
            const auto off = static_cast<Eigen::Index>(s[0]);
            const auto w = static_cast<Eigen::Index>(s[1]);
            const auto y = self.value.middleCols(off, w);
            const auto gy = self.grad.middleCols(off, w);
            const Eigen::VectorXd dot = gy.cwiseProduct(y).rowwise().sum();
            g.middleCols(off, w) = y.cwiseProduct(gy - dot.replicate(1, w));
        }
        accumulate(*self.parents[0], g);
    });
}

Tensor sum_over_axis(const Tensor& a, int axis) {
    if (axis != 0 && axis != 1) shape_error("sum_over_axis", a, "has no axis " + std::to_string(axis));
    if (axis == 0) {
        return Tensor::from_op(a.value().colwise().sum(), {a}, [](detail::Node& self) {
            auto& p = *self.parents[0];
            accumulate(p, self.grad.replicate(p.value.rows(), 1));
        });
    }
    return Tensor::from_op(a.value().rowwise().sum(), {a}, [](detail::Node& self) {
        auto& p = *self.parents[0];
        accumulate(p, self.grad.replicate(1, p.value.cols()));
    });
}

Tensor mean_over_axis(const Tensor& a, int axis) {
    if (axis != 0 && axis != 1) shape_error("mean_over_axis", a, "has no axis " + std::to_string(axis));
    const std::size_t n = axis == 0 ? a.rows() : a.cols();
    if (n == 0) shape_error("mean_over_axis", a, "is empty along the axis");
    return scale(sum_over_axis(a, axis), 1.0 / static_cast<double>(n));
}

Tensor sum(const Tensor& a) {
    return Tensor::from_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [](detail::Node& self) {
        auto& p = *self.parents[0];
        accumulate(p, Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) shape_error("mean", a, "is empty");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("mse", a, b);
    return mean(square(sub(a, b)));
}

Tensor neighbor_sum(const Tensor& nodes, const Adjacency& adj) {
    if (adj.nodes == 0 || nodes.rows() % adj.nodes != 0 || adj.neighbors.size() != adj.nodes)
        shape_error("neighbor_sum", nodes, "is not a stack of " + std::to_string(adj.nodes) + "-node graphs");
    const auto n = static_cast<Eigen::Index>(adj.nodes);
    const Eigen::Index graphs = static_cast<Eigen::Index>(nodes.rows()) / n;
    const Matrix& h = nodes.value();
    Matrix out = Matrix::Zero(h.rows(), h.cols());
    for (Eigen::Index g = 0; g < graphs; ++g)
        for (Eigen::Index i = 0; i < n; ++i)
            for (std::size_t j : adj.neighbors[static_cast<std::size_t>(i)])
                out.row(g * n + i) += h.row(g * n + static_cast<Eigen::Index>(j));
    return Tensor::from_op(std::move(out), {nodes}, [adj, n, graphs](detail::Node& self) {
        Matrix back = Matrix::Zero(self.grad.rows(), self.grad.cols());
        for (Eigen::Index g = 0; g < graphs; ++g)
            for (Eigen::Index i = 0; i < n; ++i)
                for (std::size_t j : adj.neighbors[static_cast<std::size_t>(i)])
                    back.row(g * n + static_cast<Eigen::Index>(j)) += self.grad.row(g * n + i);
        accumulate(*self.parents[0], back);
    });
}

Tensor block_mean(const Tensor& nodes, std::size_t block) {
    if (block == 0 || nodes.rows() % block != 0)
        shape_error("block_mean", nodes, "does not split into blocks of " + std::to_string(block) + " rows");
    const auto b = static_cast<Eigen::Index>(block);
    const Eigen::Index groups = static_cast<Eigen::Index>(nodes.rows()) / b;
    Matrix out(groups, nodes.value().cols());
    for (Eigen::Index g = 0; g < groups; ++g) out.row(g) = nodes.value().middleRows(g * b, b).colwise().mean();
    return Tensor::from_op(std::move(out), {nodes}, [b, groups](detail::Node& self) {
        auto& p = *self.parents[0];
        Matrix back(p.value.rows(), p.value.cols());
        for (Eigen::Index g = 0; g < groups; ++g)
            back.middleRows(g * b, b) = self.grad.row(g).replicate(b, 1) / static_cast<double>(b);
        accumulate(p, back);
    });
}

// ---- backward ----------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss " + to_string(loss.shape()) + " is not a scalar");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (inputs before outputs).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(&loss.node(), 0);
    seen.insert(&loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (detail::Node* n : order)
        if (!n->is_leaf) n->grad.resize(0, 0);
    accumulate(loss.node(), Matrix::Constant(1, 1, 1.0));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->is_leaf || !n->backward) continue;
        if (n->grad.size() == 0) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
        n->backward(*n);
    }
}

}  // namespace tracegan::diff
