#include "tracegan/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "tracegan/error.hpp"

namespace tracegan::diff {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(fan_in, fan_out);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
    return m;
}

Tensor activate(const Tensor& x, Activation act) {
    switch (act) {
        case Activation::relu: return relu(x);
        case Activation::leaky_relu: return leaky_relu(x, 0.2);
        case Activation::tanh: return tanh(x);
        case Activation::none: break;
    }
    return x;
}

Linear::Linear(const std::string& id, std::size_t in, std::size_t out, Rng& rng)
    : weight(id + ".weight", glorot_uniform(in, out, rng)), bias(id + ".bias", Matrix::Zero(1, out)) {}

void Linear::collect(std::vector<Parameter>& out) const {
    out.push_back(weight);
    out.push_back(bias);
}

Mlp::Mlp(const std::string& id, std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
         Activation hidden_act, Rng& rng)
    : hidden_act_(hidden_act) {
    std::size_t width = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        layers_.emplace_back(id + ".fc" + std::to_string(i), width, hidden[i], rng);
        width = hidden[i];
    }
    layers_.emplace_back(id + ".out", width, out, rng);
}

Tensor Mlp::operator()(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = activate(layers_[i](h), hidden_act_);
    return layers_.back()(h);
}

std::vector<Parameter> Mlp::parameters() const {
    std::vector<Parameter> out;
    for (const auto& l : layers_) l.collect(out);
    return out;
}

void RmsProp::step(std::span<Parameter> params) {
    for (auto& p : params) {
        if (!p.has_grad()) continue;
        const Matrix& g = p.grad();
        auto [it, fresh] = avg_.try_emplace(p.id(), Matrix::Zero(g.rows(), g.cols()));
        Matrix& avg = it->second;
        avg = decay_ * avg + (1.0 - decay_) * g.cwiseAbs2();
        p.mutable_value().array() -= lr_ * g.array() / (avg.array() + eps_).sqrt();
    }
    zero_grads(params);
}

void clip_weights(std::span<Parameter> params, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("clip_weights: c must be positive");
    for (auto& p : params) p.mutable_value() = p.value().cwiseMax(-c).cwiseMin(c);
}

void zero_grads(std::span<Parameter> params) {
    for (auto& p : params) p.zero_grad();
}

void set_trainable(std::span<Parameter> params, bool on) {
    for (auto& p : params) p.set_requires_grad(on);
}

double max_abs_weight(std::span<const Parameter> params) {
    double m = 0.0;
    for (const auto& p : params)
        if (p.size() != 0) m = std::max(m, p.value().cwiseAbs().maxCoeff());
    return m;
}

std::vector<Matrix> snapshot(std::span<const Parameter> params) {
    std::vector<Matrix> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.value());
    return out;
}

void check_unique_ids(std::span<const Parameter> params) {
    std::unordered_set<std::string> ids;
    for (const auto& p : params)
        if (!ids.insert(p.id()).second) throw std::invalid_argument("duplicate parameter id: " + p.id());
}

namespace {

constexpr char kMagic[4] = {'T', 'G', 'C', 'K'};

template <typename T>
void put(std::string& buf, T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

class Reader {
public:
    Reader(std::vector<char> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(std::size_t n) {
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError(name_ + ": truncated checkpoint");
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::vector<char> bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter> params) {
    check_unique_ids(params);
    std::string buf(kMagic, sizeof(kMagic));
    put<std::uint32_t>(buf, kCheckpointVersion);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.id().size()));
        buf += p.id();
        put<std::uint32_t>(buf, 2);
        put<std::uint64_t>(buf, p.rows());
        put<std::uint64_t>(buf, p.cols());
        buf.append(reinterpret_cast<const char*>(p.value().data()), p.size() * sizeof(double));
    }

    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::vector<NamedMatrix> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Reader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()),
             path.string());
    if (r.get_string(4) != std::string(kMagic, 4)) throw DataError(path.string() + ": not a checkpoint");
    if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion)
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
    const auto count = r.get<std::uint32_t>();
    std::vector<NamedMatrix> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedMatrix e;
        e.id = r.get_string(r.get<std::uint32_t>());
        if (r.get<std::uint32_t>() != 2) throw DataError(path.string() + ": unsupported tensor rank");
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        r.need(rows * cols * sizeof(double));
        e.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index k = 0; k < e.value.size(); ++k) e.value.data()[k] = r.get<double>();
        out.push_back(std::move(e));
    }
    if (!r.done()) throw DataError(path.string() + ": trailing bytes after checkpoint");
    return out;
}

void load_checkpoint(const std::filesystem::path& path, std::span<Parameter> params) {
    const auto entries = read_checkpoint(path);
    std::unordered_map<std::string, const Matrix*> by_id;
    for (const auto& e : entries) by_id[e.id] = &e.value;
    for (auto& p : params) {
        const auto it = by_id.find(p.id());
        if (it == by_id.end()) throw DataError(path.string() + ": missing parameter " + p.id());
        if (it->second->rows() != p.value().rows() || it->second->cols() != p.value().cols())
            throw DataError(path.string() + ": shape mismatch for " + p.id());
        p.mutable_value() = *it->second;
    }
}

}  // namespace tracegan::diff
