#include "rmpi/numkit.hpp"

#include <algorithm>
#include <cmath>

namespace rmpi::num {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw ShapeError("matrix data length mismatch");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void check_finite(std::span<const double> x, const char* where) {
    for (double v : x)
        if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value in ") + where);
}

Vec matvec(const Matrix& m, std::span<const double> x) {
    if (m.cols() != x.size()) throw ShapeError("matvec: shape mismatch");
    check_finite(m.data(), "matvec");
    check_finite(x, "matvec");
    Vec y(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double acc = 0.0;
        auto row = m.row(r);
        for (std::size_t c = 0; c < x.size(); ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

Vec relu(std::span<const double> x) {
    check_finite(x, "relu");
    Vec y(x.begin(), x.end());
    for (double& v : y) v = v > 0.0 ? v : 0.0;
    return y;
}

Vec leaky_relu(std::span<const double> x, double slope) {
    check_finite(x, "leaky_relu");
    Vec y(x.begin(), x.end());
    for (double& v : y) v = v > 0.0 ? v : slope * v;
    return y;
}

Vec softmax(std::span<const double> x) {
    if (x.empty()) throw ShapeError("softmax of empty vector");
    check_finite(x, "softmax");
    double mx = *std::max_element(x.begin(), x.end());
    Vec y(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i] - mx);
        total += y[i];
    }
    for (double& v : y) v /= total;
    return y;
}

double dot(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("dot: length mismatch");
    check_finite(x, "dot");
    check_finite(y, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

ParamId ParamStore::add(const std::string& name, Matrix value) {
    if (by_name_.contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    check_finite(value.data(), name.c_str());
    const auto index = static_cast<std::uint32_t>(values_.size());
    names_.push_back(name);
    grads_.emplace_back(value.rows(), value.cols());
    values_.push_back(std::move(value));
    by_name_.emplace(name, index);
    return ParamId{index};
}

ParamId ParamStore::find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
    return ParamId{it->second};
}

void ParamStore::zero_grad() {
    for (auto& g : grads_) std::fill(g.data().begin(), g.data().end(), 0.0);
}

// ---- tape -------------------------------------------------------------

const Tape::Node& Tape::node(Var v) const {
    if (v.index >= nodes_.size()) throw std::out_of_range("invalid tape variable");
    return nodes_[v.index];
}

Tape::Node& Tape::node(Var v) {
    if (v.index >= nodes_.size()) throw std::out_of_range("invalid tape variable");
    return nodes_[v.index];
}

Var Tape::push(Node n) {
    check_finite(n.value, "tape node");
    for (std::uint32_t in : n.inputs)
        if (in >= nodes_.size()) throw std::out_of_range("tape input refers to a later node");
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::require_vector(Var v, const char* where) const {
    if (node(v).cols != 1) throw ShapeError(std::string(where) + ": expected a vector");
}

double Tape::scalar(Var v) const {
    const auto& n = node(v);
    if (n.value.size() != 1) throw ShapeError("scalar(): node is not a scalar");
    return n.value[0];
}

Var Tape::constant(Vec value) {
    Node n;
    n.op = Op::kConstant;
    n.rows = value.size();
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::zeros(std::size_t n) { return constant(Vec(n, 0.0)); }

Var Tape::param(ParamId id) {
    if (!values_) throw std::logic_error("tape has no parameter store");
    if (auto it = param_cache_.find(id.index); it != param_cache_.end()) return it->second;
    const Matrix& m = values_->value(id);
    Node n;
    n.op = Op::kParam;
    n.param = id.index;
    n.rows = m.rows();
    n.cols = m.cols();
    n.value = m.data();
    Var v = push(std::move(n));
    param_cache_.emplace(id.index, v);
    return v;
}

Var Tape::param_row(ParamId id, std::size_t row) {
    if (!values_) throw std::logic_error("tape has no parameter store");
    const Matrix& m = values_->value(id);
    if (row >= m.rows()) throw std::out_of_range("param_row: row out of range");
    Node n;
    n.op = Op::kParamRow;
    n.param = id.index;
    n.index = row;
    n.rows = m.cols();
    auto r = m.row(row);
    n.value.assign(r.begin(), r.end());
    return push(std::move(n));
}

Var Tape::matvec(Var m, Var x) {
    const Node& mn = node(m);
    require_vector(x, "matvec");
    const Node& xn = node(x);
    if (mn.cols != xn.rows) throw ShapeError("matvec: shape mismatch");
    Node n;
    n.op = Op::kMatvec;
    n.inputs = {m.index, x.index};
    n.rows = mn.rows;
    n.value.assign(mn.rows, 0.0);
    for (std::size_t r = 0; r < mn.rows; ++r) {
        const double* row = mn.value.data() + r * mn.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < mn.cols; ++c) acc += row[c] * xn.value[c];
        n.value[r] = acc;
    }
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Node& an = node(a);
    const Node& bn = node(b);
    if (an.value.size() != bn.value.size() || an.cols != bn.cols) throw ShapeError("add: shape mismatch");
    Node n;
    n.op = Op::kAdd;
    n.inputs = {a.index, b.index};
    n.rows = an.rows;
    n.cols = an.cols;
    n.value = an.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += bn.value[i];
    return push(std::move(n));
}

Var Tape::sum(std::span<const Var> xs) {
    if (xs.empty()) throw ShapeError("sum of empty list");
    Node n;
    n.op = Op::kSum;
    n.rows = node(xs[0]).rows;
    n.value.assign(node(xs[0]).value.size(), 0.0);
    for (Var x : xs) {
        require_vector(x, "sum");
        const Node& xn = node(x);
        if (xn.value.size() != n.value.size()) throw ShapeError("sum: shape mismatch");
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += xn.value[i];
        n.inputs.push_back(x.index);
    }
    return push(std::move(n));
}

Var Tape::scale(Var x, Var s) {
    require_vector(x, "scale");
    const double k = scalar(s);
    Node n;
    n.op = Op::kScale;
    n.inputs = {x.index, s.index};
    n.rows = node(x).rows;
    n.value = node(x).value;
    for (double& v : n.value) v *= k;
    return push(std::move(n));
}

Var Tape::scale(Var x, double s) {
    require_vector(x, "scale");
    Node n;
    n.op = Op::kScaleConst;
    n.inputs = {x.index};
    n.aux = s;
    n.rows = node(x).rows;
    n.value = node(x).value;
    for (double& v : n.value) v *= s;
    return push(std::move(n));
}

Var Tape::weighted_sum(std::span<const Var> xs, Var weights) {
    if (xs.empty()) throw ShapeError("weighted_sum of empty list");
    require_vector(weights, "weighted_sum");
    const Vec& w = node(weights).value;
    if (w.size() != xs.size()) throw ShapeError("weighted_sum: weight count mismatch");
    Node n;
    n.op = Op::kWeightedSum;
    n.rows = node(xs[0]).rows;
    n.value.assign(node(xs[0]).value.size(), 0.0);
    for (std::size_t j = 0; j < xs.size(); ++j) {
        require_vector(xs[j], "weighted_sum");
        const Vec& x = node(xs[j]).value;
        if (x.size() != n.value.size()) throw ShapeError("weighted_sum: shape mismatch");
        for (std::size_t i = 0; i < x.size(); ++i) n.value[i] += w[j] * x[i];
        n.inputs.push_back(xs[j].index);
    }
    n.inputs.push_back(weights.index);
    return push(std::move(n));
}

Var Tape::relu(Var x) {
    require_vector(x, "relu");
    Node n;
    n.op = Op::kRelu;
    n.inputs = {x.index};
    n.rows = node(x).rows;
    n.value = node(x).value;
    for (double& v : n.value) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
}

Var Tape::leaky_relu(Var x, double slope) {
    require_vector(x, "leaky_relu");
    Node n;
    n.op = Op::kLeakyRelu;
    n.inputs = {x.index};
    n.aux = slope;
    n.rows = node(x).rows;
    n.value = node(x).value;
    for (double& v : n.value) v = v > 0.0 ? v : slope * v;
    return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
    require_vector(a, "dot");
    require_vector(b, "dot");
    const Vec& av = node(a).value;
    const Vec& bv = node(b).value;
    if (av.size() != bv.size()) throw ShapeError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
    Node n;
    n.op = Op::kDot;
    n.inputs = {a.index, b.index};
    n.rows = 1;
    n.value = {acc};
    return push(std::move(n));
}

Var Tape::softmax(Var x) {
    require_vector(x, "softmax");
    Node n;
    n.op = Op::kSoftmax;
    n.inputs = {x.index};
    n.rows = node(x).rows;
    n.value = num::softmax(node(x).value);
    return push(std::move(n));
}

Var Tape::concat(std::span<const Var> xs) {
    if (xs.empty()) throw ShapeError("concat of empty list");
    Node n;
    n.op = Op::kConcat;
    for (Var x : xs) {
        require_vector(x, "concat");
        const Vec& v = node(x).value;
        n.value.insert(n.value.end(), v.begin(), v.end());
        n.inputs.push_back(x.index);
    }
    n.rows = n.value.size();
    return push(std::move(n));
}

Var Tape::element(Var x, std::size_t i) {
    require_vector(x, "element");
    if (i >= node(x).value.size()) throw std::out_of_range("element index");
    Node n;
    n.op = Op::kElement;
    n.inputs = {x.index};
    n.index = i;
    n.rows = 1;
    n.value = {node(x).value[i]};
    return push(std::move(n));
}

void Tape::backward(Var loss) {
    Node& root = node(loss);
    if (root.value.size() != 1) throw ShapeError("backward: loss must be a scalar");
    for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
    root.grad[0] = 1.0;

    for (std::size_t idx = loss.index + 1; idx-- > 0;) {
        Node& n = nodes_[idx];
        for (std::uint32_t in : n.inputs)
            if (in >= idx) throw std::logic_error("cycle in recorded operation graph");
        const Vec& g = n.grad;
        switch (n.op) {
        case Op::kConstant:
            break;
        case Op::kParam: {
            if (!grads_) break;
            auto& dst = grads_->grad(ParamId{n.param}).data();
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
            break;
        }
        case Op::kParamRow: {
            if (!grads_) break;
            auto dst = grads_->grad(ParamId{n.param}).row(n.index);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
            break;
        }
        case Op::kMatvec: {
            Node& m = nodes_[n.inputs[0]];
            Node& x = nodes_[n.inputs[1]];
            for (std::size_t r = 0; r < m.rows; ++r) {
                if (g[r] == 0.0) continue;
                const double* row = m.value.data() + r * m.cols;
                double* mg = m.grad.data() + r * m.cols;
                for (std::size_t c = 0; c < m.cols; ++c) {
                    mg[c] += g[r] * x.value[c];
                    x.grad[c] += g[r] * row[c];
                }
            }
            break;
        }
        case Op::kAdd:
            for (std::uint32_t in : n.inputs)
                for (std::size_t i = 0; i < g.size(); ++i) nodes_[in].grad[i] += g[i];
            break;
        case Op::kSum:
            for (std::uint32_t in : n.inputs)
                for (std::size_t i = 0; i < g.size(); ++i) nodes_[in].grad[i] += g[i];
            break;
        case Op::kScale: {
            Node& x = nodes_[n.inputs[0]];
            Node& s = nodes_[n.inputs[1]];
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                x.grad[i] += s.value[0] * g[i];
                acc += g[i] * x.value[i];
            }
            s.grad[0] += acc;
            break;
        }
        case Op::kScaleConst: {
            Node& x = nodes_[n.inputs[0]];
            for (std::size_t i = 0; i < g.size(); ++i) x.grad[i] += n.aux * g[i];
            break;
        }
        case Op::kWeightedSum: {
            Node& w = nodes_[n.inputs.back()];
            for (std::size_t j = 0; j + 1 < n.inputs.size(); ++j) {
                Node& x = nodes_[n.inputs[j]];
                double acc = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    x.grad[i] += w.value[j] * g[i];
                    acc += g[i] * x.value[i];
                }
                w.grad[j] += acc;
            }
            break;
        }
        case Op::kRelu: {
            Node& x = nodes_[n.inputs[0]];
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x.value[i] > 0.0) x.grad[i] += g[i];
            break;
        }
        case Op::kLeakyRelu: {
            Node& x = nodes_[n.inputs[0]];
            for (std::size_t i = 0; i < g.size(); ++i)
                x.grad[i] += x.value[i] > 0.0 ? g[i] : n.aux * g[i];
            break;
        }
        case Op::kDot: {
            Node& a = nodes_[n.inputs[0]];
            Node& b = nodes_[n.inputs[1]];
            for (std::size_t i = 0; i < a.value.size(); ++i) {
                a.grad[i] += g[0] * b.value[i];
                b.grad[i] += g[0] * a.value[i];
            }
            break;
        }
        case Op::kSoftmax: {
            Node& x = nodes_[n.inputs[0]];
            double gy = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * n.value[i];
            for (std::size_t i = 0; i < g.size(); ++i) x.grad[i] += n.value[i] * (g[i] - gy);
            break;
        }
        case Op::kConcat: {
            std::size_t offset = 0;
            for (std::uint32_t in : n.inputs) {
                Node& x = nodes_[in];
                for (std::size_t i = 0; i < x.value.size(); ++i) x.grad[i] += g[offset + i];
                offset += x.value.size();
            }
            break;
        }
        case Op::kElement:
            nodes_[n.inputs[0]].grad[n.index] += g[0];
            break;
        }
    }
}

void adam_step(ParamStore& params, AdamState& state, const AdamConfig& config) {
    if (state.m.size() != params.size()) {
        state.m.clear();
        state.v.clear();
        for (std::uint32_t i = 0; i < params.size(); ++i) {
            const Matrix& p = params.value(ParamId{i});
            state.m.emplace_back(p.rows(), p.cols());
            state.v.emplace_back(p.rows(), p.cols());
        }
        state.step = 0;
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::uint32_t i = 0; i < params.size(); ++i) {
        auto& w = params.value(ParamId{i}).data();
        const auto& g = params.grad(ParamId{i}).data();
        auto& m = state.m[i].data();
        auto& v = state.v[i].data();
        if (g.size() != w.size() || m.size() != w.size()) throw ShapeError("adam: shape mismatch");
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            w[j] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

}  // namespace rmpi::num
