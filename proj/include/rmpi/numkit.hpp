#pragma once
// Small dense linear algebra plus a reverse-mode tape, sized for the
// relational message-passing model (d around 32, matrix-vector only).

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace rmpi::num {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

using Vec = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Plain (untaped) operations. All reject non-finite input.
Vec matvec(const Matrix& m, std::span<const double> x);
Vec relu(std::span<const double> x);
Vec leaky_relu(std::span<const double> x, double slope = 0.2);
Vec softmax(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);

void check_finite(std::span<const double> x, const char* where);

struct ParamId {
    std::uint32_t index = 0;
    friend bool operator==(ParamId, ParamId) = default;
};

// Named trainable tensors with gradient accumulators.
class ParamStore {
public:
    ParamId add(const std::string& name, Matrix value);

    std::size_t size() const { return values_.size(); }
    bool contains(const std::string& name) const { return by_name_.contains(name); }
    ParamId find(const std::string& name) const;
    const std::string& name(ParamId id) const { return names_.at(id.index); }

    Matrix& value(ParamId id) { return values_.at(id.index); }
    const Matrix& value(ParamId id) const { return values_.at(id.index); }
    Matrix& grad(ParamId id) { return grads_.at(id.index); }
    const Matrix& grad(ParamId id) const { return grads_.at(id.index); }

    void zero_grad();

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
    std::vector<Matrix> grads_;
    std::unordered_map<std::string, std::uint32_t> by_name_;
};

struct Var {
    std::uint32_t index = kInvalid;
    static constexpr std::uint32_t kInvalid = 0xFFFFFFFFu;
    bool valid() const { return index != kInvalid; }
};

// Records operations in execution order; backward() replays them in
// reverse. Parameter leaves copy the store values at record time; when a
// gradient store is attached, backward() accumulates into it.
class Tape {
public:
    Tape() = default;
    explicit Tape(const ParamStore& values) : values_(&values) {}
    explicit Tape(ParamStore& params) : values_(&params), grads_(&params) {}

    Var constant(Vec value);
    Var param(ParamId id);                       // whole matrix, memoized per tape
    Var param_row(ParamId id, std::size_t row);  // one row as a vector

    Var matvec(Var m, Var x);
    Var add(Var a, Var b);
    Var sum(std::span<const Var> xs);  // empty list is rejected
    Var scale(Var x, Var s);           // s is a scalar node
    Var scale(Var x, double s);
    Var weighted_sum(std::span<const Var> xs, Var weights);
    Var relu(Var x);
    Var leaky_relu(Var x, double slope = 0.2);
    Var dot(Var a, Var b);
    Var softmax(Var x);
    Var concat(std::span<const Var> xs);
    Var element(Var x, std::size_t i);
    Var zeros(std::size_t n);

    const Vec& value(Var v) const { return node(v).value; }
    double scalar(Var v) const;
    std::size_t rows(Var v) const { return node(v).rows; }
    std::size_t cols(Var v) const { return node(v).cols; }
    std::size_t num_nodes() const { return nodes_.size(); }

    // Gradient of a recorded node after backward().
    const Vec& grad(Var v) const { return node(v).grad; }

    void backward(Var loss);

private:
    enum class Op : std::uint8_t {
        kConstant, kParam, kParamRow, kMatvec, kAdd, kSum, kScale, kScaleConst,
        kWeightedSum, kRelu, kLeakyRelu, kDot, kSoftmax, kConcat, kElement
    };

    struct Node {
        Op op = Op::kConstant;
        std::vector<std::uint32_t> inputs;
        Vec value;
        Vec grad;
        std::size_t rows = 0;
        std::size_t cols = 1;
        double aux = 0.0;
        std::uint32_t param = 0;
        std::size_t index = 0;
    };

    Var push(Node n);
    const Node& node(Var v) const;
    Node& node(Var v);
    void require_vector(Var v, const char* where) const;

    const ParamStore* values_ = nullptr;
    ParamStore* grads_ = nullptr;
    std::vector<Node> nodes_;
    std::unordered_map<std::uint32_t, Var> param_cache_;
};

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::uint64_t step = 0;
};

// One bias-corrected Adam update using the gradients held in the store.
void adam_step(ParamStore& params, AdamState& state, const AdamConfig& config = {});

}  // namespace rmpi::num
