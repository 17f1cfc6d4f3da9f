#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace sepl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

namespace ag {

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Var is a handle to a graph node. Leaves are created from values (or are
// long-lived parameters); every op returns a new node that remembers its
// inputs and how to push its gradient back to them. Nodes that do not
// require a gradient are never visited by backward().

struct Node {
    Matrix value;
    Matrix grad;  // empty until backward touches the node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    Matrix& grad_buffer() {
        if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
        return grad;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(Matrix value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    // Gradient accumulated by the last backward pass; zeros if untouched.
    Matrix grad() const;
    // False until a backward pass reaches this node.
    bool has_grad() const { return node_ && node_->grad.size() != 0; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    void zero_grad() { node_->grad.resize(0, 0); }

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool defined() const { return static_cast<bool>(node_); }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Builds a node from a precomputed value and a gradient rule. `backward`
// receives the node (with its grad set) and must accumulate into the
// grad_buffer() of every input that requires a gradient.
Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every leaf.
void backward(const Var& root);

Var constant(Matrix value);

Var matmul(const Var& a, const Var& b);
Var matmul_transposed(const Var& a, const Var& b);  // a * b^T
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // broadcast 1 x n over rows
Var scale(const Var& a, double s);
Var hadamard(const Var& a, const Var& b);
Var relu(const Var& a);
Var mean_rows(const Var& a);  // n x d -> 1 x d
Var sum_rows(const Var& a);   // n x d -> 1 x d
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var softmax_rows(const Var& a);
// Row-wise (x - mean) / sqrt(var + eps) * gain + bias; gain and bias are 1 x d.
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
Var sum_all(const Var& a);  // -> 1 x 1

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }

}  // namespace ag
}  // namespace sepl
