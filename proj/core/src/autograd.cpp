#include "sepl/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include "sepl/error.hpp"

namespace sepl::ag {

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
}

Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (const auto& in : inputs) {
        node->requires_grad = node->requires_grad || in.requires_grad();
        node->inputs.push_back(in.node());
    }
    if (node->requires_grad) {
        node->backward = std::move(backward);
    } else {
        node->inputs.clear();
    }
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward: root must be 1 x 1");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->grad.size() != 0) node->backward(*node);
    }
}

Var constant(Matrix value) { return Var(std::move(value), false); }

namespace {

void check(bool ok, const char* op, const char* what) {
    if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

bool wants(const std::shared_ptr<Node>& n) { return n->requires_grad; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
    check(a.cols() == b.rows(), "matmul", "inner dimensions differ");
    return make_op(a.value() * b.value(), {a, b}, [](Node& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (wants(a)) a->grad_buffer().noalias() += n.grad * b->value.transpose();
        if (wants(b)) b->grad_buffer().noalias() += a->value.transpose() * n.grad;
    });
}

Var matmul_transposed(const Var& a, const Var& b) {
    check(a.cols() == b.cols(), "matmul_transposed", "inner dimensions differ");
    return make_op(a.value() * b.value().transpose(), {a, b}, [](Node& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (wants(a)) a->grad_buffer().noalias() += n.grad * b->value;
        if (wants(b)) b->grad_buffer().noalias() += n.grad.transpose() * a->value;
    });
}

Var add(const Var& a, const Var& b) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), "add", "shape mismatch");
    return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
        for (auto& in : n.inputs)
            if (wants(in)) in->grad_buffer() += n.grad;
    });
}

Var sub(const Var& a, const Var& b) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), "sub", "shape mismatch");
    return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
        if (wants(n.inputs[0])) n.inputs[0]->grad_buffer() += n.grad;
        if (wants(n.inputs[1])) n.inputs[1]->grad_buffer() -= n.grad;
    });
}

Var add_row(const Var& a, const Var& row) {
    check(row.rows() == 1 && row.cols() == a.cols(), "add_row", "row must be 1 x cols(a)");
    Matrix out = a.value();
    out.rowwise() += row.value().row(0);
    return make_op(std::move(out), {a, row}, [](Node& n) {
        if (wants(n.inputs[0])) n.inputs[0]->grad_buffer() += n.grad;
        if (wants(n.inputs[1])) n.inputs[1]->grad_buffer() += n.grad.colwise().sum();
    });
}

Var scale(const Var& a, double s) {
    return make_op(a.value() * s, {a}, [s](Node& n) { n.inputs[0]->grad_buffer() += n.grad * s; });
}

Var hadamard(const Var& a, const Var& b) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", "shape mismatch");
    return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (wants(a)) a->grad_buffer() += n.grad.cwiseProduct(b->value);
        if (wants(b)) b->grad_buffer() += n.grad.cwiseProduct(a->value);
    });
}

Var relu(const Var& a) {
    return make_op(a.value().cwiseMax(0.0), {a}, [](Node& n) {
        const auto& x = n.inputs[0]->value;
        n.inputs[0]->grad_buffer() += (x.array() > 0.0).select(n.grad, 0.0);
    });
}

Var mean_rows(const Var& a) {
    check(a.rows() > 0, "mean_rows", "empty input");
    const double inv = 1.0 / static_cast<double>(a.rows());
    return make_op(a.value().colwise().sum() * inv, {a}, [inv](Node& n) {
        n.inputs[0]->grad_buffer().rowwise() += n.grad.row(0) * inv;
    });
}

Var sum_rows(const Var& a) {
    return make_op(a.value().colwise().sum(), {a}, [](Node& n) {
        n.inputs[0]->grad_buffer().rowwise() += n.grad.row(0);
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_rows", "no inputs");
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        check(p.cols() == parts.front().cols(), "concat_rows", "column counts differ");
        rows += p.rows();
    }
    Matrix out(rows, parts.front().cols());
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return make_op(std::move(out), parts, [](Node& n) {
        Eigen::Index at = 0;
        for (auto& in : n.inputs) {
            const auto r = in->value.rows();
            if (wants(in)) in->grad_buffer() += n.grad.middleRows(at, r);
            at += r;
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_cols", "no inputs");
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        check(p.rows() == parts.front().rows(), "concat_cols", "row counts differ");
        cols += p.cols();
    }
    Matrix out(parts.front().rows(), cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return make_op(std::move(out), parts, [](Node& n) {
        Eigen::Index at = 0;
        for (auto& in : n.inputs) {
            const auto c = in->value.cols();
            if (wants(in)) in->grad_buffer() += n.grad.middleCols(at, c);
            at += c;
        }
    });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows", "out of range");
    return make_op(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
        n.inputs[0]->grad_buffer().middleRows(start, count) += n.grad;
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols", "out of range");
    return make_op(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
        n.inputs[0]->grad_buffer().middleCols(start, count) += n.grad;
    });
}

Var softmax_rows(const Var& a) {
    check(a.cols() > 0, "softmax_rows", "empty rows");
    Matrix out(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double m = a.value().row(i).maxCoeff();
        out.row(i) = (a.value().row(i).array() - m).exp().matrix();
        out.row(i) /= out.row(i).sum();
    }
    return make_op(out, {a}, [](Node& n) {
        // dx = y * (g - <g, y>) per row
        const Matrix& y = n.value;
        Matrix dx = y.cwiseProduct(n.grad);
        const Eigen::VectorXd dots = dx.rowwise().sum();
        dx -= y.cwiseProduct(dots.replicate(1, y.cols()));
        n.inputs[0]->grad_buffer() += dx;
    });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
    const auto d = a.cols();
    check(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 && bias.cols() == d,
          "layer_norm_rows", "gain/bias must be 1 x cols");
    Matrix xhat(a.rows(), d);
    Eigen::VectorXd inv_std(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double mean = a.value().row(i).mean();
        const RowVector centered = a.value().row(i).array() - mean;
        const double var = centered.squaredNorm() / static_cast<double>(d);
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = centered * inv_std(i);
    }
    Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
    out.rowwise() += bias.value().row(0);
    return make_op(std::move(out), {a, gain, bias}, [xhat, inv_std](Node& n) {
        auto& x = n.inputs[0];
        auto& gain = n.inputs[1];
        auto& bias = n.inputs[2];
        if (wants(gain)) gain->grad_buffer() += n.grad.cwiseProduct(xhat).colwise().sum();
        if (wants(bias)) bias->grad_buffer() += n.grad.colwise().sum();
        if (wants(x)) {
            const double d = static_cast<double>(xhat.cols());
            const Matrix gx = n.grad.array().rowwise() * gain->value.row(0).array();
            Matrix dx(xhat.rows(), xhat.cols());
            for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
                const double mean_g = gx.row(i).mean();
                const double mean_gx = gx.row(i).dot(xhat.row(i)) / d;
                dx.row(i) = inv_std(i) * (gx.row(i).array() - mean_g - xhat.row(i).array() * mean_gx);
            }
            x->grad_buffer() += dx;
        }
    });
}

Var sum_all(const Var& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return make_op(std::move(out), {a}, [](Node& n) {
        n.inputs[0]->grad_buffer().array() += n.grad(0, 0);
    });
}

}  // namespace sepl::ag
