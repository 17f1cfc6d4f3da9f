#include "sepl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "sepl/error.hpp"

namespace sepl {

namespace {

struct Normalized {
    Matrix unit;
    Eigen::VectorXd norms;
};

Normalized normalize_rows(const Matrix& x, const char* who) {
    Normalized out{Matrix(x.rows(), x.cols()), Eigen::VectorXd(x.rows())};
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double n = x.row(i).norm();
        if (!(n > 1e-12) || !std::isfinite(n))
            throw TrainingError(std::string(who) + ": row " + std::to_string(i) +
                                " has zero or non-finite norm (feature collapse)");
        out.norms(i) = n;
        out.unit.row(i) = x.row(i) / n;
    }
    return out;
}

// Pulls a gradient on unit rows back to the raw rows.
Matrix normalize_backward(const Matrix& grad_unit, const Normalized& n) {
    Matrix out(grad_unit.rows(), grad_unit.cols());
    for (Eigen::Index i = 0; i < grad_unit.rows(); ++i) {
        const double along = grad_unit.row(i).dot(n.unit.row(i));
        out.row(i) = (grad_unit.row(i) - along * n.unit.row(i)) / n.norms(i);
    }
    return out;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(who) + ": input shapes differ");
}

void check_labels(const Labels& labels, Eigen::Index n, const char* who) {
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw ShapeError(std::string(who) + ": label count does not match batch size");
    for (int y : labels)
        if (y != 0 && y != 1) throw ShapeError(std::string(who) + ": labels must be 0 or 1");
}

double log_sum_exp(const Eigen::Ref<const RowVector>& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

double cosine_similarity(const RowVector& a, const RowVector& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 1e-12) || !(nb > 1e-12)) throw TrainingError("cosine_similarity: zero-norm vector");
    return a.dot(b) / (na * nb);
}

PairLossGrad loss_pre(const Matrix& image, const Matrix& text, double tau) {
    if (!(tau > 0)) throw ConfigError("loss_pre: tau must be > 0");
    check_same_shape(image, text, "loss_pre");
    const Eigen::Index n = image.rows();
    if (n < 1) throw ShapeError("loss_pre: empty batch");
    const Normalized fi = normalize_rows(image, "loss_pre");
    const Normalized ti = normalize_rows(text, "loss_pre");
    const Matrix s = fi.unit * ti.unit.transpose() / tau;

    Matrix row_soft(n, n), col_soft(n, n);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double lr = log_sum_exp(s.row(i));
        const double lc = log_sum_exp(s.col(i).transpose());
        acc += 2.0 * s(i, i) - lr - lc;
        row_soft.row(i) = (s.row(i).array() - lr).exp();
        col_soft.col(i) = (s.col(i).array() - lc).exp();
    }
    PairLossGrad out;
    const double inv = 1.0 / (2.0 * static_cast<double>(n));
    out.value = -acc * inv;
    const Matrix grad_sim =
        (row_soft + col_soft - 2.0 * Matrix::Identity(n, n)) * (inv / tau);
    out.grad_a = normalize_backward(grad_sim * ti.unit, fi);
    out.grad_b = normalize_backward(grad_sim.transpose() * fi.unit, ti);
    return out;
}

PairLossGrad loss_dis(const Matrix& f_a, const Matrix& f_b) {
    check_same_shape(f_a, f_b, "loss_dis");
    const Eigen::Index n = f_a.rows();
    if (n < 1) throw ShapeError("loss_dis: empty batch");
    const Normalized a = normalize_rows(f_a, "loss_dis");
    const Normalized b = normalize_rows(f_b, "loss_dis");
    Matrix ga(n, f_a.cols()), gb(n, f_a.cols());
    double acc = 0.0;
    const double inv = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double c = a.unit.row(i).dot(b.unit.row(i));
        acc += std::abs(c);
        const double sign = c > 0 ? 1.0 : (c < 0 ? -1.0 : 0.0);
        ga.row(i) = sign * inv * b.unit.row(i);
        gb.row(i) = sign * inv * a.unit.row(i);
    }
    return {acc * inv, normalize_backward(ga, a), normalize_backward(gb, b)};
}

namespace {

// Mean over ordered pairs i != j of cos(x_i, x_j), with gradient.
LossGrad mean_pairwise_cosine(const Matrix& x) {
    const Eigen::Index n = x.rows();
    const Normalized u = normalize_rows(x, "loss_div");
    const Matrix c = u.unit * u.unit.transpose();
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1);
    LossGrad out;
    out.value = (c.sum() - c.trace()) / pairs;
    Matrix g = Matrix::Constant(n, n, 1.0 / pairs);
    g.diagonal().setZero();
    out.grad = normalize_backward(2.0 * g * u.unit, u);
    return out;
}

}  // namespace

PairLossGrad loss_div(const Matrix& t_a, const Matrix& t_b) {
    check_same_shape(t_a, t_b, "loss_div");
    if (t_a.rows() < 2) throw ShapeError("loss_div: needs at least 2 samples");
    const LossGrad a = mean_pairwise_cosine(t_a);
    const LossGrad b = mean_pairwise_cosine(t_b);
    return {a.value + b.value, a.grad, b.grad};
}

AlignLossGrad loss_align(const Matrix& f_a, const Matrix& f_b, const Matrix& t_a_proj,
                         const Matrix& t_b_proj, const Labels& labels, double w_spec,
                         double w_irr) {
    check_same_shape(f_a, t_a_proj, "loss_align");
    check_same_shape(f_b, t_b_proj, "loss_align");
    if (f_a.rows() != f_b.rows()) throw ShapeError("loss_align: stream batch sizes differ");
    const Eigen::Index n = f_a.rows();
    if (n < 1) throw ShapeError("loss_align: empty batch");
    check_labels(labels, n, "loss_align");

    const Normalized fa = normalize_rows(f_a, "loss_align");
    const Normalized fb = normalize_rows(f_b, "loss_align");
    const Normalized ta = normalize_rows(t_a_proj, "loss_align");
    const Normalized tb = normalize_rows(t_b_proj, "loss_align");

    Eigen::Index n_fake = 0;
    for (int y : labels) n_fake += y;
    const Eigen::Index n_real = n - n_fake;

    AlignLossGrad out;
    Matrix gfa = Matrix::Zero(n, f_a.cols()), gta = Matrix::Zero(n, f_a.cols());
    Matrix gfb(n, f_b.cols()), gtb(n, f_b.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double cb = fb.unit.row(i).dot(tb.unit.row(i));
        out.irrelevant -= cb * inv_n;
        gfb.row(i) = -w_irr * inv_n * tb.unit.row(i);
        gtb.row(i) = -w_irr * inv_n * fb.unit.row(i);

        const double ca = fa.unit.row(i).dot(ta.unit.row(i));
        // Fake samples are pulled toward the specific prompt, real ones pushed away.
        const double coeff = labels[static_cast<std::size_t>(i)] == 1
                                 ? -1.0 / static_cast<double>(n_fake)
                                 : 1.0 / static_cast<double>(n_real);
        out.specific += coeff * ca;
        gfa.row(i) = w_spec * coeff * ta.unit.row(i);
        gta.row(i) = w_spec * coeff * fa.unit.row(i);
    }
    out.value = w_irr * out.irrelevant + w_spec * out.specific;
    out.grad_f_a = normalize_backward(gfa, fa);
    out.grad_t_a = normalize_backward(gta, ta);
    out.grad_f_b = normalize_backward(gfb, fb);
    out.grad_t_b = normalize_backward(gtb, tb);
    return out;
}

LossGrad loss_con(const Matrix& features, const Labels& labels, double tau) {
    if (!(tau > 0)) throw ConfigError("loss_con: tau must be > 0");
    const Eigen::Index n = features.rows();
    if (n < 2) throw ShapeError("loss_con: needs at least 2 samples");
    check_labels(labels, n, "loss_con");
    const Normalized z = normalize_rows(features, "loss_con");
    const Matrix s = z.unit * z.unit.transpose() / tau;

    LossGrad out;
    Matrix g = Matrix::Zero(n, n);  // d loss / d s
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<Eigen::Index> positives;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i && labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)])
                positives.push_back(j);
        if (positives.empty()) continue;

        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < n; ++k)
            if (k != i) m = std::max(m, s(i, k));
        double denom = 0.0;
        for (Eigen::Index k = 0; k < n; ++k)
            if (k != i) denom += std::exp(s(i, k) - m);
        const double lse = m + std::log(denom);

        const double count = static_cast<double>(positives.size());
        for (Eigen::Index j : positives) out.value += (lse - s(i, j)) * inv_n;
        for (Eigen::Index k = 0; k < n; ++k)
            if (k != i) g(i, k) += inv_n * count * std::exp(s(i, k) - lse);
        for (Eigen::Index j : positives) g(i, j) -= inv_n;
    }
    out.grad = normalize_backward((g + g.transpose()) * z.unit / tau, z);
    return out;
}

LossGrad cross_entropy(const Matrix& logits, const Labels& labels) {
    const Eigen::Index n = logits.rows();
    if (n < 1) throw ShapeError("cross_entropy: empty batch");
    if (logits.cols() != ModelConfig::kNumClasses)
        throw ShapeError("cross_entropy: expected 2 logits per sample");
    check_labels(labels, n, "cross_entropy");
    LossGrad out;
    out.grad.resize(n, logits.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double lse = log_sum_exp(logits.row(i));
        const auto y = labels[static_cast<std::size_t>(i)];
        out.value += (lse - logits(i, y)) * inv_n;
        out.grad.row(i) = (logits.row(i).array() - lse).exp() * inv_n;
        out.grad(i, y) -= inv_n;
    }
    return out;
}

ClsLossGrad loss_cls(const Matrix& f_a, const Matrix& weight, const Matrix& bias,
                     const Labels& labels) {
    if (weight.rows() != f_a.cols() || weight.cols() != ModelConfig::kNumClasses ||
        bias.rows() != 1 || bias.cols() != ModelConfig::kNumClasses)
        throw ShapeError("loss_cls: head must map joint_dim -> 2");
    Matrix logits = f_a * weight;
    logits.rowwise() += bias.row(0);
    const LossGrad ce = cross_entropy(logits, labels);
    ClsLossGrad out;
    out.value = ce.value;
    out.grad_f = ce.grad * weight.transpose();
    out.grad_weight = f_a.transpose() * ce.grad;
    out.grad_bias = ce.grad.colwise().sum();
    return out;
}

// ─── Weighted total ────────────────────────────────────────────────────────

double LossReport::recomputed_total() const {
    return terms.cls + weights.dis * terms.dis + weights.div * terms.div +
           weights.align_specific * terms.align_specific +
           weights.align_irrelevant * terms.align_irrelevant + weights.con * terms.con;
}

EffectiveWeights effective_weights(const LossWeights& w, const LossSwitches& on,
                                   std::int64_t step, std::int64_t total_steps) {
    const auto ramp = [&](bool enabled, double base) {
        return enabled ? warmup_weight(base, step, total_steps, w.warmup_ratio) : 0.0;
    };
    EffectiveWeights e;
    e.dis = ramp(on.dis, w.lambda_dis);
    e.div = ramp(on.div, w.lambda_div);
    e.align_specific = ramp(on.align, w.lambda_align_specific);
    e.align_irrelevant = ramp(on.align, w.lambda_align_irrelevant);
    e.con = ramp(on.con, w.lambda_con);
    return e;
}

LossReport loss_total(const LossTerms& terms, const LossWeights& weights, std::int64_t step,
                      std::int64_t total_steps, const LossSwitches& switches) {
    LossReport r;
    r.step = step;
    r.terms = terms;
    r.weights = effective_weights(weights, switches, step, total_steps);
    r.total = r.recomputed_total();
    return r;
}

std::string to_log_line(const LossReport& r) {
    nlohmann::ordered_json j;
    j["stage"] = r.stage;
    j["step"] = r.step;
    j["lr"] = r.learning_rate;
    j["pre"] = r.terms.pre;
    j["cls"] = r.terms.cls;
    j["dis"] = r.terms.dis;
    j["div"] = r.terms.div;
    j["align_specific"] = r.terms.align_specific;
    j["align_irrelevant"] = r.terms.align_irrelevant;
    j["con"] = r.terms.con;
    j["w_dis"] = r.weights.dis;
    j["w_div"] = r.weights.div;
    j["w_align_specific"] = r.weights.align_specific;
    j["w_align_irrelevant"] = r.weights.align_irrelevant;
    j["w_con"] = r.weights.con;
    j["total"] = r.total;
    return j.dump();
}

LossReport parse_log_line(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    LossReport r;
    r.stage = j.at("stage").get<int>();
    r.step = j.at("step").get<std::int64_t>();
    r.learning_rate = j.at("lr").get<double>();
    r.terms.pre = j.at("pre").get<double>();
    r.terms.cls = j.at("cls").get<double>();
    r.terms.dis = j.at("dis").get<double>();
    r.terms.div = j.at("div").get<double>();
    r.terms.align_specific = j.at("align_specific").get<double>();
    r.terms.align_irrelevant = j.at("align_irrelevant").get<double>();
    r.terms.con = j.at("con").get<double>();
    r.weights.dis = j.at("w_dis").get<double>();
    r.weights.div = j.at("w_div").get<double>();
    r.weights.align_specific = j.at("w_align_specific").get<double>();
    r.weights.align_irrelevant = j.at("w_align_irrelevant").get<double>();
    r.weights.con = j.at("w_con").get<double>();
    r.total = j.at("total").get<double>();
    return r;
}

// ─── Graph wrappers ────────────────────────────────────────────────────────

namespace node {

namespace {

Matrix scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return m;
}

// 1 x 1 node whose backward scales precomputed input gradients.
ag::Var from_grads(double value, std::vector<ag::Var> inputs, std::vector<Matrix> grads) {
    return ag::make_op(scalar(value), std::move(inputs),
                       [grads = std::move(grads)](ag::Node& n) {
                           const double g = n.grad(0, 0);
                           for (std::size_t i = 0; i < n.inputs.size(); ++i)
                               if (n.inputs[i]->requires_grad)
                                   n.inputs[i]->grad_buffer() += g * grads[i];
                       });
}

}  // namespace

ag::Var loss_pre(const ag::Var& image, const ag::Var& text, double tau) {
    auto r = sepl::loss_pre(image.value(), text.value(), tau);
    return from_grads(r.value, {image, text}, {std::move(r.grad_a), std::move(r.grad_b)});
}

ag::Var loss_dis(const ag::Var& f_a, const ag::Var& f_b) {
    auto r = sepl::loss_dis(f_a.value(), f_b.value());
    return from_grads(r.value, {f_a, f_b}, {std::move(r.grad_a), std::move(r.grad_b)});
}

ag::Var loss_div(const ag::Var& t_a, const ag::Var& t_b) {
    auto r = sepl::loss_div(t_a.value(), t_b.value());
    return from_grads(r.value, {t_a, t_b}, {std::move(r.grad_a), std::move(r.grad_b)});
}

std::pair<ag::Var, ag::Var> loss_align(const ag::Var& f_a, const ag::Var& f_b,
                                       const ag::Var& t_a_proj, const ag::Var& t_b_proj,
                                       const Labels& labels) {
    // Unit weights isolate each sub-term's gradient.
    auto spec = sepl::loss_align(f_a.value(), f_b.value(), t_a_proj.value(), t_b_proj.value(),
                                 labels, 1.0, 0.0);
    auto irr = sepl::loss_align(f_a.value(), f_b.value(), t_a_proj.value(), t_b_proj.value(),
                                labels, 0.0, 1.0);
    return {from_grads(spec.specific, {f_a, t_a_proj},
                       {std::move(spec.grad_f_a), std::move(spec.grad_t_a)}),
            from_grads(irr.irrelevant, {f_b, t_b_proj},
                       {std::move(irr.grad_f_b), std::move(irr.grad_t_b)})};
}

ag::Var loss_con(const ag::Var& features, const Labels& labels, double tau) {
    auto r = sepl::loss_con(features.value(), labels, tau);
    return from_grads(r.value, {features}, {std::move(r.grad)});
}

ag::Var cross_entropy(const ag::Var& logits, const Labels& labels) {
    auto r = sepl::cross_entropy(logits.value(), labels);
    return from_grads(r.value, {logits}, {std::move(r.grad)});
}

}  // namespace node

}  // namespace sepl
