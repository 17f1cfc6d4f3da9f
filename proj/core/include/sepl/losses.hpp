#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sepl/autograd.hpp"
#include "sepl/config.hpp"

namespace sepl {

// Binary labels, 1 = fake.
using Labels = std::vector<int>;

// Every objective is a pure function of its inputs returning the value and
// the analytic gradient with respect to each input array. sim(.,.) is cosine
// similarity throughout. Rows are samples.

struct LossGrad {
    double value = 0.0;
    Matrix grad;
};

struct PairLossGrad {
    double value = 0.0;
    Matrix grad_a;
    Matrix grad_b;
};

double cosine_similarity(const RowVector& a, const RowVector& b);

// Symmetric image/text contrastive loss. Sample i's positive is text row i;
// every other row in the batch is a negative.
PairLossGrad loss_pre(const Matrix& image, const Matrix& text, double tau);

// Mean over samples of |cos(f_A_i, f_B_i)|.
PairLossGrad loss_dis(const Matrix& f_a, const Matrix& f_b);

// Mean pairwise (i != j) cosine similarity within each stream, summed over
// the two streams. Needs N >= 2.
PairLossGrad loss_div(const Matrix& t_a, const Matrix& t_b);

struct AlignLossGrad {
    double value = 0.0;       // w_irr * irrelevant + w_spec * specific
    double irrelevant = 0.0;  // -mean_i sim(f_B_i, T_B_i)
    double specific = 0.0;    // -mean_fake sim(f_A, T_A) + mean_real sim(f_A, T_A)
    Matrix grad_f_a, grad_f_b, grad_t_a, grad_t_b;
};

// Asymmetric alignment. The label indicator gates which expectation a sample
// enters; an empty gated subset contributes 0. Text inputs are already
// projected into the visual space.
AlignLossGrad loss_align(const Matrix& f_a, const Matrix& f_b, const Matrix& t_a_proj,
                         const Matrix& t_b_proj, const Labels& labels, double w_spec,
                         double w_irr);

// Supervised contrastive loss on l2-normalized rows, summed over each
// anchor's positives and divided by N. Anchors without positives add 0.
LossGrad loss_con(const Matrix& features, const Labels& labels, double tau);

// Mean softmax cross-entropy of N x 2 logits.
LossGrad cross_entropy(const Matrix& logits, const Labels& labels);

struct ClsLossGrad {
    double value = 0.0;
    Matrix grad_f;
    Matrix grad_weight;
    Matrix grad_bias;
};

// Cross-entropy of the linear head logits = f_a * weight + bias (weight is
// joint_dim x 2).
ClsLossGrad loss_cls(const Matrix& f_a, const Matrix& weight, const Matrix& bias,
                     const Labels& labels);

// ─── Weighted total ────────────────────────────────────────────────────────

struct LossTerms {
    double pre = 0.0;
    double cls = 0.0;
    double dis = 0.0;
    double div = 0.0;
    double align_specific = 0.0;
    double align_irrelevant = 0.0;
    double con = 0.0;
    bool operator==(const LossTerms&) const = default;
};

struct EffectiveWeights {
    double dis = 0.0;
    double div = 0.0;
    double align_specific = 0.0;
    double align_irrelevant = 0.0;
    double con = 0.0;
    bool operator==(const EffectiveWeights&) const = default;
};

struct LossSwitches {
    bool dis = true;
    bool div = true;
    bool align = true;
    bool con = true;
};

struct LossReport {
    int stage = 2;
    std::int64_t step = 0;
    double learning_rate = 0.0;
    LossTerms terms;
    EffectiveWeights weights;
    double total = 0.0;

    // Unweighted alignment value (both sub-terms at weight 1).
    double align() const { return terms.align_specific + terms.align_irrelevant; }
    // cls + sum of weight * term, recomputed from the parts.
    double recomputed_total() const;
};

// Auxiliary weights follow the warm-up ramp at `step`; the classification
// term keeps weight 1 throughout.
EffectiveWeights effective_weights(const LossWeights& weights, const LossSwitches& switches,
                                   std::int64_t step, std::int64_t total_steps);
LossReport loss_total(const LossTerms& terms, const LossWeights& weights, std::int64_t step,
                      std::int64_t total_steps, const LossSwitches& switches = {});

// One JSON object per line; see README for the field list.
std::string to_log_line(const LossReport& report);
LossReport parse_log_line(const std::string& line);

// ─── Graph wrappers ────────────────────────────────────────────────────────
// The same objectives as 1 x 1 autograd nodes whose backward uses the
// analytic gradients above.
namespace node {

ag::Var loss_pre(const ag::Var& image, const ag::Var& text, double tau);
ag::Var loss_dis(const ag::Var& f_a, const ag::Var& f_b);
ag::Var loss_div(const ag::Var& t_a, const ag::Var& t_b);
// Returns {specific, irrelevant} raw sub-terms as separate nodes.
std::pair<ag::Var, ag::Var> loss_align(const ag::Var& f_a, const ag::Var& f_b,
                                       const ag::Var& t_a_proj, const ag::Var& t_b_proj,
                                       const Labels& labels);
ag::Var loss_con(const ag::Var& features, const Labels& labels, double tau);
ag::Var cross_entropy(const ag::Var& logits, const Labels& labels);

}  // namespace node

}  // namespace sepl
