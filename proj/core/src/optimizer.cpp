#include "sepl/optimizer.hpp"

#include <cmath>

#include "sepl/error.hpp"

namespace sepl {

AdamOptimizer::AdamOptimizer(const TrainConfig& c)
    : lr_(c.learning_rate),
      decay_(c.weight_decay),
      beta1_(c.adam_beta1),
      beta2_(c.adam_beta2),
      eps_(c.adam_eps),
      clip_(c.grad_clip) {}

void AdamOptimizer::reset() {
    t_ = 0;
    m_.clear();
    v_.clear();
}

double AdamOptimizer::step(ParameterStore& store, const std::vector<std::string>& requested) {
    // Parameters the last backward pass never reached are left alone (no
    // decay, no moment update).
    std::vector<std::string> names;
    for (const auto& name : requested)
        if (store.get(name).has_grad()) names.push_back(name);
    std::vector<Matrix> grads;
    grads.reserve(names.size());
    double sq = 0.0;
    for (const auto& name : names) {
        grads.push_back(store.get(name).grad());
        sq += grads.back().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm");
    const double factor = (clip_ > 0 && norm > clip_) ? clip_ / norm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < names.size(); ++i) {
        ag::Var param = store.get(names[i]);
        Matrix g = grads[i] * factor + decay_ * param.value();
        auto [mit, m_new] = m_.try_emplace(names[i], Matrix::Zero(g.rows(), g.cols()));
        auto [vit, v_new] = v_.try_emplace(names[i], Matrix::Zero(g.rows(), g.cols()));
        Matrix& m = mit->second;
        Matrix& v = vit->second;
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        param.mutable_value().array() -=
            lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
        param.zero_grad();
    }
    return norm;
}

void AdamOptimizer::save(Checkpoint& checkpoint) const {
    checkpoint.meta["adam_t"] = t_;
    for (const auto& [name, m] : m_) checkpoint.arrays["optim.m." + name] = m;
    for (const auto& [name, v] : v_) checkpoint.arrays["optim.v." + name] = v;
}

void AdamOptimizer::load(const Checkpoint& checkpoint) {
    reset();
    t_ = checkpoint.meta.value("adam_t", std::int64_t{0});
    for (const auto& [name, arr] : checkpoint.arrays) {
        if (name.rfind("optim.m.", 0) == 0) m_[name.substr(8)] = arr;
        if (name.rfind("optim.v.", 0) == 0) v_[name.substr(8)] = arr;
    }
}

}  // namespace sepl
