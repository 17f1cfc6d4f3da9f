#include "sepl/parameters.hpp"

#include <random>
#include <span>

#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

ag::Var ParameterStore::add(const std::string& name, Matrix init, ParamRole role) {
    if (contains(name)) throw Error("parameter '" + name + "' registered twice");
    Parameter p{ag::Var(std::move(init), false), role};
    auto [it, inserted] = params_.emplace(name, std::move(p));
    return it->second.var;
}

const ag::Var& ParameterStore::get(const std::string& name) const {
    const auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second.var;
}

ParamRole ParameterStore::role(const std::string& name) const {
    const auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second.role;
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
}

void ParameterStore::set_trainable(const std::function<bool(const std::string&)>& pred) {
    for (auto& [name, p] : params_) {
        auto var = p.var;
        var.set_requires_grad(p.role == ParamRole::kLearnable && pred(name));
        var.zero_grad();
    }
}

std::vector<std::string> ParameterStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, p] : params_)
        if (p.var.requires_grad()) out.push_back(name);
    return out;
}

void ParameterStore::zero_grad() {
    for (auto& [_, p] : params_) {
        auto var = p.var;
        var.zero_grad();
    }
}

std::uint64_t ParameterStore::checksum(
    const std::function<bool(const std::string&)>& pred) const {
    Fnv1a h;
    for (const auto& [name, p] : params_) {
        if (!pred(name)) continue;
        h.update(name);
        const std::int64_t shape[2] = {p.var.rows(), p.var.cols()};
        h.update(shape, sizeof(shape));
        h.update(std::span<const double>(p.var.value().data(),
                                         static_cast<std::size_t>(p.var.value().size())));
    }
    return h.digest();
}

std::map<std::string, Matrix> ParameterStore::snapshot() const {
    std::map<std::string, Matrix> out;
    for (const auto& [name, p] : params_) out.emplace(name, p.var.value());
    return out;
}

void ParameterStore::load(const std::map<std::string, Matrix>& values) {
    for (auto& [name, p] : params_) {
        const auto it = values.find(name);
        if (it == values.end()) throw CheckpointError("missing parameter '" + name + "'");
        if (it->second.rows() != p.var.rows() || it->second.cols() != p.var.cols())
            throw CheckpointError("shape mismatch for parameter '" + name + "'");
        auto var = p.var;
        var.mutable_value() = it->second;
    }
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

}  // namespace sepl
