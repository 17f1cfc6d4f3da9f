#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sepl/autograd.hpp"

namespace sepl {

// Frozen backbone weights never receive gradients; everything else is learnable
// and trainable according to the active stage plan.
enum class ParamRole { kFrozenBase, kLearnable };

struct Parameter {
    ag::Var var;
    ParamRole role = ParamRole::kLearnable;
};

// Named parameters of one model, in deterministic (lexicographic) order.
class ParameterStore {
public:
    ag::Var add(const std::string& name, Matrix init, ParamRole role);
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const ag::Var& get(const std::string& name) const;
    ParamRole role(const std::string& name) const;
    std::vector<std::string> names() const;

    // Marks exactly the parameters accepted by `pred` as trainable. Frozen
    // base weights are never made trainable.
    void set_trainable(const std::function<bool(const std::string&)>& pred);
    std::vector<std::string> trainable_names() const;
    void zero_grad();

    // FNV-1a over names, shapes and bytes of the selected parameters.
    std::uint64_t checksum(const std::function<bool(const std::string&)>& pred) const;
    std::uint64_t checksum() const {
        return checksum([](const std::string&) { return true; });
    }

    std::map<std::string, Matrix> snapshot() const;
    // Copies values in place; names and shapes must match the store.
    void load(const std::map<std::string, Matrix>& values);

private:
    std::map<std::string, Parameter> params_;
};

// Deterministic seeded initializers.
Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::uint64_t seed);

}  // namespace sepl
