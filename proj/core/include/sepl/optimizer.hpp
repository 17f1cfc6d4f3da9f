#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sepl/checkpoint.hpp"
#include "sepl/config.hpp"
#include "sepl/parameters.hpp"

namespace sepl {

// Adam with coupled L2 weight decay and global-norm gradient clipping,
// applied in that order: clip, add decay * theta, moment update.
class AdamOptimizer {
public:
    explicit AdamOptimizer(const TrainConfig& config);

    // Updates those of `names` that received a gradient in the last backward
    // pass; returns the global gradient norm before clipping.
    double step(ParameterStore& store, const std::vector<std::string>& names);
    void reset();

    std::int64_t steps_taken() const { return t_; }
    void save(Checkpoint& checkpoint) const;
    void load(const Checkpoint& checkpoint);

private:
    double lr_, decay_, beta1_, beta2_, eps_, clip_;
    std::int64_t t_ = 0;
    std::map<std::string, Matrix> m_, v_;
};

}  // namespace sepl
