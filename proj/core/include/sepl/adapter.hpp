#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sepl/autograd.hpp"
#include "sepl/parameters.hpp"

namespace sepl {

// A frozen linear map y = x W + b that adapters may attach to.
struct LinearTarget {
    std::string name;  // e.g. "vision.embed"
    Eigen::Index in = 0;
    Eigen::Index out = 0;
};

// Additive trainable delta on a frozen linear map. apply() returns the
// N x out contribution that is added to x W + b.
class Adapter {
public:
    virtual ~Adapter() = default;
    virtual ag::Var apply(const ag::Var& x) const = 0;
    // Restriction of the delta to a contiguous block of input features.
    virtual ag::Var apply_rows(const ag::Var& x_block, Eigen::Index row_start) const = 0;
    virtual std::vector<std::string> parameter_names() const = 0;
};

struct AdapterPair {
    std::string target;
    Matrix down;  // in x rank
    Matrix up;    // rank x out
};

struct AdapterState {
    int rank = 0;
    std::string kind;
    std::vector<AdapterPair> pairs;
};

// Standard low-rank adapter: delta = (x * down) * up, with `up` zero-initialized
// so an adapted model is identical to the frozen one before training.
class LowRankAdapter : public Adapter {
public:
    LowRankAdapter(const LinearTarget& target, int rank, std::uint64_t seed,
                   ParameterStore& store);
    ag::Var apply(const ag::Var& x) const override;
    ag::Var apply_rows(const ag::Var& x_block, Eigen::Index row_start) const override;
    std::vector<std::string> parameter_names() const override;

private:
    std::string prefix_;
    ag::Var down_;
    ag::Var up_;
};

using AdapterFactory = std::function<std::unique_ptr<Adapter>(
    const LinearTarget& target, int rank, std::uint64_t seed, ParameterStore& store)>;

// Plug-in registry for adapter variants selected as "plugin:<name>".
void register_adapter(const std::string& name, AdapterFactory factory);
bool has_adapter(const std::string& name);

// Builds an adapter for `kind` ("standard" or "plugin:<name>").
std::unique_ptr<Adapter> make_adapter(const std::string& kind, const LinearTarget& target,
                                      int rank, std::uint64_t seed, ParameterStore& store);

}  // namespace sepl
