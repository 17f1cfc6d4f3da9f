#include "sepl/adapter.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

LowRankAdapter::LowRankAdapter(const LinearTarget& target, int rank, std::uint64_t seed,
                               ParameterStore& store)
    : prefix_("adapter." + target.name) {
    if (rank <= 0) throw ConfigError("adapter_rank: low-rank adapter needs rank >= 1");
    if (rank > std::min(target.in, target.out))
        throw ConfigError("adapter_rank: rank " + std::to_string(rank) + " exceeds dims of " +
                          target.name);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(target.in));
    down_ = store.add(prefix_ + ".down",
                      normal_matrix(target.in, rank, stddev, derive_seed(seed, prefix_ + ".down")),
                      ParamRole::kLearnable);
    up_ = store.add(prefix_ + ".up", Matrix::Zero(rank, target.out), ParamRole::kLearnable);
}

ag::Var LowRankAdapter::apply(const ag::Var& x) const {
    return ag::matmul(ag::matmul(x, down_), up_);
}

ag::Var LowRankAdapter::apply_rows(const ag::Var& x_block, Eigen::Index row_start) const {
    return ag::matmul(ag::matmul(x_block, ag::slice_rows(down_, row_start, x_block.cols())), up_);
}

std::vector<std::string> LowRankAdapter::parameter_names() const {
    return {prefix_ + ".down", prefix_ + ".up"};
}

namespace {

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

std::map<std::string, AdapterFactory>& registry() {
    static std::map<std::string, AdapterFactory> r;
    return r;
}

}  // namespace

void register_adapter(const std::string& name, AdapterFactory factory) {
    std::lock_guard lock(registry_mutex());
    registry()[name] = std::move(factory);
}

bool has_adapter(const std::string& name) {
    std::lock_guard lock(registry_mutex());
    return registry().count(name) != 0;
}

std::unique_ptr<Adapter> make_adapter(const std::string& kind, const LinearTarget& target,
                                      int rank, std::uint64_t seed, ParameterStore& store) {
    if (kind == "standard") return std::make_unique<LowRankAdapter>(target, rank, seed, store);
    if (kind.rfind("plugin:", 0) == 0) {
        const std::string name = kind.substr(7);
        AdapterFactory factory;
        {
            std::lock_guard lock(registry_mutex());
            const auto it = registry().find(name);
            if (it == registry().end())
                throw ConfigError("adapter: no plug-in registered under '" + name + "'");
            factory = it->second;
        }
        return factory(target, rank, seed, store);
    }
    throw ConfigError("adapter: unknown kind '" + kind + "'");
}

}  // namespace sepl
