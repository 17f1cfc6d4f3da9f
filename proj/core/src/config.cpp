#include "sepl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.image_height = 32;
    c.image_width = 32;
    c.image_channels = 3;
    c.visual_dim = 64;
    c.joint_dim = 32;
    c.text_hidden_dim = 48;
    c.context_len = 16;
    c.meta_hidden = 32;
    c.adapter_rank = 4;
    return c;
}

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + ": " + what);
}

}  // namespace

void ModelConfig::validate() const {
    require(backend == "toy", "backend", "only the 'toy' backend is built in");
    require(image_height > 0, "image_height", "must be > 0");
    require(image_width > 0, "image_width", "must be > 0");
    require(image_channels > 0, "image_channels", "must be > 0");
    require(visual_dim > 0, "visual_dim", "must be > 0");
    require(joint_dim > 0, "joint_dim", "must be > 0");
    require(text_hidden_dim > 0, "text_hidden_dim", "must be > 0");
    require(context_len >= 1, "context_len", "k must be >= 1");
    require(meta_hidden > 0, "meta_hidden", "must be > 0");
    require(adapter_rank >= 0, "adapter_rank", "must be >= 0");
    require(adapter == "none" || adapter == "standard" || adapter.rfind("plugin:", 0) == 0,
            "adapter", "expected none | standard | plugin:<name>");
    require(num_heads >= 1 && joint_dim % num_heads == 0, "num_heads",
            "must be >= 1 and divide joint_dim");
    require(spatial_grid >= 1 && image_height % spatial_grid == 0 &&
                image_width % spatial_grid == 0,
            "spatial_grid", "must divide the image height and width");
}

void LossWeights::validate() const {
    require(lambda_dis >= 0, "lambda1", "must be >= 0");
    require(lambda_div >= 0, "lambda2", "must be >= 0");
    require(lambda_align_specific >= 0, "lambda3_specific", "must be >= 0");
    require(lambda_align_irrelevant >= 0, "lambda3_irrelevant", "must be >= 0");
    require(lambda_con >= 0, "lambda4", "must be >= 0");
    require(warmup_ratio >= 0 && warmup_ratio <= 1, "warmup_ratio", "must lie in [0, 1]");
    require(temperature > 0, "temperature", "tau must be > 0");
}

void TrainConfig::validate() const {
    require(batch_size >= 2, "batch_size", "batch_size ≥ 2 is required by the contrastive terms");
    require(learning_rate > 0, "learning_rate", "must be > 0");
    require(weight_decay > 0, "weight_decay", "must be > 0");
    require(adam_beta1 >= 0 && adam_beta1 < 1, "adam_beta1", "must lie in [0, 1)");
    require(adam_beta2 >= 0 && adam_beta2 < 1, "adam_beta2", "must lie in [0, 1)");
    require(adam_eps > 0, "adam_eps", "must be > 0");
    require(grad_clip >= 0, "grad_clip", "must be >= 0 (0 disables clipping)");
    require(stage1_steps >= 0, "stage1_steps", "must be >= 0");
    require(stage2_steps >= 1, "stage2_steps", "must be >= 1");
    require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
}

void RunConfig::validate() const {
    model.validate();
    loss.validate();
    train.validate();
}

std::string to_string(Fusion fusion) {
    return fusion == Fusion::kConcat ? "concat" : "attention";
}

Fusion parse_fusion(const std::string& name) {
    if (name == "attention") return Fusion::kAttention;
    if (name == "concat") return Fusion::kConcat;
    throw ConfigError("fusion: expected attention | concat, got '" + name + "'");
}

namespace {

// One entry per config key: how to read it from text and write it back.
struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
    std::int64_t v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw ConfigError(key + ": expected an integer, got '" + text + "'");
    return v;
}

double parse_double(const std::string& key, const std::string& text) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size() || !std::isfinite(v))
        throw ConfigError(key + ": expected a real number, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(key + ": expected true | false, got '" + text + "'");
}

#define SEPL_INT(KEY, MEMBER)                                                          \
    Field{KEY, [](RunConfig& c, const std::string& v) {                                \
              c.MEMBER = static_cast<decltype(c.MEMBER)>(parse_int(KEY, v));           \
          },                                                                           \
          [](const RunConfig& c) { return std::to_string(c.MEMBER); }}
#define SEPL_REAL(KEY, MEMBER)                                                         \
    Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_double(KEY, v); }, \
          [](const RunConfig& c) { return format_double(c.MEMBER); }}
#define SEPL_BOOL(KEY, MEMBER)                                                         \
    Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); }, \
          [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }}
#define SEPL_STR(KEY, MEMBER)                                                          \
    Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = v; },               \
          [](const RunConfig& c) { return c.MEMBER; }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        SEPL_STR("backend", model.backend),
        SEPL_INT("image_height", model.image_height),
        SEPL_INT("image_width", model.image_width),
        SEPL_INT("image_channels", model.image_channels),
        SEPL_INT("visual_dim", model.visual_dim),
        SEPL_INT("joint_dim", model.joint_dim),
        SEPL_INT("text_hidden_dim", model.text_hidden_dim),
        SEPL_INT("context_len", model.context_len),
        SEPL_INT("meta_hidden", model.meta_hidden),
        SEPL_INT("adapter_rank", model.adapter_rank),
        SEPL_STR("adapter", model.adapter),
        SEPL_INT("num_heads", model.num_heads),
        Field{"fusion", [](RunConfig& c, const std::string& v) { c.model.fusion = parse_fusion(v); },
              [](const RunConfig& c) { return to_string(c.model.fusion); }},
        SEPL_INT("spatial_grid", model.spatial_grid),
        SEPL_INT("backbone_seed", model.backbone_seed),

        SEPL_REAL("lambda1", loss.lambda_dis),
        SEPL_REAL("lambda2", loss.lambda_div),
        SEPL_REAL("lambda3_specific", loss.lambda_align_specific),
        SEPL_REAL("lambda3_irrelevant", loss.lambda_align_irrelevant),
        SEPL_REAL("lambda4", loss.lambda_con),
        SEPL_REAL("warmup_ratio", loss.warmup_ratio),
        SEPL_REAL("temperature", loss.temperature),

        SEPL_INT("batch_size", train.batch_size),
        SEPL_REAL("learning_rate", train.learning_rate),
        SEPL_REAL("weight_decay", train.weight_decay),
        SEPL_REAL("adam_beta1", train.adam_beta1),
        SEPL_REAL("adam_beta2", train.adam_beta2),
        SEPL_REAL("adam_eps", train.adam_eps),
        SEPL_REAL("grad_clip", train.grad_clip),
        SEPL_INT("stage1_steps", train.stage1_steps),
        SEPL_INT("stage2_steps", train.stage2_steps),
        SEPL_INT("checkpoint_every", train.checkpoint_every),
        SEPL_BOOL("augment", train.augment),
        SEPL_INT("seed", train.seed),
        SEPL_BOOL("use_dis", train.use_dis),
        SEPL_BOOL("use_div", train.use_div),
        SEPL_BOOL("use_align", train.use_align),
        SEPL_BOOL("use_con", train.use_con),
        SEPL_BOOL("pretrain", train.pretrain),
    };
    return table;
}

#undef SEPL_INT
#undef SEPL_REAL
#undef SEPL_BOOL
#undef SEPL_STR

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig config;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(),
                                     [&](const Field& f) { return f.key == key; });
        if (it == table.end()) throw ConfigError(key + ": unknown key");
        if (!seen.insert(key).second) throw ConfigError(key + ": duplicate key");
        it->set(config, value);
    }
    config.validate();
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string serialize_config(const RunConfig& config) {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
    return out;
}

std::uint64_t config_hash(const RunConfig& config) {
    return fnv1a(serialize_config(config));
}

double warmup_weight(double base, std::int64_t step, std::int64_t total_steps,
                     double warmup_ratio) {
    if (total_steps <= 0) throw ConfigError("warmup_weight: total_steps must be > 0");
    if (step < 0 || step > total_steps)
        throw ConfigError("warmup_weight: step must lie in [0, total_steps]");
    const auto window = static_cast<std::int64_t>(
        std::ceil(warmup_ratio * static_cast<double>(total_steps) - 1e-9));
    if (window <= 0 || step >= window) return base;
    return base * static_cast<double>(step) / static_cast<double>(window);
}

}  // namespace sepl
