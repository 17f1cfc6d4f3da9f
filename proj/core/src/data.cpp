#include "sepl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

std::string to_string(Split split) {
    switch (split) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "train";
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "val") return Split::kVal;
    if (name == "test") return Split::kTest;
    throw DataError("unknown split '" + name + "' (expected train | val | test)");
}

// ─── Manifest ───────────────────────────────────────────────────────────────

namespace {

const std::set<std::string> kRequiredKeys = {"path", "label", "video_id", "method", "split"};
const std::set<std::string> kOptionalKeys = {"patch"};

}  // namespace

Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
    Manifest m;
    std::set<std::filesystem::path> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "manifest line " + std::to_string(line_no) + ": ";
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw DataError(where + "malformed record");
        }
        if (!rec.is_object()) throw DataError(where + "record must be a JSON object");
        for (const auto& key : kRequiredKeys)
            if (!rec.contains(key)) throw DataError(where + "missing field '" + key + "'");
        for (const auto& [key, _] : rec.items())
            if (!kRequiredKeys.count(key) && !kOptionalKeys.count(key))
                throw DataError(where + "unknown field '" + key + "'");

        Sample s;
        try {
            const std::filesystem::path p = rec.at("path").get<std::string>();
            s.path = (p.is_absolute() ? p : base_dir / p).lexically_normal();
            s.label = rec.at("label").get<int>();
            s.video_id = rec.at("video_id").get<std::string>();
            s.method = rec.at("method").get<std::string>();
            s.split = parse_split(rec.at("split").get<std::string>());
            if (rec.contains("patch")) {
                const auto box = rec.at("patch").get<std::vector<int>>();
                if (box.size() != 4) throw DataError("patch must be [y, x, h, w]");
                s.patch = PatchBox{box[0], box[1], box[2], box[3]};
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + "bad field type (" + e.what() + ")");
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
        if (s.label != 0 && s.label != 1) throw DataError(where + "label must be 0 or 1");
        if (s.video_id.empty()) throw DataError(where + "video_id must be non-empty");
        if (!seen.insert(s.path.lexically_normal()).second)
            throw DataError(where + "duplicate path " + s.path.string());
        ++m.split_counts[s.split];
        m.samples.push_back(std::move(s));
    }
    if (m.samples.empty()) m.warnings.push_back("manifest is empty");
    return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_manifest(buffer.str(), path.parent_path());
}

std::string manifest_record(const Sample& s, const std::filesystem::path& base_dir) {
    nlohmann::ordered_json rec;
    const auto rel = s.path.lexically_relative(base_dir.lexically_normal());
    rec["path"] = (rel.empty() ? s.path : rel).generic_string();
    rec["label"] = s.label;
    rec["video_id"] = s.video_id;
    rec["method"] = s.method;
    rec["split"] = to_string(s.split);
    if (s.patch)
        rec["patch"] = {s.patch->y, s.patch->x, s.patch->height, s.patch->width};
    return rec.dump();
}

void write_manifest(const std::vector<Sample>& samples, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write manifest " + path.string());
    for (const auto& s : samples) out << manifest_record(s, path.parent_path()) << '\n';
}

std::vector<const Image*> Dataset::image_ptrs() const {
    std::vector<const Image*> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(&img);
    return out;
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

Dataset load_dataset(const Manifest& manifest, std::optional<Split> split) {
    Dataset d;
    for (const auto& s : manifest.samples) {
        if (split && s.split != *split) continue;
        d.images.push_back(read_png(s.path));
        d.samples.push_back(s);
    }
    return d;
}

Dataset filter_split(const Dataset& all, Split split) {
    Dataset d;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all.samples[i].split != split) continue;
        d.samples.push_back(all.samples[i]);
        d.images.push_back(all.images[i]);
    }
    return d;
}

Dataset shuffle_labels_by_video(const Dataset& data, std::uint64_t seed) {
    std::vector<std::string> videos;
    std::map<std::string, int> label_of;
    for (const auto& s : data.samples)
        if (label_of.emplace(s.video_id, s.label).second) videos.push_back(s.video_id);
    std::vector<int> labels;
    for (const auto& v : videos) labels.push_back(label_of[v]);
    std::mt19937_64 rng(derive_seed(seed, "shuffle-labels"));
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < videos.size(); ++i) label_of[videos[i]] = labels[i];
    Dataset out = data;
    for (auto& s : out.samples) s.label = label_of[s.video_id];
    return out;
}

// ─── Synthetic watermark dataset ───────────────────────────────────────────

namespace {

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct SmoothPattern {
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<double> offset;              // per channel
    std::vector<std::vector<Wave>> waves;    // per channel
};

SmoothPattern random_pattern(int channels, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> offset(0.35, 0.65);
    std::uniform_real_distribution<double> freq(-1.5, 1.5);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> amp(0.05, 0.15);
    SmoothPattern p;
    for (int c = 0; c < channels; ++c) {
        p.offset.push_back(offset(rng));
        std::vector<SmoothPattern::Wave> w;
        for (int k = 0; k < 2; ++k) w.push_back({freq(rng), freq(rng), phase(rng), amp(rng)});
        p.waves.push_back(std::move(w));
    }
    return p;
}

}  // namespace

Dataset generate_toy_dataset(const ToyDatasetOptions& o) {
    if (o.n_videos < 4) throw DataError("make_toy_dataset: n_videos must be >= 4");
    if (o.n_videos % 2 != 0) throw DataError("make_toy_dataset: n_videos must be even");
    if (o.frames_per_video < 1) throw DataError("make_toy_dataset: frames_per_video must be >= 1");
    if (o.patch_size < 2 || o.image_size % o.patch_size != 0)
        throw DataError("make_toy_dataset: patch_size must divide image_size");

    const int per_class = o.n_videos / 2;
    const int n_test = std::max(1, static_cast<int>(std::lround(o.test_fraction * per_class)));
    const int n_val = static_cast<int>(std::lround(o.val_fraction * per_class));
    if (per_class - n_test - n_val < 1)
        throw DataError("make_toy_dataset: too few videos for a train split");
    const auto split_of = [&](int rank) {
        if (rank < per_class - n_test - n_val) return Split::kTrain;
        if (rank < per_class - n_test) return Split::kVal;
        return Split::kTest;
    };

    const int size = o.image_size;
    const int cells = size / o.patch_size;
    Dataset d;
    for (int v = 0; v < o.n_videos; ++v) {
        const int label = v % 2;  // interleaved so both classes fill every split
        const int rank = v / 2;
        char id[32];
        std::snprintf(id, sizeof(id), "vid%04d", v);
        std::mt19937_64 rng(derive_seed(o.seed, std::string("toy/") + id));
        const SmoothPattern pattern = random_pattern(3, rng);
        std::uniform_int_distribution<int> cell(0, cells - 1);
        const PatchBox box{cell(rng) * o.patch_size, cell(rng) * o.patch_size, o.patch_size,
                           o.patch_size};

        for (int f = 0; f < o.frames_per_video; ++f) {
            std::uniform_real_distribution<double> jitter(-0.02, 0.02);
            std::normal_distribution<double> grain(0.0, 0.01);
            const double brightness = jitter(rng);
            const double dx = jitter(rng) * 50.0;  // sub-pixel drift of the base pattern
            Image img(size, size, 3);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    for (int c = 0; c < 3; ++c) {
                        double val = pattern.offset[static_cast<std::size_t>(c)] + brightness;
                        for (const auto& w : pattern.waves[static_cast<std::size_t>(c)])
                            val += w.amp * std::sin(2.0 * std::numbers::pi *
                                                        (w.fx * (x + dx) + w.fy * y) / size +
                                                    w.phase);
                        val += grain(rng);
                        if (label == 1 && y >= box.y && y < box.y + box.height && x >= box.x &&
                            x < box.x + box.width)
                            val += ((x + y) % 2 == 0 ? 1.0 : -1.0) * o.watermark_amplitude;
                        img.at(y, x, c) = quantize(val);
                    }
            Sample s;
            char name[64];
            std::snprintf(name, sizeof(name), "images/%s_f%d.png", id, f);
            s.path = name;
            s.label = label;
            s.video_id = id;
            s.method = label == 1 ? "checkerboard" : "pristine";
            s.split = split_of(rank);
            if (label == 1) s.patch = box;
            d.samples.push_back(std::move(s));
            d.images.push_back(std::move(img));
        }
    }
    return d;
}

Dataset make_toy_dataset(const ToyDatasetOptions& options, const std::filesystem::path& out_dir) {
    Dataset d = generate_toy_dataset(options);
    std::filesystem::create_directories(out_dir / "images");
    for (std::size_t i = 0; i < d.size(); ++i) {
        d.samples[i].path = out_dir / d.samples[i].path;
        write_png(d.images[i], d.samples[i].path);
    }
    write_manifest(d.samples, out_dir / "manifest.jsonl");
    return d;
}

}  // namespace sepl
