#include "sepl/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>
#include <sstream>
#include <unordered_map>

#include "sepl/error.hpp"
#include "sepl/hash.hpp"

namespace sepl {

namespace {

std::string num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void check_binary(const std::vector<double>& scores, const Labels& labels, const char* who) {
    if (scores.size() != labels.size())
        throw MetricError(std::string(who) + ": scores and labels differ in length");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw MetricError(std::string(who) + ": labels must be 0 or 1");
        if (!std::isfinite(scores[i])) throw MetricError(std::string(who) + ": non-finite score");
        pos += static_cast<std::size_t>(labels[i]);
    }
    if (pos == 0 || pos == labels.size())
        throw MetricError(std::string(who) + ": both classes must be present");
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

void write_image(const std::filesystem::path& path, const cv::Mat& mat) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), mat)) throw DataError("cannot write " + path.string());
}

nlohmann::json metrics_json(const Metrics& m) {
    return {{"auc", m.auc},         {"ap", m.ap},         {"eer", m.eer},
            {"eer_inverted", m.eer_inverted}, {"frames", m.frames}, {"videos", m.videos}};
}

}  // namespace

// ─── Metrics ───────────────────────────────────────────────────────────────

std::vector<VideoScore> aggregate_video(const ScoreTable& table) {
    if (table.empty()) throw MetricError("aggregate_video: empty score table");
    std::vector<VideoScore> out;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& row : table) {
        auto [it, fresh] = index.try_emplace(row.video_id, out.size());
        if (fresh) {
            out.push_back({row.video_id, 0.0, row.label, 0});
        } else if (out[it->second].label != row.label) {
            throw MetricError("aggregate_video: inconsistent labels in video '" + row.video_id +
                              "'");
        }
        out[it->second].score += row.score;
        ++out[it->second].frames;
    }
    for (auto& v : out) v.score /= v.frames;
    return out;
}

double auc(const std::vector<double>& scores, const Labels& labels) {
    check_binary(scores, labels, "auc");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Average ranks over tie groups.
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] == 1) {
                pos_rank_sum += rank;
                ++n_pos;
            }
        i = j;
    }
    const double p = static_cast<double>(n_pos);
    const double n = static_cast<double>(scores.size() - n_pos);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double average_precision(const std::vector<double>& scores, const Labels& labels) {
    check_binary(scores, labels, "average_precision");
    const auto idx = descending(scores);
    const double total_pos =
        static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] == 1 ? tp : fp) += 1.0;
            ++j;
        }
        const double recall = tp / total_pos;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
        i = j;
    }
    return ap;
}

double eer(const std::vector<double>& scores, const Labels& labels) {
    check_binary(scores, labels, "eer");
    const auto idx = descending(scores);
    const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const double n_neg = static_cast<double>(labels.size()) - n_pos;
    // Threshold above every score: nothing flagged fake.
    double far_prev = 0.0, frr_prev = 1.0;
    double fp = 0.0, tp = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] == 1 ? tp : fp) += 1.0;
            ++j;
        }
        const double far = fp / n_neg;
        const double frr = 1.0 - tp / n_pos;
        if (far >= frr) {
            const double d_prev = far_prev - frr_prev;  // < 0
            const double d = far - frr;                 // >= 0
            const double t = d_prev / (d_prev - d);
            return far_prev + t * (far - far_prev);
        }
        far_prev = far;
        frr_prev = frr;
        i = j;
    }
    return 1.0;  // unreachable: at the lowest threshold far = 1 >= frr = 0
}

Metrics video_metrics(const ScoreTable& table) {
    const auto videos = aggregate_video(table);
    std::vector<double> s;
    Labels y;
    for (const auto& v : videos) {
        s.push_back(v.score);
        y.push_back(v.label);
    }
    Metrics m;
    m.auc = auc(s, y);
    m.ap = average_precision(s, y);
    m.eer = eer(s, y);
    if (m.eer > 0.5) {
        for (auto& v : s) v = 1.0 - v;
        m.eer = eer(s, y);
        m.eer_inverted = true;
    }
    m.frames = table.size();
    m.videos = videos.size();
    return m;
}

// ─── Scoring ───────────────────────────────────────────────────────────────

ScoreTable score_dataset(const SeplModel& model, const Dataset& data,
                         const std::optional<PerturbationSpec>& perturbation,
                         const SeverityTable& table) {
    std::vector<Image> perturbed;
    std::vector<const Image*> ptrs;
    if (perturbation) {
        // The seed ignores severity: every level reuses one random field per
        // image (scaled noise, nested block masks), so levels differ only in strength.
        const std::uint64_t base = derive_seed(perturbation->seed, to_string(perturbation->family));
        perturbed.reserve(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            PerturbationSpec spec = *perturbation;
            spec.seed = derive_seed(base, data.samples[i].path.generic_string());
            perturbed.push_back(perturb(data.images[i], spec, table));
        }
        for (const auto& img : perturbed) ptrs.push_back(&img);
    } else {
        ptrs = data.image_ptrs();
    }
    const auto scores = model.predict(ptrs);

    ScoreTable out;
    out.reserve(data.size());
    std::unordered_map<std::string, int> frame_counter;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data.samples[i];
        out.push_back({s.video_id, frame_counter[s.video_id]++, scores[i], s.label});
    }
    return out;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j = metrics_json(metrics);
    j["dataset"] = dataset;
    j["config_hash"] = config_hash;
    return j;
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "dataset,auc,ap,eer,eer_inverted,frames,videos\n"
        << dataset << ',' << num(metrics.auc) << ',' << num(metrics.ap) << ','
        << num(metrics.eer) << ',' << (metrics.eer_inverted ? 1 : 0) << ',' << metrics.frames
        << ',' << metrics.videos << '\n';
    return out.str();
}

EvalReport evaluate(const SeplModel& model, const Dataset& data, const std::string& name) {
    EvalReport r;
    r.dataset = name;
    r.metrics = video_metrics(score_dataset(model, data));
    r.config_hash = config_hash(model.config());
    return r;
}

// ─── Robustness ────────────────────────────────────────────────────────────

const RobustCell& RobustnessReport::cell(const std::string& family, int severity) const {
    for (const auto& c : cells)
        if (c.family == family && c.severity == severity) return c;
    throw MetricError("robustness report has no cell " + family + "/" + std::to_string(severity));
}

nlohmann::json RobustnessReport::to_json() const {
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& c : cells) {
        nlohmann::json j = metrics_json(c.metrics);
        j["family"] = c.family;
        j["severity"] = c.severity;
        grid.push_back(j);
    }
    return {{"clean_auc", clean_auc}, {"config_hash", config_hash}, {"grid", grid}};
}

std::string RobustnessReport::to_csv() const {
    std::ostringstream out;
    out << "family,severity,auc,ap,eer,eer_inverted,frames,videos\n";
    for (const auto& c : cells)
        out << c.family << ',' << c.severity << ',' << num(c.metrics.auc) << ','
            << num(c.metrics.ap) << ',' << num(c.metrics.eer) << ','
            << (c.metrics.eer_inverted ? 1 : 0) << ',' << c.metrics.frames << ','
            << c.metrics.videos << '\n';
    return out.str();
}

RobustnessReport robustness_sweep(const SeplModel& model, const Dataset& data,
                                  const std::vector<PerturbationFamily>& families,
                                  const std::vector<int>& severities,
                                  const SeverityTable& table) {
    for (int s : severities)
        if (s < 1 || s > 5) throw MetricError("severity must be in 1..5, got " + std::to_string(s));
    RobustnessReport report;
    report.config_hash = config_hash(model.config());
    const Metrics clean = video_metrics(score_dataset(model, data));
    report.clean_auc = clean.auc;
    report.cells.push_back({"none", 0, clean});

    const auto seed = static_cast<std::uint64_t>(model.config().train.seed);
    std::map<int, std::vector<Metrics>> by_severity;
    for (auto family : families) {
        for (int s : severities) {
            const Metrics m =
                video_metrics(score_dataset(model, data, PerturbationSpec{family, s, seed}, table));
            report.cells.push_back({to_string(family), s, m});
            by_severity[s].push_back(m);
        }
    }
    if (!families.empty()) {
        report.cells.push_back({"average", 0, clean});
        for (int s : severities) {
            Metrics avg;
            const auto& ms = by_severity[s];
            for (const auto& m : ms) {
                avg.auc += m.auc / static_cast<double>(ms.size());
                avg.ap += m.ap / static_cast<double>(ms.size());
                avg.eer += m.eer / static_cast<double>(ms.size());
            }
            avg.frames = clean.frames;
            avg.videos = clean.videos;
            report.cells.push_back({"average", s, avg});
        }
    }
    return report;
}

void plot_robustness(const RobustnessReport& report, const std::filesystem::path& path) {
    constexpr int kW = 720, kH = 480, kLeft = 60, kRight = 170, kTop = 30, kBottom = 50;
    cv::Mat canvas(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
    const auto px = [&](double sev) {
        return static_cast<int>(kLeft + sev / 5.0 * (kW - kLeft - kRight));
    };
    const auto py = [&](double a) {
        return static_cast<int>(kTop + (1.0 - a) * (kH - kTop - kBottom));
    };
    const cv::Scalar axis(0, 0, 0), grid(220, 220, 220);
    for (int i = 0; i <= 5; ++i) {
        cv::line(canvas, {px(i), py(0)}, {px(i), py(1)}, grid);
        cv::putText(canvas, std::to_string(i), {px(i) - 4, py(0) + 18}, cv::FONT_HERSHEY_SIMPLEX,
                    0.45, axis);
    }
    for (int i = 0; i <= 10; i += 2) {
        const double a = i / 10.0;
        cv::line(canvas, {px(0), py(a)}, {px(5), py(a)}, grid);
        cv::putText(canvas, num(a).substr(0, 3), {8, py(a) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                    axis);
    }
    cv::rectangle(canvas, {px(0), py(1)}, {px(5), py(0)}, axis);
    cv::putText(canvas, "severity", {px(2) + 10, kH - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis);
    cv::putText(canvas, "AUC", {8, 18}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis);

    static const cv::Scalar palette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},
                                         {40, 39, 214},  {189, 103, 148}, {75, 86, 140}};
    std::vector<std::string> order;
    for (const auto& c : report.cells)
        if (c.family != "none" && std::find(order.begin(), order.end(), c.family) == order.end())
            order.push_back(c.family);
    const double clean = report.clean_auc;
    int legend_y = kTop + 10;
    for (std::size_t f = 0; f < order.size(); ++f) {
        const bool avg = order[f] == "average";
        const cv::Scalar color = avg ? axis : palette[f % 6];
        cv::Point prev(px(0), py(clean));
        for (const auto& c : report.cells) {
            if (c.family != order[f] || c.severity == 0) continue;
            const cv::Point p(px(c.severity), py(std::clamp(c.metrics.auc, 0.0, 1.0)));
            cv::line(canvas, prev, p, color, avg ? 3 : 1, cv::LINE_AA);
            cv::circle(canvas, p, 3, color, cv::FILLED);
            prev = p;
        }
        cv::line(canvas, {kW - kRight + 10, legend_y}, {kW - kRight + 30, legend_y}, color,
                 avg ? 3 : 1);
        cv::putText(canvas, order[f], {kW - kRight + 35, legend_y + 4}, cv::FONT_HERSHEY_SIMPLEX,
                    0.4, axis);
        legend_y += 18;
    }
    write_image(path, canvas);
}

// ─── Features ──────────────────────────────────────────────────────────────

std::string to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::kBackbone: return "backbone";
        case FeatureKind::kSpecific: return "specific";
        case FeatureKind::kIrrelevant: return "irrelevant";
    }
    return "backbone";
}

FeatureKind parse_feature_kind(const std::string& name) {
    if (name == "backbone") return FeatureKind::kBackbone;
    if (name == "specific") return FeatureKind::kSpecific;
    if (name == "irrelevant") return FeatureKind::kIrrelevant;
    throw ConfigError("unknown feature kind '" + name + "' (backbone|specific|irrelevant)");
}

Matrix extract_features(const SeplModel& model, const Dataset& data, FeatureKind kind) {
    constexpr std::size_t kChunk = 64;
    const auto ptrs = data.image_ptrs();
    Matrix out(static_cast<Eigen::Index>(ptrs.size()), model.config().model.joint_dim);
    const ForwardMode mode = kind == FeatureKind::kIrrelevant ? ForwardMode::kFull
                             : kind == FeatureKind::kSpecific ? ForwardMode::kInference
                                                              : ForwardMode::kPretrain;
    for (std::size_t start = 0; start < ptrs.size(); start += kChunk) {
        const std::size_t end = std::min(ptrs.size(), start + kChunk);
        const std::vector<const Image*> chunk(ptrs.begin() + static_cast<std::ptrdiff_t>(start),
                                              ptrs.begin() + static_cast<std::ptrdiff_t>(end));
        const auto pass = model.forward(ag::constant(model.backend().images_to_rows(chunk)), mode);
        const Matrix& f = kind == FeatureKind::kBackbone   ? pass.vision.joint.value()
                          : kind == FeatureKind::kSpecific ? pass.f_a.value()
                                                           : pass.f_b.value();
        out.middleRows(static_cast<Eigen::Index>(start), f.rows()) = f;
    }
    return out;
}

double linear_probe_accuracy(const Matrix& train_x, const Labels& train_y, const Matrix& test_x,
                             const Labels& test_y) {
    if (train_x.rows() != static_cast<Eigen::Index>(train_y.size()) ||
        test_x.rows() != static_cast<Eigen::Index>(test_y.size()) ||
        train_x.cols() != test_x.cols())
        throw MetricError("linear_probe_accuracy: shape mismatch");
    if (train_x.rows() == 0 || test_x.rows() == 0)
        throw MetricError("linear_probe_accuracy: empty input");
    const Eigen::Index n = train_x.rows(), d = train_x.cols();
    const RowVector mean = train_x.colwise().mean();
    RowVector sd = (train_x.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(n);
    sd = sd.cwiseSqrt().unaryExpr([](double v) { return v > 1e-12 ? v : 1.0; });
    const auto standardize = [&](const Matrix& x) {
        Matrix z(x.rows(), d + 1);
        z.leftCols(d) = (x.rowwise() - mean).array().rowwise() / sd.array();
        z.col(d).setOnes();
        return z;
    };
    const Matrix z = standardize(train_x);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = train_y[static_cast<std::size_t>(i)];

    // Ridge-regularized Newton iterations on the logistic log-likelihood.
    constexpr double kRidge = 1e-2;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
    for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXd prob = (1.0 / (1.0 + (-(z * w).array()).exp())).matrix();
        const Eigen::VectorXd grad = z.transpose() * (prob - y) + kRidge * w;
        const Eigen::VectorXd s = (prob.array() * (1.0 - prob.array())).matrix();
        Eigen::MatrixXd h = z.transpose() * s.asDiagonal() * z;
        h.diagonal().array() += kRidge;
        const Eigen::VectorXd delta = h.ldlt().solve(grad);
        w -= delta;
        if (delta.norm() < 1e-10) break;
    }
    const Matrix zt = standardize(test_x);
    const Eigen::VectorXd logits = zt * w;
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        if ((logits(i) > 0.0 ? 1 : 0) == test_y[static_cast<std::size_t>(i)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test_y.size());
}

// ─── t-SNE ─────────────────────────────────────────────────────────────────

Matrix tsne(const Matrix& points, const TsneOptions& opt) {
    const Eigen::Index n = points.rows();
    Matrix y = Matrix::Zero(n, 2);
    if (n < 2) return y;
    if (opt.perplexity <= 0) throw ConfigError("tsne: perplexity must be positive");

    // Squared distances.
    const Eigen::VectorXd sq = points.rowwise().squaredNorm();
    Matrix d2 = (-2.0 * points * points.transpose()).colwise() + sq;
    d2.rowwise() += sq.transpose();
    d2 = d2.cwiseMax(0.0);

    // Conditional probabilities by bisection on the precision.
    const double perplexity = std::min(opt.perplexity, static_cast<double>(n - 1) / 3.0);
    const double target = std::log(std::max(perplexity, 1.0));
    Matrix p = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 64; ++it) {
            double sum = 0.0, wsum = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                const double e = std::exp(-beta * d2(i, j));
                p(i, j) = e;
                sum += e;
                wsum += e * d2(i, j);
            }
            if (sum <= 0.0) {
                hi = beta;
                beta = (lo + hi) / 2.0;
                continue;
            }
            const double entropy = std::log(sum) + beta * wsum / sum;
            p.row(i) /= sum;
            if (std::abs(entropy - target) < 1e-6) break;
            if (entropy > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : (lo + hi) / 2.0;
            } else {
                hi = beta;
                beta = (lo + hi) / 2.0;
            }
        }
    }
    Matrix pj = (p + p.transpose()) / (2.0 * static_cast<double>(n));
    pj = pj.cwiseMax(1e-12);
    pj.diagonal().setZero();

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1e-4);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i, 0) = normal(rng);
        y(i, 1) = normal(rng);
    }
    Matrix velocity = Matrix::Zero(n, 2);
    Matrix gains = Matrix::Ones(n, 2);
    constexpr double kLearningRate = 200.0;
    for (int it = 0; it < opt.iterations; ++it) {
        const double exaggeration = it < 100 ? 12.0 : 1.0;
        const double momentum = it < 250 ? 0.5 : 0.8;
        const Eigen::VectorXd ysq = y.rowwise().squaredNorm();
        Matrix kern = (-2.0 * y * y.transpose()).colwise() + ysq;
        kern.rowwise() += ysq.transpose();
        kern = (1.0 + kern.array()).inverse().matrix();
        kern.diagonal().setZero();
        const double qsum = kern.sum();
        const Matrix q = (kern / qsum).cwiseMax(1e-12);
        const Matrix w = ((exaggeration * pj - q).array() * kern.array()).matrix();
        const Eigen::VectorXd wsum = w.rowwise().sum();
        const Matrix grad = 4.0 * (wsum.asDiagonal() * y - w * y);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                const bool same = (grad(i, c) > 0) == (velocity(i, c) > 0);
                gains(i, c) = std::max(same ? gains(i, c) * 0.8 : gains(i, c) + 0.2, 0.01);
                velocity(i, c) = momentum * velocity(i, c) - kLearningRate * gains(i, c) * grad(i, c);
            }
        }
        y += velocity;
        y.rowwise() -= y.colwise().mean();
    }
    return y;
}

void plot_scatter(const Matrix& xy, const Labels& labels, const std::filesystem::path& path) {
    if (xy.rows() != static_cast<Eigen::Index>(labels.size()) || xy.cols() != 2)
        throw MetricError("plot_scatter: expected N x 2 points with N labels");
    constexpr int kSize = 560, kMargin = 30;
    cv::Mat canvas(kSize, kSize, CV_8UC3, cv::Scalar(255, 255, 255));
    if (xy.rows() > 0) {
        const RowVector lo = xy.colwise().minCoeff();
        const RowVector hi = xy.colwise().maxCoeff();
        const double span = std::max({hi(0) - lo(0), hi(1) - lo(1), 1e-12});
        for (Eigen::Index i = 0; i < xy.rows(); ++i) {
            const int x = kMargin + static_cast<int>((xy(i, 0) - lo(0)) / span * (kSize - 2 * kMargin));
            const int yv = kMargin + static_cast<int>((xy(i, 1) - lo(1)) / span * (kSize - 2 * kMargin));
            const cv::Scalar color =
                labels[static_cast<std::size_t>(i)] == 1 ? cv::Scalar(40, 39, 214) : cv::Scalar(180, 119, 31);
            cv::circle(canvas, {x, yv}, 3, color, cv::FILLED, cv::LINE_AA);
        }
    }
    cv::putText(canvas, "real", {10, 18}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(180, 119, 31));
    cv::putText(canvas, "fake", {60, 18}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(40, 39, 214));
    write_image(path, canvas);
}

EmbeddingExport export_embeddings(const SeplModel& model, const Dataset& data, FeatureKind kind,
                                  const std::filesystem::path& out_dir,
                                  const TsneOptions& options) {
    const Matrix features = extract_features(model, data, kind);
    const Labels labels = data.labels();
    const std::string stem = to_string(kind);
    EmbeddingExport out;
    out.points = out_dir / (stem + "_points.csv");
    out.projection = out_dir / (stem + "_tsne.csv");
    out.plot = out_dir / (stem + "_tsne.png");
    out.rows = static_cast<std::size_t>(features.rows());

    std::ostringstream pts;
    pts << "index,label";
    for (Eigen::Index c = 0; c < features.cols(); ++c) pts << ",f" << c;
    pts << '\n';
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        pts << i << ',' << labels[static_cast<std::size_t>(i)];
        for (Eigen::Index c = 0; c < features.cols(); ++c) pts << ',' << num(features(i, c));
        pts << '\n';
    }
    write_text(out.points, pts.str());

    // Seeded subsample for the projection.
    std::vector<std::size_t> chosen(static_cast<std::size_t>(features.rows()));
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    if (options.max_points > 0 && chosen.size() > static_cast<std::size_t>(options.max_points)) {
        std::mt19937_64 rng(derive_seed(options.seed, "tsne-subsample"));
        std::shuffle(chosen.begin(), chosen.end(), rng);
        chosen.resize(static_cast<std::size_t>(options.max_points));
        std::sort(chosen.begin(), chosen.end());
    }
    Matrix sub(static_cast<Eigen::Index>(chosen.size()), features.cols());
    Labels sub_labels;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        sub.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(chosen[i]));
        sub_labels.push_back(labels[chosen[i]]);
    }
    const Matrix xy = tsne(sub, options);
    std::ostringstream proj;
    proj << "index,label,x,y\n";
    for (std::size_t i = 0; i < chosen.size(); ++i)
        proj << chosen[i] << ',' << sub_labels[i] << ',' << num(xy(static_cast<Eigen::Index>(i), 0))
             << ',' << num(xy(static_cast<Eigen::Index>(i), 1)) << '\n';
    write_text(out.projection, proj.str());
    plot_scatter(xy, sub_labels, out.plot);
    return out;
}

// ─── Saliency ──────────────────────────────────────────────────────────────

Matrix saliency_map(const SeplModel& model, const Image& image) {
    const auto& backend = model.backend();
    const SpatialOutput spatial = backend.encode_image_spatial(image);
    const ag::Var tokens(spatial.tokens.value(), true);
    const VisionOutput vision = backend.pool_tokens(tokens);
    const StreamBatch a = model.prompt(Stream::kA).encode_batch(vision.pooled, backend);
    const ag::Var logits = model.classify(model.align(Stream::kA, vision.joint, a));
    const ag::Var margin = ag::slice_cols(logits, 1, 1) - ag::slice_cols(logits, 0, 1);
    ag::backward(margin);

    const Matrix grad = tokens.grad();
    const int g = spatial.grid;
    Matrix map(g, g);
    for (int p = 0; p < g * g; ++p)
        map(p / g, p % g) = std::max(0.0, grad.row(p).dot(tokens.value().row(p)));
    const double peak = map.maxCoeff();
    if (peak > 0.0) map /= peak;
    return map;
}

void export_saliency(const SeplModel& model, const Image& image,
                     const std::filesystem::path& out_stem) {
    const Matrix map = saliency_map(model, image);
    std::ostringstream csv;
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
        for (Eigen::Index c = 0; c < map.cols(); ++c) csv << (c ? "," : "") << num(map(r, c));
        csv << '\n';
    }
    std::filesystem::path csv_path = out_stem;
    csv_path += ".csv";
    write_text(csv_path, csv.str());

    constexpr int kScale = 8;
    cv::Mat rgb(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const int src = image.channels == 1 ? 0 : std::min(c, image.channels - 1);
                // BGR order for OpenCV.
                rgb.at<cv::Vec3b>(y, x)[2 - c] = cv::saturate_cast<unsigned char>(
                    std::lround(std::clamp(image.at(y, x, src), 0.0, 1.0) * 255.0));
            }
    cv::Mat heat(static_cast<int>(map.rows()), static_cast<int>(map.cols()), CV_8UC1);
    for (int r = 0; r < heat.rows; ++r)
        for (int c = 0; c < heat.cols; ++c)
            heat.at<unsigned char>(r, c) =
                cv::saturate_cast<unsigned char>(std::lround(map(r, c) * 255.0));
    const cv::Size size(image.width * kScale, image.height * kScale);
    cv::Mat big, heat_big, color, overlay;
    cv::resize(rgb, big, size, 0, 0, cv::INTER_NEAREST);
    cv::resize(heat, heat_big, size, 0, 0, cv::INTER_NEAREST);
    cv::applyColorMap(heat_big, color, cv::COLORMAP_JET);
    cv::addWeighted(big, 0.5, color, 0.5, 0.0, overlay);
    std::filesystem::path png_path = out_stem;
    png_path += ".png";
    write_image(png_path, overlay);
}

}  // namespace sepl
