#include "tpf/evalbench.hpp"

#include "tpf/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace tpf {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start, Clock::time_point end) {
    return std::chrono::duration<double, std::milli>(end - start).count();
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::vector<net::TrainingSample> to_training_set(const std::vector<CorpusScene>& scenes, const LabelConfig& labels) {
    std::vector<net::TrainingSample> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) out.push_back(net::make_training_sample(s.image, s.polygons, labels));
    return out;
}

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

struct Column {
    std::string header;
    int decimals;
    double (*get)(const SweepRow&);
};

std::vector<Column> columns_for(SweepAxis axis) {
    std::vector<Column> cols;
    switch (axis) {
    case SweepAxis::Alpha: cols.push_back({"alpha", 1, [](const SweepRow& r) { return r.value; }}); break;
    case SweepAxis::Points: cols.push_back({"N", 0, [](const SweepRow& r) { return r.value; }}); break;
    case SweepAxis::Scale: cols.push_back({"Scale", 0, [](const SweepRow& r) { return r.value; }}); break;
    }
    cols.push_back({"Precision", 1, [](const SweepRow& r) { return 100 * r.prf.precision; }});
    cols.push_back({"Recall", 1, [](const SweepRow& r) { return 100 * r.prf.recall; }});
    cols.push_back({"F-measure", 1, [](const SweepRow& r) { return 100 * r.prf.f_measure; }});
    if (axis == SweepAxis::Points) cols.push_back({"Post cost (ms)", 3, [](const SweepRow& r) { return r.post_ms; }});
    if (axis != SweepAxis::Alpha) cols.push_back({"FPS", 1, [](const SweepRow& r) { return r.fps; }});
    return cols;
}

} // namespace

MatchResult match_masks(const std::vector<BinaryMask>& dets, const std::vector<BinaryMask>& gts, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "iou threshold must lie in (0, 1)");
    }
    std::vector<MatchPair> candidates;
    for (std::size_t d = 0; d < dets.size(); ++d) {
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double iou = mask_iou(dets[d], gts[g]);
            if (iou >= iou_threshold) candidates.push_back({static_cast<int>(d), static_cast<int>(g), iou});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const MatchPair& a, const MatchPair& b) { return a.iou > b.iou; });
    std::vector<bool> det_used(dets.size(), false), gt_used(gts.size(), false);
    MatchResult result;
    for (const auto& c : candidates) {
        if (det_used[static_cast<std::size_t>(c.det)] || gt_used[static_cast<std::size_t>(c.gt)]) continue;
        det_used[static_cast<std::size_t>(c.det)] = true;
        gt_used[static_cast<std::size_t>(c.gt)] = true;
        result.pairs.push_back(c);
    }
    for (std::size_t d = 0; d < dets.size(); ++d) {
        if (!det_used[d]) result.unmatched_dets.push_back(static_cast<int>(d));
    }
    for (std::size_t g = 0; g < gts.size(); ++g) {
        if (!gt_used[g]) result.unmatched_gts.push_back(static_cast<int>(g));
    }
    return result;
}

MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<Polygon>& gts, int width,
                             int height, double iou_threshold) {
    std::vector<BinaryMask> det_masks, gt_masks;
    for (const auto& d : dets) {
        if (d.mask.width() == width && d.mask.height() == height) {
            det_masks.push_back(d.mask);
        } else {
            det_masks.push_back(rasterize_polygon(d.polygon, width, height));
        }
    }
    for (const auto& g : gts) gt_masks.push_back(rasterize_polygon(g, width, height));
    return match_masks(det_masks, gt_masks, iou_threshold);
}

void PrfCounts::add(const MatchResult& match) {
    true_positives += static_cast<long>(match.pairs.size());
    detections += static_cast<long>(match.pairs.size() + match.unmatched_dets.size());
    ground_truths += static_cast<long>(match.pairs.size() + match.unmatched_gts.size());
}

Prf prf(const PrfCounts& c) {
    if (c.detections == 0 && c.ground_truths == 0) return {1.0, 1.0, 1.0};
    if (c.detections == 0) return {0.0, 0.0, 0.0};
    Prf r;
    r.precision = static_cast<double>(c.true_positives) / static_cast<double>(c.detections);
    r.recall = c.ground_truths > 0 ? static_cast<double>(c.true_positives) / static_cast<double>(c.ground_truths) : 0.0;
    const double s = r.precision + r.recall;
    r.f_measure = s > 0.0 ? 2.0 * r.precision * r.recall / s : 0.0;
    return r;
}

Prf prf(const MatchResult& match) {
    PrfCounts c;
    c.add(match);
    return prf(c);
}

std::string timing_to_json(const TimingReport& r) {
    nlohmann::json j;
    j["ed_ms"] = r.ed_ms;
    j["post_ms"] = r.post_ms;
    j["total_ms"] = r.total_ms;
    j["fps"] = r.fps;
    j["n"] = r.n;
    j["m"] = r.m;
    return j.dump();
}

TimedDetection timed_detect(const Image& image, const net::ModelParams& params, PostMode mode,
                            const DetectConfig& config, const TimingOptions& options) {
    if (options.repeats < 1 || options.warmups < 0) {
        throw Error(ErrorCode::InvalidArgument, "timing needs repeats >= 1 and warmups >= 0");
    }
    TimedDetection out;
    std::vector<double> ed, post;
    PostStats stats;
    for (int i = 0; i < options.warmups + options.repeats; ++i) {
        const auto t0 = Clock::now();
        const net::HeadOutputs heads = net::forward_heads(image, params);
        const auto t1 = Clock::now();
        out.detections = post_process(heads, params, image.width, image.height, mode, config, &stats);
        const auto t2 = Clock::now();
        if (i < options.warmups) continue;
        ed.push_back(elapsed_ms(t0, t1));
        post.push_back(elapsed_ms(t1, t2));
    }
    TimingReport& r = out.report;
    r.ed_ms = median(ed);
    r.post_ms = median(post);
    r.total_ms = r.ed_ms + r.post_ms;
    r.fps = r.total_ms > 0.0 ? 1000.0 / r.total_ms : 0.0;
    r.n = stats.points;
    r.m = stats.filters;
    return out;
}

TimingReport bench_corpus(const std::vector<CorpusScene>& scenes, const net::ModelParams& params, PostMode mode,
                          const DetectConfig& config, const TimingOptions& options) {
    TimingReport sum;
    if (scenes.empty()) return sum;
    long n = 0, m = 0;
    for (const auto& s : scenes) {
        const TimingReport r = timed_detect(s.image, params, mode, config, options).report;
        sum.ed_ms += r.ed_ms;
        sum.post_ms += r.post_ms;
        n += r.n;
        m += r.m;
    }
    const double k = static_cast<double>(scenes.size());
    sum.ed_ms /= k;
    sum.post_ms /= k;
    sum.total_ms = sum.ed_ms + sum.post_ms;
    sum.fps = sum.total_ms > 0.0 ? 1000.0 / sum.total_ms : 0.0;
    sum.n = static_cast<int>(std::lround(static_cast<double>(n) / k));
    sum.m = static_cast<int>(std::lround(static_cast<double>(m) / k));
    return sum;
}

EvalSummary evaluate_corpus(const std::vector<CorpusScene>& scenes, const net::ModelParams& params,
                            const DetectConfig& config, double iou_threshold) {
    EvalSummary s;
    for (const auto& scene : scenes) {
        const auto dets = detect(scene.image, params, config);
        s.counts.add(match_detections(dets, scene.polygons, scene.image.width, scene.image.height, iou_threshold));
    }
    s.prf = prf(s.counts);
    return s;
}

std::string to_string(SweepAxis axis) {
    switch (axis) {
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::Points: return "points";
    case SweepAxis::Scale: return "scale";
    }
    return "unknown";
}

SweepAxis parse_sweep_axis(const std::string& name) {
    if (name == "alpha") return SweepAxis::Alpha;
    if (name == "points" || name == "points_per_text") return SweepAxis::Points;
    if (name == "scale") return SweepAxis::Scale;
    throw Error(ErrorCode::InvalidArgument, "unknown sweep axis '" + name + "' (alpha, points, scale)");
}

CorpusScene rescale_scene(const CorpusScene& scene, int short_side) {
    if (short_side < 16) throw Error(ErrorCode::InvalidArgument, "scale must be at least 16 px");
    const int w = scene.image.width, h = scene.image.height;
    const double factor = static_cast<double>(short_side) / std::min(w, h);
    const int nw = w <= h ? short_side : static_cast<int>(std::lround(w * factor));
    const int nh = h < w ? short_side : static_cast<int>(std::lround(h * factor));
    CorpusScene out;
    out.name = scene.name;
    out.image = resize_bilinear(scene.image, nw, nh);
    const double sx = static_cast<double>(nw) / w, sy = static_cast<double>(nh) / h;
    for (const auto& p : scene.polygons) {
        Polygon q = p;
        for (auto& v : q.vertices) {
            v.x *= sx;
            v.y *= sy;
        }
        out.polygons.push_back(std::move(q));
    }
    return out;
}

SweepTable sweep(SweepAxis axis, const std::vector<double>& values, const std::vector<CorpusScene>& train,
                 const std::vector<CorpusScene>& test, const SweepSetup& setup, const net::ModelParams* model) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs at least one value");
    SweepTable table;
    table.axis = axis;

    net::ModelParams shared;
    if (axis == SweepAxis::Scale) {
        if (model != nullptr) {
            shared = *model;
        } else {
            shared = net::train(to_training_set(train, setup.labels), setup.net, setup.weights).params;
        }
    }

    for (double value : values) {
        SweepRow row;
        row.value = value;
        std::vector<CorpusScene> eval_set = test;
        net::ModelParams params;
        switch (axis) {
        case SweepAxis::Alpha: {
            LossWeights w = setup.weights;
            w.alpha = value;
            w.validate();
            params = net::train(to_training_set(train, setup.labels), setup.net, w).params;
            break;
        }
        case SweepAxis::Points: {
            LabelConfig labels = setup.labels;
            labels.points_per_text = static_cast<int>(std::lround(value));
            labels.validate();
            params = net::train(to_training_set(train, labels), setup.net, setup.weights).params;
            break;
        }
        case SweepAxis::Scale:
            params = shared;
            for (auto& s : eval_set) s = rescale_scene(s, static_cast<int>(std::lround(value)));
            break;
        }
        row.prf = evaluate_corpus(eval_set, params, setup.detect).prf;
        if (axis != SweepAxis::Alpha) {
            const TimingReport t = bench_corpus(eval_set, params, PostMode::Sieve, setup.detect, setup.timing);
            row.post_ms = t.post_ms;
            row.fps = t.fps;
        }
        table.rows.push_back(row);
    }
    return table;
}

std::string sweep_csv(const SweepTable& table) {
    const auto cols = columns_for(table.axis);
    std::ostringstream out;
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c].header;
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            out << (c ? "," : "") << fmt(cols[c].get(row), c == 0 ? cols[c].decimals : std::max(3, cols[c].decimals));
        }
        out << '\n';
    }
    return out.str();
}

std::string sweep_text_table(const SweepTable& table) {
    const auto cols = columns_for(table.axis);
    std::vector<std::vector<std::string>> cells;
    std::vector<std::size_t> width(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) width[c] = cols[c].header.size();
    for (const auto& row : table.rows) {
        std::vector<std::string> line;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            line.push_back(fmt(cols[c].get(row), cols[c].decimals));
            width[c] = std::max(width[c], line.back().size());
        }
        cells.push_back(std::move(line));
    }
    std::ostringstream out;
    const auto rule = [&] {
        std::size_t total = 0;
        for (auto w : width) total += w + 2;
        out << std::string(total, '-') << '\n';
    };
    const auto emit = [&](const std::vector<std::string>& line) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            out << std::string(width[c] - line[c].size() + 2, ' ') << line[c];
        }
        out << '\n';
    };
    std::vector<std::string> header;
    for (const auto& c : cols) header.push_back(c.header);
    rule();
    emit(header);
    rule();
    for (const auto& line : cells) emit(line);
    rule();
    return out.str();
}

} // namespace tpf
