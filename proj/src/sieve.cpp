#include "tpf/sieve.hpp"

#include "tpf/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace tpf {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

} // namespace

SampledVectors sample_vectors(const FeatureMap& map, std::span<const CellPoint> points) {
    SampledVectors out(static_cast<int>(points.size()), map.channels);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const CellPoint p = points[i];
        if (p.x < 0 || p.y < 0 || p.x >= map.width || p.y >= map.height) {
            throw Error(ErrorCode::PointOutOfBounds,
                        "point (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside feature map");
        }
        double* row = out.row(static_cast<int>(i));
        for (int c = 0; c < map.channels; ++c) row[c] = map.at(c, p.x, p.y);
    }
    return out;
}

ReinforcementMatrix binarize_relation(std::span<const double> logits, int n, double threshold) {
    if (n < 0 || logits.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n)) {
        throw Error(ErrorCode::ShapeMismatch, "relation logits are not an n x n matrix");
    }
    ReinforcementMatrix m(n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const bool forward = logits[static_cast<std::size_t>(r) * n + c] >= threshold;
            const bool backward = logits[static_cast<std::size_t>(c) * n + r] >= threshold;
            m.set(r, c, r == c || (forward && backward));
        }
    }
    return m;
}

EnsembleResult filter_ensemble(const SampledVectors& filters, const ReinforcementMatrix& relation) {
    const int n = relation.n;
    if (filters.rows != n) {
        throw Error(ErrorCode::ShapeMismatch, "filter count does not match relation matrix size");
    }
    if (!relation.is_symmetric() || !relation.has_unit_diagonal()) {
        throw Error(ErrorCode::InvalidMatrix, "relation matrix must be symmetric with a unit diagonal");
    }

    EnsembleResult result;
    EnsembleTrace& trace = result.trace;
    trace.importance.assign(static_cast<std::size_t>(n), 0);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) trace.importance[static_cast<std::size_t>(c)] += relation.at(r, c) ? 1 : 0;
    }

    std::vector<std::uint8_t> assigned(static_cast<std::size_t>(n), 0);
    std::vector<std::vector<double>> strengthened;
    int remaining = n;
    while (remaining > 0) {
        int seed = -1;
        for (int i = 0; i < n; ++i) {
            if (assigned[static_cast<std::size_t>(i)]) continue;
            if (seed < 0 || trace.importance[static_cast<std::size_t>(i)] > trace.importance[static_cast<std::size_t>(seed)]) {
                seed = i;
            }
        }

        // Intersect the rows of every unassigned point the seed's row marks.
        std::vector<std::uint8_t> row(static_cast<std::size_t>(n), 1);
        for (int c = 0; c < n; ++c) {
            if (assigned[static_cast<std::size_t>(c)] || !relation.at(seed, c)) continue;
            for (int k = 0; k < n; ++k) row[static_cast<std::size_t>(k)] &= relation.at(c, k) ? 1 : 0;
        }
        std::vector<int> group;
        for (int k = 0; k < n; ++k) {
            if (row[static_cast<std::size_t>(k)] && !assigned[static_cast<std::size_t>(k)]) group.push_back(k);
        }

        std::vector<double> mean(static_cast<std::size_t>(filters.dim), 0.0);
        for (int k : group) {
            const double* f = filters.row(k);
            for (int d = 0; d < filters.dim; ++d) mean[static_cast<std::size_t>(d)] += f[d];
        }
        for (auto& v : mean) v /= static_cast<double>(group.size());
        for (int k : group) assigned[static_cast<std::size_t>(k)] = 1;
        remaining -= static_cast<int>(group.size());

        trace.order.push_back(seed);
        trace.intersected_rows.push_back(std::move(row));
        result.sieve.groups.push_back(std::move(group));
        strengthened.push_back(std::move(mean));
    }

    result.sieve.filters = SampledVectors(static_cast<int>(strengthened.size()), filters.dim);
    for (std::size_t g = 0; g < strengthened.size(); ++g) {
        std::copy(strengthened[g].begin(), strengthened[g].end(), result.sieve.filters.row(static_cast<int>(g)));
    }
    return result;
}

SieveOutput apply_sieve(const FeatureMap& feature, const SampledVectors& filters, double bin_threshold) {
    if (filters.rows > 0 && filters.dim != feature.channels) {
        throw Error(ErrorCode::ShapeMismatch, "filter dimension does not match feature channels");
    }
    const std::size_t plane = feature.plane();
    SieveOutput out;
    out.score_maps.reserve(static_cast<std::size_t>(filters.rows));
    for (int k = 0; k < filters.rows; ++k) {
        std::vector<double> logits(plane, 0.0);
        const double* f = filters.row(k);
        for (int d = 0; d < feature.channels; ++d) {
            const double* src = feature.values.data() + d * plane;
            const double w = f[d];
            for (std::size_t i = 0; i < plane; ++i) logits[i] += w * src[i];
        }
        for (auto& v : logits) v = sigmoid(v);
        out.score_maps.push_back(std::move(logits));
    }

    for (int k = 0; k < filters.rows; ++k) out.masks.emplace_back(feature.width, feature.height);
    for (std::size_t i = 0; i < plane; ++i) {
        int best = -1;
        double best_score = bin_threshold;
        for (int k = 0; k < filters.rows; ++k) {
            const double s = out.score_maps[static_cast<std::size_t>(k)][i];
            if (s > best_score) {
                best = k;
                best_score = s;
            }
        }
        if (best >= 0) out.masks[static_cast<std::size_t>(best)].bits()[i] = 1;
    }
    return out;
}

SieveOutput apply_sieve(const FeatureMap& feature, const FilterSieve& sieve, double bin_threshold) {
    return apply_sieve(feature, sieve.filters, bin_threshold);
}

std::vector<Detection> decode_detections(const std::vector<BinaryMask>& masks,
                                         const std::vector<std::vector<double>>& score_maps,
                                         const DecodeConfig& config) {
    if (masks.size() != score_maps.size()) {
        throw Error(ErrorCode::ShapeMismatch, "one score map is needed per mask");
    }
    std::vector<Detection> detections;
    for (std::size_t k = 0; k < masks.size(); ++k) {
        const BinaryMask& mask = masks[k];
        if (score_maps[k].size() != mask.size()) throw Error(ErrorCode::ShapeMismatch, "score map size mismatch");
        if (mask.empty()) continue;

        const LabeledRegions regions = connected_components(mask);
        std::vector<std::size_t> sizes(static_cast<std::size_t>(regions.region_count) + 1, 0);
        for (int label : regions.label_grid) ++sizes[static_cast<std::size_t>(label)];
        int largest = 1;
        for (int label = 2; label <= regions.region_count; ++label) {
            if (sizes[static_cast<std::size_t>(label)] > sizes[static_cast<std::size_t>(largest)]) largest = label;
        }
        const std::size_t area = sizes[static_cast<std::size_t>(largest)];
        if (area < static_cast<std::size_t>(std::max(config.min_area, 1))) continue;

        double score_sum = 0.0;
        for (std::size_t i = 0; i < regions.label_grid.size(); ++i) {
            if (regions.label_grid[i] == largest) score_sum += score_maps[k][i];
        }
        const double score = score_sum / static_cast<double>(area);
        if (score < config.min_score) continue;

        const int out_w = config.image_width > 0 ? config.image_width : mask.width() * kGridScale;
        const int out_h = config.image_height > 0 ? config.image_height : mask.height() * kGridScale;
        Detection det;
        det.mask = upscale_mask(regions.region_mask(largest), kGridScale, out_w, out_h);
        if (det.mask.empty()) continue;
        det.score = score;
        if (out_w == mask.width() * kGridScale && out_h == mask.height() * kGridScale) {
            // No cropping: the corner-lattice trace of the upscaled mask is the grid trace scaled.
            det.polygon = scale_polygon(trace_contour(regions, largest), kGridScale);
        } else {
            det.polygon = trace_contour(connected_components(det.mask), 1);
        }
        detections.push_back(std::move(det));
    }
    return detections;
}

std::vector<CellPoint> extract_candidate_points(std::span<const double> center_map, GridDims dims, double threshold,
                                                int max_points) {
    if (center_map.size() != static_cast<std::size_t>(dims.width) * dims.height) {
        throw Error(ErrorCode::ShapeMismatch, "center map does not match grid dimensions");
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < center_map.size(); ++i) {
        if (center_map[i] > threshold) idx.push_back(i);
    }
    if (max_points >= 0 && idx.size() > static_cast<std::size_t>(max_points)) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return center_map[a] > center_map[b]; });
        idx.resize(static_cast<std::size_t>(max_points));
        std::sort(idx.begin(), idx.end());
    }
    std::vector<CellPoint> points;
    points.reserve(idx.size());
    for (std::size_t i : idx) {
        points.push_back({static_cast<int>(i % static_cast<std::size_t>(dims.width)),
                          static_cast<int>(i / static_cast<std::size_t>(dims.width))});
    }
    return points;
}

std::vector<Detection> post_process(const net::HeadOutputs& heads, const net::ModelParams& params, int image_width,
                                     int image_height, PostMode mode, const DetectConfig& config, PostStats* stats) {
    const std::vector<CellPoint> points =
        extract_candidate_points(heads.center_map, heads.dims, config.center_threshold, config.max_points);
    const DecodeConfig decode{config.min_area, config.min_score, image_width, image_height};
    if (stats) *stats = {static_cast<int>(points.size()), 0};
    if (points.empty()) return {};

    const SampledVectors filters = sample_vectors(heads.filter_map, points);
    SieveOutput sieved;
    if (mode == PostMode::Sieve) {
        const SampledVectors features = sample_vectors(heads.feature_map, points);
        const std::vector<double> logits = net::relation_logits(features, params);
        const ReinforcementMatrix relation =
            binarize_relation(logits, static_cast<int>(points.size()), config.relation_threshold);
        const EnsembleResult ensemble = filter_ensemble(filters, relation);
        sieved = apply_sieve(heads.feature_map, ensemble.sieve, config.bin_threshold);
    } else {
        sieved = apply_sieve(heads.feature_map, filters, config.bin_threshold);
    }
    if (stats) stats->filters = static_cast<int>(sieved.masks.size());
    return decode_detections(sieved.masks, sieved.score_maps, decode);
}

std::vector<Detection> detect(const Image& image, const net::ModelParams& params, const DetectConfig& config) {
    const net::HeadOutputs heads = net::forward_heads(image, params);
    return post_process(heads, params, image.width, image.height, PostMode::Sieve, config);
}

std::string detection_to_json(const Detection& detection) {
    nlohmann::json polygon = nlohmann::json::array();
    for (const auto& v : detection.polygon.vertices) polygon.push_back({v.x, v.y});
    nlohmann::json j;
    j["polygon"] = std::move(polygon);
    j["score"] = detection.score;
    return j.dump();
}

void write_detections_jsonl(const std::string& path, const std::vector<Detection>& detections) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    for (const auto& d : detections) out << detection_to_json(d) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::vector<DetectionRecord> read_detections_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::vector<DetectionRecord> records;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            DetectionRecord rec;
            for (const auto& v : j.at("polygon")) rec.polygon.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
            rec.score = j.at("score").get<double>();
            records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line_number) + ": " + e.what());
        }
    }
    return records;
}

} // namespace tpf
