#pragma once

#include "tpf/feature_map.hpp"
#include "tpf/geometry.hpp"
#include "tpf/labels.hpp"
#include "tpf/micronet.hpp"

#include <span>
#include <string>
#include <vector>

namespace tpf {

/// Row i holds the map's channel values at points[i] (nearest cell).
SampledVectors sample_vectors(const FeatureMap& map, std::span<const CellPoint> points);

/// M[r][c] = 1 iff logit >= threshold (sigmoid >= 0.5 at the default), AND-symmetrised, unit diagonal.
ReinforcementMatrix binarize_relation(std::span<const double> logits, int n, double threshold = 0.0);

struct FilterSieve {
    SampledVectors filters;               // one strengthened filter per row
    std::vector<std::vector<int>> groups;  // sampled-point indices merged into each filter

    int count() const { return filters.rows; }
};

struct EnsembleTrace {
    std::vector<int> importance;   // column sums of M
    std::vector<int> order;        // seed point chosen for each group
    std::vector<std::vector<std::uint8_t>> intersected_rows;
};

struct EnsembleResult {
    FilterSieve sieve;
    EnsembleTrace trace;
};

/// Greedy filter ensemble over the relation matrix. Until every point is assigned: take the
/// unassigned point with the largest column sum (lowest index on ties), collect the unassigned
/// points its row marks, intersect those points' rows, and average the filters of the surviving
/// unassigned points into one strengthened filter.
EnsembleResult filter_ensemble(const SampledVectors& filters, const ReinforcementMatrix& relation);

struct SieveOutput {
    std::vector<BinaryMask> masks;
    std::vector<std::vector<double>> score_maps;  // sigmoid(<filter, feature>) per filter
};

/// Every cell goes to the filter with the highest score if that score is strictly above
/// bin_threshold; ties go to the lower filter index.
SieveOutput apply_sieve(const FeatureMap& feature, const SampledVectors& filters, double bin_threshold = 0.5);
SieveOutput apply_sieve(const FeatureMap& feature, const FilterSieve& sieve, double bin_threshold = 0.5);

struct Detection {
    BinaryMask mask;  // image resolution
    double score = 0.0;
    Polygon polygon;
};

struct DecodeConfig {
    int min_area = 8;  // grid cells, measured before upscaling
    double min_score = 0.5;
    int image_width = 0;   // 0: grid width * 4
    int image_height = 0;  // 0: grid height * 4
};

/// Keeps the largest component of each non-empty mask, upscales it 4x, traces its contour and
/// scores it with the mean of its filter's score map over the component.
std::vector<Detection> decode_detections(const std::vector<BinaryMask>& masks,
                                         const std::vector<std::vector<double>>& score_maps,
                                         const DecodeConfig& config = {});

struct DetectConfig {
    double center_threshold = 0.4;
    int max_points = 256;
    double relation_threshold = 0.0;
    double bin_threshold = 0.5;
    int min_area = 8;
    double min_score = 0.5;
};

/// Cells with probability strictly above threshold. When more than max_points qualify, the highest
/// scores are kept (raster order breaks ties). Returned in raster order.
std::vector<CellPoint> extract_candidate_points(std::span<const double> center_map, GridDims dims,
                                                double threshold, int max_points);

enum class PostMode { Sieve, PerPoint };

struct PostStats {
    int points = 0;
    int filters = 0;
};

/// Everything after the network forward: candidate points, sampling, relation + ensemble (Sieve mode)
/// or one filter per point (PerPoint mode), sieve application and decoding.
std::vector<Detection> post_process(const net::HeadOutputs& heads, const net::ModelParams& params,
                                     int image_width, int image_height, PostMode mode,
                                     const DetectConfig& config = {}, PostStats* stats = nullptr);

std::vector<Detection> detect(const Image& image, const net::ModelParams& params, const DetectConfig& config = {});

/// {"polygon":[[x,y],...],"score":s}
std::string detection_to_json(const Detection& detection);
void write_detections_jsonl(const std::string& path, const std::vector<Detection>& detections);

struct DetectionRecord {
    Polygon polygon;
    double score = 0.0;
};
std::vector<DetectionRecord> read_detections_jsonl(const std::string& path);

} // namespace tpf
