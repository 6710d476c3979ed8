#pragma once

#include "tpf/geometry.hpp"
#include "tpf/image.hpp"
#include "tpf/labels.hpp"
#include "tpf/losses.hpp"
#include "tpf/micronet.hpp"
#include "tpf/sieve.hpp"
#include "tpf/synthgen.hpp"

#include <string>
#include <vector>

namespace tpf {

struct MatchPair {
    int det = 0;
    int gt = 0;
    double iou = 0.0;
};

struct MatchResult {
    std::vector<MatchPair> pairs;
    std::vector<int> unmatched_dets;
    std::vector<int> unmatched_gts;
};

/// Greedy one-to-one matching in descending IoU; equal IoUs are taken in (det, gt) order. Pairs below
/// the threshold are never matched.
MatchResult match_masks(const std::vector<BinaryMask>& dets, const std::vector<BinaryMask>& gts,
                        double iou_threshold = 0.5);

/// Ground truth is rasterized at width x height; detections use their masks (their polygons when the
/// mask is missing).
MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<Polygon>& gts, int width,
                             int height, double iou_threshold = 0.5);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

// Corpus-level totals; P/R/F are computed from the sums, not averaged per image.
struct PrfCounts {
    long true_positives = 0;
    long detections = 0;
    long ground_truths = 0;

    void add(const MatchResult& match);
};

/// No dets and no gts: (1,1,1). No dets with gts: (0,0,0). F is 0 when P + R is 0.
Prf prf(const PrfCounts& counts);
Prf prf(const MatchResult& match);

struct TimingReport {
    double ed_ms = 0.0;
    double post_ms = 0.0;
    double total_ms = 0.0;  // ed_ms + post_ms
    double fps = 0.0;       // 1000 / total_ms
    int n = 0;              // candidate points
    int m = 0;              // filters applied
};

/// {"ed_ms":...,"post_ms":...,"total_ms":...,"fps":...,"n":...,"m":...}
std::string timing_to_json(const TimingReport& report);

struct TimingOptions {
    int warmups = 3;
    int repeats = 20;
};

struct TimedDetection {
    std::vector<Detection> detections;
    TimingReport report;
};

/// Median wall-clock of forward_heads (ED) and of post_process (Post) over `repeats` runs after
/// `warmups` untimed runs.
TimedDetection timed_detect(const Image& image, const net::ModelParams& params, PostMode mode,
                            const DetectConfig& config = {}, const TimingOptions& options = {});

/// Per-image medians averaged over the corpus; n and m are per-image means rounded to integers.
TimingReport bench_corpus(const std::vector<CorpusScene>& scenes, const net::ModelParams& params, PostMode mode,
                          const DetectConfig& config = {}, const TimingOptions& options = {});

struct EvalSummary {
    PrfCounts counts;
    Prf prf;
};

EvalSummary evaluate_corpus(const std::vector<CorpusScene>& scenes, const net::ModelParams& params,
                            const DetectConfig& config = {}, double iou_threshold = 0.5);

enum class SweepAxis { Alpha, Points, Scale };

std::string to_string(SweepAxis axis);
/// "alpha", "points" (or "points_per_text"), "scale"; throws InvalidArgument otherwise.
SweepAxis parse_sweep_axis(const std::string& name);

struct SweepRow {
    double value = 0.0;
    Prf prf;
    double post_ms = 0.0;
    double fps = 0.0;
};

struct SweepTable {
    SweepAxis axis = SweepAxis::Alpha;
    std::vector<SweepRow> rows;
};

struct SweepSetup {
    net::NetConfig net;
    LabelConfig labels;
    LossWeights weights;
    DetectConfig detect;
    TimingOptions timing;
};

/// Alpha and points rows each train a fresh model on `train` with the value substituted; scale rows
/// evaluate one model (trained from `setup` unless `model` is given) on test images resized so their
/// short side equals the value.
SweepTable sweep(SweepAxis axis, const std::vector<double>& values, const std::vector<CorpusScene>& train,
                 const std::vector<CorpusScene>& test, const SweepSetup& setup,
                 const net::ModelParams* model = nullptr);

/// Columns follow the ablation tables: alpha -> P,R,F; points -> P,R,F,post,FPS; scale -> P,R,F,FPS.
std::string sweep_csv(const SweepTable& table);
std::string sweep_text_table(const SweepTable& table);

/// Image and polygons resized so the shorter image side equals `short_side`.
CorpusScene rescale_scene(const CorpusScene& scene, int short_side);

} // namespace tpf
