#include "tpf/cli.hpp"

#include "tpf/error.hpp"
#include "tpf/evalbench.hpp"
#include "tpf/labels.hpp"
#include "tpf/micronet.hpp"
#include "tpf/sieve.hpp"
#include "tpf/synthgen.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

namespace tpf::cli {

namespace fs = std::filesystem;

namespace {

struct NetFlags {
    int channels = 32;
    int embed = 16;
    int iters = 2000;
    int batch = 1;
    double lr = 1e-3;
};

struct WeightFlags {
    LossWeights w;
};

struct DetectFlags {
    DetectConfig d;
};

std::uint64_t default_seed() {
    if (const char* env = std::getenv("TPF_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end != env && *end == '\0') return v;
        throw Error(ErrorCode::InvalidArgument, std::string("TPF_SEED is not an unsigned integer: ") + env);
    }
    return 1;
}

// Every stage here is single-threaded, so TPF_THREADS only has to be well-formed.
void check_threads_env() {
    if (const char* env = std::getenv("TPF_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) {
            throw Error(ErrorCode::InvalidArgument, std::string("TPF_THREADS must be a positive integer: ") + env);
        }
    }
}

void add_net_flags(CLI::App* cmd, NetFlags& f, std::uint64_t& seed) {
    cmd->add_option("--seed", seed, "Seed for init and data order (env TPF_SEED)")->capture_default_str();
    cmd->add_option("--channels", f.channels, "Fusion channels C")->capture_default_str();
    cmd->add_option("--embed", f.embed, "Feature/filter dimension D")->capture_default_str();
    cmd->add_option("--iters", f.iters, "Training iterations")->capture_default_str();
    cmd->add_option("--batch", f.batch, "Scenes per iteration")->capture_default_str();
    cmd->add_option("--lr", f.lr, "Initial learning rate")->capture_default_str();
}

net::NetConfig make_net_config(const NetFlags& f, std::uint64_t seed) {
    net::NetConfig c;
    c.fusion_channels = f.channels;
    c.embed_dim = f.embed;
    c.max_iters = f.iters;
    c.batch = f.batch;
    c.lr0 = f.lr;
    c.seed = seed;
    c.validate();
    return c;
}

void add_weight_flags(CLI::App* cmd, LossWeights& w) {
    cmd->add_option("--alpha", w.alpha, "Foreground prior loss weight")->capture_default_str();
    cmd->add_option("--beta", w.beta, "Center point loss weight")->capture_default_str();
    cmd->add_option("--mu", w.mu, "Feature-filter loss weight")->capture_default_str();
    cmd->add_option("--lambda", w.lambda, "Relation loss weight")->capture_default_str();
}

void add_label_flags(CLI::App* cmd, LabelConfig& l) {
    cmd->add_option("--points", l.points_per_text, "Center points per text")->capture_default_str();
    cmd->add_option("--valid-fraction", l.valid_fraction, "Central fraction of the long axis used for sampling")
        ->capture_default_str();
}

void add_detect_flags(CLI::App* cmd, DetectConfig& d) {
    cmd->add_option("--center-threshold", d.center_threshold, "Center map threshold")->capture_default_str();
    cmd->add_option("--max-points", d.max_points, "Cap on candidate points")->capture_default_str();
    cmd->add_option("--min-area", d.min_area, "Minimum component area in grid cells")->capture_default_str();
    cmd->add_option("--min-score", d.min_score, "Minimum detection score")->capture_default_str();
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw Error(ErrorCode::IoError, what + " not found: " + path);
}

void require_dir(const std::string& path, const std::string& what) {
    if (!fs::is_directory(path)) throw Error(ErrorCode::IoError, what + " not found: " + path);
}

void write_text(const std::string& path, const std::string& text) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
}

std::vector<net::TrainingSample> training_set(const std::vector<CorpusScene>& scenes, const LabelConfig& labels) {
    std::vector<net::TrainingSample> out;
    for (const auto& s : scenes) out.push_back(net::make_training_sample(s.image, s.polygons, labels));
    return out;
}

// "0.1,0.5,0.9" or "a..b" / "a..b:step" (step defaults to 0.1).
std::vector<double> parse_values(const std::string& spec) {
    std::vector<double> values;
    const auto bad = [&] { return Error(ErrorCode::InvalidArgument, "cannot parse sweep values '" + spec + "'"); };
    const auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw bad();
        }
        if (used != s.size()) throw bad();
        return v;
    };
    if (const auto dots = spec.find(".."); dots != std::string::npos) {
        std::string hi_part = spec.substr(dots + 2);
        double step = 0.1;
        if (const auto colon = hi_part.find(':'); colon != std::string::npos) {
            step = number(hi_part.substr(colon + 1));
            hi_part = hi_part.substr(0, colon);
        }
        const double lo = number(spec.substr(0, dots));
        const double hi = number(hi_part);
        if (!(step > 0.0) || hi < lo) throw bad();
        const long count = std::lround(std::floor((hi - lo) / step + 1e-9)) + 1;
        for (long i = 0; i < count; ++i) values.push_back(std::round((lo + i * step) * 1e9) / 1e9);
        return values;
    }
    std::size_t start = 0;
    while (start <= spec.size()) {
        const auto comma = spec.find(',', start);
        const std::string item = spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        values.push_back(number(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return values;
}

void draw_line(Image& image, Point2 a, Point2 b, const std::array<double, 3>& color) {
    const double len = std::max(std::abs(b.x - a.x), std::abs(b.y - a.y));
    const int steps = std::max(1, static_cast<int>(std::ceil(len)));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        const int x = static_cast<int>(std::floor(a.x + t * (b.x - a.x)));
        const int y = static_cast<int>(std::floor(a.y + t * (b.y - a.y)));
        if (x < 0 || y < 0 || x >= image.width || y >= image.height) continue;
        for (int c = 0; c < 3; ++c) image.at(c, x, y) = color[static_cast<std::size_t>(c)];
    }
}

void draw_polygon(Image& image, const Polygon& p, const std::array<double, 3>& color) {
    const std::size_t n = p.vertices.size();
    for (std::size_t i = 0; i < n; ++i) draw_line(image, p.vertices[i], p.vertices[(i + 1) % n], color);
}

// Lattice contours run along cell corners; pull the far edges in by one pixel so they land on the region.
Polygon inset_lattice(const Polygon& p, int width, int height) {
    Polygon q = p;
    for (auto& v : q.vertices) {
        v.x = std::min(v.x, static_cast<double>(width) - 0.5);
        v.y = std::min(v.y, static_cast<double>(height) - 0.5);
    }
    return q;
}

} // namespace

int run(int argc, char** argv) {
    CLI::App app{"Text-pass filter scene text detector (desk scale)", "tpf"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    std::uint64_t seed = 1;
    try {
        seed = default_seed();
        check_threads_env();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    }

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    SceneSpec scene;
    std::string synth_out;
    int synth_count = 4;
    int synth_size = 128;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", seed, "Base seed (env TPF_SEED)")->capture_default_str();
    synth->add_option("--count", synth_count, "Number of scenes")->capture_default_str();
    synth->add_option("--size", synth_size, "Square image size in pixels")->capture_default_str();
    synth->add_option("--min-instances", scene.min_instances, "Minimum instances per scene")->capture_default_str();
    synth->add_option("--max-instances", scene.max_instances, "Maximum instances per scene")->capture_default_str();
    synth->add_option("--min-aspect", scene.min_aspect, "Minimum aspect ratio")->capture_default_str();
    synth->add_option("--max-aspect", scene.max_aspect, "Maximum aspect ratio")->capture_default_str();
    synth->add_option("--min-gap", scene.min_gap_cells, "Minimum gap between instances, grid cells")
        ->capture_default_str();
    synth->add_flag("--curved", scene.curved, "Allow quadratic-arc ribbons");
    synth->add_flag("--adjacent", scene.adjacent, "Force one pair within 2 grid cells");

    // labels
    auto* labels = app.add_subcommand("labels", "Compile label bundles for a corpus");
    std::string labels_corpus, labels_out;
    LabelConfig label_cfg;
    labels->add_option("--corpus", labels_corpus, "Corpus directory")->required();
    labels->add_option("--out", labels_out, "Output directory")->required();
    add_label_flags(labels, label_cfg);

    // train
    auto* train = app.add_subcommand("train", "Train the micro network");
    std::string train_corpus, train_out, train_log;
    NetFlags net_flags;
    LossWeights weights;
    train->add_option("--corpus", train_corpus, "Corpus directory")->required();
    train->add_option("--out", train_out, "Checkpoint path")->required();
    train->add_option("--loss-csv", train_log, "Loss CSV path (default: <out>.loss.csv)");
    add_net_flags(train, net_flags, seed);
    add_weight_flags(train, weights);
    add_label_flags(train, label_cfg);

    // infer
    auto* infer = app.add_subcommand("infer", "Detect texts in an image or a corpus");
    std::string infer_model, infer_image, infer_corpus, infer_out;
    DetectConfig detect_cfg;
    infer->add_option("--model", infer_model, "Checkpoint path")->required();
    auto* infer_image_opt = infer->add_option("--image", infer_image, "Input PPM");
    auto* infer_corpus_opt = infer->add_option("--corpus", infer_corpus, "Corpus directory");
    infer_image_opt->excludes(infer_corpus_opt);
    infer->add_option("--out", infer_out, "JSONL path (--image) or directory (--corpus)")->required();
    add_detect_flags(infer, detect_cfg);

    // eval
    auto* eval = app.add_subcommand("eval", "Precision / recall / F-measure on a corpus");
    std::string eval_model, eval_corpus, eval_json;
    double eval_iou = 0.5;
    eval->add_option("--model", eval_model, "Checkpoint path")->required();
    eval->add_option("--corpus", eval_corpus, "Corpus directory")->required();
    eval->add_option("--iou", eval_iou, "IoU threshold")->capture_default_str();
    eval->add_option("--json", eval_json, "Also write the scores as JSON");
    add_detect_flags(eval, detect_cfg);

    // bench
    auto* bench = app.add_subcommand("bench", "Stage timing in sieve and per_point modes");
    std::string bench_model, bench_corpus_dir, bench_out;
    TimingOptions timing;
    bench->add_option("--model", bench_model, "Checkpoint path")->required();
    bench->add_option("--corpus", bench_corpus_dir, "Corpus directory")->required();
    bench->add_option("--out", bench_out, "Timing JSON path")->required();
    bench->add_option("--warmups", timing.warmups, "Untimed runs per image")->capture_default_str();
    bench->add_option("--repeats", timing.repeats, "Timed runs per image")->capture_default_str();
    add_detect_flags(bench, detect_cfg);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Ablation sweep over alpha, points or scale");
    std::string sweep_axis, sweep_values, sweep_train, sweep_test, sweep_out, sweep_model;
    sweep_cmd->add_option("axis", sweep_axis, "alpha | points | scale")->required();
    sweep_cmd->add_option("values", sweep_values, "Comma list or range a..b[:step]")->required();
    sweep_cmd->add_option("--train", sweep_train, "Training corpus")->required();
    sweep_cmd->add_option("--test", sweep_test, "Held-out corpus")->required();
    sweep_cmd->add_option("--out", sweep_out, "Output directory for the CSV and text table")->required();
    sweep_cmd->add_option("--model", sweep_model, "Checkpoint for the scale axis (trained when omitted)");
    sweep_cmd->add_option("--warmups", timing.warmups, "Untimed runs per image")->capture_default_str();
    sweep_cmd->add_option("--repeats", timing.repeats, "Timed runs per image")->capture_default_str();
    add_net_flags(sweep_cmd, net_flags, seed);
    add_weight_flags(sweep_cmd, weights);
    add_label_flags(sweep_cmd, label_cfg);
    add_detect_flags(sweep_cmd, detect_cfg);

    // viz
    auto* viz = app.add_subcommand("viz", "Draw detections (green) and ground truth (red) on an image");
    std::string viz_image, viz_dets, viz_gt, viz_out;
    viz->add_option("--image", viz_image, "Input PPM")->required();
    viz->add_option("--dets", viz_dets, "Detections JSONL");
    viz->add_option("--gt", viz_gt, "Ground-truth polygon file");
    viz->add_option("--out", viz_out, "Output PPM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (synth->parsed()) {
            scene.seed = seed;
            scene.width = synth_size;
            scene.height = synth_size;
            scene.validate();
            const CorpusManifest m = generate_corpus(scene, synth_count, synth_out);
            std::cout << (fs::path(synth_out) / "manifest.json").string() << '\n';
            std::cerr << "scenes " << m.scenes.size() << " instances " << m.total_instances << '\n';
        } else if (labels->parsed()) {
            label_cfg.validate();
            require_dir(labels_corpus, "corpus");
            const CorpusManifest m = read_manifest(labels_corpus);
            long instances = 0, points = 0;
            for (const auto& entry : m.scenes) {
                const auto ann = (fs::path(labels_corpus) / entry.annotation_file).string();
                const auto polys = read_polygon_file(ann);
                if (polys.empty()) throw Error(ErrorCode::NoValidInstances, ann + ": no polygons");
                const Image image = read_ppm((fs::path(labels_corpus) / entry.image_file).string());
                const LabelBundle bundle = build_label_bundle(polys, image.width, image.height, label_cfg);
                write_label_bundle((fs::path(labels_out) / fs::path(entry.image_file).stem()).string(), bundle);
                instances += bundle.stack.count();
                points += static_cast<long>(bundle.points.size());
            }
            std::cout << "scenes " << m.scenes.size() << " instances " << instances << " points " << points << '\n';
        } else if (train->parsed()) {
            weights.validate();
            label_cfg.validate();
            const net::NetConfig cfg = make_net_config(net_flags, seed);
            require_dir(train_corpus, "corpus");
            const auto samples = training_set(load_corpus(train_corpus), label_cfg);
            net::TrainOptions opts;
            const long report_every = std::max(1, cfg.max_iters / 20);
            opts.on_iteration = [&](long iter, const LossBundle& l) {
                if (iter == 1 || iter % report_every == 0) {
                    std::cerr << "iter " << iter << " total " << l.total << '\n';
                }
            };
            const net::TrainResult result = net::train(samples, cfg, weights, opts);
            net::save_checkpoint(train_out, result.params);
            write_text(train_log.empty() ? train_out + ".loss.csv" : train_log, net::format_loss_csv(result.history));
            std::cout << train_out << '\n';
        } else if (infer->parsed()) {
            if (infer_image.empty() == infer_corpus.empty()) {
                std::cerr << "infer: exactly one of --image or --corpus is required\n" << infer->help();
                return kUsageError;
            }
            require_file(infer_model, "checkpoint");
            const net::ModelParams params = net::load_checkpoint(infer_model);
            if (!infer_image.empty()) {
                require_file(infer_image, "image");
                write_detections_jsonl(infer_out, detect(read_ppm(infer_image), params, detect_cfg));
            } else {
                require_dir(infer_corpus, "corpus");
                fs::create_directories(infer_out);
                for (const auto& s : load_corpus(infer_corpus)) {
                    write_detections_jsonl((fs::path(infer_out) / (s.name + ".jsonl")).string(),
                                           detect(s.image, params, detect_cfg));
                }
            }
        } else if (eval->parsed()) {
            require_file(eval_model, "checkpoint");
            require_dir(eval_corpus, "corpus");
            const net::ModelParams params = net::load_checkpoint(eval_model);
            const EvalSummary s = evaluate_corpus(load_corpus(eval_corpus), params, detect_cfg, eval_iou);
            std::printf("precision %.4f recall %.4f f_measure %.4f tp %ld dets %ld gts %ld\n", s.prf.precision,
                        s.prf.recall, s.prf.f_measure, s.counts.true_positives, s.counts.detections,
                        s.counts.ground_truths);
            if (!eval_json.empty()) {
                nlohmann::json j{{"precision", s.prf.precision}, {"recall", s.prf.recall},
                                 {"f_measure", s.prf.f_measure}, {"tp", s.counts.true_positives},
                                 {"detections", s.counts.detections}, {"ground_truths", s.counts.ground_truths}};
                write_text(eval_json, j.dump() + "\n");
            }
        } else if (bench->parsed()) {
            require_file(bench_model, "checkpoint");
            require_dir(bench_corpus_dir, "corpus");
            const net::ModelParams params = net::load_checkpoint(bench_model);
            const auto scenes = load_corpus(bench_corpus_dir);
            const TimingReport sieve = bench_corpus(scenes, params, PostMode::Sieve, detect_cfg, timing);
            const TimingReport per_point = bench_corpus(scenes, params, PostMode::PerPoint, detect_cfg, timing);
            nlohmann::json j;
            j["sieve"] = nlohmann::json::parse(timing_to_json(sieve));
            j["per_point"] = nlohmann::json::parse(timing_to_json(per_point));
            write_text(bench_out, j.dump(2) + "\n");
            std::cout << j.dump() << '\n';
        } else if (sweep_cmd->parsed()) {
            const SweepAxis axis = parse_sweep_axis(sweep_axis);
            const std::vector<double> values = parse_values(sweep_values);
            require_dir(sweep_train, "training corpus");
            require_dir(sweep_test, "held-out corpus");
            SweepSetup setup;
            setup.net = make_net_config(net_flags, seed);
            setup.labels = label_cfg;
            setup.weights = weights;
            setup.detect = detect_cfg;
            setup.timing = timing;
            setup.labels.validate();
            setup.weights.validate();
            net::ModelParams model;
            const net::ModelParams* model_ptr = nullptr;
            if (!sweep_model.empty()) {
                require_file(sweep_model, "checkpoint");
                model = net::load_checkpoint(sweep_model);
                model_ptr = &model;
            }
            const SweepTable table =
                sweep(axis, values, load_corpus(sweep_train), load_corpus(sweep_test), setup, model_ptr);
            const std::string stem = "sweep_" + to_string(axis);
            write_text((fs::path(sweep_out) / (stem + ".csv")).string(), sweep_csv(table));
            const std::string text = sweep_text_table(table);
            write_text((fs::path(sweep_out) / (stem + ".txt")).string(), text);
            std::cout << text;
        } else if (viz->parsed()) {
            require_file(viz_image, "image");
            Image image = read_ppm(viz_image);
            if (!viz_gt.empty()) {
                require_file(viz_gt, "ground truth");
                for (const auto& p : read_polygon_file(viz_gt)) draw_polygon(image, p, {1.0, 0.0, 0.0});
            }
            if (!viz_dets.empty()) {
                require_file(viz_dets, "detections");
                for (const auto& d : read_detections_jsonl(viz_dets)) {
                    draw_polygon(image, inset_lattice(d.polygon, image.width, image.height), {0.0, 1.0, 0.0});
                }
            }
            write_ppm(viz_out, image);
        }
    } catch (const NonFiniteLossError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumericalError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        if (e.code() == ErrorCode::NonFiniteParams) return kNumericalError;
        if (e.code() == ErrorCode::InvalidArgument) return kUsageError;
        return kRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

} // namespace tpf::cli
