#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tpf/cli.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(TPF_CLI_PATH) + " " + args + " 2>/dev/null";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("tpf_cli_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("exit codes") {
    CHECK(tpf::cli::kOk == 0);
    CHECK(tpf::cli::kRuntimeError == 1);
    CHECK(tpf::cli::kUsageError == 2);
    CHECK(tpf::cli::kNumericalError == 3);
    CHECK(run("--help").code == 0);
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("synth").code == 2);
    CHECK(run("infer --image x.ppm --out y.jsonl").code == 2);
    CHECK(run("infer --model " + scratch("missing.bin").string() + " --image x.ppm --out y.jsonl").code == 1);
    CHECK(run("synth --out " + scratch("bad_range").string() + " --min-instances 3 --max-instances 2").code == 2);
    CHECK(run("sweep gamma 1,2 --train a --test b --out c").code == 2);
}

TEST_CASE("synth is reproducible") {
    const auto a = scratch("synth_a"), b = scratch("synth_b");
    const auto ra = run("synth --out " + a.string() + " --seed 5 --count 3 --size 64 --max-instances 2");
    REQUIRE(ra.code == 0);
    CHECK(ra.out == (a / "manifest.json").string() + "\n");
    REQUIRE(run("synth --out " + b.string() + " --seed 5 --count 3 --size 64 --max-instances 2").code == 0);
    for (const auto& e : fs::directory_iterator(a)) CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    CHECK(fs::exists(a / "scene_2.ppm"));

    const auto env_dir = scratch("synth_env");
    const std::string env = "TPF_SEED=5 " + std::string(TPF_CLI_PATH) + " synth --out " + env_dir.string() +
                            " --count 3 --size 64 --max-instances 2 > /dev/null 2>&1";
    REQUIRE(std::system(env.c_str()) == 0);
    CHECK(slurp(a / "scene_1.ppm") == slurp(env_dir / "scene_1.ppm"));

    const std::string bad_threads = "TPF_THREADS=zero " + std::string(TPF_CLI_PATH) + " synth --out " +
                                    scratch("synth_threads").string() + " > /dev/null 2>&1";
    const int status = std::system(bad_threads.c_str());
    CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("labels") {
    const auto corpus = scratch("labels_corpus"), out = scratch("labels_out");
    REQUIRE(run("synth --out " + corpus.string() + " --seed 3 --count 2 --size 64 --max-instances 2").code == 0);
    const auto r = run("labels --corpus " + corpus.string() + " --out " + out.string() + " --points 1");
    REQUIRE(r.code == 0);
    int scenes = 0, instances = 0, points = 0;
    REQUIRE(std::sscanf(r.out.c_str(), "scenes %d instances %d points %d", &scenes, &instances, &points) == 3);
    CHECK(scenes == 2);
    CHECK(points == instances);
    CHECK(fs::exists(out / "scene_0" / "matrix.csv"));

    { std::ofstream(corpus / "scene_1.txt", std::ios::trunc); }
    CHECK(run("labels --corpus " + corpus.string() + " --out " + out.string()).code == 1);
    {
        std::ofstream f(corpus / "scene_1.txt", std::ios::trunc);
        f << "1,1,20,1,20,9,1,9\n3,3,oops\n";
    }
    const std::string cmd = std::string(TPF_CLI_PATH) + " labels --corpus " + corpus.string() + " --out " + out.string() +
                            " 2>&1 >/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string err;
    std::array<char, 512> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) err += buf.data();
    CHECK(WEXITSTATUS(pclose(pipe)) == 1);
    CHECK(err.find("scene_1.txt:2") != std::string::npos);
    CHECK(run("labels --corpus " + corpus.string() + " --out " + out.string() + " --valid-fraction 2").code == 2);
    CHECK(run("labels --corpus " + scratch("nowhere").string() + " --out " + out.string()).code == 1);
}

TEST_CASE("train, infer, eval, bench and viz on a small corpus") {
    const auto corpus = scratch("pipe_corpus"), work = scratch("pipe_work");
    fs::create_directories(work);
    REQUIRE(run("synth --out " + corpus.string() + " --seed 40 --count 8 --size 64 --max-instances 2").code == 0);
    const auto model = (work / "model.bin").string();
    REQUIRE(run("train --corpus " + corpus.string() + " --out " + model +
                " --channels 16 --embed 8 --iters 1000 --seed 2").code == 0);
    CHECK(fs::exists(model));
    const std::string csv = slurp(model + ".loss.csv");
    CHECK(csv.rfind("iter,l_fpu,l_cpt,l_ffp,l_reu,total\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1001);

    const auto e = run("eval --model " + model + " --corpus " + corpus.string() + " --json " + (work / "eval.json").string());
    REQUIRE(e.code == 0);
    double p = 0, r = 0, f = 0;
    REQUIRE(std::sscanf(e.out.c_str(), "precision %lf recall %lf f_measure %lf", &p, &r, &f) == 3);
    MESSAGE(e.out);
    CHECK(f > 0.0);
    CHECK(fs::exists(work / "eval.json"));

    const auto dets = work / "scene_0.jsonl";
    REQUIRE(run("infer --model " + model + " --image " + (corpus / "scene_0.ppm").string() + " --out " + dets.string()).code == 0);
    REQUIRE(run("infer --model " + model + " --corpus " + corpus.string() + " --out " + (work / "all").string()).code == 0);
    CHECK(slurp(dets) == slurp(work / "all" / "scene_0.jsonl"));
    CHECK(run("infer --model " + model + " --image " + (corpus / "scene_0.ppm").string() + " --corpus " + corpus.string() +
              " --out x").code == 2);

    const auto bench = run("bench --model " + model + " --corpus " + corpus.string() + " --out " +
                           (work / "bench.json").string() + " --warmups 0 --repeats 2");
    REQUIRE(bench.code == 0);
    const std::string json = slurp(work / "bench.json");
    CHECK(json.find("\"sieve\"") != std::string::npos);
    CHECK(json.find("\"per_point\"") != std::string::npos);

    const auto viz = work / "viz.ppm";
    REQUIRE(run("viz --image " + (corpus / "scene_0.ppm").string() + " --dets " + dets.string() + " --gt " +
                (corpus / "scene_0.txt").string() + " --out " + viz.string()).code == 0);
    CHECK(slurp(viz).size() == slurp(corpus / "scene_0.ppm").size());
    CHECK(slurp(viz) != slurp(corpus / "scene_0.ppm"));

    { std::ofstream(work / "empty.jsonl"); }
    REQUIRE(run("viz --image " + (corpus / "scene_0.ppm").string() + " --dets " + (work / "empty.jsonl").string() +
                " --out " + viz.string()).code == 0);
    CHECK(slurp(viz) == slurp(corpus / "scene_0.ppm"));

    { std::ofstream(work / "broken.bin") << "garbage"; }
    CHECK(run("eval --model " + (work / "broken.bin").string() + " --corpus " + corpus.string()).code == 1);
}

TEST_CASE("sweep writes both tables") {
    const auto train = scratch("sweep_train"), test = scratch("sweep_test"), out = scratch("sweep_out");
    REQUIRE(run("synth --out " + train.string() + " --seed 60 --count 2 --size 64 --max-instances 2").code == 0);
    REQUIRE(run("synth --out " + test.string() + " --seed 70 --count 2 --size 64 --max-instances 2").code == 0);
    const auto r = run("sweep alpha 0.5..0.7 --train " + train.string() + " --test " + test.string() + " --out " +
                       out.string() + " --channels 8 --embed 4 --iters 20");
    REQUIRE(r.code == 0);
    const std::string csv = slurp(out / "sweep_alpha.csv");
    CHECK(csv.rfind("alpha,Precision,Recall,F-measure\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(slurp(out / "sweep_alpha.txt") == r.out);
    CHECK(run("sweep points 1..x --train " + train.string() + " --test " + test.string() + " --out " + out.string()).code == 2);
}
