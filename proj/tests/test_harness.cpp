#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "test_support.hpp"
#include "tmdit/config.hpp"
#include "tmdit/harness.hpp"
#include "tmdit/synthetic.hpp"
#include "tmdit/tensor_io.hpp"

using namespace tmdit;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config(text, "t.cfg");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const char* kTinyConfig = R"(seed = 3
model.dim = 8
model.heads = 2
model.mlp_ratio = 2
model.video_blocks = 1
model.audio_blocks = 1
model.omni_blocks = 1
model.channels = 2
model.frames = 8
model.height = 2
model.width = 2
model.audio_len = 16
model.audio_dim = 2
model.text_len = 3
model.vocab = 8
train.steps = 2
train.batch = 2
sampler.steps = 3
eval.samples = 3
eval.feature_dim = 4
)";

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("tmdit_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(TMDIT_CLI) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Maximum one-to-one matching by exhaustive search; sets here hold at most three peaks.
double iou_oracle(const PeakSet& a, PeakSet v, std::int64_t tol) {
    if (a.empty() && v.empty()) return 1.0;
    std::size_t best = 0;
    std::sort(v.begin(), v.end());
    do {
        std::size_t m = 0;
        for (std::size_t i = 0; i < std::min(a.size(), v.size()); ++i) m += std::abs(a[i] - v[i]) <= tol;
        best = std::max(best, m);
    } while (std::next_permutation(v.begin(), v.end()));
    // permutations of v cover all injective assignments when |v| >= |a|; otherwise permute a
    if (a.size() > v.size()) {
        PeakSet aa = a;
        std::sort(aa.begin(), aa.end());
        do {
            std::size_t m = 0;
            for (std::size_t i = 0; i < v.size(); ++i) m += std::abs(aa[i] - v[i]) <= tol;
            best = std::max(best, m);
        } while (std::next_permutation(aa.begin(), aa.end()));
    }
    return static_cast<double>(best) / static_cast<double>(a.size() + v.size() - best);
}

}  // namespace

TEST_CASE("config parsing") {
    const auto cfg = parse_config("seed = 9\nmodel.dim = 16  # comment\nsampler.solver = heun\n\n", "x");
    CHECK(cfg.seed == 9);
    CHECK(cfg.model.dim == 16);
    CHECK(cfg.sampler.solver == Solver::heun);
    CHECK(cfg.sampler.steps == 50);

    CHECK(error_of("seed = 1\nmodel.dimm = 3\n").find("t.cfg:2: model.dimm") == 0);
    CHECK(error_of("model.dim = abc\n").find("t.cfg:1: model.dim") == 0);
    CHECK(error_of("seed = 1\nseed = 2\n").find("t.cfg:2: seed") == 0);
    CHECK(error_of("garbage line\n").find("t.cfg:1") == 0);
    CHECK(error_of("model.family = unet\n").find("model.family") != std::string::npos);
    CHECK(error_of("train.lr = -1\n").find("train.lr") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);
}

TEST_CASE("config echo round trips") {
    auto cfg = parse_config(kTinyConfig);
    cfg.sampler.guidance = 0.1;
    cfg.train.weighting = Weighting::sigma_one_minus_sigma;
    const auto back = parse_config(config_echo(cfg));
    CHECK(config_echo(back) == config_echo(cfg));
    CHECK(back.sampler.guidance == 0.1);
}

TEST_CASE("synthetic scenes") {
    SceneConfig sc;
    RngStream rng(11);
    for (int i = 0; i < 50; ++i) {
        const auto p = generate_synthetic_pair(sc, rng);
        CHECK(av_align(p.audio_peaks, p.video_peaks, 0) == 1.0);
        CHECK(scene_video_peaks(p.video, 0, sc) == p.video_peaks);
        CHECK(scene_audio_peaks(p.audio, 0, sc) == p.audio_peaks);
        CHECK(p.tokens[0] == count_token(static_cast<int>(p.video_peaks.size())));
    }

    SceneConfig empty = sc;
    empty.min_events = empty.max_events = 0;
    const auto z = generate_synthetic_pair(empty, rng);
    CHECK(z.video_peaks.empty());
    CHECK(z.audio_peaks.empty());
    CHECK(scene_video_peaks(z.video, 0, empty).empty());
    CHECK(scene_audio_peaks(z.audio, 0, empty).empty());
}

TEST_CASE("uncoupled scenes match a Monte-Carlo alignment oracle") {
    SceneConfig sc;
    sc.coupling = 0.0;
    RngStream rng(12);
    const int n = 4000;
    double got = 0;
    for (int i = 0; i < n; ++i) {
        const auto p = generate_synthetic_pair(sc, rng);
        got += av_align(p.audio_peaks, p.video_peaks, 1);
    }
    got /= n;

    std::mt19937_64 gen(99);
    auto draw = [&](int k) {
        std::uniform_int_distribution<std::int64_t> t(1, sc.frames - 2);
        for (;;) {
            PeakSet s;
            for (int i = 0; i < k; ++i) s.push_back(t(gen));
            std::sort(s.begin(), s.end());
            bool ok = true;
            for (std::size_t i = 1; i < s.size(); ++i) ok = ok && s[i] - s[i - 1] >= sc.min_spacing;
            if (ok) return s;
        }
    };
    std::uniform_int_distribution<int> count(sc.min_events, sc.max_events);
    double want = 0;
    const int m = 40000;
    for (int i = 0; i < m; ++i) {
        const int k = count(gen);
        want += iou_oracle(draw(k), draw(k), 1);
    }
    want /= m;
    CHECK(std::abs(got - want) < 0.02);
}

TEST_CASE("container round trip and corruption") {
    const auto dir = scratch("container");
    Container c;
    c.config = "seed = 1\n";
    c.tensors = {{"a", Tensor::from({2}, {0.5, -2.0})}, {"b", Tensor::zeros({1, 3})}};
    c.rng_seed = 42;
    c.rng_counter = 7;
    write_container(dir / "c.bin", ContainerKind::checkpoint, c);
    const auto back = read_container(dir / "c.bin", ContainerKind::checkpoint);
    CHECK(back.config == c.config);
    CHECK(back.rng_seed == 42);
    CHECK(back.rng_counter == 7);
    CHECK(testing::bitwise_equal(back.get("a"), c.get("a")));
    CHECK(back.get("b").shape() == Shape{1, 3});
    CHECK_THROWS_AS(read_container(dir / "c.bin", ContainerKind::latents), IoError);
    CHECK_THROWS_AS(read_container(dir / "missing.bin", ContainerKind::checkpoint), IoError);

    const std::string bytes = slurp(dir / "c.bin");
    std::ofstream(dir / "cut.bin", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
    CHECK_THROWS_AS(read_container(dir / "cut.bin", ContainerKind::checkpoint), IoError);
    std::ofstream(dir / "long.bin", std::ios::binary) << bytes << "x";
    CHECK_THROWS_AS(read_container(dir / "long.bin", ContainerKind::checkpoint), IoError);
}

TEST_CASE("command line") {
    const auto dir = scratch("cli");
    const auto cfg_path = dir / "tiny.cfg";
    std::ofstream(cfg_path) << kTinyConfig << "out = " << (dir / "run").string() << "\n";
    const std::string c = " --config " + cfg_path.string();

    CHECK(cli("") == 1);
    CHECK(cli("train") == 1);
    CHECK(cli("sample" + c) == 2);  // no checkpoint yet

    CHECK(cli("train --steps 0" + c) == 0);
    CHECK(fs::exists(dir / "run" / kCheckpointFile));
    CHECK(slurp(dir / "run" / kTrainLogFile).empty());

    CHECK(cli("train" + c) == 0);
    std::string log = slurp(dir / "run" / kTrainLogFile);
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);

    CHECK(cli("sample --seed 7" + c) == 0);
    const std::string first = slurp(dir / "run" / kSamplesFile);
    CHECK(cli("sample --seed 7" + c) == 0);
    CHECK(slurp(dir / "run" / kSamplesFile) == first);
    CHECK(cli("sample --seed 8" + c) == 0);
    CHECK(slurp(dir / "run" / kSamplesFile) != first);

    CHECK(cli("eval" + c) == 0);
    CHECK(slurp(dir / "run" / kMetricsFile).find("av_align=") != std::string::npos);
    CHECK(cli("sample --cfg-scale 4" + c) == 0);

    std::ofstream(dir / "bad.cfg") << "model.dim = x\n";
    CHECK(cli("train --config " + (dir / "bad.cfg").string()) == 2);
    CHECK(cli("train --config " + (dir / "nothere.cfg").string()) == 2);
    fs::remove_all(dir);
}
