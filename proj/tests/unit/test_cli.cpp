#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "ctrlvdiff/cli.hpp"
#include "ctrlvdiff/datastore.hpp"
#include "ctrlvdiff/png_grid.hpp"
#include "helpers.hpp"

using namespace ctrlvdiff;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
    args.insert(args.begin(), "ctrlvdiff");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Outcome o;
    o.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

// Tiny model and data settings shared by every training invocation.
std::vector<std::string> tiny(std::vector<std::string> args) {
    for (const char* s : {"model.dim=16", "model.layers=1", "model.heads=2", "model.max_frames=2", "data.frames=2",
                          "data.height=8", "data.width=8", "model.patch=2", "stages.steps_I=3", "stages.steps_II=2",
                          "stages.steps_III=2", "stages.batch_size=2", "stages.checkpoint_every=2",
                          "schedule.num_steps=50", "augment.sampling_steps=2"}) {
        args.push_back("--set");
        args.push_back(s);
    }
    return args;
}

std::vector<std::string> list_lines(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string l; std::getline(ss, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("unknown subcommands and flags print usage and exit 1") {
    Outcome o = cli({"frobnicate"});
    CHECK(o.code == 1);
    CHECK(o.err.find("gen-data") != std::string::npos);
    o = cli({"gen-data", "--clips", "1", "--bogus"});
    CHECK(o.code == 1);
    CHECK(cli({}).code == 1);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("gen-data writes the requested clips, a manifest and the run files") {
    testing::TempDir dir("cli-gen");
    const fs::path data = dir.path() / "data";
    const Outcome o = cli(tiny({"gen-data", "--clips", "16", "--seed", "0", "--out", data.string()}));
    REQUIRE(o.code == 0);
    CHECK(list_clips(data).size() == 16);
    CHECK(fs::exists(data / "manifest.json"));
    CHECK(fs::exists(data / "run.log"));
    const std::string echo = slurp(data / "config.echo");
    CHECK(echo.rfind("# gen-data\n", 0) == 0);
    CHECK(echo.find("height = 8") != std::string::npos);
    CHECK(echo.find("seed = 0") != std::string::npos);
    const ClipRecord c = read_clip(data, "clip-0003");
    CHECK(c.get(Modality::rgb).shape == Shape{2, 8, 8, 3});
    CHECK(c.tensors.size() == 8);
}

TEST_CASE("identical configs give byte-identical data") {
    testing::TempDir dir("cli-repro");
    for (const char* sub : {"a", "b"})
        REQUIRE(cli(tiny({"gen-data", "--clips", "3", "--seed", "7", "--out", (dir.path() / sub).string()})).code == 0);
    CHECK(slurp(dir.path() / "a/config.echo") == slurp(dir.path() / "b/config.echo"));
    CHECK(slurp(dir.path() / "a/manifest.json") == slurp(dir.path() / "b/manifest.json"));
    for (const auto& id : list_clips(dir.path() / "a"))
        for (const auto& e : fs::directory_iterator(dir.path() / "a" / id))
            CHECK(slurp(e.path()) == slurp(dir.path() / "b" / id / e.path().filename()));
}

TEST_CASE("invalid settings and missing inputs map to exit 1") {
    testing::TempDir dir("cli-bad");
    Outcome o = cli({"gen-data", "--clips", "1", "--set", "model.nope=1", "--out", (dir.path() / "x").string()});
    CHECK(o.code == 1);
    CHECK(o.err.find("model.nope") != std::string::npos);
    o = cli({"gen-data", "--clips", "0", "--out", (dir.path() / "y").string()});
    CHECK(o.code == 1);
    o = cli({"inspect", (dir.path() / "missing").string(), "--out", dir.path().string()});
    CHECK(o.code == 2);
}

TEST_CASE("stage II without a stage I checkpoint is a stage-order error") {
    testing::TempDir dir("cli-order");
    const std::string data = (dir.path() / "data").string();
    REQUIRE(cli(tiny({"gen-data", "--clips", "4", "--out", data})).code == 0);
    const Outcome o = cli(tiny({"train", "--stage", "II", "--data", data, "--out", (dir.path() / "run").string()}));
    CHECK(o.code == 1);
    CHECK(o.err.find("stage") != std::string::npos);
    CHECK(o.err.find("I") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path() / "run/stage-II.ckpt"));
}

TEST_CASE("train, generate, understand, edit, eval and inspect end to end") {
    testing::TempDir dir("cli-e2e");
    const fs::path data = dir.path() / "data", run = dir.path() / "run";
    REQUIRE(cli(tiny({"gen-data", "--clips", "10", "--out", data.string()})).code == 0);
    Outcome o = cli(tiny({"train", "--stage", "I", "--data", data.string(), "--out", run.string()}));
    REQUIRE(o.code == 0);
    const fs::path ckpt = run / "stage-I.ckpt";
    REQUIRE(fs::exists(ckpt));
    CHECK(fs::exists(run / "metrics.csv"));

    // Rerunning with the same config reproduces the checkpoint bytes.
    REQUIRE(cli(tiny({"train", "--stage", "I", "--data", data.string(), "--out", (dir.path() / "run2").string()}))
                .code == 0);
    CHECK(slurp(ckpt) == slurp(dir.path() / "run2/stage-I.ckpt"));

    const std::string clip = (data / "clip-0001").string();
    o = cli({"generate", "--ckpt", ckpt.string(), "--clip", clip, "--conditions", "depth,normal,segmentation",
             "--targets", "rgb,albedo", "--steps", "2", "--out", (dir.path() / "gen").string()});
    REQUIRE(o.code == 0);
    const ClipRecord gen = read_clip(dir.path() / "gen", "clip-0001");
    CHECK(gen.has(Modality::rgb));
    CHECK(gen.has(Modality::albedo));
    CHECK(gen.tensors.size() == 2);

    o = cli({"generate", "--ckpt", ckpt.string(), "--clip", clip, "--conditions", "rgb", "--targets", "rgb",
             "--out", (dir.path() / "gen-bad").string()});
    CHECK(o.code == 1);

    const fs::path req = dir.path() / "request.ini";
    std::ofstream(req) << "[request]\ntargets = depth\nsteps = 2\ncaption = 1 sphere, red\n\n[conditions]\nrgb = "
                       << clip << "\n";
    o = cli({"generate", "--ckpt", ckpt.string(), "--request", req.string(), "--out",
             (dir.path() / "gen-req").string()});
    REQUIRE(o.code == 0);
    CHECK(list_clips(dir.path() / "gen-req").size() == 1);

    const fs::path und = dir.path() / "und";
    o = cli({"understand", "--ckpt", ckpt.string(), "--data", data.string(), "--split", "test", "--steps", "2",
             "--out", und.string()});
    REQUIRE(o.code == 0);
    const auto und_ids = list_clips(und);
    CHECK(und_ids == read_manifest(data).ids(Split::test));
    REQUIRE_FALSE(und_ids.empty());
    CHECK(read_clip(und, und_ids[0]).tensors.size() == 8);

    o = cli({"edit", "--ckpt", ckpt.string(), "--clip", clip, "--kind", "material", "--mask-instance", "1",
             "--albedo", "1,0,0", "--steps", "2", "--out", (dir.path() / "edit").string()});
    REQUIRE(o.code == 0);
    CHECK(fs::exists(dir.path() / "edit/clip-0001-material/rgb.tensor"));
    o = cli({"edit", "--ckpt", ckpt.string(), "--clip", clip, "--kind", "insert", "--stamp", "4,4,2",
             "--stamp-albedo", "0,0,1", "--regen-depth", "--steps", "2", "--out", (dir.path() / "edit").string()});
    REQUIRE(o.code == 0);
    CHECK(fs::exists(dir.path() / "edit/clip-0001-insert/depth.tensor"));
    o = cli({"edit", "--ckpt", ckpt.string(), "--clip", clip, "--kind", "relight", "--out",
             (dir.path() / "edit").string()});
    CHECK(o.code == 1);
    o = cli({"edit", "--ckpt", ckpt.string(), "--clip", clip, "--kind", "insert", "--stamp", "4,4",
             "--out", (dir.path() / "edit").string()});
    CHECK(o.code == 1);

    const fs::path ev = dir.path() / "eval";
    o = cli({"eval", "--pred", und.string(), "--gt", data.string(), "--metrics", "depth,normal", "--out",
             ev.string()});
    REQUIRE(o.code == 0);
    const auto lines = list_lines(slurp(ev / "eval.csv"));
    REQUIRE(lines.size() == 1 + und_ids.size() * 7);
    CHECK(lines[0] == "clip_id,metric,value");
    std::set<std::string> metrics;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto a = lines[i].find(','), b = lines[i].rfind(',');
        metrics.insert(lines[i].substr(a + 1, b - a - 1));
    }
    CHECK(metrics == std::set<std::string>{"depth_absrel", "depth_delta1", "normal_mean_deg", "normal_median_deg",
                                           "normal_acc_11.25", "normal_acc_22.5", "normal_acc_30"});
    CHECK(o.out.find("depth_absrel") != std::string::npos);
    CHECK(cli({"eval", "--pred", und.string(), "--gt", data.string(), "--metrics", "lpips", "--out", ev.string()})
              .code == 1);
}

TEST_CASE("inspect reports every modality and marks missing ones") {
    testing::TempDir dir("cli-inspect");
    const fs::path data = dir.path() / "data";
    REQUIRE(cli({"gen-data", "--clips", "1", "--frames", "8", "--height", "16", "--width", "16", "--out",
                 data.string()})
                .code == 0);
    const fs::path clip = data / "clip-0000";
    const fs::path png = dir.path() / "grid.png";
    Outcome o = cli({"inspect", clip.string(), "--export-grid", png.string(), "--out", (dir.path() / "i").string()});
    REQUIRE(o.code == 0);
    for (Modality m : kAllModalities) CHECK(o.out.find(std::string(name_of(m))) != std::string::npos);
    CHECK(o.out.find("ABSENT") == std::string::npos);
    const Image8 img = read_png(png);
    CHECK(img.width == 8 * 16);
    CHECK(img.height == 8 * 16);
    CHECK(fs::exists(dir.path() / "i/config.echo"));

    fs::remove(clip / "roughness.tensor");
    o = cli({"inspect", clip.string(), "--out", (dir.path() / "i").string()});
    CHECK(o.code == 0);
    CHECK(o.out.find("roughness     ABSENT") != std::string::npos);
}

TEST_CASE("the installed binary reports exit codes") {
    const char* bin = std::getenv("CTRLVDIFF_BIN");
    if (!bin) return;
    testing::TempDir dir("cli-bin");
    const std::string quiet = " >/dev/null 2>&1";
    auto run = [&](const std::string& args) {
        const int st = std::system((std::string(bin) + " " + args + quiet).c_str());
        return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    };
    CHECK(run("gen-data --clips 1 --frames 2 --height 8 --width 8 --out " + (dir.path() / "d").string()) == 0);
    CHECK(run("nonsense") == 1);
    CHECK(run("inspect " + (dir.path() / "nothing").string() + " --out " + dir.path().string()) == 2);
}
