#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "t2v/commands.hpp"
#include "test_shapes.hpp"

using namespace t2v;
namespace fs = std::filesystem;

namespace {

struct Workspace {
    fs::path dir;
    Workspace() {
        static int counter = 0;
        dir = fs::temp_directory_path() /
              ("t2v_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
};

// procedural icon corpus: enough shape variety for a tiny training run
void write_corpus(const fs::path& dir, int files) {
    fs::create_directories(dir);
    Rng rng(99);
    for (int i = 0; i < files; ++i) {
        svg::SvgDocument doc;
        doc.width = doc.height = 100;
        int shapes = 1 + static_cast<int>(rng.uniform_index(3));
        for (int s = 0; s < shapes; ++s) {
            svg::SvgEntry e;
            geom::BezierPath p;
            switch ((i + s) % 3) {
                case 0: p = test_shapes::circle_path({0.3 + 0.4 * rng.uniform(), 0.3 + 0.4 * rng.uniform()},
                                                     0.1 + 0.15 * rng.uniform()); break;
                case 1: {
                    double x = 0.1 + 0.3 * rng.uniform(), y = 0.1 + 0.3 * rng.uniform();
                    p = test_shapes::square_path({x, y}, {x + 0.2 + 0.3 * rng.uniform(),
                                                          y + 0.2 + 0.3 * rng.uniform()});
                    break;
                }
                default: p = test_shapes::blob_path(3 + rng.uniform_index(8), 1000 + i * 10 + s);
            }
            for (auto& q : p.points) q = q * 100.0;
            e.path = std::move(p);
            e.rgba = {0, 0, 0, 1};
            doc.entries.push_back(std::move(e));
        }
        write_text_file(dir / ("icon_" + std::to_string(i) + ".svg"), svg::serialize_svg(doc));
    }
}

cfg::Config fast_config(const fs::path& checkpoint) {
    cfg::Config c;
    c.set("seed", "7");
    c.set("canvas", "64");
    c.set("vae_checkpoint", checkpoint.string());
    c.set("backend", "toy");
    c.set("stage1.iters", "16");
    c.set("stage1.paths", "4");
    c.set("stage1.snapshot_every", "8");
    c.set("stage2.iters", "8");
    c.set("stage2.accounting_canvas", "128");
    c.set("vae.depth", "2");
    c.set("vae.epochs", "2");
    c.set("vae.batch_size", "8");
    return c;
}

const fs::path& shared_checkpoint() {
    static Workspace ws;
    static fs::path ckpt = [&] {
        write_corpus(ws.dir / "corpus", 12);
        cmd::prepare_data(ws.dir / "corpus", ws.dir / "paths.t2vd", 3);
        cfg::Config c = fast_config("");
        cmd::train_vae(ws.dir / "paths.t2vd", c, ws.dir / "vae.t2vc");
        return ws.dir / "vae.t2vc";
    }();
    return ckpt;
}

}  // namespace

TEST_CASE("config: unknown keys are hard errors, values typed") {
    cfg::Config c;
    CHECK_THROWS_AS(c.set("stage1.itres", "100"), ConfigError);  // typo must not pass silently
    CHECK_THROWS_AS(c.set("stage1.iters", "ten"), ConfigError);
    CHECK_THROWS_AS(c.set("stage1.append_suffix", "maybe"), ConfigError);
    c.set("stage1.iters", "250");
    CHECK(c.get_int("stage1.iters") == 250);
    CHECK(c.get_double("stage1.guidance_scale") == 10.0);
    CHECK(c.get("stage1.suffix") == "minimal flat 2d vector");
    CHECK_THROWS_AS(cfg::Config::from_text("config_version = 99\n"), ConfigError);
    cfg::Config parsed = cfg::Config::from_text("config_version = 1\nseed = 5 # comment\n");
    CHECK(parsed.get_int("seed") == 5);
    CHECK(parsed.resolved().at("backend") == "toy");
}

TEST_CASE("prepare-data writes the container and manifest") {
    Workspace ws;
    write_corpus(ws.dir / "corpus", 6);
    nlohmann::json manifest = cmd::prepare_data(ws.dir / "corpus", ws.dir / "out.t2vd", 1);
    CHECK(fs::exists(ws.dir / "out.t2vd"));
    CHECK(fs::exists(ws.dir / "out.manifest.json"));
    CHECK(manifest["records"].get<int>() > 0);
    data::PathDataset ds = data::load_dataset(ws.dir / "out.t2vd");
    CHECK(ds.records.size() == manifest["records"].get<size_t>());
}

TEST_CASE("train-vae emits a checkpoint and a JSONL training log") {
    const fs::path& ckpt = shared_checkpoint();
    REQUIRE(fs::exists(ckpt));
    auto [model, meta] = vae::load_checkpoint(ckpt);
    CHECK(meta.epoch == 2);
    std::string log = read_text_file(ckpt.parent_path() / "training-log.jsonl");
    int lines = 0;
    for (char ch : log) lines += (ch == '\n') ? 1 : 0;
    CHECK(lines == 2);
    nlohmann::json first = nlohmann::json::parse(log.substr(0, log.find('\n')));
    CHECK(first.contains("L_cfr"));
    CHECK(first.contains("L_img"));
    CHECK(first.contains("L_kl"));
}

TEST_CASE("sample-paths produces a valid grid of decoded samples") {
    Workspace ws;
    cmd::sample_paths(shared_checkpoint(), 16, 3, ws.dir / "grid.svg");
    svg::SvgDocument doc = svg::parse_svg(read_text_file(ws.dir / "grid.svg"));
    REQUIRE(doc.entries.size() == 16);
    for (const auto& e : doc.entries) {
        CHECK(e.path.closed);
        CHECK(e.path.length() == 48);
    }
}

TEST_CASE("interpolate renders a strip of valid paths") {
    Workspace ws;
    svg::SvgDocument a, b;
    a.width = a.height = b.width = b.height = 100;
    svg::SvgEntry ea, eb;
    ea.path = test_shapes::circle_path({0.5, 0.5}, 0.3);
    eb.path = test_shapes::square_path({0.2, 0.2}, {0.8, 0.8});
    for (auto& p : ea.path.points) p = p * 100.0;
    for (auto& p : eb.path.points) p = p * 100.0;
    a.entries.push_back(ea);
    b.entries.push_back(eb);
    write_text_file(ws.dir / "a.svg", svg::serialize_svg(a));
    write_text_file(ws.dir / "b.svg", svg::serialize_svg(b));
    cmd::interpolate_cmd(shared_checkpoint(), ws.dir / "a.svg", ws.dir / "b.svg", 6, ws.dir / "walk.svg");
    svg::SvgDocument strip = svg::parse_svg(read_text_file(ws.dir / "walk.svg"));
    CHECK(strip.entries.size() == 6);
}

TEST_CASE("generate: deterministic final.svg, sensible path counts, full run dir") {
    Workspace ws;
    cfg::Config config = fast_config(shared_checkpoint());
    nlohmann::json m1 = cmd::generate("a toy prompt", config, ws.dir / "run1");
    nlohmann::json m2 = cmd::generate("a toy prompt", config, ws.dir / "run2");

    std::string final1 = read_text_file(ws.dir / "run1/final.svg");
    std::string final2 = read_text_file(ws.dir / "run2/final.svg");
    CHECK(final1 == final2);

    int final_paths = m1["final_paths"].get<int>();
    CHECK(final_paths >= 1);
    CHECK(final_paths <= 4);
    CHECK(fs::exists(ws.dir / "run1/run-manifest.json"));
    CHECK(fs::exists(ws.dir / "run1/stage1.svg"));
    CHECK(fs::exists(ws.dir / "run1/guidance.ppm"));
    CHECK(fs::exists(ws.dir / "run1/snapshots"));
    CHECK(m1["stage1"]["full_prompt"] == "a toy prompt, minimal flat 2d vector");
    CHECK(m1["config"]["stage1.iters"] == "16");

    svg::SvgDocument final_doc = svg::parse_svg(final1);
    CHECK(final_doc.entries.size() == static_cast<size_t>(final_paths));
}

TEST_CASE("run manifest replays the run bit-identically") {
    Workspace ws;
    cfg::Config config = fast_config(shared_checkpoint());
    cmd::generate("replay prompt", config, ws.dir / "orig");
    nlohmann::json manifest = nlohmann::json::parse(read_text_file(ws.dir / "orig/run-manifest.json"));

    // rebuild the configuration purely from the manifest
    cfg::Config replay;
    for (auto& [key, value] : manifest["config"].items())
        replay.set(key, value.get<std::string>());
    cmd::generate(manifest["prompt"].get<std::string>(), replay, ws.dir / "replayed");
    CHECK(read_text_file(ws.dir / "orig/final.svg") == read_text_file(ws.dir / "replayed/final.svg"));
}

TEST_CASE("eval: one entry per file plus an aggregate") {
    Workspace ws;
    fs::create_directories(ws.dir / "svgs");
    Rng rng(1);
    for (int i = 0; i < 5; ++i) {
        svg::SvgDocument doc;
        doc.width = doc.height = 1;
        for (int s = 0; s < 2 + i % 2; ++s) {
            svg::SvgEntry e;
            e.path = test_shapes::blob_path(3 + (i + s) % 5, 50 + i * 10 + s);
            e.rgba = {rng.uniform(), rng.uniform(), rng.uniform(), 1.0f};
            doc.entries.push_back(e);
        }
        write_text_file(ws.dir / "svgs" / ("g" + std::to_string(i) + ".svg"), svg::serialize_svg(doc));
    }
    write_text_file(ws.dir / "prompts.json", R"({"default": "a shape"})");

    cfg::Config config;
    config.set("eval.trials", "3");
    nlohmann::json report = cmd::eval(ws.dir / "svgs", ws.dir / "prompts.json",
                                      ws.dir / "report.json", config);
    CHECK(report["items"].size() == 5);
    CHECK(report["aggregate"]["count"] == 5);
    CHECK(report["aggregate"]["smoothness"].get<double>() > 0.0);
    CHECK(fs::exists(ws.dir / "report.json"));
}

TEST_CASE("CLI process: exit codes for config and backend failures") {
    Workspace ws;
    std::string cli = T2V_CLI_PATH;
    auto run = [&](const std::string& args) {
        std::string cmdline = cli + " " + args + " > /dev/null 2> " + (ws.dir / "err.json").string();
        int status = std::system(cmdline.c_str());
        return WEXITSTATUS(status);
    };
    // unknown config key -> 2
    CHECK(run("generate --prompt x --out-dir " + (ws.dir / "o1").string() + " --set no.such.key=1") == 2);
    // missing checkpoint -> 2
    CHECK(run("generate --prompt x --out-dir " + (ws.dir / "o2").string() +
              " --set vae_checkpoint=/nonexistent.t2vc") == 2);
    nlohmann::json err = nlohmann::json::parse(read_text_file(ws.dir / "err.json"));
    CHECK(err["error"]["type"] == "config");
    // latent-diffusion without an endpoint -> 3
    CHECK(run("generate --prompt x --out-dir " + (ws.dir / "o3").string() +
              " --set backend=latent-diffusion --set vae_checkpoint=" + shared_checkpoint().string()) == 3);
    // happy path -> 0
    Workspace ws2;
    cfg::Config config = fast_config(shared_checkpoint());
    std::string conf_text = "config_version = 1\n";
    for (auto& [k, v] : config.resolved())
        if (!v.empty()) conf_text += k + " = " + v + "\n";
    write_text_file(ws2.dir / "run.conf", conf_text);
    CHECK(run("generate --prompt hello --config " + (ws2.dir / "run.conf").string() + " --out-dir " +
              (ws2.dir / "o4").string()) == 0);
}
