// t2v: text-to-vector generation toolkit.
//
//   t2v prepare-data --corpus icons/ --out data/paths.t2vd
//   t2v train-vae    --dataset data/paths.t2vd --out runs/vae.t2vc
//   t2v sample-paths --checkpoint runs/vae.t2vc --count 16 --out samples.svg
//   t2v generate     --prompt "a sailboat at sunset" --out-dir runs/sailboat
//   t2v eval         --svg-dir runs/ --prompts prompts.json --out report.json
//   t2v interpolate  --checkpoint runs/vae.t2vc --a a.svg --b b.svg --steps 8 --out walk.svg

#include <CLI11.hpp>
#include <iostream>

#include "t2v/commands.hpp"

using namespace t2v;

namespace {

cfg::Config load_config(const std::string& config_file, const std::vector<std::string>& sets) {
    cfg::Config config = config_file.empty() ? cfg::Config() : cfg::Config::from_file(config_file);
    for (const std::string& kv : sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return config;
}

int error_exit(const char* type, const std::string& message, int code) {
    nlohmann::json err = {{"error", {{"type", type}, {"message", message}}}};
    std::cerr << err.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"text-to-vector generation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    std::vector<std::string> sets;
    app.add_option("--config", config_file, "run configuration file")->capture_default_str();
    app.add_option("--set", sets, "override a config key (key=value), repeatable");

    // prepare-data
    auto* prep = app.add_subcommand("prepare-data", "build the path dataset from an SVG corpus");
    std::string corpus, dataset_out;
    uint64_t prep_seed = 0;
    prep->add_option("--corpus", corpus, "directory of .svg icons")->required();
    prep->add_option("--out", dataset_out, "output dataset container")->required();
    prep->add_option("--seed", prep_seed, "shuffle seed");

    // train-vae
    auto* train = app.add_subcommand("train-vae", "train the dual-branch path VAE");
    std::string train_dataset, checkpoint_out;
    train->add_option("--dataset", train_dataset, "dataset container")->required();
    train->add_option("--out", checkpoint_out, "output checkpoint")->required();

    // sample-paths
    auto* sample = app.add_subcommand("sample-paths", "decode prior samples into an SVG grid");
    std::string sample_ckpt, sample_out;
    int sample_count = 16;
    uint64_t sample_seed = 0;
    sample->add_option("--checkpoint", sample_ckpt, "VAE checkpoint")->required();
    sample->add_option("--count", sample_count, "number of samples");
    sample->add_option("--seed", sample_seed, "sampling seed");
    sample->add_option("--out", sample_out, "output .svg")->required();

    // generate
    auto* gen = app.add_subcommand("generate", "run the two-stage text-to-vector pipeline");
    std::string prompt, out_dir;
    gen->add_option("--prompt", prompt, "text prompt")->required();
    gen->add_option("--out-dir", out_dir, "run output directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "compute metrics over a directory of SVGs");
    std::string svg_dir, prompts_file, report_out;
    ev->add_option("--svg-dir", svg_dir, "directory of .svg files")->required();
    ev->add_option("--prompts", prompts_file, "JSON map file -> prompt (key 'default' applies to all)");
    ev->add_option("--out", report_out, "output report JSON")->required();

    // interpolate
    auto* interp = app.add_subcommand("interpolate", "latent interpolation between two SVG paths");
    std::string interp_ckpt, svg_a, svg_b, interp_out;
    int steps = 8;
    interp->add_option("--checkpoint", interp_ckpt, "VAE checkpoint")->required();
    interp->add_option("--a", svg_a, "first SVG")->required();
    interp->add_option("--b", svg_b, "second SVG")->required();
    interp->add_option("--steps", steps, "interpolation steps");
    interp->add_option("--out", interp_out, "output .svg")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        cfg::Config config = load_config(config_file, sets);
        if (prep->parsed()) {
            nlohmann::json manifest = cmd::prepare_data(corpus, dataset_out, prep_seed);
            std::cout << manifest.dump(2) << "\n";
        } else if (train->parsed()) {
            nlohmann::json summary = cmd::train_vae(train_dataset, config, checkpoint_out);
            std::cout << summary.dump(2) << "\n";
        } else if (sample->parsed()) {
            cmd::sample_paths(sample_ckpt, sample_count, sample_seed, sample_out);
            std::cout << "wrote " << sample_out << "\n";
        } else if (gen->parsed()) {
            nlohmann::json manifest = cmd::generate(prompt, config, out_dir);
            std::cout << "final paths: " << manifest["final_paths"] << "\nrun dir: " << out_dir << "\n";
        } else if (ev->parsed()) {
            nlohmann::json report = cmd::eval(svg_dir, prompts_file, report_out, config);
            std::cout << report["aggregate"].dump(2) << "\n";
        } else if (interp->parsed()) {
            cmd::interpolate_cmd(interp_ckpt, svg_a, svg_b, steps, interp_out);
            std::cout << "wrote " << interp_out << "\n";
        }
        return 0;
    } catch (const ConfigError& e) {
        return error_exit("config", e.what(), 2);
    } catch (const BackendError& e) {
        return error_exit("backend", e.what(), 3);
    } catch (const NumericError& e) {
        return error_exit("numeric", e.what(), 4);
    } catch (const std::exception& e) {
        return error_exit("runtime", e.what(), 1);
    }
}
