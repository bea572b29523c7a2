#pragma once

// Pipeline commands shared by the CLI and the test suites.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "t2v/config.hpp"
#include "t2v/dataset.hpp"
#include "t2v/metrics.hpp"
#include "t2v/stage1.hpp"
#include "t2v/stage2.hpp"
#include "t2v/svg_io.hpp"
#include "t2v/vae.hpp"

namespace t2v::cmd {

namespace fs = std::filesystem;

inline void write_json(const fs::path& p, const nlohmann::json& j) {
    write_text_file(p, j.dump(2) + "\n");
}

// binary PPM, used for guidance-image artifacts
inline void write_ppm(const fs::path& p, const raster::RasterImage& img) {
    std::string s = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    s.reserve(s.size() + img.rgb.size());
    for (float v : img.rgb)
        s.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    write_text_file(p, s);
}

// ---------------------------------------------------------------------------
// prepare-data
// ---------------------------------------------------------------------------
inline nlohmann::json prepare_data(const fs::path& corpus_dir, const fs::path& out_file,
                                   uint64_t seed = 0) {
    data::BuildOptions opt;
    opt.seed = seed;
    data::PathDataset ds = data::build_dataset(corpus_dir, opt);
    data::save_dataset(ds, out_file);
    nlohmann::json manifest = data::dataset_manifest(ds);
    write_json(fs::path(out_file).replace_extension(".manifest.json"), manifest);
    return manifest;
}

// ---------------------------------------------------------------------------
// train-vae
// ---------------------------------------------------------------------------
inline vae::VaeConfig vae_config_from(const cfg::Config& config) {
    vae::VaeConfig vc;
    vc.epochs = static_cast<int>(config.get_int("vae.epochs"));
    vc.batch_size = static_cast<int>(config.get_int("vae.batch_size"));
    vc.lr = static_cast<float>(config.get_double("vae.lr"));
    vc.dropout = static_cast<float>(config.get_double("vae.dropout"));
    vc.depth = static_cast<int>(config.get_int("vae.depth"));
    vc.init_seed = static_cast<uint64_t>(config.get_int("vae.init_seed"));
    vc.check();
    return vc;
}

inline nlohmann::json train_vae(const fs::path& dataset_file, const cfg::Config& config,
                                const fs::path& out_checkpoint) {
    data::PathDataset ds = data::load_dataset(dataset_file);
    vae::VaeConfig vc = vae_config_from(config);
    vae::PathVae model(vc);
    features::BlurPyramidPerceptual perceptual;

    fs::path log_path = out_checkpoint.parent_path() / "training-log.jsonl";
    if (out_checkpoint.has_parent_path()) fs::create_directories(out_checkpoint.parent_path());
    std::ofstream log(log_path);
    vae::TrainResult result =
        vae::train(model, ds, perceptual, static_cast<uint64_t>(config.get_int("seed")),
                   [&](const std::string& line) { log << line << "\n" << std::flush; });

    uint64_t ds_hash = data::dataset_content_hash(ds);
    vae::save_checkpoint(model, out_checkpoint, ds_hash, result.epochs_run);
    return nlohmann::json{{"epochs", result.epochs_run},
                          {"val_chamfer_first", result.val_chamfer.empty() ? 0.0 : result.val_chamfer.front()},
                          {"val_chamfer_last", result.val_chamfer.empty() ? 0.0 : result.val_chamfer.back()},
                          {"warnings", result.warnings},
                          {"dataset_hash", hex64(ds_hash)},
                          {"training_log", log_path.string()}};
}

// ---------------------------------------------------------------------------
// sample-paths: a grid of decoded prior samples
// ---------------------------------------------------------------------------
inline svg::SvgDocument sample_paths_document(const vae::PathVae& model, int count, uint64_t seed,
                                              double size = 512.0) {
    if (count < 1) throw ArgumentError("sample count must be >= 1");
    int grid = 1;
    while (grid * grid < count) ++grid;
    svg::SvgDocument doc;
    doc.width = doc.height = size;
    for (int i = 0; i < count; ++i) {
        std::vector<float> z = vae::sample_prior(model.cfg.d_latent, seed + i);
        geom::BezierPath path = model.decode_sequence(z);
        path.validate(true);
        int gx = i % grid, gy = i / grid;
        double cell = size / grid;
        svg::SvgEntry e;
        e.path = path;
        for (auto& p : e.path.points)
            p = {(gx + 0.1 + p.x * 0.8) * cell, (gy + 0.1 + p.y * 0.8) * cell};
        e.rgba = {0.1f, 0.1f, 0.1f, 1.0f};
        doc.entries.push_back(std::move(e));
    }
    return doc;
}

inline void sample_paths(const fs::path& checkpoint, int count, uint64_t seed, const fs::path& out_svg) {
    auto [model, meta] = vae::load_checkpoint(checkpoint);
    write_text_file(out_svg, svg::serialize_svg(sample_paths_document(model, count, seed)));
}

// ---------------------------------------------------------------------------
// interpolate: latent walk between the first paths of two documents
// ---------------------------------------------------------------------------
inline std::vector<float> encode_first_path(const vae::PathVae& model, const fs::path& svg_file) {
    svg::SvgDocument doc = svg::parse_svg(read_text_file(svg_file));
    if (doc.entries.empty()) throw ArgumentError("no paths in " + svg_file.string());
    geom::BezierPath path = svg::to_unit_canvas(doc.entries[0].path, doc.width, doc.height);
    if (path.length() > model.cfg.k_max)
        throw ArgumentError("first path of " + svg_file.string() + " exceeds the encoder capacity");
    data::normalize_path(path);
    std::vector<float> img = raster::rasterize_shape_gray(path, model.cfg.image_size);
    ad::NoGradGuard ng;
    std::vector<int> lengths;
    ad::Tensor padded = model.pad_paths({path}, lengths);
    ad::Tensor z_seq = model.encode_sequence_padded(padded, lengths);
    ad::Tensor z_img = model.encode_image_batch(model.image_tensor({&img}));
    auto [mu, logvar] = model.fuse(z_seq, z_img);
    return mu.data();
}

inline void interpolate_cmd(const fs::path& checkpoint, const fs::path& svg_a, const fs::path& svg_b,
                            int steps, const fs::path& out_svg) {
    if (steps < 2) throw ArgumentError("interpolation needs at least 2 steps");
    auto [model, meta] = vae::load_checkpoint(checkpoint);
    std::vector<float> z1 = encode_first_path(model, svg_a);
    std::vector<float> z2 = encode_first_path(model, svg_b);
    double size = 512.0;
    svg::SvgDocument doc;
    doc.width = size * steps;
    doc.height = size;
    for (int i = 0; i < steps; ++i) {
        float t = static_cast<float>(i) / static_cast<float>(steps - 1);
        geom::BezierPath path = model.decode_sequence(vae::interpolate(z1, z2, t));
        path.validate(true);
        svg::SvgEntry e;
        e.path = path;
        for (auto& p : e.path.points) p = {(i + 0.1 + p.x * 0.8) * size, (0.1 + p.y * 0.8) * size};
        e.rgba = {0.1f, 0.1f, 0.1f, 1.0f};
        doc.entries.push_back(std::move(e));
    }
    write_text_file(out_svg, svg::serialize_svg(doc));
}

// ---------------------------------------------------------------------------
// generate: the full two-stage pipeline
// ---------------------------------------------------------------------------
inline stage1::Stage1Config stage1_config_from(const cfg::Config& config) {
    stage1::Stage1Config s1;
    s1.path_count = static_cast<int>(config.get_int("stage1.paths"));
    s1.iters = static_cast<int>(config.get_int("stage1.iters"));
    s1.mode = config.get("stage1.mode");
    s1.canvas = static_cast<int>(config.get_int("canvas"));
    s1.sharpness = static_cast<float>(config.get_double("stage1.sharpness"));
    s1.samples_per_segment = static_cast<int>(config.get_int("stage1.samples_per_segment"));
    s1.lr_z = static_cast<float>(config.get_double("stage1.lr_z"));
    s1.lr_color = static_cast<float>(config.get_double("stage1.lr_color"));
    s1.lr_transform = static_cast<float>(config.get_double("stage1.lr_transform"));
    s1.snapshot_every = static_cast<int>(config.get_int("stage1.snapshot_every"));
    s1.prompt_suffix = config.get("stage1.suffix");
    s1.append_suffix = config.get_bool("stage1.append_suffix");
    s1.guidance_scale = static_cast<float>(config.get_double("stage1.guidance_scale"));
    s1.check();
    return s1;
}

inline stage2::Stage2Config stage2_config_from(const cfg::Config& config) {
    stage2::Stage2Config s2;
    s2.total_iters = static_cast<int>(config.get_int("stage2.iters"));
    s2.guidance_strength = static_cast<float>(config.get_double("stage2.strength"));
    s2.guidance_steps = static_cast<int>(config.get_int("stage2.steps"));
    s2.feature_backend = config.get("stage2.features");
    s2.lambda_iou = static_cast<float>(config.get_double("stage2.lambda_iou"));
    s2.alpha_threshold = static_cast<float>(config.get_double("stage2.alpha_threshold"));
    s2.min_visible_px = static_cast<float>(config.get_double("stage2.min_visible_px"));
    s2.overlap_threshold_px = static_cast<int>(config.get_int("stage2.overlap_px"));
    s2.reencode_eps = static_cast<float>(config.get_double("stage2.reencode_eps"));
    s2.canvas = static_cast<int>(config.get_int("canvas"));
    s2.accounting_canvas = static_cast<int>(config.get_int("stage2.accounting_canvas"));
    s2.sharpness = static_cast<float>(config.get_double("stage2.sharpness"));
    s2.samples_per_segment = static_cast<int>(config.get_int("stage2.samples_per_segment"));
    s2.lr_z = static_cast<float>(config.get_double("stage2.lr_z"));
    s2.lr_color = static_cast<float>(config.get_double("stage2.lr_color"));
    s2.lr_transform = static_cast<float>(config.get_double("stage2.lr_transform"));
    return s2;
}

inline std::unique_ptr<guide::DiffusionBackend> backend_from(const cfg::Config& config,
                                                             const std::string& prompt) {
    guide::RemoteBackendConfig remote;
    remote.endpoint = config.get("backend.endpoint");
    remote.model_cache = config.get("backend.model_cache");
    return guide::make_backend(config.get("backend"), prompt,
                               static_cast<int>(config.get_int("backend.toy_side")), remote);
}

inline nlohmann::json generate(const std::string& prompt, const cfg::Config& config,
                               const fs::path& out_dir) {
    if (prompt.empty()) throw ConfigError("generate needs a non-empty prompt");
    fs::path checkpoint = config.get("vae_checkpoint");
    if (checkpoint.empty() || !fs::exists(checkpoint))
        throw ConfigError("vae_checkpoint not found: " + checkpoint.string());
    fs::create_directories(out_dir / "snapshots");

    auto [model, meta] = vae::load_checkpoint(checkpoint);
    auto seed = static_cast<uint64_t>(config.get_int("seed"));
    stage1::Stage1Config s1 = stage1_config_from(config);
    stage2::Stage2Config s2 = stage2_config_from(config);
    std::string full = stage1::full_prompt(prompt, s1);
    std::unique_ptr<guide::DiffusionBackend> backend = backend_from(config, full);

    double doc_size = static_cast<double>(s1.canvas);
    auto snapshot_writer = [&](const std::string& stage) {
        return [&, stage](int marker, const render::NeuralSvg& svg) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04d.svg", stage.c_str(), marker);
            write_text_file(out_dir / "snapshots" / name,
                            svg::serialize_svg(stage2::to_document(model, svg, doc_size)));
        };
    };

    stage1::Stage1Result first = stage1::optimize_stage1(model, *backend, prompt, s1, seed,
                                                         snapshot_writer("stage1"));
    write_text_file(out_dir / "stage1.svg",
                    svg::serialize_svg(stage2::to_document(model, first.svg, doc_size)));

    stage2::SimplifyLog slog;
    render::NeuralSvg simplified = stage2::simplify(model, first.svg, s2, &slog);
    stage2::GuidanceBundle bundle = stage2::make_guidance(model, simplified, full,
                                                          s2.guidance_strength, *backend, seed, s2);
    write_ppm(out_dir / "guidance.ppm", bundle.image);

    std::vector<int> schedule = stage2::layer_schedule(static_cast<int>(simplified.paths.size()));
    stage2::Stage2Result second = stage2::optimize_stage2(model, simplified, bundle, schedule, s2,
                                                          seed, slog.frozen, snapshot_writer("stage2"));

    svg::SvgDocument final_doc = stage2::to_document(model, second.svg, doc_size);
    write_text_file(out_dir / "final.svg", svg::serialize_svg(final_doc));

    nlohmann::json manifest = {
        {"prompt", prompt},
        {"config", config.resolved()},
        {"stage1", first.manifest},
        {"simplify",
         {{"input_paths", slog.input_paths},
          {"output_paths", slog.output_paths},
          {"removed_alpha", slog.removed_alpha},
          {"removed_area", slog.removed_area},
          {"merged_groups", slog.merged_groups},
          {"merge_failures", slog.merge_failures}}},
        {"guidance", bundle.provenance},
        {"stage2", second.manifest},
        {"final_paths", final_doc.entries.size()},
        {"checkpoint_epoch", meta.epoch},
        {"dataset_hash", hex64(meta.dataset_hash)},
    };
    write_json(out_dir / "run-manifest.json", manifest);
    return manifest;
}

// ---------------------------------------------------------------------------
// eval: per-item and aggregate metrics over a directory of SVGs
// ---------------------------------------------------------------------------
inline nlohmann::json eval(const fs::path& svg_dir, const fs::path& prompts_file,
                           const fs::path& out_report, const cfg::Config& config) {
    if (!fs::is_directory(svg_dir)) throw ArgumentError("svg directory not found: " + svg_dir.string());
    nlohmann::json prompts = nlohmann::json::object();
    if (!prompts_file.empty()) prompts = nlohmann::json::parse(read_text_file(prompts_file));

    metrics::EvalOptions opt;
    opt.backend_id = config.get("eval.backend");
    opt.trials = static_cast<int>(config.get_int("eval.trials"));
    opt.drop = config.get_double("eval.drop");
    opt.seed = static_cast<uint64_t>(config.get_int("seed"));

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(svg_dir))
        if (e.is_regular_file() && e.path().extension() == ".svg") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ArgumentError("no .svg files in " + svg_dir.string());

    nlohmann::json items = nlohmann::json::array();
    double sum_smooth = 0, sum_simp = 0, sum_sem = 0;
    int sem_count = 0;
    for (const fs::path& f : files) {
        svg::SvgDocument doc = svg::parse_svg(read_text_file(f));
        std::string prompt = prompts.value("default", "");
        if (prompts.contains(f.filename().string()))
            prompt = prompts[f.filename().string()].get<std::string>();
        nlohmann::json item = metrics::evaluate_document(doc, prompt, opt);
        item["file"] = f.filename().string();
        item["prompt"] = prompt;
        sum_smooth += item["smoothness"].get<double>();
        sum_simp += static_cast<double>(item["simplicity"].get<int64_t>());
        if (!item.value("layer_semantics_skipped", false)) {
            sum_sem += item["layer_semantics"].get<double>();
            ++sem_count;
        }
        items.push_back(std::move(item));
    }
    auto n = static_cast<double>(files.size());
    nlohmann::json report = {
        {"items", items},
        {"aggregate",
         {{"count", files.size()},
          {"smoothness", sum_smooth / n},
          {"simplicity", sum_simp / n},
          {"layer_semantics", sem_count ? nlohmann::json(sum_sem / sem_count) : nlohmann::json()}}},
        {"backend", opt.backend_id},
        {"seed", opt.seed},
    };
    if (!out_report.empty()) write_json(out_report, report);
    return report;
}

}  // namespace t2v::cmd
