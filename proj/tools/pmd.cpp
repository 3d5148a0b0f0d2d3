#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "pmd/image_io.hpp"
#include "pmd/manifest.hpp"
#include "pmd/pipeline.hpp"
#include "pmd/scene.hpp"
#include "pmd/service.hpp"

namespace {

struct CommonFlags {
    std::string manifest;
    std::string out;
    double hp_sigma = 0.0;
    double mod_threshold = 0.02;
    std::string scale = "none";
    std::uint64_t seed = 12345;
    int jobs = 0;
    bool debug_intermediates = false;
    std::string formats = "png16,pfm,preview";
};

void add_pipeline_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--manifest", f.manifest, "Bundle manifest path")->required();
    cmd->add_option("--out", f.out, "Output directory")->required();
    cmd->add_option("--hp-sigma", f.hp_sigma,
                    "High-pass sigma in pixels (0 = 1/8 of the valid-region diagonal)");
    cmd->add_option("--mod-threshold", f.mod_threshold, "Modulation validity threshold");
    cmd->add_option("--scale", f.scale, "Gradient scaling: none|geometric")
        ->check(CLI::IsMember({"none", "geometric"}));
    cmd->add_option("--seed", f.seed, "Deterministic seed");
    cmd->add_option("--jobs", f.jobs, "Worker threads (0 = all cores)");
    cmd->add_flag("--debug-intermediates", f.debug_intermediates,
                  "Also write phase/bias/modulation intermediates");
    cmd->add_option("--formats", f.formats, "Comma list of png16,pfm,preview");
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t next = s.find(',', pos);
        if (next == std::string::npos)
            next = s.size();
        if (next > pos)
            out.push_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

pmd::PipelineConfig make_config(const CLI::App* cmd, const CommonFlags& f,
                                const pmd::Manifest& manifest) {
    pmd::PipelineConfig cfg;
    cfg.hp_sigma = f.hp_sigma;
    cfg.mod_threshold = f.mod_threshold;
    cfg.scale = f.scale == "geometric" ? pmd::ScaleMode::Geometric : pmd::ScaleMode::None;
    cfg.seed = f.seed;
    cfg.ransac.seed = f.seed;
    cfg.jobs = f.jobs;
    cfg.debug_intermediates = f.debug_intermediates;
    cfg.formats = split_csv(f.formats);

    // command-line flag > manifest default > built-in default
    std::vector<std::string> explicit_flags;
    for (const char* name : {"hp-sigma", "mod-threshold", "seed"})
        if (cmd->count(std::string("--") + name) > 0)
            explicit_flags.push_back(name);
    pmd::apply_manifest_defaults(cfg, manifest, explicit_flags);
    return cfg;
}

int run_simulate(const std::string& scene_path, const std::string& out_dir, std::uint64_t seed,
                 bool seed_given, int jobs) {
    pmd::SceneConfig cfg = pmd::SceneConfig::load(scene_path);
    if (seed_given)
        cfg.seed = seed;
    const auto bundles = pmd::render_scene_bundles(cfg, jobs);
    const auto manifest = pmd::write_bundle_dir(bundles, out_dir);
    std::printf("wrote %zu view(s) to %s\n", bundles.size(), manifest.parent_path().c_str());
    return 0;
}

int run_patterns_export(int frequency, int width, int height, double gamma,
                        const std::string& out_dir) {
    pmd::ScreenGeometry screen;
    screen.width_px = width;
    screen.height_px = height;
    std::filesystem::create_directories(out_dir);
    const auto specs = pmd::build_sequence(frequency);
    char name[64];
    for (size_t i = 0; i < specs.size(); ++i) {
        pmd::ImageGrid img = pmd::gen_fringe(specs[i], screen);
        if (gamma > 0.0)
            for (double& v : img.data)
                v = std::pow(v, 1.0 / gamma);
        std::snprintf(name, sizeof(name), "pattern_%c_m%d.png",
                      specs[i].orientation == pmd::Orientation::Horizontal ? 'h' : 'v',
                      specs[i].phase_index);
        pmd::write_png_gray16(std::filesystem::path(out_dir) / name, img);
    }
    std::printf("wrote 8 patterns to %s\n", out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phase-measuring deflectometry toolkit"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Render synthetic capture bundles");
    std::string scene_path, sim_out;
    std::uint64_t sim_seed = 1;
    int sim_jobs = 0;
    sim->add_option("--scene", scene_path, "Scene description JSON")->required();
    sim->add_option("--out", sim_out, "Bundle output directory")->required();
    auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "Override the scene seed");
    sim->add_option("--jobs", sim_jobs, "Render threads (0 = all cores)");

    // patterns export
    auto* patterns = app.add_subcommand("patterns", "Fringe pattern utilities");
    auto* pat_export = patterns->add_subcommand("export", "Write the 8 display patterns as PNGs");
    int pat_freq = 1, pat_w = 512, pat_h = 320;
    double pat_gamma = 0.0;
    std::string pat_out;
    pat_export->add_option("--frequency", pat_freq, "Cycles across the screen");
    pat_export->add_option("--width", pat_w, "Screen width in pixels");
    pat_export->add_option("--height", pat_h, "Screen height in pixels");
    pat_export->add_option("--gamma", pat_gamma, "Display gamma pre-correction (0 = none)");
    pat_export->add_option("--out", pat_out, "Output directory")->required();

    // single-view / multi-view
    auto* single = app.add_subcommand("single-view", "Reconstruct one view");
    CommonFlags single_flags;
    add_pipeline_flags(single, single_flags);
    int view_index = 0;
    single->add_option("--view", view_index, "View index within the manifest (default 0)");

    auto* multi = app.add_subcommand("multi-view", "Reconstruct and stitch all views");
    CommonFlags multi_flags;
    add_pipeline_flags(multi, multi_flags);

    // serve
    auto* serve = app.add_subcommand("serve", "Run the evaluation job service");
    std::string store_dir, host = "127.0.0.1";
    int port = 8080, workers = 2;
    serve->add_option("--store", store_dir, "Job store directory")->required();
    serve->add_option("--port", port, "Listen port");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--workers", workers, "Concurrent evaluation workers");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return run_simulate(scene_path, sim_out, sim_seed, sim_seed_opt->count() > 0,
                                sim_jobs);
        if (patterns->parsed()) {
            if (!pat_export->parsed()) {
                std::fprintf(stderr, "usage: pmd patterns export --out DIR [...]\n");
                return 2;
            }
            return run_patterns_export(pat_freq, pat_w, pat_h, pat_gamma, pat_out);
        }
        if (single->parsed()) {
            const pmd::Manifest manifest = pmd::Manifest::load(single_flags.manifest);
            const auto cfg = make_config(single, single_flags, manifest);
            const auto bundles = pmd::load_bundle(single_flags.manifest);
            if (view_index < 0 || view_index >= static_cast<int>(bundles.size())) {
                std::fprintf(stderr, "view index %d out of range\n", view_index);
                return 2;
            }
            const auto result = pmd::run_single_view(bundles[view_index], cfg);
            pmd::encode_outputs(result, single_flags.out, cfg);
            std::printf("single-view: %d valid pixels, hp sigma %.2f px -> %s\n",
                        result.mask.count(), result.hp_sigma_used, single_flags.out.c_str());
            return 0;
        }
        if (multi->parsed()) {
            const pmd::Manifest manifest = pmd::Manifest::load(multi_flags.manifest);
            const auto cfg = make_config(multi, multi_flags, manifest);
            const auto bundles = pmd::load_bundle(multi_flags.manifest);
            const auto result = pmd::run_multi_view(bundles, cfg);
            pmd::encode_outputs(result, multi_flags.out, cfg);
            std::printf("multi-view: %zu views, coverage %ld px, overlap disagreement %.3f deg -> %s\n",
                        result.views.size(), result.stitch.coverage_pixels,
                        result.stitch.overlap_disagreement_deg, multi_flags.out.c_str());
            return 0;
        }
        if (serve->parsed()) {
            pmd::ServiceConfig cfg;
            cfg.store_dir = store_dir;
            cfg.host = host;
            cfg.port = port;
            cfg.workers = workers;
            pmd::JobService service(cfg);
            const int bound = service.start();
            std::printf("serving on %s:%d (store %s)\n", host.c_str(), bound, store_dir.c_str());
            for (;;)
                std::this_thread::sleep_for(std::chrono::seconds(3600));
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
