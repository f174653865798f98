#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsit/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"tsit: two-stream image-to-image translation"};
    app.require_subcommand(1);

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a model and write run artifacts");
    std::string config_path, preset_name, out_dir, resume_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
    train->add_option("--config", config_path, "run configuration file (INI)");
    train->add_option("--preset", preset_name,
                      "built-in configuration: desk-style-transfer, desk-semantic, "
                      "desk-multimodal");
    train->add_option("--set", overrides, "override, e.g. --set train.steps=2000")
        ->take_all();
    train->add_option("--seed", seed, "shorthand for --set train.seed=N")
        ->each([&](const std::string&) { seed_given = true; });
    train->add_option("--out", out_dir, "artifact directory (default from config)");
    train->add_option("--resume", resume_path, "continue training from a checkpoint");

    // ---- infer ----
    auto* infer = app.add_subcommand("infer", "translate one image with a trained checkpoint");
    std::string ckpt, content_path, style_path, infer_out;
    std::uint64_t noise_seed = 0;
    infer->add_option("--checkpoint", ckpt, "trained checkpoint file")->required();
    infer->add_option("--content", content_path, "content image (png/ppm)")->required();
    infer->add_option("--style", style_path, "style exemplar image")->required();
    infer->add_option("--out", infer_out, "output image path")->required();
    infer->add_option("--noise-seed", noise_seed, "seed for the latent noise (default 0)");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "compare generated images against a reference set");
    std::string generated_dir, reference_dir;
    std::uint64_t extractor_seed = 52;
    eval->add_option("--generated", generated_dir, "directory of generated images")->required();
    eval->add_option("--reference", reference_dir, "directory of reference images")->required();
    eval->add_option("--extractor-seed", extractor_seed,
                     "seed of the random-conv feature extractor (default 52)");

    // ---- selftest ----
    app.add_subcommand("selftest", "run the gradient, oracle, and invariant suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            if (config_path.empty() == preset_name.empty()) {
                std::cerr << "config error: pass exactly one of --config or --preset\n";
                return tsit::kExitConfig;
            }
            tsit::RunConfig cfg;
            try {
                cfg = config_path.empty() ? tsit::parse_run_config(tsit::preset_config(preset_name))
                                          : tsit::load_run_config(config_path);
                for (const auto& assignment : overrides) tsit::apply_override(cfg, assignment);
                if (seed_given) tsit::apply_override(cfg, "train.seed=" + std::to_string(seed));
                if (!out_dir.empty()) tsit::apply_override(cfg, "artifacts.out_dir=" + out_dir);
            } catch (const tsit::ConfigError& e) {
                std::cerr << "config error: " << e.what() << "\n";
                return tsit::kExitConfig;
            }
            return tsit::run_train(cfg, std::cout, resume_path);
        }
        if (infer->parsed())
            return tsit::run_infer(ckpt, content_path, style_path, infer_out, noise_seed,
                                   std::cout);
        if (eval->parsed())
            return tsit::run_eval(generated_dir, reference_dir, extractor_seed, std::cout);
        return tsit::run_selftest(std::cout);
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
