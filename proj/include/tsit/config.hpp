#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tsit/networks.hpp"

namespace tsit {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// What the perceptual loss compares against and how the streams are fed:
//   style_transfer     content in the content stream, style image in the
//                      style stream, perceptual target = content image
//   multimodal         identical wiring to style_transfer (noise gives the
//                      extra modes; kept as a separate label for manifests)
//   semantic_synthesis content (label-like) in the content stream, the real
//                      image in the style stream, perceptual target = real
enum class TaskMode { style_transfer, semantic_synthesis, multimodal };

std::string to_string(TaskMode mode);
TaskMode task_mode_from_string(const std::string& s);

struct TrainOpts {
    TaskMode mode = TaskMode::style_transfer;
    std::size_t steps = 500;
    std::size_t batch_size = 1;
    double lr_g = 1e-4;
    double lr_d = 4e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    std::size_t checkpoint_interval = 0;  // 0 = final checkpoint only
    std::size_t log_interval = 1;         // metrics lines every n steps
};

struct DataSpec {
    // synthetic: procedural pairs; paired: content/style dirs matched by
    // basename; unpaired: independently shuffled draws from the two dirs;
    // semantic: label-mask dir + real-image dir matched by basename.
    std::string source = "synthetic";
    std::size_t synthetic_count = 8;
    std::size_t height = 32;  // synthetic extent, or resize target (0 = native)
    std::size_t width = 32;
    std::string content_dir;
    std::string style_dir;
    std::string label_dir;        // semantic: single-channel integer class ids
    std::string image_dir;        // semantic: real images
    std::size_t num_classes = 0;  // semantic one-hot channels (0 = infer)
};

struct ArtifactPaths {
    std::string out_dir = "run";
};

struct RunConfig {
    NetConfig net;
    TrainOpts train;
    DataSpec data;
    double lambda_perceptual = 1.0;
    double lambda_fm = 1.0;
    bool perceptual_squared = false;
    ArtifactPaths artifacts;
};

// Strict INI parsing: sections [net], [train], [data], [loss], [artifacts];
// key=value lines; '#' and ';' start comments; unknown sections or keys are
// errors; later assignments override earlier ones.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// One key=value assignment such as "train.steps=2000", applied on top of a
// parsed config (used for command-line overrides).
void apply_override(RunConfig& cfg, const std::string& assignment);

// Canonical INI serialization; parsing it back yields the same RunConfig.
std::string serialize_run_config(const RunConfig& cfg);

// Named built-in presets ("desk-style-transfer", "desk-semantic",
// "desk-multimodal"); throws ConfigError for unknown names.
std::string preset_config(const std::string& name);

}  // namespace tsit
