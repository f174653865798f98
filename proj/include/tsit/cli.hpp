#pragma once

// Command implementations behind the `tsit` executable. Each returns a
// process exit code instead of throwing, so the binary's error contract is
// testable without spawning processes.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "tsit/config.hpp"

namespace tsit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSelftestFail = 1;
inline constexpr int kExitConfig = 2;  // config/shape incompatibilities
inline constexpr int kExitData = 3;    // missing or malformed files
inline constexpr int kExitNumeric = 4; // non-finite loss or activation

// Trains per `cfg`, writing manifest.ini, metrics.txt (one line per step),
// interval checkpoints, and a final checkpoint.tsit into cfg.artifacts.out_dir.
// A non-empty `resume` restores full training state from that checkpoint and
// continues to cfg.train.steps.
int run_train(const RunConfig& cfg, std::ostream& log, const std::string& resume = "");

// Translates one content image into the style of one exemplar using a trained
// checkpoint; deterministic given (checkpoint, inputs, noise_seed).
int run_infer(const std::string& checkpoint_path, const std::string& content_path,
              const std::string& style_path, const std::string& out_path,
              std::uint64_t noise_seed, std::ostream& log);

// Compares two image directories: Fréchet distance between feature Gaussians
// plus the inception-style score of the generated set.
int run_eval(const std::string& generated_dir, const std::string& reference_dir,
             std::uint64_t extractor_seed, std::ostream& log);

// Gradient, oracle, and invariant suites; returns kExitSelftestFail on any
// mismatch, naming the failing suite and case.
int run_selftest(std::ostream& log);

}  // namespace tsit
