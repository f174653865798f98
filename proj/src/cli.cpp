#include "tsit/cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <vector>

#include "tsit/data.hpp"
#include "tsit/eval.hpp"
#include "tsit/train.hpp"

namespace tsit {

namespace {

namespace fs = std::filesystem;

// Every run derives its independent random streams from the one user-facing
// seed, so the manifest's single seed value pins the whole run.
struct RunSeeds {
    std::uint64_t model, extractor, data, noise, shuffle;
    explicit RunSeeds(std::uint64_t master)
        : model(derive_seed(master, 1)),
          extractor(derive_seed(master, 2)),
          data(derive_seed(master, 3)),
          noise(derive_seed(master, 4)),
          shuffle(derive_seed(master, 5)) {}
};

// Map the library's typed exceptions onto the exit-code contract.
template <typename Fn>
int guarded(std::ostream& log, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        log << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ImageIOError& e) {
        log << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const DataError& e) {
        log << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const CheckpointError& e) {
        log << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const EvalError& e) {
        log << "data error: " << e.what() << "\n";
        return kExitData;
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
}

// A dataset draw as the trainer consumes it, independent of the source.
class SampleSource {
  public:
    SampleSource(const DataSpec& spec, const RunSeeds& seeds) : shuffle_(seeds.shuffle) {
        if (spec.source == "synthetic") {
            synthetic_.emplace(spec.synthetic_count, spec.height, spec.width, seeds.data);
            count_ = synthetic_->size();
            content_channels_ = 3;
            return;
        }
        DirMode mode = DirMode::paired;
        std::string dir_a = spec.content_dir, dir_b = spec.style_dir;
        if (spec.source == "unpaired") mode = DirMode::unpaired;
        if (spec.source == "semantic") {
            mode = DirMode::semantic;
            dir_a = spec.label_dir;
            dir_b = spec.image_dir;
        }
        dirs_.emplace(mode, dir_a, dir_b, spec.height, spec.width, int(spec.num_classes));
        count_ = dirs_->size();
        content_channels_ =
            mode == DirMode::semantic ? std::size_t(dirs_->num_classes()) : std::size_t(3);
    }

    std::size_t count() const { return count_; }
    std::size_t content_channels() const { return content_channels_; }

    TrainSample<float> draw(std::uint64_t m) const {
        if (synthetic_) {
            const auto idx = draw_index(synthetic_->size(), shuffle_, m);
            auto s = synthetic_->sample(idx);
            return {s.content, s.style, s.target};
        }
        return dirs_->sample(m, shuffle_);
    }

  private:
    std::uint64_t shuffle_;
    std::size_t count_ = 0;
    std::size_t content_channels_ = 3;
    std::optional<SyntheticDataset<float>> synthetic_;
    std::optional<DirectoryDataset<float>> dirs_;
};

}  // namespace

int run_train(const RunConfig& cfg, std::ostream& log, const std::string& resume) {
    return guarded(log, [&]() -> int {
        const RunSeeds seeds(cfg.train.seed);
        SampleSource source(cfg.data, seeds);
        if (cfg.net.content_channels != source.content_channels())
            throw ConfigError("net.content_channels=" +
                              std::to_string(cfg.net.content_channels) +
                              " does not match the dataset's content channels (" +
                              std::to_string(source.content_channels()) + ")");

        TSITModel<float> model(cfg.net, seeds.model);
        RandomFeatureExtractor<float> extractor(seeds.extractor);
        TrainConfig<float> tc;
        tc.lr_g = float(cfg.train.lr_g);
        tc.lr_d = float(cfg.train.lr_d);
        tc.beta1 = float(cfg.train.beta1);
        tc.beta2 = float(cfg.train.beta2);
        tc.adam_eps = float(cfg.train.adam_eps);
        tc.weights.lambda_perceptual = float(cfg.lambda_perceptual);
        tc.weights.lambda_fm = float(cfg.lambda_fm);
        tc.perceptual_squared = cfg.perceptual_squared;
        tc.seed = seeds.noise;
        Trainer<float> trainer(model, extractor, tc);

        const std::string manifest = serialize_run_config(cfg);
        if (!resume.empty()) {
            const Checkpoint ck = load_checkpoint(resume);
            restore_training_state(ck, model, trainer);
            if (trainer.steps_done() >= cfg.train.steps)
                throw ConfigError("checkpoint '" + resume + "' is already at step " +
                                  std::to_string(trainer.steps_done()) +
                                  "; train.steps=" + std::to_string(cfg.train.steps) +
                                  " has nothing left to run");
        }

        fs::create_directories(cfg.artifacts.out_dir);
        write_text_file(cfg.artifacts.out_dir + "/manifest.ini", manifest);
        std::ofstream metrics(cfg.artifacts.out_dir + "/metrics.txt",
                              resume.empty() ? std::ios::binary
                                             : std::ios::binary | std::ios::app);
        if (!metrics)
            throw DataError("cannot write '" + cfg.artifacts.out_dir + "/metrics.txt'");

        const std::size_t B = cfg.train.batch_size;
        while (trainer.steps_done() < cfg.train.steps) {
            SampleBatch<float> batch;
            {
                NoGradGuard<float> guard;
                std::vector<TrainSample<float>> picked;
                picked.reserve(B);
                for (std::size_t b = 0; b < B; ++b)
                    picked.push_back(source.draw(trainer.steps_done() * B + b));
                batch = stack_samples(picked);
            }

            // Mode wiring. Exemplar modes score and feature-match against the
            // style exemplar and preserve the content image perceptually; the
            // paired mode references the ground-truth pair throughout.
            Tensor<float> style_in, d_real, p_target;
            if (cfg.train.mode == TaskMode::semantic_synthesis) {
                style_in = batch.target;
                d_real = batch.target;
                p_target = batch.target;
            } else {
                style_in = batch.style;
                d_real = batch.style;
                p_target = batch.content;
            }

            const Tensor<float> z =
                trainer.sample_z(batch.content.dim(0), batch.content.dim(2),
                                 batch.content.dim(3));
            const StepMetrics m = trainer.step(batch.content, style_in, d_real, p_target, z);
            if (!std::isfinite(m.loss_d) || !std::isfinite(m.loss_g_adv) ||
                !std::isfinite(m.loss_p) || !std::isfinite(m.loss_fm))
                throw NumericError("non-finite loss at step " + std::to_string(m.step));

            metrics << m.format() << "\n";
            if (m.step % cfg.train.log_interval == 0) {
                log << m.format() << "\n";
                metrics.flush();
            }
            if (cfg.train.checkpoint_interval != 0 &&
                m.step % cfg.train.checkpoint_interval == 0 && m.step < cfg.train.steps) {
                const Checkpoint ck = capture_training_state(model, trainer, manifest);
                save_checkpoint(cfg.artifacts.out_dir + "/checkpoint_" +
                                    std::to_string(m.step) + ".tsit",
                                ck);
            }
        }

        const Checkpoint ck = capture_training_state(model, trainer, manifest);
        save_checkpoint(cfg.artifacts.out_dir + "/checkpoint.tsit", ck);
        log << "trained " << trainer.steps_done() << " steps; artifacts in "
            << cfg.artifacts.out_dir << "\n";
        return kExitOk;
    });
}

int run_infer(const std::string& checkpoint_path, const std::string& content_path,
              const std::string& style_path, const std::string& out_path,
              std::uint64_t noise_seed, std::ostream& log) {
    return guarded(log, [&]() -> int {
        const Checkpoint ck = load_checkpoint(checkpoint_path);
        if (ck.config_text.empty())
            throw CheckpointError("checkpoint '" + checkpoint_path +
                                  "' carries no run configuration");
        const RunConfig cfg = parse_run_config(ck.config_text);
        const RunSeeds seeds(cfg.train.seed);
        TSITModel<float> model(cfg.net, seeds.model);
        load_model_state(ck, model);

        NoGradGuard<float> guard;
        Tensor<float> content;
        if (cfg.net.content_channels == 3) {
            content = load_image_tensor<float>(content_path);
        } else {
            std::size_t h = 0, w = 0;
            const auto labels = read_label_mask(content_path, h, w);
            content = one_hot_labels<float>(labels, int(cfg.net.content_channels), h, w);
        }
        const Tensor<float> style = load_image_tensor<float>(style_path);
        const Tensor<float> z = sample_noise<float>(
            model.noise_shape(1, content.dim(2), content.dim(3)), noise_seed);

        // The generator runs exactly as it does during training (batch
        // statistics from this single input, not running averages).
        const Tensor<float> out = model.generate(content, style, z, /*training=*/true);
        write_image(out_path, tensor_to_image(out));
        log << "wrote " << out_path << "\n";
        return kExitOk;
    });
}

int run_eval(const std::string& generated_dir, const std::string& reference_dir,
             std::uint64_t extractor_seed, std::ostream& log) {
    return guarded(log, [&]() -> int {
        RandomFeatureExtractor<float> extractor(extractor_seed);

        // Deterministic score classifier: features of procedural content
        // images labeled by their dominant region. Probe set and classes are
        // fixed, so reports depend only on the extractor seed and the inputs.
        SyntheticDataset<float> probe(24, 32, 32, 0xC1A55u);
        std::vector<std::vector<double>> feats;
        std::vector<int> labels;
        for (std::size_t i = 0; i < probe.size(); ++i) {
            const auto s = probe.sample(i);
            feats.push_back(eval_features(extractor, s.content));
            std::array<int, SyntheticDataset<float>::kRegions> area{};
            for (int id : s.labels) ++area[std::size_t(id)];
            labels.push_back(int(std::max_element(area.begin(), area.end()) - area.begin()));
        }
        const LinearClassifier classifier = train_linear_classifier(
            feats, labels, SyntheticDataset<float>::kRegions);

        const EvalReport report =
            evaluate_run(generated_dir, reference_dir, extractor, classifier);
        log << report.text << report.machine_line << "\n";
        return kExitOk;
    });
}

}  // namespace tsit
