#include "tsit/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tsit {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return std::size_t(n);
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v +
                          "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    return std::uint64_t(parse_size(key, v));
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        if (!std::isfinite(d)) throw std::invalid_argument("non-finite");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a finite number, got '" + v + "'");
    }
}

std::vector<std::size_t> parse_schedule(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config: '" + key + "' has an empty entry");
        out.push_back(parse_size(key, item));
    }
    if (out.empty()) throw ConfigError("config: '" + key + "' expects a comma-separated list");
    return out;
}

void set_key(RunConfig& cfg, const std::string& section, const std::string& key,
             const std::string& value) {
    const std::string full = section + "." + key;
    if (section == "net") {
        auto& n = cfg.net;
        if (key == "k") n.k = parse_size(full, value);
        else if (key == "base_width") n.base_width = parse_size(full, value);
        else if (key == "content_channels") n.content_channels = parse_size(full, value);
        else if (key == "width_divisor") n.width_divisor = parse_size(full, value);
        else if (key == "schedule") n.schedule = parse_schedule(full, value);
        else if (key == "d_scales") n.d_scales = parse_size(full, value);
        else if (key == "d_layers") n.d_layers = parse_size(full, value);
        else if (key == "spectral") n.spectral = parse_bool(full, value);
        else if (key == "spectral_fade") n.spectral_fade = parse_bool(full, value);
        else if (key == "upsample_last") n.upsample_last = parse_bool(full, value);
        else if (key == "d_conditional") n.d_conditional = parse_bool(full, value);
        else if (key == "no_cs") n.ablations.no_cs = parse_bool(full, value);
        else if (key == "no_ss") n.ablations.no_ss = parse_bool(full, value);
        else if (key == "concat_for_fade") n.ablations.concat_content = parse_bool(full, value);
        else if (key == "concat_for_fadain") n.ablations.concat_style = parse_bool(full, value);
        else if (key == "image_level_injection")
            n.ablations.image_level = parse_bool(full, value);
        else throw ConfigError("config: unknown key '" + full + "'");
    } else if (section == "train") {
        auto& t = cfg.train;
        if (key == "mode") t.mode = task_mode_from_string(value);
        else if (key == "steps") t.steps = parse_size(full, value);
        else if (key == "batch_size") t.batch_size = parse_size(full, value);
        else if (key == "lr_g") t.lr_g = parse_double(full, value);
        else if (key == "lr_d") t.lr_d = parse_double(full, value);
        else if (key == "beta1") t.beta1 = parse_double(full, value);
        else if (key == "beta2") t.beta2 = parse_double(full, value);
        else if (key == "adam_eps") t.adam_eps = parse_double(full, value);
        else if (key == "seed") t.seed = parse_u64(full, value);
        else if (key == "checkpoint_interval") t.checkpoint_interval = parse_size(full, value);
        else if (key == "log_interval") t.log_interval = parse_size(full, value);
        else throw ConfigError("config: unknown key '" + full + "'");
    } else if (section == "data") {
        auto& d = cfg.data;
        if (key == "source") {
            if (value != "synthetic" && value != "paired" && value != "unpaired" &&
                value != "semantic")
                throw ConfigError(
                    "config: data.source must be synthetic, paired, unpaired, or semantic");
            d.source = value;
        } else if (key == "synthetic_count") d.synthetic_count = parse_size(full, value);
        else if (key == "height") d.height = parse_size(full, value);
        else if (key == "width") d.width = parse_size(full, value);
        else if (key == "content_dir") d.content_dir = value;
        else if (key == "style_dir") d.style_dir = value;
        else if (key == "label_dir") d.label_dir = value;
        else if (key == "image_dir") d.image_dir = value;
        else if (key == "num_classes") d.num_classes = parse_size(full, value);
        else throw ConfigError("config: unknown key '" + full + "'");
    } else if (section == "loss") {
        if (key == "lambda_perceptual") cfg.lambda_perceptual = parse_double(full, value);
        else if (key == "lambda_fm") cfg.lambda_fm = parse_double(full, value);
        else if (key == "perceptual_squared") cfg.perceptual_squared = parse_bool(full, value);
        else throw ConfigError("config: unknown key '" + full + "'");
    } else if (section == "artifacts") {
        if (key == "out_dir") cfg.artifacts.out_dir = value;
        else throw ConfigError("config: unknown key '" + full + "'");
    } else {
        throw ConfigError("config: unknown section '[" + section + "]'");
    }
}

void validate(const RunConfig& cfg) {
    if (cfg.train.steps == 0) throw ConfigError("config: train.steps must be at least 1");
    if (cfg.train.batch_size == 0)
        throw ConfigError("config: train.batch_size must be at least 1");
    if (cfg.train.log_interval == 0)
        throw ConfigError("config: train.log_interval must be at least 1");
    if (cfg.train.lr_g < 0 || cfg.train.lr_d < 0)
        throw ConfigError("config: learning rates must be non-negative");
    if (cfg.train.beta1 < 0 || cfg.train.beta1 >= 1 || cfg.train.beta2 < 0 ||
        cfg.train.beta2 >= 1)
        throw ConfigError("config: adam betas must lie in [0, 1)");
    if (cfg.train.adam_eps <= 0) throw ConfigError("config: train.adam_eps must be positive");
    if (cfg.lambda_perceptual < 0 || cfg.lambda_fm < 0)
        throw ConfigError("config: loss weights must be non-negative");
    if (cfg.data.source == "synthetic") {
        if (cfg.data.synthetic_count == 0)
            throw ConfigError("config: data.synthetic_count must be at least 1");
        if (cfg.data.height == 0 || cfg.data.width == 0)
            throw ConfigError("config: synthetic data needs positive height and width");
    } else if (cfg.data.source == "semantic") {
        if (cfg.data.label_dir.empty())
            throw ConfigError("config: data.label_dir is required when data.source=semantic");
        if (cfg.data.image_dir.empty())
            throw ConfigError("config: data.image_dir is required when data.source=semantic");
    } else {
        if (cfg.data.content_dir.empty())
            throw ConfigError("config: data.content_dir is required when data.source=" +
                              cfg.data.source);
        if (cfg.data.style_dir.empty())
            throw ConfigError("config: data.style_dir is required when data.source=" +
                              cfg.data.source);
    }
    if (cfg.data.source == "semantic" && cfg.data.num_classes != 0 &&
        cfg.net.content_channels != cfg.data.num_classes)
        throw ConfigError(
            "config: semantic source feeds one channel per class, so "
            "net.content_channels must equal data.num_classes");
}

}  // namespace

std::string to_string(TaskMode mode) {
    switch (mode) {
        case TaskMode::style_transfer: return "style_transfer";
        case TaskMode::semantic_synthesis: return "semantic_synthesis";
        case TaskMode::multimodal: return "multimodal";
    }
    return "style_transfer";
}

TaskMode task_mode_from_string(const std::string& s) {
    if (s == "style_transfer") return TaskMode::style_transfer;
    if (s == "semantic_synthesis") return TaskMode::semantic_synthesis;
    if (s == "multimodal") return TaskMode::multimodal;
    throw ConfigError("config: unknown train.mode '" + s +
                      "' (style_transfer, semantic_synthesis, multimodal)");
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::string section;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "net" && section != "train" && section != "data" &&
                section != "loss" && section != "artifacts")
                throw ConfigError("config: unknown section '[" + section + "]'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": key '" + key + "' appears before any [section]");
        set_key(cfg, section, key, value);
    }
    validate(cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    const std::string path = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const auto dot = path.find('.');
    if (dot == std::string::npos)
        throw ConfigError("override '" + assignment + "' must name section.key");
    set_key(cfg, path.substr(0, dot), path.substr(dot + 1), value);
    validate(cfg);
}

std::string serialize_run_config(const RunConfig& cfg) {
    char buf[256];
    std::string out;
    auto add = [&](const char* fmt, auto... args) {
        std::snprintf(buf, sizeof(buf), fmt, args...);
        out += buf;
    };
    const auto& n = cfg.net;
    out += "[net]\n";
    add("k=%zu\n", n.k);
    add("base_width=%zu\n", n.base_width);
    add("content_channels=%zu\n", n.content_channels);
    add("width_divisor=%zu\n", n.width_divisor);
    if (!n.schedule.empty()) {
        out += "schedule=";
        for (std::size_t i = 0; i < n.schedule.size(); ++i) {
            if (i) out += ",";
            add("%zu", n.schedule[i]);
        }
        out += "\n";
    }
    add("d_scales=%zu\n", n.d_scales);
    add("d_layers=%zu\n", n.d_layers);
    add("spectral=%s\n", n.spectral ? "true" : "false");
    add("spectral_fade=%s\n", n.spectral_fade ? "true" : "false");
    add("upsample_last=%s\n", n.upsample_last ? "true" : "false");
    add("d_conditional=%s\n", n.d_conditional ? "true" : "false");
    add("no_cs=%s\n", n.ablations.no_cs ? "true" : "false");
    add("no_ss=%s\n", n.ablations.no_ss ? "true" : "false");
    add("concat_for_fade=%s\n", n.ablations.concat_content ? "true" : "false");
    add("concat_for_fadain=%s\n", n.ablations.concat_style ? "true" : "false");
    add("image_level_injection=%s\n", n.ablations.image_level ? "true" : "false");

    const auto& t = cfg.train;
    out += "\n[train]\n";
    add("mode=%s\n", to_string(t.mode).c_str());
    add("steps=%zu\n", t.steps);
    add("batch_size=%zu\n", t.batch_size);
    add("lr_g=%.17g\n", t.lr_g);
    add("lr_d=%.17g\n", t.lr_d);
    add("beta1=%.17g\n", t.beta1);
    add("beta2=%.17g\n", t.beta2);
    add("adam_eps=%.17g\n", t.adam_eps);
    add("seed=%llu\n", static_cast<unsigned long long>(t.seed));
    add("checkpoint_interval=%zu\n", t.checkpoint_interval);
    add("log_interval=%zu\n", t.log_interval);

    const auto& d = cfg.data;
    out += "\n[data]\n";
    add("source=%s\n", d.source.c_str());
    add("synthetic_count=%zu\n", d.synthetic_count);
    add("height=%zu\n", d.height);
    add("width=%zu\n", d.width);
    if (!d.content_dir.empty()) add("content_dir=%s\n", d.content_dir.c_str());
    if (!d.style_dir.empty()) add("style_dir=%s\n", d.style_dir.c_str());
    if (!d.label_dir.empty()) add("label_dir=%s\n", d.label_dir.c_str());
    if (!d.image_dir.empty()) add("image_dir=%s\n", d.image_dir.c_str());
    if (d.num_classes != 0) add("num_classes=%zu\n", d.num_classes);

    out += "\n[loss]\n";
    add("lambda_perceptual=%.17g\n", cfg.lambda_perceptual);
    add("lambda_fm=%.17g\n", cfg.lambda_fm);
    add("perceptual_squared=%s\n", cfg.perceptual_squared ? "true" : "false");

    out += "\n[artifacts]\n";
    add("out_dir=%s\n", cfg.artifacts.out_dir.c_str());
    return out;
}

std::string preset_config(const std::string& name) {
    // The synthetic task ships ground-truth translations, so the desk preset
    // trains with the paired wiring (mode=semantic_synthesis): the perceptual
    // and feature-matching references are the ground-truth pair.  Exemplar
    // wiring (mode=style_transfer) is for unpaired directory data.
    if (name == "desk-style-transfer") {
        return "[net]\n"
               "k=3\n"
               "base_width=16\n"
               "width_divisor=1\n"
               "d_scales=1\n"
               "d_layers=3\n"
               "\n[train]\n"
               "mode=semantic_synthesis\n"
               "steps=500\n"
               "batch_size=1\n"
               "seed=7\n"
               "\n[data]\n"
               "source=synthetic\n"
               "synthetic_count=8\n"
               "height=32\n"
               "width=32\n"
               "\n[loss]\n"
               "lambda_perceptual=1\n"
               "lambda_fm=1\n";
    }
    if (name == "desk-semantic") {
        return "[net]\n"
               "k=3\n"
               "base_width=16\n"
               "width_divisor=1\n"
               "d_scales=2\n"
               "d_layers=3\n"
               "\n[train]\n"
               "mode=semantic_synthesis\n"
               "steps=500\n"
               "batch_size=2\n"
               "seed=7\n"
               "\n[data]\n"
               "source=synthetic\n"
               "synthetic_count=8\n"
               "height=32\n"
               "width=32\n"
               "\n[loss]\n"
               "lambda_perceptual=20\n"
               "lambda_fm=10\n";
    }
    if (name == "desk-multimodal") {
        return "[net]\n"
               "k=2\n"
               "base_width=16\n"
               "width_divisor=1\n"
               "d_scales=1\n"
               "d_layers=3\n"
               "\n[train]\n"
               "mode=multimodal\n"
               "steps=300\n"
               "batch_size=1\n"
               "seed=7\n"
               "\n[data]\n"
               "source=synthetic\n"
               "synthetic_count=8\n"
               "height=32\n"
               "width=32\n"
               "\n[loss]\n"
               "lambda_perceptual=1\n"
               "lambda_fm=1\n";
    }
    throw ConfigError("unknown preset '" + name +
                      "' (desk-style-transfer, desk-semantic, desk-multimodal)");
}

}  // namespace tsit
