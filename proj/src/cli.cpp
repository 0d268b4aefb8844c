// Copyright 2026 The hrcdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hrcdet/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "hrcdet/codec.hpp"
#include "hrcdet/data.hpp"
#include "hrcdet/errors.hpp"
#include "hrcdet/eval.hpp"
#include "hrcdet/image_io.hpp"
#include "hrcdet/model.hpp"
#include "hrcdet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hrcdet::cli {

namespace {

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// One manifest per run, next to the outputs: <out>/manifest.json for
// directory outputs, <out>.manifest.json otherwise.
struct Manifest {
    std::string command;
    json config = json::object();
    uint64_t seed = 0;
    std::string started = iso_now();
    std::vector<std::string> outputs;

    void write(const std::string& out_path) const {
        const fs::path out(out_path);
        const fs::path path = fs::is_directory(out) ? out / "manifest.json"
                                                    : fs::path(out_path + ".manifest.json");
        json j{{"command", command}, {"config", config},   {"seed", seed},
               {"version", kToolkitVersion}, {"started", started}, {"finished", iso_now()},
               {"outputs", outputs}};
        std::ofstream f(path);
        if (!f) throw FileError("cannot write manifest: " + path.string());
        f << j.dump(2) << "\n";
    }
};

// Values from --config <json file>; flag values still win over these.
struct ConfigFile {
    json values = json::object();

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        ConfigFile cf;
        try {
            in >> cf.values;
        } catch (const json::exception& e) {
            throw ConfigError("config parse failure in " + path + ": " + e.what());
        }
        if (!cf.values.is_object()) throw ConfigError("config file must hold a JSON object: " + path);
        return cf;
    }

    template <typename T>
    void apply(const std::string& key, T& target) {
        auto it = values.find(key);
        if (it == values.end()) return;
        try {
            target = it->get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
        consumed.insert(key);
    }

    void finish() const {
        for (auto it = values.begin(); it != values.end(); ++it) {
            if (!consumed.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
        }
    }

    std::set<std::string> consumed;
};

std::string find_flag_value(const std::vector<std::string>& args, const std::string& flag) {
    for (size_t i = 0; i + 1 < args.size(); ++i) {
        if (args[i] == flag) return args[i + 1];
        if (args[i].rfind(flag + "=", 0) == 0) return args[i].substr(flag.size() + 1);
    }
    for (const std::string& a : args) {
        if (a.rfind(flag + "=", 0) == 0) return a.substr(flag.size() + 1);
    }
    return {};
}

struct Preset {
    ModelConfig model;
    int input_size = 512;
    int batch_size = 8;
    double lr = 1e-6;
};

Preset resolve_preset(const std::string& name) {
    if (name == "toy") {
        Preset p;
        p.model = ModelConfig::toy();
        p.input_size = 128;
        p.batch_size = 4;
        p.lr = 2e-3;
        return p;
    }
    if (name == "paper-w32") {
        Preset p;
        p.model = ModelConfig::paper_w32();
        return p;
    }
    throw CLI::ValidationError("--preset", "unknown preset '" + name + "'");
}

std::vector<LabeledPage> load_labeled_pages(const std::string& data_dir) {
    const fs::path dir(data_dir);
    const fs::path ann_path = dir / "annotations.jsonl";
    if (!fs::exists(ann_path)) throw FileError("missing annotations file: " + ann_path.string());
    std::vector<PageAnnotation> anns = load_annotations(ann_path.string());
    std::vector<LabeledPage> pages;
    pages.reserve(anns.size());
    for (PageAnnotation& ann : anns) {
        fs::path img(ann.image_path);
        if (img.is_relative()) img = dir / img;
        LabeledPage page;
        page.image = read_png(img.string());
        page.annotation = std::move(ann);
        pages.push_back(std::move(page));
    }
    return pages;
}

json codec_json(const CodecConfig& c) {
    return json{{"stride", c.stride},       {"sigma_divisor", c.sigma_divisor},
                {"conf", c.conf_thresh},    {"nms_iou", c.nms_iou},
                {"peak_window", c.peak_window}, {"top_k", c.top_k}};
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::vector<std::string>& args, ConfigFile& config) {
    CLI::App app{"synthesize labeled pages"};
    int pages = 10;
    uint64_t seed = 0;
    std::string out;
    SynthConfig sc;
    std::string background = "plain";

    config.apply("pages", pages);
    config.apply("seed", seed);
    config.apply("page-size", sc.page_w);
    config.apply("columns-min", sc.columns_min);
    config.apply("columns-max", sc.columns_max);
    config.apply("chars-min", sc.chars_min);
    config.apply("chars-max", sc.chars_max);
    config.apply("glyph-min", sc.glyph_min);
    config.apply("glyph-max", sc.glyph_max);
    config.apply("size-jitter", sc.size_jitter);
    config.apply("noise", sc.noise_level);
    config.apply("background", background);
    config.finish();
    sc.page_h = sc.page_w;

    app.add_option("--pages", pages, "number of pages");
    app.add_option("--seed", seed, "base seed");
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--page-size", sc.page_w, "square page side, pixels");
    app.add_option("--columns-min", sc.columns_min);
    app.add_option("--columns-max", sc.columns_max);
    app.add_option("--chars-min", sc.chars_min);
    app.add_option("--chars-max", sc.chars_max);
    app.add_option("--glyph-min", sc.glyph_min);
    app.add_option("--glyph-max", sc.glyph_max);
    app.add_option("--size-jitter", sc.size_jitter);
    app.add_option("--noise", sc.noise_level);
    app.add_option("--background", background)->check(CLI::IsMember({"plain", "parchment"}));
    std::string config_path_opt;
    app.add_option("--config", config_path_opt, "JSON config file");
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    sc.page_h = sc.page_w;
    sc.background = background == "parchment" ? Background::kParchment : Background::kPlain;

    fs::create_directories(out);
    Manifest manifest;
    manifest.command = "synth";
    manifest.seed = seed;

    std::vector<PageAnnotation> anns;
    for (int i = 0; i < pages; ++i) {
        sc.seed = seed + static_cast<uint64_t>(i);
        LabeledPage page = generate_page(sc);
        char name[32];
        std::snprintf(name, sizeof(name), "p%04d.png", i);
        const fs::path img_path = fs::path(out) / name;
        write_png(img_path.string(), page.image);
        page.annotation.image_path = name;
        anns.push_back(std::move(page.annotation));
        manifest.outputs.push_back(img_path.string());
    }
    const fs::path ann_path = fs::path(out) / "annotations.jsonl";
    save_annotations(ann_path.string(), anns);
    manifest.outputs.push_back(ann_path.string());

    manifest.config = json{{"pages", pages},         {"page_size", sc.page_w},
                           {"columns", {sc.columns_min, sc.columns_max}},
                           {"chars", {sc.chars_min, sc.chars_max}},
                           {"glyph", {sc.glyph_min, sc.glyph_max}},
                           {"size_jitter", sc.size_jitter}, {"noise", sc.noise_level},
                           {"background", background}};
    manifest.write(out);
    std::cerr << "synth: wrote " << pages << " pages to " << out << "\n";
    return 0;
}

int cmd_encode(const std::vector<std::string>& args, ConfigFile& config) {
    CLI::App app{"encode annotations into target maps"};
    std::string data, out;
    CodecConfig codec;

    config.apply("stride", codec.stride);
    config.apply("sigma-divisor", codec.sigma_divisor);
    config.finish();

    app.add_option("--data", data, "directory with annotations.jsonl")->required();
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--stride", codec.stride);
    app.add_option("--sigma-divisor", codec.sigma_divisor);
    std::string config_path_opt;
    app.add_option("--config", config_path_opt, "JSON config file");
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));

    const fs::path ann_path = fs::path(data) / "annotations.jsonl";
    if (!fs::exists(ann_path)) throw FileError("missing annotations file: " + ann_path.string());
    const std::vector<PageAnnotation> anns = load_annotations(ann_path.string());

    fs::create_directories(out);
    Manifest manifest;
    manifest.command = "encode";
    for (const PageAnnotation& ann : anns) {
        const TargetSet t = encode_targets(ann.boxes, ann.width, ann.height, codec);
        // stacked layout: heatmap, size h, size w, offset x, offset y, mask
        TensorGrid stacked(6, t.heatmap.height(), t.heatmap.width());
        const size_t plane = static_cast<size_t>(t.heatmap.height()) * t.heatmap.width();
        float* d = stacked.data();
        std::copy_n(t.heatmap.data(), plane, d);
        std::copy_n(t.size_map.data(), 2 * plane, d + plane);
        std::copy_n(t.offset_map.data(), 2 * plane, d + 3 * plane);
        std::copy_n(t.mask.data(), plane, d + 5 * plane);

        const fs::path path =
            fs::path(out) / (fs::path(ann.image_path).stem().string() + ".targets.hrtg");
        write_tensor(path.string(), stacked);
        manifest.outputs.push_back(path.string());
    }
    manifest.config = codec_json(codec);
    manifest.write(out);
    std::cerr << "encode: wrote " << anns.size() << " target files to " << out << "\n";
    return 0;
}

int cmd_train(const std::vector<std::string>& args, ConfigFile& config, const Preset& preset) {
    CLI::App app{"train a detector"};
    std::string data, out;
    uint64_t seed = 0;
    int epochs = 1;
    int batch_size = preset.batch_size;
    double lr = preset.lr;
    int input_size = preset.input_size;
    FitConfig fc;
    fc.train.weights = LossWeights{};

    config.apply("epochs", epochs);
    config.apply("batch-size", batch_size);
    config.apply("lr", lr);
    config.apply("input-size", input_size);
    config.apply("seed", seed);
    config.finish();

    app.add_option("--data", data, "training data directory")->required();
    app.add_option("--out", out, "checkpoint path")->required();
    app.add_option("--epochs", epochs);
    app.add_option("--batch-size", batch_size);
    app.add_option("--lr", lr);
    app.add_option("--input-size", input_size, "training resolution; larger pages are cropped");
    app.add_option("--seed", seed);
    std::string preset_opt;
    app.add_option("--preset", preset_opt, "toy | paper-w32");
    std::string config_path_opt;
    app.add_option("--config", config_path_opt, "JSON config file");
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));

    const std::vector<LabeledPage> pages = load_labeled_pages(data);
    if (pages.empty()) throw FileError("no pages found in " + data);

    bool needs_crop = false;
    for (const LabeledPage& p : pages) {
        if (p.image.width() < input_size || p.image.height() < input_size) {
            throw std::invalid_argument("page " + p.annotation.image_path +
                                        " is smaller than --input-size " + std::to_string(input_size));
        }
        if (p.image.width() > input_size || p.image.height() > input_size) needs_crop = true;
    }

    fc.epochs = epochs;
    fc.batch_size = batch_size;
    fc.train.lr = static_cast<float>(lr);
    fc.seed = seed;
    if (needs_crop) fc.crop_size = input_size;

    Model model(preset.model, seed);
    fit(model, pages, fc, [&](int epoch, const LossReport& r) {
        std::cerr << "epoch " << (epoch + 1) << "/" << epochs << "  loss " << r.total << "  (h "
                  << r.l_h << "  s " << r.l_s << "  off " << r.l_offset << ")\n";
    });
    model.save(out);

    Manifest manifest;
    manifest.command = "train";
    manifest.seed = seed;
    manifest.config = json{{"epochs", epochs},   {"batch_size", batch_size},
                           {"lr", lr},           {"input_size", input_size},
                           {"base_channels", preset.model.base_channels},
                           {"pages", pages.size()}};
    manifest.outputs.push_back(out);
    manifest.write(out);
    std::cerr << "train: saved " << out << "\n";
    return 0;
}

int cmd_infer(const std::vector<std::string>& args, ConfigFile& config) {
    CLI::App app{"detect characters in images"};
    std::string model_path, data, out = "detections.jsonl";
    std::vector<std::string> images;
    CodecConfig codec;
    double conf = codec.conf_thresh, nms_iou = codec.nms_iou;

    config.apply("conf", conf);
    config.apply("nms-iou", nms_iou);
    config.finish();

    app.add_option("--model", model_path, "checkpoint")->required();
    app.add_option("--image", images, "image path (repeatable)");
    app.add_option("--data", data, "directory: run on every PNG");
    app.add_option("--out", out, "detections file");
    app.add_option("--conf", conf, "confidence threshold");
    app.add_option("--nms-iou", nms_iou, "suppression IoU threshold");
    std::string config_path_opt;
    app.add_option("--config", config_path_opt, "JSON config file");
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    codec.conf_thresh = static_cast<float>(conf);
    codec.nms_iou = static_cast<float>(nms_iou);

    if (!data.empty()) {
        if (!fs::is_directory(data)) throw FileError("not a directory: " + data);
        std::vector<std::string> found;
        for (const auto& e : fs::directory_iterator(data)) {
            if (e.path().extension() == ".png") found.push_back(e.path().string());
        }
        std::sort(found.begin(), found.end());
        images.insert(images.end(), found.begin(), found.end());
    }
    if (images.empty()) throw CLI::ValidationError("--image", "no input images given");

    const Model model = Model::load(model_path);
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw FileError("cannot write detections: " + out);
    for (const std::string& img_path : images) {
        const TensorGrid img = read_png(img_path);
        const NetOutput net = model.forward(img);
        const std::vector<Detection> dets = decode_detections(net, img.width(), img.height(), codec);
        json boxes = json::array();
        for (const Detection& d : dets) {
            const Corners c = to_corners(d.bbox);
            boxes.push_back({c.x_min, c.y_min, c.x_max, c.y_max, d.score});
        }
        f << json{{"image", img_path}, {"boxes", boxes}}.dump() << "\n";
    }
    f.close();

    Manifest manifest;
    manifest.command = "infer";
    manifest.config = json{{"model", model_path}, {"conf", conf}, {"nms_iou", nms_iou},
                           {"images", images.size()}};
    manifest.outputs.push_back(out);
    manifest.write(out);
    std::cerr << "infer: wrote " << out << "\n";
    return 0;
}

int cmd_eval(const std::vector<std::string>& args, ConfigFile& config) {
    CLI::App app{"score a detector against labeled pages"};
    std::string model_path, data, out;
    CodecConfig codec;
    double conf = codec.conf_thresh, nms_iou = codec.nms_iou;

    config.apply("conf", conf);
    config.apply("nms-iou", nms_iou);
    config.finish();

    app.add_option("--model", model_path)->required();
    app.add_option("--data", data, "directory with annotations.jsonl")->required();
    app.add_option("--out", out, "per-page report path (JSONL)");
    app.add_option("--conf", conf);
    app.add_option("--nms-iou", nms_iou);
    std::string config_path_opt;
    app.add_option("--config", config_path_opt, "JSON config file");
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    codec.conf_thresh = static_cast<float>(conf);
    codec.nms_iou = static_cast<float>(nms_iou);

    const Model model = Model::load(model_path);
    const std::vector<LabeledPage> pages = load_labeled_pages(data);
    const EvalReport report = evaluate(model, pages, codec);
    std::cout << report.table();

    if (!out.empty()) {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw FileError("cannot write report: " + out);
        f << report.to_jsonl();
        f.close();
        Manifest manifest;
        manifest.command = "eval";
        manifest.config = json{{"model", model_path}, {"data", data}, {"conf", conf},
                               {"nms_iou", nms_iou}};
        manifest.outputs.push_back(out);
        manifest.write(out);
    }
    return 0;
}

int cmd_bench(const std::vector<std::string>& args, ConfigFile& config, const Preset& preset) {
    CLI::App app{"measure inference latency"};
    std::string model_path, out;
    int input_size = preset.input_size;
    int warmup = 3, iters = 20;
    uint64_t seed = 0;

    config.apply("input-size", input_size);
    config.apply("warmup", warmup);
    config.apply("iters", iters);
    config.finish();

    app.add_option("--model", model_path, "checkpoint (omit to bench a fresh preset model)");
    app.add_option("--input-size", input_size);
    app.add_option("--warmup", warmup);
    app.add_option("--iters", iters);
    app.add_option("--seed", seed);
    app.add_option("--out", out, "write the report as JSON");
    std::string preset_opt;
    app.add_option("--preset", preset_opt, "toy | paper-w32");
    std::string config_path_opt;
    app.add_option("--config", config_path_opt, "JSON config file");
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));

    const Model model = model_path.empty() ? Model(preset.model, seed) : Model::load(model_path);
    const BenchReport report = benchmark_inference(model, input_size, input_size, warmup, iters);
    std::cout << report.table();

    if (!out.empty()) {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw FileError("cannot write report: " + out);
        f << report.to_json() << "\n";
        f.close();
        Manifest manifest;
        manifest.command = "bench";
        manifest.seed = seed;
        manifest.config = json{{"input_size", input_size}, {"warmup", warmup}, {"iters", iters}};
        manifest.outputs.push_back(out);
        manifest.write(out);
    }
    return 0;
}

int cmd_viz(const std::vector<std::string>& args, ConfigFile& config) {
    CLI::App app{"render detections over a page"};
    std::string image, detections, out;
    config.finish();

    app.add_option("--image", image)->required();
    app.add_option("--detections", detections, "detections JSONL from `infer`")->required();
    app.add_option("--out", out, "overlay PNG path")->required();
    std::string config_path_opt;
    app.add_option("--config", config_path_opt, "JSON config file");
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));

    std::ifstream f(detections);
    if (!f) throw FileError("cannot open detections: " + detections);
    std::vector<Detection> dets;
    bool found = false;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError("detections line " + std::to_string(lineno) + ": " + e.what());
        }
        const std::string rec_image = j.value("image", "");
        if (fs::path(rec_image).filename() != fs::path(image).filename()) continue;
        found = true;
        for (const auto& arr : j.at("boxes")) {
            Detection d;
            d.bbox = from_corners(arr[0].get<double>(), arr[1].get<double>(),
                                  arr[2].get<double>(), arr[3].get<double>());
            d.score = arr[4].get<float>();
            dets.push_back(d);
        }
        break;
    }
    if (!found) throw FileError("no record for image '" + image + "' in " + detections);

    const TensorGrid img = read_png(image);
    render_overlay(img, dets, out);

    Manifest manifest;
    manifest.command = "viz";
    manifest.config = json{{"image", image}, {"detections", detections}};
    manifest.outputs.push_back(out);
    manifest.write(out);
    std::cerr << "viz: wrote " << out << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    if (args.empty()) {
        std::cerr << "usage: hrcdet <synth|encode|train|infer|eval|bench|viz> [flags]\n"
                  << "       common flags: --seed <u64> --config <path> --out <path> "
                     "--preset {toy|paper-w32}\n";
        return 2;
    }

    const std::string command = args[0];
    std::vector<std::string> rest(args.begin() + 1, args.end());

    try {
        ConfigFile config;
        const std::string config_path = find_flag_value(rest, "--config");
        if (!config_path.empty()) config = ConfigFile::load(config_path);

        std::string preset_name = find_flag_value(rest, "--preset");
        if (preset_name.empty()) {
            if (auto it = config.values.find("preset"); it != config.values.end()) {
                preset_name = it->get<std::string>();
                config.consumed.insert("preset");
            }
        } else {
            config.consumed.insert("preset");
        }
        const Preset preset = resolve_preset(preset_name.empty() ? "toy" : preset_name);

        if (command == "synth") return cmd_synth(rest, config);
        if (command == "encode") return cmd_encode(rest, config);
        if (command == "train") return cmd_train(rest, config, preset);
        if (command == "infer") return cmd_infer(rest, config);
        if (command == "eval") return cmd_eval(rest, config);
        if (command == "bench") return cmd_bench(rest, config, preset);
        if (command == "viz") return cmd_viz(rest, config);
        std::cerr << "hrcdet: unknown command '" << command << "'\n";
        return 2;
    } catch (const CLI::CallForHelp&) {
        std::cout << "see README for usage\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "hrcdet " << command << ": " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "hrcdet " << command << ": " << e.what() << "\n";
        return 4;
    } catch (const FileError& e) {
        std::cerr << "hrcdet " << command << ": " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "hrcdet " << command << ": " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "hrcdet " << command << ": " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace hrcdet::cli
