#include "manifest.hpp"

#include "postdae/crf.hpp"
#include "postdae/dae.hpp"
#include "postdae/degrade.hpp"
#include "postdae/error.hpp"
#include "postdae/metrics.hpp"
#include "postdae/parallel.hpp"
#include "postdae/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace postdae;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kReportSchema = 1;

struct Globals {
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 1;
    std::string manifest_dir;
};

std::string numbered(const std::string& prefix, std::uint64_t id, const std::string& ext = ".pgm")
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04llu", static_cast<unsigned long long>(id));
    return prefix + buf + ext;
}

/// Trailing decimal digits of the file stem, e.g. gt_0012 -> 12.
std::optional<std::uint64_t> trailing_id(const fs::path& p)
{
    const auto stem = p.stem().string();
    auto end = stem.size();
    auto begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) {
        --begin;
    }
    if (begin == end) {
        return std::nullopt;
    }
    return std::stoull(stem.substr(begin));
}

/// Regular files in `dir` whose name starts with `prefix` and ends with
/// `ext`, sorted by name.
std::vector<fs::path> list_files(const fs::path& dir, const std::string& prefix, const std::string& ext)
{
    if (!fs::is_directory(dir)) {
        throw IoError("not a directory: " + dir.string());
    }
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.starts_with(prefix) && name.ends_with(ext)) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Mask files of a directory: gt_*.pgm when present, every .pgm otherwise.
std::vector<fs::path> mask_files(const fs::path& dir)
{
    auto gt = list_files(dir, "gt_", ".pgm");
    return gt.empty() ? list_files(dir, "", ".pgm") : gt;
}

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
}

fs::path manifest_path(const Globals& g, const fs::path& out_dir, const std::string& name)
{
    const fs::path dir = g.manifest_dir.empty() ? out_dir : fs::path(g.manifest_dir);
    return dir / name;
}

std::string fmt(double v, int precision = 6)
{
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
    std::string config;
    std::string out;
    int count = 10;
    std::uint64_t start = 0;
};

void cmd_generate(const Globals& g, const GenerateArgs& a)
{
    synth::SceneConfig cfg;
    cli::RunManifest manifest("generate");
    if (!a.config.empty()) {
        cfg = read_json(a.config).get<synth::SceneConfig>();
        manifest.add_input(a.config);
    }
    if (g.seed_given) {
        cfg.seed = g.seed;
    }
    cfg.validate();
    if (a.count < 0) {
        throw ConfigError("count must be non-negative");
    }
    const fs::path out(a.out);
    fs::create_directories(out);
    for (int i = 0; i < a.count; ++i) {
        const auto id = a.start + static_cast<std::uint64_t>(i);
        const auto scene = synth::generate_scene(cfg, id);
        save_image(scene.image, out / numbered("img_", id));
        save_mask(scene.mask, out / numbered("gt_", id));
        manifest.add_output(out / numbered("img_", id));
        manifest.add_output(out / numbered("gt_", id));
    }
    manifest.set_config({{"scene", cfg}, {"count", a.count}, {"start", a.start}});
    manifest.add_seed("scene", cfg.seed);
    manifest.write(manifest_path(g, out, "manifest.json"));
}

// --- degrade ----------------------------------------------------------------

struct DegradeArgs {
    std::string masks;
    std::string out;
    std::string severity = "heavy";
    std::string config;
};

void cmd_degrade(const Globals& g, const DegradeArgs& a)
{
    cli::RunManifest manifest("degrade");
    degrade::DegradationConfig cfg;
    std::string label;
    if (!a.config.empty()) {
        cfg = read_json(a.config).get<degrade::DegradationConfig>();
        manifest.add_input(a.config);
        label = "custom";
    } else {
        cfg = degrade::preset(degrade::severity_from_string(a.severity));
        label = a.severity;
    }
    if (g.seed_given) {
        cfg.seed = g.seed;
    }
    cfg.validate();
    const fs::path out(a.out);
    fs::create_directories(out);
    for (const auto& path : mask_files(a.masks)) {
        const auto id = trailing_id(path);
        if (!id) {
            throw ValidationError("mask file name has no numeric id: " + path.string());
        }
        const auto mask = load_mask(path);
        const auto dst = out / numbered("deg_" + label + "_", *id);
        save_mask(degrade::degrade(mask, cfg, *id), dst);
        manifest.add_input(path);
        manifest.add_output(dst);
    }
    manifest.set_config({{"severity", label}, {"degradation", cfg}});
    manifest.add_seed("degradation", cfg.seed);
    manifest.write(manifest_path(g, out, "degrade_manifest.json"));
}

// --- segment ----------------------------------------------------------------

struct SegmentArgs {
    std::string images;
    std::string fit;
    std::string params;
    std::string out;
    double quality = 0.0;
    int smoothing = 0;
};

void cmd_segment(const Globals& g, const SegmentArgs& a)
{
    cli::RunManifest manifest("segment");
    synth::WeakClassifierParams params;
    if (!a.params.empty()) {
        params = read_json(a.params).get<synth::WeakClassifierParams>();
        manifest.add_input(a.params);
    } else {
        if (a.fit.empty()) {
            throw ConfigError("segment needs --fit <dataset dir> or --params <json>");
        }
        std::vector<GrayImage> imgs;
        std::vector<LabelMask> masks;
        for (const auto& gt : list_files(a.fit, "gt_", ".pgm")) {
            const auto img = fs::path(a.fit) / numbered("img_", trailing_id(gt).value());
            imgs.push_back(load_image(img));
            masks.push_back(load_mask(gt));
            manifest.add_input(img);
            manifest.add_input(gt);
        }
        params = synth::fit_weak_classifier(imgs, masks);
        params.quality = a.quality;
        params.smoothing_radius = a.smoothing;
    }
    if (g.seed_given) {
        params.seed = g.seed;
    }
    params.validate();
    const fs::path out(a.out);
    fs::create_directories(out);
    for (const auto& path : list_files(a.images, "img_", ".pgm")) {
        const auto id = trailing_id(path).value();
        const auto soft = synth::weak_segment(load_image(path), params, id);
        const auto seg = out / numbered("seg_", id);
        const auto index = out / "soft" / numbered("soft_", id, ".json");
        fs::create_directories(index.parent_path());
        save_mask(argmax_labels(soft), seg);
        save_soft_mask(soft, index);
        manifest.add_input(path);
        manifest.add_output(seg);
        manifest.add_output(index);
    }
    manifest.set_config({{"classifier", params}});
    manifest.add_seed("classifier", params.seed);
    manifest.write(manifest_path(g, out, "segment_manifest.json"));
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string validation;
    std::string out;
    std::string dae_config;
    std::string train_config;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::optional<double> learning_rate;
    std::optional<int> checkpoint_interval;
};

std::vector<LabelMask> load_masks(const std::vector<fs::path>& paths)
{
    std::vector<LabelMask> out;
    out.reserve(paths.size());
    for (const auto& p : paths) {
        out.push_back(load_mask(p));
    }
    return out;
}

void cmd_train(const Globals& g, const TrainArgs& a)
{
    cli::RunManifest manifest("train");
    const auto files = mask_files(a.data);
    if (files.empty()) {
        throw ValidationError("no masks found in " + a.data);
    }
    const auto data = load_masks(files);
    for (const auto& f : files) {
        manifest.add_input(f);
    }

    auto dae_cfg = dae::DaeConfig::defaults(data.front().num_classes(), data.front().width());
    if (!a.dae_config.empty()) {
        dae_cfg = read_json(a.dae_config).get<dae::DaeConfig>();
        manifest.add_input(a.dae_config);
    }
    dae::TrainConfig train_cfg;
    if (!a.train_config.empty()) {
        train_cfg = read_json(a.train_config).get<dae::TrainConfig>();
        manifest.add_input(a.train_config);
    }
    if (g.seed_given) {
        train_cfg.seed = g.seed;
    }
    if (a.epochs) {
        train_cfg.epochs = *a.epochs;
    }
    if (a.batch_size) {
        train_cfg.batch_size = *a.batch_size;
    }
    if (a.learning_rate) {
        train_cfg.learning_rate = *a.learning_rate;
    }
    if (a.checkpoint_interval) {
        train_cfg.checkpoint_interval = *a.checkpoint_interval;
    }
    train_cfg.validate();
    dae_cfg.validate();

    const fs::path out(a.out);
    fs::create_directories(out);
    dae::TrainOptions opt;
    if (!a.validation.empty()) {
        const auto vfiles = mask_files(a.validation);
        opt.validation_targets = load_masks(vfiles);
        auto vcfg = train_cfg.degradation;
        vcfg.seed = splitmix64(train_cfg.seed ^ 0x76616c ^ splitmix64(vcfg.seed));
        for (std::size_t i = 0; i < opt.validation_targets.size(); ++i) {
            auto pair = degrade::degrade_pair(opt.validation_targets[i], vcfg, i);
            opt.validation_inputs.push_back(std::move(pair.input));
            opt.validation_targets[i] = std::move(pair.target);
            manifest.add_input(vfiles[i]);
        }
    }
    opt.on_checkpoint = [&](int epoch, const dae::DaeModel& model) {
        const auto path = out / numbered("model_epoch_", static_cast<std::uint64_t>(epoch), ".ckpt");
        model.save(path);
        manifest.add_output(path);
    };
    opt.on_epoch = [](const dae::EpochRecord& r) {
        std::cerr << "epoch " << r.epoch << " loss " << fmt(r.mean_loss);
        if (r.validation_loss) {
            std::cerr << " val " << fmt(*r.validation_loss);
        }
        std::cerr << '\n';
    };

    const auto result = dae::train(data, train_cfg, dae_cfg, opt);
    result.model.save(out / "model_final.ckpt");
    manifest.add_output(out / "model_final.ckpt");

    std::string csv = "epoch,mean_loss";
    csv += opt.validation_inputs.empty() ? "\n" : ",validation_loss\n";
    for (const auto& r : result.history) {
        csv += std::to_string(r.epoch) + "," + fmt(r.mean_loss, 17);
        if (r.validation_loss) {
            csv += "," + fmt(*r.validation_loss, 17);
        }
        csv += "\n";
    }
    write_text(out / "history.csv", csv);
    manifest.add_output(out / "history.csv");

    manifest.set_config({{"dae", dae_cfg}, {"train", train_cfg}});
    manifest.add_seed("train", train_cfg.seed);
    manifest.add_seed("degradation", train_cfg.degradation.seed);
    manifest.write(manifest_path(g, out, "train_manifest.json"));
}

// --- postprocess ------------------------------------------------------------

struct PostprocessArgs {
    std::string model;
    std::string masks;
    std::string out;
};

void cmd_postprocess(const Globals& g, const PostprocessArgs& a)
{
    cli::RunManifest manifest("postprocess");
    const auto model = dae::DaeModel::load(a.model);
    manifest.add_input(a.model);
    const fs::path out(a.out);
    fs::create_directories(out);
    const auto files = list_files(a.masks, "", ".pgm");
    const auto masks = load_masks(files);
    for (const auto& m : masks) {
        if (m.num_classes() != model.config().num_classes) {
            throw ContractError("mask has " + std::to_string(m.num_classes()) + " classes but the model expects " +
                                std::to_string(model.config().num_classes));
        }
    }
    const auto processed = dae::postprocess_batch(model, masks);
    std::string scores = "file,plausibility\n";
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto dst = out / files[i].filename();
        save_mask(processed[i], dst);
        const double score = 1.0 - metrics::foreground_dice(masks[i], processed[i]);
        scores += files[i].filename().string() + "," + fmt(score, 17) + "\n";
        manifest.add_input(files[i]);
        manifest.add_output(dst);
    }
    write_text(out / "scores.csv", scores);
    manifest.add_output(out / "scores.csv");
    manifest.set_config({{"model", a.model}, {"dae", model.config()}});
    manifest.write(manifest_path(g, out, "postprocess_manifest.json"));
}

// --- crf --------------------------------------------------------------------

struct CrfArgs {
    std::string unaries;
    std::string images;
    std::string out;
    std::optional<double> theta_alpha;
    std::optional<double> theta_beta;
    std::optional<double> theta_gamma;
    double w_bilateral = 1.0;
    double w_smooth = 1.0;
    int iterations = 5;
    bool save_soft = false;
};

void cmd_crf(const Globals& g, const CrfArgs& a)
{
    cli::RunManifest manifest("crf");
    auto soft_files = list_files(a.unaries, "soft_", ".json");
    if (soft_files.empty() && fs::is_directory(fs::path(a.unaries) / "soft")) {
        soft_files = list_files(fs::path(a.unaries) / "soft", "soft_", ".json");
    }
    const bool from_masks = soft_files.empty();
    if (from_masks) {
        soft_files = list_files(a.unaries, "", ".pgm");
    }
    const fs::path out(a.out);
    fs::create_directories(out);
    std::optional<crf::CrfParams> resolved;
    for (const auto& path : soft_files) {
        const auto id = trailing_id(path);
        const auto img_path = fs::path(a.images) / numbered("img_", id.value_or(0));
        if (!id || !fs::exists(img_path)) {
            throw ValidationError("no paired image for " + path.string() + " (expected " + img_path.string() + ")");
        }
        const auto unary = from_masks ? one_hot(load_mask(path)) : load_soft_mask(path);
        const auto image = load_image(img_path);
        if (!resolved) {
            auto p = crf::CrfParams::for_size(std::max(image.width(), image.height()));
            p.theta_alpha = a.theta_alpha.value_or(p.theta_alpha);
            p.theta_beta = a.theta_beta.value_or(p.theta_beta);
            p.theta_gamma = a.theta_gamma.value_or(p.theta_gamma);
            p.w_bilateral = a.w_bilateral;
            p.w_smooth = a.w_smooth;
            p.iterations = a.iterations;
            p.validate();
            resolved = p;
        }
        const auto refined = crf::meanfield_infer(unary, image, *resolved);
        const auto dst = out / numbered("crf_", *id);
        save_mask(argmax_labels(refined), dst);
        manifest.add_input(path);
        manifest.add_input(img_path);
        manifest.add_output(dst);
        if (a.save_soft) {
            const auto index = out / "soft" / numbered("crf_soft_", *id, ".json");
            fs::create_directories(index.parent_path());
            save_soft_mask(refined, index);
            manifest.add_output(index);
        }
    }
    if (!resolved) {
        // nothing to refine; still echo the flags that would have been used
        auto p = crf::CrfParams::for_size(64);
        p.theta_alpha = a.theta_alpha.value_or(p.theta_alpha);
        p.theta_beta = a.theta_beta.value_or(p.theta_beta);
        p.theta_gamma = a.theta_gamma.value_or(p.theta_gamma);
        p.w_bilateral = a.w_bilateral;
        p.w_smooth = a.w_smooth;
        p.iterations = a.iterations;
        p.validate();
        resolved = p;
    }
    manifest.set_config({{"crf", *resolved}, {"input_kind", from_masks ? "masks" : "soft"}});
    manifest.write(manifest_path(g, out, "crf_manifest.json"));
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
    std::vector<std::string> preds;
    std::string gt;
    std::string out;
    double alpha = 0.05;
};

void cmd_evaluate(const Globals& g, const EvaluateArgs& a)
{
    cli::RunManifest manifest("evaluate");
    std::map<std::uint64_t, fs::path> gts;
    for (const auto& p : list_files(a.gt, "gt_", ".pgm")) {
        gts[trailing_id(p).value()] = p;
    }
    if (gts.empty()) {
        throw ValidationError("no gt_*.pgm files in " + a.gt);
    }

    std::vector<std::string> names;
    std::vector<metrics::Evaluation> evals;
    std::vector<std::string> ids;
    std::vector<LabelMask> gt_masks;
    for (const auto& [id, path] : gts) {
        ids.push_back(std::to_string(id));
        gt_masks.push_back(load_mask(path));
        manifest.add_input(path);
    }
    for (const auto& spec : a.preds) {
        // either name=dir or a bare directory named after its last component
        const auto eq = spec.find('=');
        const std::string name = eq == std::string::npos ? fs::path(spec).lexically_normal().filename().string()
                                                         : spec.substr(0, eq);
        const fs::path dir = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
        std::map<std::uint64_t, fs::path> preds;
        for (const auto& p : list_files(dir, "", ".pgm")) {
            if (const auto id = trailing_id(p)) {
                preds[*id] = p;
            }
        }
        std::vector<std::string> offenders;
        for (const auto& [id, p] : preds) {
            if (!gts.contains(id)) {
                offenders.push_back(p.filename().string() + " (no ground truth)");
            }
        }
        for (const auto& [id, p] : gts) {
            if (!preds.contains(id)) {
                offenders.push_back(numbered("gt_", id) + " (no prediction in " + dir.string() + ")");
            }
        }
        if (!offenders.empty()) {
            std::string msg = "unmatched files for method '" + name + "':";
            for (const auto& o : offenders) {
                msg += "\n  " + o;
            }
            throw ValidationError(msg);
        }
        std::vector<LabelMask> masks;
        for (const auto& [id, p] : preds) {
            masks.push_back(load_mask(p));
            manifest.add_input(p);
        }
        names.push_back(name);
        evals.push_back(metrics::evaluate_pairs(masks, gt_masks, ids));
    }

    const fs::path out(a.out);
    fs::create_directories(out);
    std::string csv = "method,sample,class,dice,hd\n";
    for (std::size_t m = 0; m < names.size(); ++m) {
        for (const auto& r : evals[m].records) {
            for (std::size_t c = 1; c < r.dice.size(); ++c) {
                csv += names[m] + "," + r.sample + "," + std::to_string(c) + "," + fmt(r.dice[c], 17) + "," +
                       fmt(r.hausdorff[c], 17) + "\n";
            }
        }
    }
    write_text(out / "metrics.csv", csv);

    const auto report = metrics::compare_methods(names, evals, a.alpha);
    json j;
    j["schema_version"] = kReportSchema;
    j["alpha"] = report.alpha;
    j["comparisons"] = report.comparisons;
    j["corrected_alpha"] = report.corrected_alpha;
    j["samples"] = gts.size();
    j["methods"] = json::array();
    for (const auto& m : report.methods) {
        j["methods"].push_back({{"name", m.name},
                                {"dice", {{"mean", m.dice.mean}, {"std", m.dice.stddev}}},
                                {"hausdorff", {{"mean", m.hausdorff.mean}, {"std", m.hausdorff.stddev}}}});
    }
    j["tests"] = json::array();
    for (const auto& t : report.tests) {
        json row{{"method_a", t.method_a}, {"method_b", t.method_b}, {"metric", t.metric}, {"significant", t.significant}};
        row["p_value"] = t.p_value ? json(*t.p_value) : json(nullptr);
        if (!t.note.empty()) {
            row["note"] = t.note;
        }
        j["tests"].push_back(row);
    }
    write_text(out / "report.json", j.dump(2) + "\n");
    manifest.add_output(out / "metrics.csv");
    manifest.add_output(out / "report.json");
    manifest.set_config({{"methods", names}, {"alpha", a.alpha}});
    manifest.write(manifest_path(g, out, "evaluate_manifest.json"));
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
    std::string input;
    std::string out;
};

std::string render_report(const json& j)
{
    if (j.value("schema_version", 0) != kReportSchema) {
        throw FormatError("unsupported report schema version");
    }
    auto cell = [](const json& s, int precision) {
        std::ostringstream o;
        o << std::fixed << std::setprecision(precision) << s.at("mean").get<double>() << " ("
          << s.at("std").get<double>() << ")";
        return o.str();
    };
    std::vector<std::array<std::string, 3>> rows{{"method", "Dice", "HD"}};
    for (const auto& m : j.at("methods")) {
        rows.push_back({m.at("name").get<std::string>(), cell(m.at("dice"), 3), cell(m.at("hausdorff"), 2)});
    }
    std::array<std::size_t, 3> width{};
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < 3; ++c) {
            width[c] = std::max(width[c], r[c].size());
        }
    }
    std::ostringstream o;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        o << std::left << std::setw(static_cast<int>(width[0])) << rows[i][0];
        for (std::size_t c = 1; c < 3; ++c) {
            o << "  " << std::right << std::setw(static_cast<int>(width[c])) << rows[i][c];
        }
        o << '\n';
        if (i == 0) {
            o << std::string(width[0] + width[1] + width[2] + 4, '-') << '\n';
        }
    }
    o << "\nWilcoxon signed-rank, Bonferroni alpha " << fmt(j.at("corrected_alpha").get<double>(), 4) << " ("
      << j.at("comparisons").get<int>() << " comparisons per metric)\n";
    for (const auto& t : j.at("tests")) {
        o << "  " << t.at("method_a").get<std::string>() << " vs " << t.at("method_b").get<std::string>() << "  "
          << std::left << std::setw(9) << t.at("metric").get<std::string>() << " ";
        if (t.at("p_value").is_null()) {
            o << "n/a (" << t.value("note", "") << ")\n";
        } else {
            o << "p=" << fmt(t.at("p_value").get<double>(), 4) << (t.at("significant").get<bool>() ? " *" : "") << '\n';
        }
    }
    return o.str();
}

void cmd_report(const Globals& g, const ReportArgs& a)
{
    cli::RunManifest manifest("report");
    const auto text = render_report(read_json(a.input));
    manifest.add_input(a.input);
    std::cout << text;
    fs::path dir = fs::path(a.input).parent_path();
    if (!a.out.empty()) {
        write_text(a.out, text);
        manifest.add_output(a.out);
        dir = fs::path(a.out).parent_path();
    }
    manifest.write(manifest_path(g, dir.empty() ? fs::path(".") : dir, "report_manifest.json"));
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Post-DAE: anatomical post-processing of segmentation masks with a denoising autoencoder"};
    app.require_subcommand(1);
    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Seed overriding the configured one");
    app.add_option("--threads", g.threads, "Worker threads (results are reproducible per thread count)")
        ->check(CLI::Range(1, 256));
    app.add_option("--manifest-dir", g.manifest_dir, "Directory for the run manifest (default: output dir)");

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Write synthetic image/mask pairs");
    generate->add_option("--config", gen.config, "Scene config JSON");
    generate->add_option("--out", gen.out, "Output directory")->required();
    generate->add_option("--count", gen.count, "Number of scenes");
    generate->add_option("--start", gen.start, "First scene index");

    DegradeArgs deg;
    auto* degrade_cmd = app.add_subcommand("degrade", "Corrupt masks with a severity preset or config");
    degrade_cmd->add_option("--masks", deg.masks, "Mask directory")->required();
    degrade_cmd->add_option("--out", deg.out, "Output directory")->required();
    degrade_cmd->add_option("--severity", deg.severity, "light | moderate | heavy");
    degrade_cmd->add_option("--config", deg.config, "Degradation config JSON (overrides --severity)");

    SegmentArgs seg;
    auto* segment = app.add_subcommand("segment", "Run the weak intensity classifier");
    segment->add_option("--images", seg.images, "Directory of img_*.pgm")->required();
    segment->add_option("--fit", seg.fit, "Dataset directory to fit class Gaussians on");
    segment->add_option("--params", seg.params, "Classifier parameter JSON instead of fitting");
    segment->add_option("--quality", seg.quality, "Noise mixing knob in [0,1]");
    segment->add_option("--smoothing", seg.smoothing, "Box smoothing radius");
    segment->add_option("--out", seg.out, "Output directory")->required();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train the denoising autoencoder");
    train->add_option("--data", tr.data, "Directory of training masks")->required();
    train->add_option("--validation", tr.validation, "Directory of validation masks");
    train->add_option("--out", tr.out, "Output directory")->required();
    train->add_option("--dae-config", tr.dae_config, "Architecture JSON");
    train->add_option("--train-config", tr.train_config, "Training JSON");
    train->add_option("--epochs", tr.epochs);
    train->add_option("--batch-size", tr.batch_size);
    train->add_option("--lr", tr.learning_rate);
    train->add_option("--checkpoint-interval", tr.checkpoint_interval);

    PostprocessArgs pp;
    auto* post = app.add_subcommand("postprocess", "Project masks through a trained model");
    post->add_option("--model", pp.model, "Checkpoint")->required();
    post->add_option("--masks", pp.masks, "Mask directory")->required();
    post->add_option("--out", pp.out, "Output directory")->required();

    CrfArgs cr;
    auto* crf_cmd = app.add_subcommand("crf", "Dense CRF refinement");
    crf_cmd->add_option("--unaries", cr.unaries, "Directory of soft_*.json unaries (also looked up in its soft/ subdirectory) or label masks")->required();
    crf_cmd->add_option("--images", cr.images, "Directory of img_*.pgm")->required();
    crf_cmd->add_option("--out", cr.out, "Output directory")->required();
    crf_cmd->add_option("--theta-alpha", cr.theta_alpha, "Bilateral spatial bandwidth (pixels)");
    crf_cmd->add_option("--theta-beta", cr.theta_beta, "Bilateral intensity bandwidth ([0,1] scale)");
    crf_cmd->add_option("--theta-gamma", cr.theta_gamma, "Smoothness bandwidth (pixels)");
    crf_cmd->add_option("--w-bilateral", cr.w_bilateral);
    crf_cmd->add_option("--w-smooth", cr.w_smooth);
    crf_cmd->add_option("--iterations", cr.iterations);
    crf_cmd->add_flag("--save-soft", cr.save_soft, "Also write the refined soft masks");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score prediction directories against ground truth");
    evaluate->add_option("--pred", ev.preds, "Prediction directory, optionally name=dir (repeatable)")->required();
    evaluate->add_option("--gt", ev.gt, "Directory of gt_*.pgm")->required();
    evaluate->add_option("--out", ev.out, "Output directory")->required();
    evaluate->add_option("--alpha", ev.alpha);

    ReportArgs rp;
    auto* report = app.add_subcommand("report", "Render report.json as a table");
    report->add_option("--input", rp.input, "report.json")->required();
    report->add_option("--out", rp.out, "Also write the table here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }
    g.seed_given = seed_opt->count() > 0;
    set_thread_count(g.threads);

    try {
        if (generate->parsed()) {
            cmd_generate(g, gen);
        } else if (degrade_cmd->parsed()) {
            cmd_degrade(g, deg);
        } else if (segment->parsed()) {
            cmd_segment(g, seg);
        } else if (train->parsed()) {
            cmd_train(g, tr);
        } else if (post->parsed()) {
            cmd_postprocess(g, pp);
        } else if (crf_cmd->parsed()) {
            cmd_crf(g, cr);
        } else if (evaluate->parsed()) {
            cmd_evaluate(g, ev);
        } else if (report->parsed()) {
            cmd_report(g, rp);
        }
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const json::exception& e) {
        std::cerr << "error: bad configuration: " << e.what() << '\n';
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return 0;
}
