#include "vseg/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vseg/errors.hpp"
#include "vseg/io.hpp"
#include "vseg/postproc.hpp"
#include "vseg/rng.hpp"
#include "vseg/synth.hpp"

namespace vseg {
namespace {

namespace fs = std::filesystem;

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw FormatError("cannot create output directory '" + dir.string() + "'");
}

std::ofstream open_text(const fs::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw FormatError("cannot write '" + path.string() + "'");
    return os;
}

std::string numbered(const char* prefix, int i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04d", prefix, i);
    return buf;
}

void write_report(const fs::path& dir, const std::string& stem, const MetricsReport& report)
{
    auto os = open_text(dir / (stem + ".csv"));
    write_summary_csv(os, {report});
}

std::vector<Sample> load_manifest_or_throw(const fs::path& manifest)
{
    if (manifest.empty())
        throw UsageError("no manifest given (set paths.manifest or pass --manifest)");
    auto samples = load_dataset(manifest);
    if (samples.empty())
        throw UsageError("manifest '" + manifest.string() + "' lists no images");
    return samples;
}

} // namespace

void cmd_gen(const RunConfig& config, int count, const fs::path& out_dir)
{
    if (count <= 0)
        throw UsageError("gen --count must be >= 1");
    config.synth.validate();
    ensure_dir(out_dir);
    std::vector<ManifestRow> rows;
    for (int i = 0; i < count; ++i) {
        SynthConfig sc = config.synth;
        sc.seed = splitmix64(config.seed ^ static_cast<std::uint64_t>(i));
        const std::string id = numbered("img_", i);
        const std::string patient = numbered("P", i / config.images_per_patient);
        const Sample s = generate(sc, id, patient);
        const std::string image_file = id + ".pgm";
        const std::string mask_file = numbered("mask_", i) + ".pgm";
        write_pgm(out_dir / image_file, s.image);
        write_mask_pgm(out_dir / mask_file, s.mask);
        rows.push_back({id, image_file, mask_file, patient, s.view_tag, s.spacing().row_mm, s.spacing().col_mm});
    }
    write_manifest(out_dir / "manifest.csv", rows);
}

TrainResult cmd_train(const RunConfig& config, const fs::path& out_dir, int threads, std::ostream& log)
{
    const auto samples = load_manifest_or_throw(config.manifest);
    std::vector<ItemRef> items;
    for (const auto& s : samples)
        items.push_back({s.id, s.patient_id});
    const SplitPlan plan = split(items, config.split_ratios, config.seed);

    Checkpoint pretrained;
    TrainOptions options;
    if (!config.pretrained.empty()) {
        pretrained = load_checkpoint(config.pretrained);
        options.pretrained = &pretrained;
        options.pretrained_mode = config.pretrained_mode;
    }
    options.on_epoch = [&](const HistoryRow& r) {
        log << "epoch " << r.epoch << "/" << config.train.epochs << "  loss " << r.train_loss << "  val_dsc "
            << r.val_dsc << '\n';
    };

    ensure_dir(out_dir);
    const TrainResult result = train(config.train, samples, plan, options);

    save_checkpoint(out_dir / "checkpoint.vnck", result.best);
    save_checkpoint(out_dir / "last.vnck", result.last);
    {
        auto os = open_text(out_dir / "history.csv");
        write_history_csv(os, result.history);
    }
    {
        auto os = open_text(out_dir / "split.csv");
        os << "id,partition\n";
        for (const auto& id : plan.train)
            os << id << ",train\n";
        for (const auto& id : plan.val)
            os << id << ",val\n";
        for (const auto& id : plan.test)
            os << id << ",test\n";
    }
    {
        auto os = open_text(out_dir / "config.json");
        os << dump_run_config(config);
    }
    if (!plan.test.empty()) {
        std::vector<Sample> test;
        for (const auto& s : samples)
            if (std::find(plan.test.begin(), plan.test.end(), s.id) != plan.test.end())
                test.push_back(s);
        const auto report = evaluate(result.best, test, std::string(to_string(config.train.arch.kind)), threads);
        write_report(out_dir, "test_metrics", report);
    }
    log << "best epoch " << result.best_epoch << "  val_dsc " << result.best_val_dsc << '\n';
    return result;
}

PredictOutputs cmd_predict(const fs::path& checkpoint, const fs::path& image, const fs::path& out_dir, bool overlay,
                           Spacing spacing)
{
    Network<float> net = network_from_checkpoint(load_checkpoint(checkpoint));
    const Image img = read_pgm(image);
    const int size = net.config().input_size;
    if (img.height != size || img.width != size)
        throw DimensionError("image '" + image.string() + "' is " + std::to_string(img.height) + "x" +
                             std::to_string(img.width) + " but the checkpoint expects " + std::to_string(size) + "x" +
                             std::to_string(size));
    const ProbabilityMap map = predict(net, img);
    const BinaryMask mask = binarize(map, otsu_threshold(map).threshold, spacing);

    ensure_dir(out_dir);
    const std::string stem = image.stem().string();
    PredictOutputs out{out_dir / (stem + ".pmap"), out_dir / (stem + "_mask.pgm"), {}};
    write_pmap(out.pmap, map);
    write_mask_pgm(out.mask, mask);
    if (overlay) {
        Image over = img;
        for (std::size_t i = 0; i < over.size(); ++i)
            if (mask.bits.values[i])
                over.values[i] = 1.0f;
        out.overlay = out_dir / (stem + "_overlay.pgm");
        write_pgm(out.overlay, over);
    }
    return out;
}

MetricsReport cmd_eval(const std::optional<fs::path>& checkpoint, const fs::path& manifest, const fs::path& out_dir,
                       bool oracle, int threads)
{
    const auto samples = load_manifest_or_throw(manifest);
    MetricsReport report;
    if (oracle) {
        std::vector<BinaryMask> truth;
        for (const auto& s : samples)
            truth.push_back(s.mask);
        report = evaluate_predictions(truth, samples, "oracle");
    } else {
        if (!checkpoint || checkpoint->empty())
            throw UsageError("eval needs --checkpoint unless --oracle is given");
        report = evaluate(load_checkpoint(*checkpoint), samples, checkpoint->stem().string(), threads);
    }
    ensure_dir(out_dir);
    write_report(out_dir, "metrics", report);
    auto os = open_text(out_dir / "per_image.csv");
    write_per_image_csv(os, report);
    return report;
}

ComparisonTable cmd_compare(const RunConfig& config, int folds, const fs::path& out_dir, int threads,
                            std::ostream& log)
{
    const auto samples = load_manifest_or_throw(config.manifest);
    std::vector<AblationEntry> entries;
    for (const auto& m : config.compare) {
        AblationEntry e;
        e.name = m.name;
        e.config = config.train;
        e.config.arch = m.arch;
        if (m.pretrain_epochs > 0) {
            TrainConfig pre = e.config;
            pre.epochs = m.pretrain_epochs;
            pre.seed = splitmix64(config.seed ^ hash_string("pretrain"));
            e.pretrain = pre;
        }
        entries.push_back(std::move(e));
    }
    ensure_dir(out_dir);
    log << "comparing " << entries.size() << " models over " << folds << " folds\n";
    const ComparisonTable table = run_ablation(entries, samples, folds, config.seed, threads);

    {
        auto os = open_text(out_dir / "comparison.csv");
        write_comparison_csv(os, table);
    }
    for (const char* metric : {"DSC", "SN", "SP", "HD", "ASD"}) {
        auto os = open_text(out_dir / (std::string("fold_") + metric + ".csv"));
        write_fold_series_csv(os, table, metric);
    }
    for (const auto& r : table.pooled)
        log << r.model << "  DSC " << format_metric(r.dsc().mean) << '\n';
    return table;
}

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const NumericalError*>(&e))
        return 3;
    if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
        dynamic_cast<const LoadError*>(&e) || dynamic_cast<const SplitError*>(&e) ||
        dynamic_cast<const EmptySetError*>(&e))
        return 2;
    return 1;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Coronary vessel segmentation with U-Net, U-Net++ and U-Net 3+", "vseg"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "vseg_out";
    int threads = 1;
    app.add_option("--config", config_path, "JSON run configuration")->option_text("PATH");
    app.add_option("--seed", seed, "Overrides the configured seed")->option_text("U64");
    app.add_option("--out", out_dir, "Output directory")->option_text("DIR");
    app.add_option("--threads", threads, "Worker threads for evaluation")->check(CLI::PositiveNumber);

    auto* gen = app.add_subcommand("gen", "Write a synthetic angiogram dataset");
    int count = 0;
    gen->add_option("--count", count, "Number of images")->required();

    auto* train_cmd = app.add_subcommand("train", "Train a network on a manifest");
    std::string manifest;
    train_cmd->add_option("--manifest", manifest, "Overrides paths.manifest");

    auto* predict_cmd = app.add_subcommand("predict", "Segment one image");
    std::string checkpoint, image;
    bool overlay = false;
    predict_cmd->add_option("--checkpoint", checkpoint)->required();
    predict_cmd->add_option("--image", image)->required();
    predict_cmd->add_flag("--overlay", overlay, "Also write the image with the mask drawn in white");

    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a manifest");
    std::string eval_checkpoint;
    bool oracle = false;
    eval_cmd->add_option("--checkpoint", eval_checkpoint);
    eval_cmd->add_option("--manifest", manifest, "Overrides paths.manifest");
    eval_cmd->add_flag("--oracle", oracle, "Score the ground truth against itself");

    auto* compare_cmd = app.add_subcommand("compare", "Cross-validated comparison of the configured models");
    std::optional<int> folds;
    compare_cmd->add_option("--folds", folds, "Overrides split.folds");
    compare_cmd->add_option("--manifest", manifest, "Overrides paths.manifest");

    for (auto* sub : {gen, train_cmd, predict_cmd, eval_cmd, compare_cmd})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig config = config_path.empty() ? parse_run_config("{}") : load_run_config(config_path);
        if (seed)
            config.apply_seed(*seed);
        if (!manifest.empty())
            config.manifest = manifest;

        if (*gen) {
            cmd_gen(config, count, out_dir);
            out << "wrote " << count << " images to " << out_dir << '\n';
        } else if (*train_cmd) {
            cmd_train(config, out_dir, threads, out);
        } else if (*predict_cmd) {
            const auto res = cmd_predict(checkpoint, image, out_dir, overlay, config.synth.spacing);
            out << "wrote " << res.pmap.string() << '\n';
        } else if (*eval_cmd) {
            const std::optional<fs::path> ck =
                eval_checkpoint.empty() ? std::nullopt : std::optional<fs::path>(eval_checkpoint);
            const auto report = cmd_eval(ck, config.manifest, out_dir, oracle, threads);
            write_summary_csv(out, {report});
        } else if (*compare_cmd) {
            cmd_compare(config, folds.value_or(config.folds), out_dir, threads, out);
        }
    } catch (const std::exception& e) {
        err << "vseg: error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 0;
}

} // namespace vseg
