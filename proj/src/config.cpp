#include "vseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vseg/errors.hpp"

namespace vseg {
namespace {

using nlohmann::json;

// Reads typed keys from one JSON object and remembers which were consumed so
// leftovers can be reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError("'" + path_ + "' must be an object");
    }

    template <typename T>
    void read(const char* key, T& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end())
            return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError("'" + path_ + "." + key + "' has the wrong type");
        }
    }

    const json* child(const char* key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string path(const char* key) const { return path_ + "." + key; }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown config key '" + path_ + "." + it.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_arch(const json& j, const std::string& path, ArchConfig& arch)
{
    Section s(j, path);
    if (auto k = s.child("kind")) {
        if (!k->is_string())
            throw ConfigError("'" + s.path("kind") + "' must be a string");
        try {
            arch.kind = parse_arch_kind(k->get<std::string>());
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
    s.read("num_scales", arch.num_scales);
    s.read("base_channels", arch.base_channels);
    s.read("per_path_channels", arch.per_path_channels);
    s.read("input_channels", arch.input_channels);
    s.read("deep_supervision", arch.deep_supervision);
    s.read("input_size", arch.input_size);
    s.finish();
}

json arch_json(const ArchConfig& a)
{
    return {{"kind", std::string(to_string(a.kind))},
            {"num_scales", a.num_scales},
            {"base_channels", a.base_channels},
            {"per_path_channels", a.per_path_channels},
            {"input_channels", a.input_channels},
            {"deep_supervision", a.deep_supervision},
            {"input_size", a.input_size}};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    if (p.empty())
        return {};
    std::filesystem::path fp(p);
    return fp.is_absolute() || base.empty() ? fp : base / fp;
}

} // namespace

void RunConfig::apply_seed(std::uint64_t s)
{
    seed = s;
    synth.seed = s;
    train.seed = s;
}

void RunConfig::validate() const
{
    synth.validate();
    train.validate();
    if (images_per_patient < 1)
        throw ConfigError("images_per_patient must be >= 1");
    const double sum = split_ratios[0] + split_ratios[1] + split_ratios[2];
    if (std::abs(sum - 1.0) > 1e-9 || split_ratios[0] <= 0 || split_ratios[1] < 0 || split_ratios[2] < 0)
        throw ConfigError("split ratios must be non-negative, with train > 0, and sum to 1");
    if (folds < 2)
        throw ConfigError("split.folds must be >= 2");
    std::set<std::string> names;
    for (const auto& m : compare) {
        m.arch.validate();
        if (m.name.empty() || m.name.find(',') != std::string::npos)
            throw ConfigError("compare model names must be non-empty and contain no commas");
        if (!names.insert(m.name).second)
            throw ConfigError("duplicate compare model '" + m.name + "'");
        if (m.pretrain_epochs < 0)
            throw ConfigError("pretrain_epochs must be >= 0");
    }
}

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir)
{
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    Section top(root, "config");
    std::uint64_t seed = 0;
    top.read("seed", seed);

    if (auto j = top.child("synth")) {
        Section s(*j, "synth");
        s.read("size", cfg.synth.size);
        s.read("branch_depth", cfg.synth.branch_depth);
        s.read("vessel_width_min", cfg.synth.vessel_width_min);
        s.read("vessel_width_max", cfg.synth.vessel_width_max);
        s.read("noise_sigma", cfg.synth.noise_sigma);
        s.read("illumination_gradient", cfg.synth.illumination_gradient);
        s.read("background", cfg.synth.background);
        s.read("vessel", cfg.synth.vessel);
        s.read("spacing_row_mm", cfg.synth.spacing.row_mm);
        s.read("spacing_col_mm", cfg.synth.spacing.col_mm);
        s.read("images_per_patient", cfg.images_per_patient);
        s.finish();
    }
    cfg.train.arch.input_size = cfg.synth.size;
    if (auto j = top.child("arch"))
        read_arch(*j, "arch", cfg.train.arch);

    if (auto j = top.child("loss")) {
        Section s(*j, "loss");
        s.read("epsilon_clamp", cfg.train.loss.epsilon_clamp);
        s.read("l2_coefficient", cfg.train.loss.l2_coefficient);
        std::string mode(to_string(cfg.train.loss.dice_mode));
        s.read("dice_mode", mode);
        try {
            cfg.train.loss.dice_mode = parse_dice_mode(mode);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        s.finish();
    }

    if (auto j = top.child("train")) {
        Section s(*j, "train");
        s.read("lr", cfg.train.optimizer.lr);
        s.read("rmsprop_alpha", cfg.train.optimizer.alpha);
        s.read("rmsprop_eps", cfg.train.optimizer.eps);
        s.read("lr_decay", cfg.train.lr_decay);
        s.read("batch_size", cfg.train.batch_size);
        s.read("epochs", cfg.train.epochs);
        std::string pretrained, mode = "by_name";
        s.read("pretrained", pretrained);
        s.read("pretrained_mode", mode);
        cfg.pretrained = resolve(base_dir, pretrained);
        if (mode == "strict")
            cfg.pretrained_mode = LoadMode::strict;
        else if (mode == "by_name")
            cfg.pretrained_mode = LoadMode::by_name;
        else
            throw ConfigError("train.pretrained_mode must be 'strict' or 'by_name'");
        s.finish();
    }

    if (auto j = top.child("augment")) {
        Section s(*j, "augment");
        auto& a = cfg.train.augment;
        for (AugmentOp op : kAugmentOrder) {
            const std::string key = std::string(to_string(op));
            s.read(key.c_str(), a.p(op));
        }
        s.read("rotate_max_deg", a.rotate_max_deg);
        s.read("scale_min", a.scale_min);
        s.read("scale_max", a.scale_max);
        s.read("crop_min_fraction", a.crop_min_fraction);
        s.read("shift_max_fraction", a.shift_max_fraction);
        s.read("noise_sigma_max", a.noise_sigma_max);
        s.read("blur_sigma_min", a.blur_sigma_min);
        s.read("blur_sigma_max", a.blur_sigma_max);
        s.finish();
    }

    if (auto j = top.child("split")) {
        Section s(*j, "split");
        s.read("train", cfg.split_ratios[0]);
        s.read("val", cfg.split_ratios[1]);
        s.read("test", cfg.split_ratios[2]);
        s.read("folds", cfg.folds);
        s.finish();
    }

    if (auto j = top.child("paths")) {
        Section s(*j, "paths");
        std::string manifest;
        s.read("manifest", manifest);
        cfg.manifest = resolve(base_dir, manifest);
        s.finish();
    }

    if (auto j = top.child("compare")) {
        Section s(*j, "compare");
        if (auto models = s.child("models")) {
            if (!models->is_array())
                throw ConfigError("'compare.models' must be an array");
            for (std::size_t i = 0; i < models->size(); ++i) {
                const std::string path = "compare.models[" + std::to_string(i) + "]";
                Section m((*models)[i], path);
                CompareModel model;
                model.arch = cfg.train.arch;
                m.read("name", model.name);
                if (auto a = m.child("arch"))
                    read_arch(*a, path + ".arch", model.arch);
                m.read("pretrain_epochs", model.pretrain_epochs);
                m.finish();
                cfg.compare.push_back(std::move(model));
            }
        }
        s.finish();
    }
    top.finish();

    if (cfg.compare.empty())
        cfg.compare = default_compare_models(cfg.train.arch);
    cfg.apply_seed(seed);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("config not found: '" + path.string() + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str(), path.parent_path());
}

std::string dump_run_config(const RunConfig& c)
{
    json augment;
    for (AugmentOp op : kAugmentOrder)
        augment[std::string(to_string(op))] = c.train.augment.p(op);
    augment["rotate_max_deg"] = c.train.augment.rotate_max_deg;
    augment["scale_min"] = c.train.augment.scale_min;
    augment["scale_max"] = c.train.augment.scale_max;
    augment["crop_min_fraction"] = c.train.augment.crop_min_fraction;
    augment["shift_max_fraction"] = c.train.augment.shift_max_fraction;
    augment["noise_sigma_max"] = c.train.augment.noise_sigma_max;
    augment["blur_sigma_min"] = c.train.augment.blur_sigma_min;
    augment["blur_sigma_max"] = c.train.augment.blur_sigma_max;

    json models = json::array();
    for (const auto& m : c.compare)
        models.push_back({{"name", m.name}, {"arch", arch_json(m.arch)}, {"pretrain_epochs", m.pretrain_epochs}});

    json root = {
        {"seed", c.seed},
        {"synth",
         {{"size", c.synth.size},
          {"branch_depth", c.synth.branch_depth},
          {"vessel_width_min", c.synth.vessel_width_min},
          {"vessel_width_max", c.synth.vessel_width_max},
          {"noise_sigma", c.synth.noise_sigma},
          {"illumination_gradient", c.synth.illumination_gradient},
          {"background", c.synth.background},
          {"vessel", c.synth.vessel},
          {"spacing_row_mm", c.synth.spacing.row_mm},
          {"spacing_col_mm", c.synth.spacing.col_mm},
          {"images_per_patient", c.images_per_patient}}},
        {"arch", arch_json(c.train.arch)},
        {"loss",
         {{"epsilon_clamp", c.train.loss.epsilon_clamp},
          {"l2_coefficient", c.train.loss.l2_coefficient},
          {"dice_mode", std::string(to_string(c.train.loss.dice_mode))}}},
        {"train",
         {{"lr", c.train.optimizer.lr},
          {"rmsprop_alpha", c.train.optimizer.alpha},
          {"rmsprop_eps", c.train.optimizer.eps},
          {"lr_decay", c.train.lr_decay},
          {"batch_size", c.train.batch_size},
          {"epochs", c.train.epochs},
          {"pretrained", c.pretrained.string()},
          {"pretrained_mode", c.pretrained_mode == LoadMode::strict ? "strict" : "by_name"}}},
        {"augment", augment},
        {"split",
         {{"train", c.split_ratios[0]}, {"val", c.split_ratios[1]}, {"test", c.split_ratios[2]}, {"folds", c.folds}}},
        {"paths", {{"manifest", c.manifest.string()}}},
        {"compare", {{"models", models}}},
    };
    return root.dump(2) + "\n";
}

std::vector<CompareModel> default_compare_models(const ArchConfig& base)
{
    auto with = [&](ArchKind kind, bool ds) {
        ArchConfig a = base;
        a.kind = kind;
        a.deep_supervision = ds;
        return a;
    };
    return {
        {"U-Net", with(ArchKind::unet, false), 0},
        {"U-Net++", with(ArchKind::unetpp, false), 0},
        {"U-Net3+ w/o DS", with(ArchKind::unet3p, false), 0},
        {"U-Net3+", with(ArchKind::unet3p, true), 0},
    };
}

} // namespace vseg
