#include "vseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <thread>

#include "vseg/errors.hpp"
#include "vseg/postproc.hpp"
#include "vseg/rng.hpp"

namespace vseg {

void TrainConfig::validate() const
{
    arch.validate();
    loss.validate();
    augment.validate();
    if (!(optimizer.lr > 0))
        throw ConfigError("learning rate must be > 0");
    if (!(optimizer.alpha >= 0 && optimizer.alpha < 1) || !(optimizer.eps > 0))
        throw ConfigError("rmsprop alpha must lie in [0, 1) and eps must be > 0");
    if (!(lr_decay >= 0 && lr_decay < 1))
        throw ConfigError("lr_decay must lie in [0, 1)");
    if (batch_size < 1)
        throw ConfigError("batch_size must be >= 1");
    if (epochs < 1)
        throw ConfigError("epochs must be >= 1");
}

namespace {

std::string fixed(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Stacks images (or masks) into a [B,1,H,W] tensor.
Tensor<float> stack_images(const std::vector<const Image*>& images)
{
    const int h = images.front()->height, w = images.front()->width;
    Tensor<float> out(Shape{static_cast<int>(images.size()), 1, h, w});
    auto dst = out.values().begin();
    for (const Image* im : images)
        dst = std::copy(im->values.begin(), im->values.end(), dst);
    return out;
}

Tensor<float> stack_masks(const std::vector<const BinaryMask*>& masks)
{
    const int h = masks.front()->height(), w = masks.front()->width();
    Tensor<float> out(Shape{static_cast<int>(masks.size()), 1, h, w});
    auto dst = out.values().begin();
    for (const BinaryMask* m : masks)
        dst = std::transform(m->bits.values.begin(), m->bits.values.end(), dst,
                             [](std::uint8_t b) { return b ? 1.0f : 0.0f; });
    return out;
}

std::vector<const Sample*> resolve(std::span<const Sample> samples, const std::vector<std::string>& ids,
                                   const char* what)
{
    std::map<std::string, const Sample*> by_id;
    for (const auto& s : samples)
        by_id[s.id] = &s;
    std::vector<const Sample*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw UsageError(std::string(what) + " id '" + id + "' not present in the dataset");
        out.push_back(it->second);
    }
    return out;
}

void check_shapes(const std::vector<const Sample*>& set, const ArchConfig& arch)
{
    for (const Sample* s : set) {
        s->validate();
        if (s->image.height != arch.input_size || s->image.width != arch.input_size)
            throw DimensionError("sample '" + s->id + "' is " + std::to_string(s->image.height) + "x" +
                                 std::to_string(s->image.width) + " but the network expects " +
                                 std::to_string(arch.input_size) + "x" + std::to_string(arch.input_size));
    }
}

ProbabilityMap to_map(const Tensor<float>& t, int b)
{
    const int h = t.shape()[2], w = t.shape()[3];
    ProbabilityMap map(h, w);
    const auto src = t.values().subspan(static_cast<std::size_t>(b) * h * w, static_cast<std::size_t>(h) * w);
    std::copy(src.begin(), src.end(), map.values.begin());
    return map;
}

// Runs `fn(i)` for i in [0, n) over `threads` workers with static striding.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn)
{
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(0, i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers)
                    fn(w, i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& history)
{
    os << kHistoryHeader << '\n';
    for (const auto& r : history)
        os << r.epoch << ',' << fixed(r.train_loss) << ',' << fixed(r.train_bce) << ',' << fixed(r.train_dice_term)
           << ',' << fixed(r.train_l2) << ',' << fixed(r.val_dsc) << '\n';
}

ProbabilityMap predict(Network<float>& network, const Image& image)
{
    GradTape<float> tape(false);
    const Variable<float> x(stack_images({&image}));
    const auto out = network.forward(tape, x, NormMode::eval);
    return to_map(out.final.value(), 0);
}

BinaryMask predict_mask(Network<float>& network, const Image& image, Spacing spacing)
{
    const auto map = predict(network, image);
    return binarize(map, otsu_threshold(map).threshold, spacing);
}

double mean_dsc(Network<float>& network, std::span<const Sample* const> samples)
{
    if (samples.empty())
        return 0;
    double sum = 0;
    for (const Sample* s : samples)
        sum += dsc_binary(confusion(predict_mask(network, s->image, s->spacing()), s->mask));
    return sum / static_cast<double>(samples.size());
}

TrainResult train(const TrainConfig& config, std::span<const Sample> samples, const SplitPlan& plan,
                  const TrainOptions& options)
{
    config.validate();
    if (samples.empty())
        throw UsageError("training dataset is empty");
    const auto train_set = resolve(samples, plan.train, "train");
    if (train_set.empty())
        throw UsageError("split plan has no training images");
    const auto val_set = plan.val.empty() ? train_set : resolve(samples, plan.val, "validation");
    check_shapes(train_set, config.arch);
    check_shapes(val_set, config.arch);

    Network<float> net = build_network<float>(config.arch, config.seed);
    if (options.pretrained)
        load_pretrained(*options.pretrained, net, options.pretrained_mode);
    RmsProp optimizer(config.optimizer);
    Rng order_rng(splitmix64(config.seed ^ 0x5eed0f0e5ULL));

    TrainResult result;
    result.best_val_dsc = -1;
    std::vector<std::size_t> order(train_set.size());
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        optimizer.config().lr = config.optimizer.lr * std::pow(1.0 - config.lr_decay, epoch - 1);
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.below(i)]);

        HistoryRow row;
        row.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<Sample> batch;
            for (std::size_t k = start; k < end; ++k) {
                // Each draw gets its own stream so batches could be prepared ahead.
                const std::uint64_t index = static_cast<std::uint64_t>(epoch - 1) * order.size() + k;
                Rng aug_rng(splitmix64(config.seed ^ index));
                batch.push_back(random_augment(*train_set[order[k]], aug_rng, config.augment).sample);
            }
            std::vector<const Image*> images;
            std::vector<const BinaryMask*> masks;
            for (const auto& s : batch) {
                images.push_back(&s.image);
                masks.push_back(&s.mask);
            }

            GradTape<float> tape;
            const Variable<float> x(stack_images(images));
            const auto out = net.forward(tape, x, NormMode::train);
            const auto loss = hybrid_loss(tape, out, stack_masks(masks), net, config.loss);
            if (!std::isfinite(loss.breakdown.total))
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
            tape.backward(loss.total);
            optimizer.step(net);
            net.zero_grad();

            row.train_loss += loss.breakdown.total;
            row.train_bce += loss.breakdown.bce;
            row.train_dice_term += loss.breakdown.dice_term;
            row.train_l2 += loss.breakdown.l2;
            ++batches;
        }
        row.train_loss /= static_cast<double>(batches);
        row.train_bce /= static_cast<double>(batches);
        row.train_dice_term /= static_cast<double>(batches);
        row.train_l2 /= static_cast<double>(batches);
        row.val_dsc = mean_dsc(net, val_set);
        result.history.push_back(row);
        if (options.on_epoch)
            options.on_epoch(row);

        if (row.val_dsc > result.best_val_dsc) {
            result.best_val_dsc = row.val_dsc;
            result.best_epoch = epoch;
            result.best = make_checkpoint(net, epoch, &optimizer, &order_rng);
        }
    }
    result.last = make_checkpoint(net, config.epochs, &optimizer, &order_rng);
    return result;
}

MetricsReport evaluate_network(const Network<float>& network, std::span<const Sample> samples,
                               const std::string& model, int threads)
{
    if (samples.empty())
        throw UsageError("evaluation subset is empty");
    MetricsReport report;
    report.model = model;
    report.images.resize(samples.size());
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                                                        samples.size());
    // Copies share parameter storage but own their batch-norm state, so eval
    // forwards can run side by side.
    std::vector<Network<float>> nets(workers, network);
    parallel_for(samples.size(), static_cast<int>(workers), [&](std::size_t w, std::size_t i) {
        const Sample& s = samples[i];
        if (s.image.height != network.config().input_size || s.image.width != network.config().input_size)
            throw DimensionError("sample '" + s.id + "' does not match the network input size");
        report.images[i] = compute_metrics(s.id, predict_mask(nets[w], s.image, s.spacing()), s.mask);
    });
    return report;
}

MetricsReport evaluate(const Checkpoint& checkpoint, std::span<const Sample> samples, const std::string& model,
                       int threads)
{
    return evaluate_network(network_from_checkpoint(checkpoint), samples, model, threads);
}

MetricsReport evaluate_predictions(std::span<const BinaryMask> predictions, std::span<const Sample> samples,
                                   const std::string& model)
{
    if (samples.empty())
        throw UsageError("evaluation subset is empty");
    if (predictions.size() != samples.size())
        throw UsageError("prediction count does not match sample count");
    MetricsReport report;
    report.model = model;
    for (std::size_t i = 0; i < samples.size(); ++i)
        report.images.push_back(compute_metrics(samples[i].id, predictions[i], samples[i].mask));
    return report;
}

ComparisonTable run_ablation(const std::vector<AblationEntry>& entries, std::span<const Sample> samples, int folds,
                             std::uint64_t seed, int threads)
{
    if (entries.size() < 2)
        throw UsageError("ablation needs at least two configurations");
    std::vector<ItemRef> items;
    for (const auto& s : samples)
        items.push_back({s.id, s.patient_id});
    const auto plans = kfold(items, folds, seed);

    ComparisonTable table;
    table.pooled.resize(entries.size());
    table.per_fold.resize(entries.size());
    for (std::size_t e = 0; e < entries.size(); ++e) {
        table.pooled[e].model = entries[e].name;
        for (std::size_t f = 0; f < plans.size(); ++f) {
            const auto test_ptrs = resolve(samples, plans[f].test, "test");
            std::vector<Sample> test;
            for (const Sample* s : test_ptrs)
                test.push_back(*s);

            TrainOptions options;
            Checkpoint pretrained;
            if (entries[e].pretrain) {
                pretrained = train(*entries[e].pretrain, samples, plans[f]).best;
                options.pretrained = &pretrained;
                options.pretrained_mode = LoadMode::by_name;
            }
            const auto trained = train(entries[e].config, samples, plans[f], options);
            auto report = evaluate(trained.best, test, entries[e].name, threads);
            report.fold = static_cast<int>(f);
            table.pooled[e].images.insert(table.pooled[e].images.end(), report.images.begin(), report.images.end());
            table.per_fold[e].push_back(std::move(report));
        }
    }
    return table;
}

void write_comparison_csv(std::ostream& os, const ComparisonTable& table)
{
    write_summary_csv(os, table.pooled);
}

void write_fold_series_csv(std::ostream& os, const ComparisonTable& table, const std::string& metric)
{
    auto pick = [&](const MetricsReport& r) {
        if (metric == "DSC")
            return r.dsc();
        if (metric == "SN")
            return r.sn();
        if (metric == "SP")
            return r.sp();
        if (metric == "HD")
            return r.hd();
        if (metric == "ASD")
            return r.asd();
        throw UsageError("unknown metric '" + metric + "'");
    };
    os << "fold";
    for (const auto& r : table.pooled)
        os << ',' << r.model;
    os << '\n';
    const std::size_t k = table.per_fold.empty() ? 0 : table.per_fold.front().size();
    for (std::size_t f = 0; f < k; ++f) {
        os << f + 1;
        for (const auto& entry : table.per_fold) {
            const auto s = pick(entry[f]);
            os << ',' << (s.count ? format_metric(s.mean) : std::string("undefined"));
        }
        os << '\n';
    }
}

} // namespace vseg
