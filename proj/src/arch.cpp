#include "vseg/arch.hpp"

#include <cmath>

#include "vseg/errors.hpp"
#include "vseg/rng.hpp"

namespace vseg {

std::string_view to_string(ArchKind kind)
{
    switch (kind) {
    case ArchKind::unet: return "unet";
    case ArchKind::unetpp: return "unetpp";
    case ArchKind::unet3p: return "unet3p";
    }
    return "unknown";
}

ArchKind parse_arch_kind(std::string_view name)
{
    if (name == "unet")
        return ArchKind::unet;
    if (name == "unetpp")
        return ArchKind::unetpp;
    if (name == "unet3p")
        return ArchKind::unet3p;
    throw ConfigError("unknown architecture kind '" + std::string(name) + "'");
}

void ArchConfig::validate() const
{
    if (num_scales < 2)
        throw BuildError("num_scales must be >= 2");
    if (base_channels < 1 || input_channels < 1 || per_path_channels < 0)
        throw BuildError("channel counts must be positive");
    if (input_size < 1 || (input_size & (input_size - 1)) != 0)
        throw BuildError("input_size must be a power of two");
    const int deepest = 1 << (num_scales - 1);
    if (input_size % deepest != 0 || input_size < deepest)
        throw BuildError("input_size " + std::to_string(input_size) + " is not divisible by 2^(N-1) = " +
                         std::to_string(deepest));
    if (deep_supervision && kind != ArchKind::unet3p)
        throw BuildError("deep supervision is only defined for unet3p");
}

template <typename T>
Network<T>::Network(ArchConfig config, std::uint64_t seed) : config_(config), seed_(seed)
{
}

template <typename T>
const typename Network<T>::Param* Network<T>::find_param(std::string_view name) const
{
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
typename Network<T>::Param* Network<T>::find_param(std::string_view name)
{
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
std::size_t Network<T>::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_)
        n += p.value.numel();
    return n;
}

template <typename T>
void Network<T>::zero_grad()
{
    for (auto& p : params_)
        p.value.zero_grad();
}

// Each parameter draws from its own stream keyed by (seed, name), so two
// architectures sharing a parameter name and shape initialise it identically.
template <typename T>
Variable<T>& Network<T>::new_param(const std::string& name, Shape shape, double bound, bool weight_decay,
                                   double fill)
{
    if (index_.count(name))
        throw BuildError("duplicate parameter name '" + name + "'");
    Tensor<T> value(std::move(shape));
    if (bound > 0) {
        Rng rng(splitmix64(seed_ ^ hash_string(name)));
        for (T& v : value.values())
            v = static_cast<T>(rng.uniform(-bound, bound));
    } else {
        value.fill(static_cast<T>(fill));
    }
    index_[name] = params_.size();
    params_.push_back({name, Variable<T>(std::move(value), true), weight_decay});
    return params_.back().value;
}

template <typename T>
int Network<T>::push(PlanStep step)
{
    for (int in : step.inputs)
        if (in < 0 || in >= static_cast<int>(plan_.size()))
            throw BuildError("plan step '" + step.label + "' consumes a step that does not exist yet");
    plan_.push_back(std::move(step));
    return static_cast<int>(plan_.size()) - 1;
}

template <typename T>
int Network<T>::add_input()
{
    PlanStep s;
    s.kind = StepKind::input;
    s.role = StepRole::input;
    s.label = "input";
    s.channels = config_.input_channels;
    s.size = config_.input_size;
    return push(std::move(s));
}

template <typename T>
int Network<T>::add_conv_bn_relu(int input, int out_channels, StepRole role, std::string label, std::string name)
{
    const int in_channels = step(input).channels;
    const double fan_in = in_channels * 9.0;
    new_param(name + ".weight", Shape{out_channels, in_channels, 3, 3}, std::sqrt(6.0 / fan_in), true, 0);
    new_param(name + ".bn.gamma", Shape{out_channels}, 0, false, 1.0);
    new_param(name + ".bn.beta", Shape{out_channels}, 0, false, 0.0);
    norms_.emplace(name + ".bn", BatchNormState<T>(out_channels));

    PlanStep s;
    s.kind = StepKind::conv_bn_relu;
    s.role = role;
    s.label = std::move(label);
    s.inputs = {input};
    s.channels = out_channels;
    s.size = step(input).size;
    s.kernel = 3;
    s.param = std::move(name);
    return push(std::move(s));
}

template <typename T>
int Network<T>::add_conv(int input, int out_channels, int kernel, StepRole role, std::string label, std::string name)
{
    const int in_channels = step(input).channels;
    const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
    new_param(name + ".weight", Shape{out_channels, in_channels, kernel, kernel}, std::sqrt(6.0 / fan_in), true, 0);
    new_param(name + ".bias", Shape{out_channels}, 0, false, 0.0);

    PlanStep s;
    s.kind = StepKind::conv;
    s.role = role;
    s.label = std::move(label);
    s.inputs = {input};
    s.channels = out_channels;
    s.size = step(input).size;
    s.kernel = kernel;
    s.param = std::move(name);
    return push(std::move(s));
}

template <typename T>
int Network<T>::add_pool(int input, int factor, StepRole role)
{
    const PlanStep& src = step(input);
    if (src.size % factor != 0)
        throw BuildError("max-pool stride " + std::to_string(factor) + " does not divide spatial size " +
                         std::to_string(src.size));
    PlanStep s;
    s.kind = StepKind::max_pool;
    s.role = role;
    s.label = "pool" + std::to_string(factor) + "(" + src.label + ")";
    s.inputs = {input};
    s.channels = src.channels;
    s.size = src.size / factor;
    s.factor = factor;
    return push(std::move(s));
}

template <typename T>
int Network<T>::add_upsample(int input, int factor, StepRole role)
{
    const PlanStep& src = step(input);
    PlanStep s;
    s.kind = StepKind::upsample;
    s.role = role;
    s.label = "up" + std::to_string(factor) + "(" + src.label + ")";
    s.inputs = {input};
    s.channels = src.channels;
    s.size = src.size * factor;
    s.factor = factor;
    return push(std::move(s));
}

template <typename T>
int Network<T>::add_concat(std::vector<int> inputs, StepRole role, std::string label)
{
    PlanStep s;
    s.kind = StepKind::concat;
    s.role = role;
    s.label = std::move(label);
    s.size = step(inputs.at(0)).size;
    for (int in : inputs) {
        if (step(in).size != s.size)
            throw BuildError("concat inputs of '" + s.label + "' disagree on spatial size");
        s.channels += step(in).channels;
    }
    s.inputs = std::move(inputs);
    return push(std::move(s));
}

template <typename T>
int Network<T>::add_sigmoid(int input, StepRole role, std::string label)
{
    PlanStep s;
    s.kind = StepKind::sigmoid;
    s.role = role;
    s.label = std::move(label);
    s.inputs = {input};
    s.channels = step(input).channels;
    s.size = step(input).size;
    return push(std::move(s));
}

template <typename T>
ForwardOutput<T> Network<T>::forward(GradTape<T>& tape, const Variable<T>& batch, NormMode mode)
{
    if (final_step_ < 0)
        throw UsageError("network has no output head");
    const Shape& shape = batch.shape();
    if (shape.size() != 4 || shape[1] != config_.input_channels || shape[2] != config_.input_size ||
        shape[3] != config_.input_size)
        throw DimensionError("network expects [B," + std::to_string(config_.input_channels) + "," +
                             std::to_string(config_.input_size) + "," + std::to_string(config_.input_size) +
                             "] input, got " + shape_string(shape));

    auto param = [this](const std::string& name) -> const Variable<T>& { return params_[index_.at(name)].value; };

    std::vector<Variable<T>> values(plan_.size());
    for (std::size_t id = 0; id < plan_.size(); ++id) {
        const PlanStep& s = plan_[id];
        switch (s.kind) {
        case StepKind::input:
            values[id] = batch;
            break;
        case StepKind::conv_bn_relu: {
            auto y = conv2d(tape, values[s.inputs[0]], param(s.param + ".weight"), Variable<T>(), 1, 1);
            y = batch_norm(tape, y, param(s.param + ".bn.gamma"), param(s.param + ".bn.beta"),
                           norms_.at(s.param + ".bn"), mode);
            values[id] = relu(tape, y);
            break;
        }
        case StepKind::conv:
            values[id] = conv2d(tape, values[s.inputs[0]], param(s.param + ".weight"), param(s.param + ".bias"), 1,
                                s.kernel / 2);
            break;
        case StepKind::max_pool:
            values[id] = max_pool2d(tape, values[s.inputs[0]], s.factor, s.factor);
            break;
        case StepKind::upsample:
            values[id] = upsample_bilinear(tape, values[s.inputs[0]], s.factor);
            break;
        case StepKind::concat: {
            std::vector<Variable<T>> parts;
            parts.reserve(s.inputs.size());
            for (int in : s.inputs)
                parts.push_back(values[in]);
            values[id] = concat_channels<T>(tape, parts);
            break;
        }
        case StepKind::sigmoid:
            values[id] = sigmoid(tape, values[s.inputs[0]]);
            break;
        }
    }

    ForwardOutput<T> out;
    out.final = values[final_step_];
    for (int side : side_steps_)
        out.side_outputs.push_back(values[side]);
    return out;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const
{
    Network<U> out(config_, seed_);
    out.plan_ = plan_;
    out.index_ = index_;
    out.final_step_ = final_step_;
    out.side_steps_ = side_steps_;
    for (const auto& p : params_)
        out.params_.push_back({p.name, Variable<U>(p.value.value().template cast<U>(), true), p.weight_decay});
    for (const auto& [name, st] : norms_) {
        BatchNormState<U> ns;
        ns.running_mean = st.running_mean.template cast<U>();
        ns.running_var = st.running_var.template cast<U>();
        ns.momentum = st.momentum;
        ns.epsilon = st.epsilon;
        out.norms_.emplace(name, std::move(ns));
    }
    return out;
}

template <typename T>
std::vector<EncoderStage> build_encoder(Network<T>& network)
{
    const ArchConfig& cfg = network.config();
    cfg.validate();
    std::vector<EncoderStage> stages;
    int x = network.add_input();
    for (int i = 1; i <= cfg.num_scales; ++i) {
        if (i > 1)
            x = network.add_pool(x, 2, StepRole::encoder);
        const std::string name = "enc" + std::to_string(i);
        const std::string label = "X_En^" + std::to_string(i);
        x = network.add_conv_bn_relu(x, cfg.encoder_channels(i), StepRole::encoder, label + ".a", name + ".a");
        x = network.add_conv_bn_relu(x, cfg.encoder_channels(i), StepRole::encoder, label, name + ".b");
        stages.push_back({i, x, cfg.encoder_channels(i), network.step(x).size});
    }
    return stages;
}

namespace {

std::string node_label(int i, int j)
{
    return "X^{" + std::to_string(i) + "," + std::to_string(j) + "}";
}

std::string node_name(int i, int j)
{
    return "dec" + std::to_string(i) + "_" + std::to_string(j);
}

// F(.) of the U-Net / U-Net++ decoders: two conv-bn-relu blocks.
template <typename T>
int decoder_node(Network<T>& net, std::vector<int> inputs, int i, int j)
{
    const int channels = net.config().encoder_channels(i + 1);
    const int cat = net.add_concat(std::move(inputs), StepRole::decoder_concat, "[" + node_label(i, j) + "]");
    const int a = net.add_conv_bn_relu(cat, channels, StepRole::decoder, node_label(i, j) + ".a", node_name(i, j) + ".a");
    return net.add_conv_bn_relu(a, channels, StepRole::decoder, node_label(i, j), node_name(i, j) + ".b");
}

template <typename T>
void plain_head(Network<T>& net, int from)
{
    const int logits = net.add_conv(from, 1, 1, StepRole::head, "head.logits", "head");
    net.set_final(net.add_sigmoid(logits, StepRole::head, "final"));
}

void require_kind(const ArchConfig& config, ArchKind kind)
{
    if (config.kind != kind)
        throw BuildError("builder for " + std::string(to_string(kind)) + " called with kind " +
                         std::string(to_string(config.kind)));
}

} // namespace

template <typename T>
Network<T> build_unet(const ArchConfig& config, std::uint64_t seed)
{
    require_kind(config, ArchKind::unet);
    Network<T> net(config, seed);
    const auto stages = build_encoder(net);
    const int n = config.num_scales;
    // Row i (0-based) holds encoder X^{i,0}; the decoder climbs X^{i,N-1-i}.
    int below = stages[n - 1].output_step;
    for (int i = n - 2; i >= 0; --i) {
        const int j = n - 1 - i;
        const int up = net.add_upsample(below, 2, StepRole::decoder);
        below = decoder_node(net, {stages[i].output_step, up}, i, j);
    }
    plain_head(net, below);
    return net;
}

template <typename T>
Network<T> build_unetpp(const ArchConfig& config, std::uint64_t seed)
{
    require_kind(config, ArchKind::unetpp);
    Network<T> net(config, seed);
    const auto stages = build_encoder(net);
    const int n = config.num_scales;
    // grid[i][j] = step id of X^{i,j}
    std::vector<std::vector<int>> grid(n);
    for (int i = 0; i < n; ++i)
        grid[i].push_back(stages[i].output_step);
    // Column by column so every X^{i+1,j-1} exists before X^{i,j}.
    for (int j = 1; j < n; ++j) {
        for (int i = n - 1 - j; i >= 0; --i) {
            std::vector<int> inputs(grid[i].begin(), grid[i].begin() + j);
            inputs.push_back(net.add_upsample(grid[i + 1][j - 1], 2, StepRole::decoder));
            grid[i].push_back(decoder_node(net, std::move(inputs), i, j));
        }
    }
    plain_head(net, grid[0][n - 1]);
    return net;
}

template <typename T>
Network<T> build_unet3p(const ArchConfig& config, std::uint64_t seed)
{
    require_kind(config, ArchKind::unet3p);
    Network<T> net(config, seed);
    const auto stages = build_encoder(net);
    const int n = config.num_scales;
    const int c = config.path_channels();

    // decoder[i] for 1-based scale i; X_De^N = X_En^N
    std::vector<int> decoder(n + 1, -1);
    decoder[n] = stages[n - 1].output_step;
    for (int i = n - 1; i >= 1; --i) {
        const std::string de = "de" + std::to_string(i);
        const std::string lbl = "X_De^" + std::to_string(i);
        std::vector<int> branches;
        for (int k = 1; k < i; ++k) {
            const int pooled = net.add_pool(stages[k - 1].output_step, 1 << (i - k), StepRole::branch);
            branches.push_back(net.add_conv_bn_relu(pooled, c, StepRole::branch,
                                                    lbl + ".C(D(X_En^" + std::to_string(k) + "))",
                                                    de + ".from_en" + std::to_string(k)));
        }
        branches.push_back(net.add_conv_bn_relu(stages[i - 1].output_step, c, StepRole::branch,
                                                lbl + ".C(X_En^" + std::to_string(i) + ")",
                                                de + ".from_en" + std::to_string(i)));
        for (int k = i + 1; k <= n; ++k) {
            const int up = net.add_upsample(decoder[k], 1 << (k - i), StepRole::branch);
            branches.push_back(net.add_conv_bn_relu(up, c, StepRole::branch,
                                                    lbl + ".C(U(X_De^" + std::to_string(k) + "))",
                                                    de + ".from_de" + std::to_string(k)));
        }
        const int cat = net.add_concat(std::move(branches), StepRole::decoder_concat, "[" + lbl + "]");
        decoder[i] = net.add_conv_bn_relu(cat, n * c, StepRole::decoder, lbl, de + ".fuse");
    }

    const int logits = net.add_conv(decoder[1], 1, 3, StepRole::head, "head.logits", "head");
    net.set_final(net.add_sigmoid(logits, StepRole::head, "final"));
    if (config.deep_supervision)
        attach_deep_supervision(net);
    return net;
}

template <typename T>
void attach_deep_supervision(Network<T>& network)
{
    const ArchConfig& cfg = network.config();
    if (cfg.kind != ArchKind::unet3p)
        throw UsageError("deep supervision heads attach to unet3p networks only");
    if (!network.side_steps().empty())
        throw UsageError("deep supervision already attached");

    // Locate X_De^i for i = 2..N by label; X_De^N is the deepest encoder output.
    const int n = cfg.num_scales;
    std::vector<int> decoder(n + 1, -1);
    for (int id = 0; id < static_cast<int>(network.plan().size()); ++id) {
        const PlanStep& s = network.step(id);
        for (int i = 2; i < n; ++i)
            if (s.role == StepRole::decoder && s.label == "X_De^" + std::to_string(i))
                decoder[i] = id;
        if (s.role == StepRole::encoder && s.label == "X_En^" + std::to_string(n))
            decoder[n] = id;
    }
    for (int i = 2; i <= n; ++i) {
        if (decoder[i] < 0)
            throw BuildError("decoder scale " + std::to_string(i) + " not found");
        const std::string side = "side" + std::to_string(i);
        int x = network.add_conv(decoder[i], 1, 3, StepRole::side_head, side + ".logits", side);
        x = network.add_upsample(x, 1 << (i - 1), StepRole::side_head);
        network.add_side(network.add_sigmoid(x, StepRole::side_head, side));
    }
}

template <typename T>
Network<T> build_network(const ArchConfig& config, std::uint64_t seed)
{
    config.validate();
    switch (config.kind) {
    case ArchKind::unet: return build_unet<T>(config, seed);
    case ArchKind::unetpp: return build_unetpp<T>(config, seed);
    case ArchKind::unet3p: return build_unet3p<T>(config, seed);
    }
    throw BuildError("unknown architecture");
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;

#define VSEG_INSTANTIATE_ARCH(T)                                                 \
    template std::vector<EncoderStage> build_encoder(Network<T>&);              \
    template Network<T> build_unet<T>(const ArchConfig&, std::uint64_t);        \
    template Network<T> build_unetpp<T>(const ArchConfig&, std::uint64_t);      \
    template Network<T> build_unet3p<T>(const ArchConfig&, std::uint64_t);      \
    template void attach_deep_supervision(Network<T>&);                         \
    template Network<T> build_network<T>(const ArchConfig&, std::uint64_t);

VSEG_INSTANTIATE_ARCH(float)
VSEG_INSTANTIATE_ARCH(double)

} // namespace vseg
