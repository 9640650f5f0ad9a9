#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vseg/ops.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

enum class ArchKind { unet, unetpp, unet3p };

std::string_view to_string(ArchKind kind);
ArchKind parse_arch_kind(std::string_view name);

struct ArchConfig {
    ArchKind kind = ArchKind::unet3p;
    int num_scales = 5;
    int base_channels = 8;
    int per_path_channels = 0; // U-Net 3+ branch width; 0 means base_channels
    int input_channels = 1;
    bool deep_supervision = false;
    int input_size = 64;

    int path_channels() const { return per_path_channels > 0 ? per_path_channels : base_channels; }
    // Channels produced by encoder scale `i` (1-based).
    int encoder_channels(int i) const { return base_channels << (i - 1); }
    int scale_size(int i) const { return input_size >> (i - 1); }

    // Throws BuildError.
    void validate() const;

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

enum class StepKind { input, conv_bn_relu, conv, max_pool, upsample, concat, sigmoid };

enum class StepRole {
    input,
    encoder,
    decoder,        // U-Net / U-Net++ node or U-Net 3+ fusion output
    decoder_concat, // concatenation feeding a decoder node
    branch,         // U-Net 3+ per-path C(.) block and its resampling
    head,
    side_head,
};

// One node of the forward plan. `inputs` index earlier steps only.
struct PlanStep {
    StepKind kind = StepKind::input;
    StepRole role = StepRole::input;
    std::string label;
    std::vector<int> inputs;
    int channels = 0;
    int size = 0;   // spatial extent (square)
    int factor = 1; // pool stride / upsample factor
    int kernel = 3;
    std::string param; // prefix of the parameters owned by this step
};

template <typename T>
struct ForwardOutput {
    Variable<T> final;
    std::vector<Variable<T>> side_outputs;
};

// An architecture instance: named parameters, batch-norm running state and an
// ordered forward plan. Evaluates in any scalar type T; parameters are
// stored in that type.
template <typename T>
class Network {
public:
    struct Param {
        std::string name;
        Variable<T> value;
        bool weight_decay = false;
    };

    Network() = default;
    Network(ArchConfig config, std::uint64_t seed);

    const ArchConfig& config() const noexcept { return config_; }
    std::uint64_t seed() const noexcept { return seed_; }

    const std::vector<PlanStep>& plan() const noexcept { return plan_; }
    const PlanStep& step(int id) const { return plan_.at(static_cast<std::size_t>(id)); }
    int final_step() const noexcept { return final_step_; }
    const std::vector<int>& side_steps() const noexcept { return side_steps_; }

    std::vector<Param>& params() noexcept { return params_; }
    const std::vector<Param>& params() const noexcept { return params_; }
    const Param* find_param(std::string_view name) const;
    Param* find_param(std::string_view name);
    std::size_t parameter_count() const;

    std::map<std::string, BatchNormState<T>>& norm_states() noexcept { return norms_; }
    const std::map<std::string, BatchNormState<T>>& norm_states() const noexcept { return norms_; }

    void zero_grad();

    ForwardOutput<T> forward(GradTape<T>& tape, const Variable<T>& batch, NormMode mode);

    // Builder interface used by build_* and attach_deep_supervision.
    int add_input();
    int add_conv_bn_relu(int input, int out_channels, StepRole role, std::string label, std::string name);
    int add_conv(int input, int out_channels, int kernel, StepRole role, std::string label, std::string name);
    int add_pool(int input, int factor, StepRole role);
    int add_upsample(int input, int factor, StepRole role);
    int add_concat(std::vector<int> inputs, StepRole role, std::string label);
    int add_sigmoid(int input, StepRole role, std::string label);
    void set_final(int step) { final_step_ = step; }
    void add_side(int step) { side_steps_.push_back(step); }

    template <typename U>
    Network<U> cast() const;

private:
    template <typename>
    friend class Network;

    Variable<T>& new_param(const std::string& name, Shape shape, double bound, bool weight_decay, double fill);
    int push(PlanStep step);

    ArchConfig config_;
    std::uint64_t seed_ = 0;
    std::vector<PlanStep> plan_;
    std::vector<Param> params_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, BatchNormState<T>> norms_;
    int final_step_ = -1;
    std::vector<int> side_steps_;
};

struct EncoderStage {
    int scale = 1; // 1-based
    int output_step = -1;
    int channels = 0;
    int size = 0;
};

// Plain double-conv encoder: stage i has two conv-bn-relu blocks with
// base_channels * 2^(i-1) channels; stages 2..N start with a 2x2 max-pool.
template <typename T>
std::vector<EncoderStage> build_encoder(Network<T>& network);

template <typename T>
Network<T> build_unet(const ArchConfig& config, std::uint64_t seed);
template <typename T>
Network<T> build_unetpp(const ArchConfig& config, std::uint64_t seed);
template <typename T>
Network<T> build_unet3p(const ArchConfig& config, std::uint64_t seed);

// Side heads on decoder scales 2..N: conv3x3 -> x2^(i-1) upsample -> sigmoid.
template <typename T>
void attach_deep_supervision(Network<T>& network);

// Dispatches on config.kind.
template <typename T>
Network<T> build_network(const ArchConfig& config, std::uint64_t seed);

extern template class Network<float>;
extern template class Network<double>;

} // namespace vseg
