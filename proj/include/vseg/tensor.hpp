#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vseg {

// Extents, outermost first. 4-D tensors are laid out (batch, channels,
// height, width).
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array. Plain value type; copying copies the data.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    const Shape& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int b, int c, int h, int w) { return data_[offset(b, c, h, w)]; }
    const T& at(int b, int c, int h, int w) const { return data_[offset(b, c, h, w)]; }

    void fill(T v);
    bool all_finite() const;

    template <typename U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    std::size_t offset(int b, int c, int h, int w) const
    {
        return ((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    Shape shape_;
    std::vector<T> data_;
};

// Handle to a value that participates in a GradTape. Copies share the same
// node, so a gradient accumulated through one copy is visible through all.
template <typename T>
class Variable {
public:
    Variable() = default;
    explicit Variable(Tensor<T> value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

    const Tensor<T>& value() const { return node_->value; }
    // Parameter updates only; never mutate a value that is still on a tape.
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t numel() const { return node_->value.numel(); }

    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    // Zero-filled view when no gradient has been accumulated yet.
    Tensor<T> grad() const;
    // Lazily allocates a zero gradient of the value's shape. Const because a
    // Variable is a handle: the gradient lives in the shared node.
    Tensor<T>& grad_buffer() const;
    void zero_grad();

    bool same_node(const Variable& other) const noexcept { return node_ == other.node_; }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Node> node_;
};

// Ordered record of executed differentiable ops. backward() replays every
// adjoint exactly once, newest first, after which the tape is spent.
template <typename T>
class GradTape {
public:
    explicit GradTape(bool recording = true) : recording_(recording) {}

    bool recording() const noexcept { return recording_; }
    void set_recording(bool on) noexcept { recording_ = on; }

    void record(std::string op, std::function<void()> adjoint);
    std::size_t size() const noexcept { return entries_.size(); }
    std::vector<std::string> op_names() const;

    void backward(const Variable<T>& loss);
    bool consumed() const noexcept { return consumed_; }
    // Indices of the entries in the order backward() visited them.
    const std::vector<std::size_t>& replay_order() const noexcept { return replay_order_; }

    void clear();

    // Non-smooth ops (relu, max-pool) mix a hash of their branch decisions
    // into this signature while tracking is on. Finite-difference checks use
    // it to detect a perturbation that crossed a kink.
    void track_branches(bool on) noexcept { tracking_ = on; }
    bool tracking_branches() const noexcept { return tracking_; }
    void mix_branch(std::uint64_t h) noexcept;
    std::uint64_t branch_signature() const noexcept { return signature_; }

private:
    struct Entry {
        std::string op;
        std::function<void()> adjoint;
    };
    std::vector<Entry> entries_;
    std::vector<std::size_t> replay_order_;
    bool recording_ = true;
    bool consumed_ = false;
    bool tracking_ = false;
    std::uint64_t signature_ = 0;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Variable<float>;
extern template class Variable<double>;
extern template class GradTape<float>;
extern template class GradTape<double>;

} // namespace vseg
