#include "vseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vseg/errors.hpp"
#include "vseg/rng.hpp"

namespace vseg {

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0)
            throw DimensionError("non-positive extent in shape " + shape_string(shape));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape))
{
    data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values))
{
    if (shape_numel(shape_) != data_.size())
        throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
}

template <typename T>
void Tensor<T>::fill(T v)
{
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Variable<T>::Variable(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node>())
{
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Variable<T>::grad() const
{
    if (has_grad())
        return node_->grad;
    return Tensor<T>(node_->value.shape());
}

template <typename T>
Tensor<T>& Variable<T>::grad_buffer() const
{
    if (node_->grad.empty())
        node_->grad = Tensor<T>(node_->value.shape());
    return node_->grad;
}

template <typename T>
void Variable<T>::zero_grad()
{
    if (node_)
        node_->grad = Tensor<T>();
}

template <typename T>
void GradTape<T>::record(std::string op, std::function<void()> adjoint)
{
    if (consumed_)
        throw UsageError("recording on a tape that has already been replayed");
    entries_.push_back({std::move(op), std::move(adjoint)});
}

template <typename T>
std::vector<std::string> GradTape<T>::op_names() const
{
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_)
        names.push_back(e.op);
    return names;
}

template <typename T>
void GradTape<T>::backward(const Variable<T>& loss)
{
    if (!loss.defined() || loss.numel() != 1)
        throw UsageError("backward() needs a scalar loss");
    if (!loss.requires_grad())
        throw UsageError("loss was not produced on the tape from any trainable input");
    if (consumed_)
        throw UsageError("tape already replayed");
    consumed_ = true;

    Variable<T> seed = loss;
    seed.grad_buffer()[0] += T(1);

    replay_order_.clear();
    replay_order_.reserve(entries_.size());
    for (std::size_t i = entries_.size(); i-- > 0;) {
        replay_order_.push_back(i);
        entries_[i].adjoint();
        // Release captured intermediates as soon as they are no longer needed.
        entries_[i].adjoint = nullptr;
    }
}

template <typename T>
void GradTape<T>::clear()
{
    entries_.clear();
    replay_order_.clear();
    consumed_ = false;
    signature_ = 0;
}

template <typename T>
void GradTape<T>::mix_branch(std::uint64_t h) noexcept
{
    signature_ = splitmix64(signature_ ^ h);
}

template class Tensor<float>;
template class Tensor<double>;
template class Variable<float>;
template class Variable<double>;
template class GradTape<float>;
template class GradTape<double>;

} // namespace vseg
