#include "hazefuse/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "hazefuse/errors.hpp"

namespace hazefuse {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<TensorImpl>()) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

TensorImpl& Tensor::impl() const {
    if (!impl_) throw ContractError("use of an undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t i) const {
    const auto& s = shape();
    if (i >= s.size()) {
        throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(s));
    }
    return s[i];
}

std::span<double> Tensor::mutable_data() {
    if (impl().on_tape) throw ContractError("in-place write to a recorded tensor");
    return impl_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    impl().requires_grad = on;
    return *this;
}

std::vector<double> Tensor::grad() const {
    if (!has_grad()) return std::vector<double>(numel(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (defined()) impl_->grad.clear();
}

Tensor Tensor::clone() const {
    Tensor t(shape(), impl().data);
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
}

Tensor Tensor::detach() const { return Tensor(shape(), impl().data); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ContractError("backward needs a scalar loss, got " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;  // constant: nothing upstream
    loss.impl().grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->backward();
    }
}

void backward(const Tensor& loss) {
    Tape* tape = active_tape();
    if (!tape) {
        if (loss.numel() != 1) {
            throw ContractError("backward needs a scalar loss, got " + shape_str(loss.shape()));
        }
        if (loss.requires_grad() && loss.impl().on_tape) {
            throw ContractError("backward called without an active tape");
        }
        return;
    }
    tape->backward(loss);
}

void ParamSet::add(const std::string& name, Tensor t, bool trainable) {
    if (entries_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    t.set_requires_grad(trainable);
    entries_.emplace(name, Entry{std::move(t), trainable});
}

bool ParamSet::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

ParamSet::Entry& ParamSet::entry(std::string_view name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return it->second;
}

const Tensor& ParamSet::at(std::string_view name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return it->second.tensor;
}

Tensor& ParamSet::at(std::string_view name) { return entry(name).tensor; }

void ParamSet::set_trainable(std::string_view prefix, bool on) {
    for (auto& [name, e] : entries_) {
        if (std::string_view(name).starts_with(prefix)) {
            e.trainable = on;
            e.tensor.set_requires_grad(on);
        }
    }
}

void ParamSet::merge(const ParamSet& other) {
    for (const auto& [name, e] : other.entries_) add(name, e.tensor, e.trainable);
}

std::vector<std::string> ParamSet::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& kv : entries_) out.push_back(kv.first);
    return out;
}

std::size_t ParamSet::numel() const {
    std::size_t n = 0;
    for (const auto& kv : entries_) n += kv.second.tensor.numel();
    return n;
}

void ParamSet::zero_grad() {
    for (auto& kv : entries_) kv.second.tensor.zero_grad();
}

}  // namespace hazefuse
