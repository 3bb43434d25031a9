#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hazefuse {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient flows in
    bool requires_grad = false;
    bool on_tape = false;      // produced by a recorded op (not a leaf)

    std::vector<double>& grad_buffer();
};

// Dense row-major float64 tensor. Copies share storage (handle semantics);
// use clone() for a deep copy. Tensors produced outside an active tape are
// plain values and may be shared between threads.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const { return impl().data.size(); }

    std::span<const double> data() const { return impl().data; }
    // Writable view. Only valid on values that are not tape outputs.
    std::span<double> mutable_data();
    double item() const;
    double operator[](std::size_t i) const { return impl().data[i]; }

    bool requires_grad() const { return defined() && impl_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    bool has_grad() const { return defined() && !impl_->grad.empty(); }
    // Gradient view; zeros if nothing has flowed in yet.
    std::vector<double> grad() const;
    void zero_grad();

    Tensor clone() const;
    // Same values, no gradient tracking.
    Tensor detach() const;

    TensorImpl& impl() const;
    const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of differentiable operations. Recording order is a valid
// topological order, so backward walks it in reverse.
class Tape {
public:
    struct Node {
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        std::function<void()> backward;
    };

    void record(Node node) { nodes_.push_back(std::move(node)); }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and propagates to every recorded ancestor.
    void backward(const Tensor& loss);

private:
    std::vector<Node> nodes_;
};

// Makes a tape current for the calling thread for the scope's lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape() noexcept;

// Calls backward on the active tape.
void backward(const Tensor& loss);

// Named parameter table. std::map keeps iteration lexicographic, which the
// optimizer and the checkpoint writer rely on for reproducibility.
class ParamSet {
public:
    struct Entry {
        Tensor tensor;
        bool trainable = true;
    };

    void add(const std::string& name, Tensor t, bool trainable = true);
    bool contains(std::string_view name) const;
    const Tensor& at(std::string_view name) const;
    Tensor& at(std::string_view name);
    Entry& entry(std::string_view name);

    void set_trainable(std::string_view prefix, bool on);
    void merge(const ParamSet& other);
    std::vector<std::string> names() const;
    std::size_t size() const { return entries_.size(); }
    std::size_t numel() const;
    void zero_grad();

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<std::string, Entry, std::less<>> entries_;
};

}  // namespace hazefuse
