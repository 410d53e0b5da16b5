#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ditcache::ad {

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until the first accumulation
    int node_id = -1;          // index of the producing tape node, -1 for leaves
    uint64_t tape_epoch = 0;
};

// Value-semantics handle to shared, immutable-after-creation storage.
// Only `grad` (during backward) and leaf `values` (optimizer steps between
// graphs) are ever mutated.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor scalar(double v);
    // validates finiteness; NaN/Inf in external data surfaces here
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor param(Shape shape, std::vector<double> values);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int64_t size() const;
    const std::vector<double>& values() const;
    std::vector<double>& mutable_values();  // leaf updates only
    double item() const;                    // single-element tensors

    bool requires_grad() const;
    std::vector<double> grad() const;  // zeros if never accumulated
    bool has_grad() const;
    void zero_grad();
    void accumulate_grad(const std::vector<double>& g);

    // Same values, requires_grad=false, no graph edge. Values are copied so the
    // result cannot alias a live graph output.
    Tensor detach() const;

    TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> ptr() const { return impl_; }
    static Tensor wrap(std::shared_ptr<TensorImpl> impl);

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Append-only record of backward closures. Topological order is append order;
// backward visits nodes exactly once in reverse append order, then clears.
class Tape {
public:
    using BackFn = std::function<void()>;

    static Tape& active();

    size_t node_count() const { return nodes_.size(); }
    uint64_t epoch() const { return epoch_; }

    void record(Tensor& out, BackFn fn);

    // pre: loss is scalar and attached to this tape (or a requires-grad leaf).
    // post: grad accumulated into every requires_grad tensor reachable from
    // loss; tape cleared.
    void backward(const Tensor& loss);

    void clear();

private:
    std::vector<BackFn> nodes_;
    uint64_t epoch_ = 1;
};

// Temporarily makes a different tape the active one (per-worker graphs).
class TapeScope {
public:
    explicit TapeScope(Tape& t);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

}  // namespace ditcache::ad
