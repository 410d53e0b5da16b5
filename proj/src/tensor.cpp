#include "ditcache/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ditcache/errors.hpp"

namespace ditcache::ad {

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s)
        n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); i++)
        os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

static void check_shape(const Shape& s) {
    for (int d : s)
        if (d <= 0)
            throw ShapeError("tensor dimension must be positive, got " + shape_str(s));
}

Tensor Tensor::zeros(Shape shape) {
    check_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->values.assign(static_cast<size_t>(numel(shape)), 0.0);
    impl->shape = std::move(shape);
    return wrap(std::move(impl));
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.impl()->values)
        x = v;
    return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    check_shape(shape);
    if (numel(shape) != static_cast<int64_t>(values.size()))
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    for (double v : values)
        if (!std::isfinite(v))
            throw NumericError("tensor data contains NaN/Inf");
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    return wrap(std::move(impl));
}

Tensor Tensor::param(Shape shape, std::vector<double> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.impl()->requires_grad = true;
    return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

int64_t Tensor::size() const { return static_cast<int64_t>(impl_->values.size()); }

const std::vector<double>& Tensor::values() const { return impl_->values; }

std::vector<double>& Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
    if (size() != 1)
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

std::vector<double> Tensor::grad() const {
    if (impl_->grad.empty())
        return std::vector<double>(impl_->values.size(), 0.0);
    return impl_->grad;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

void Tensor::zero_grad() { impl_->grad.clear(); }

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (g.size() != impl_->values.size())
        throw ShapeError("grad length mismatch");
    if (impl_->grad.empty())
        impl_->grad.assign(impl_->values.size(), 0.0);
    for (size_t i = 0; i < g.size(); i++)
        impl_->grad[i] += g[i];
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->values = impl_->values;
    return wrap(std::move(impl));
}

Tensor Tensor::wrap(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape& Tape::active() {
    if (!g_active_tape) {
        static thread_local Tape default_tape;
        g_active_tape = &default_tape;
    }
    return *g_active_tape;
}

void Tape::record(Tensor& out, BackFn fn) {
    out.impl()->requires_grad = true;
    out.impl()->node_id = static_cast<int>(nodes_.size());
    out.impl()->tape_epoch = epoch_;
    nodes_.push_back(std::move(fn));
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ShapeError("backward: loss must be a scalar tensor");
    if (!loss.requires_grad())
        throw NumericError("backward: loss does not require grad");
    if (loss.impl()->node_id >= 0 && loss.impl()->tape_epoch != epoch_)
        throw NumericError("backward: graph already cleared");
    const_cast<Tensor&>(loss).accumulate_grad({1.0});
    for (size_t i = nodes_.size(); i-- > 0;)
        nodes_[i]();
    clear();
}

void Tape::clear() {
    nodes_.clear();
    epoch_++;
}

TapeScope::TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

}  // namespace ditcache::ad
