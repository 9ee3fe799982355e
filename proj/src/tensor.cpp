#include "vlt/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vlt {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};
thread_local Tape* g_current_tape = nullptr;

std::shared_ptr<TensorData> make_node(Shape shape, std::vector<double> values, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("Tensor: dimension sizes must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match data length " +
                                    std::to_string(values.size()));
    }
    auto node = std::make_shared<TensorData>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    node->node_id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    return node;
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    Tensor t;
    t.d_ = make_node(std::move(shape), std::move(values), requires_grad);
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return from_data(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
    std::vector<double> v(shape_numel(shape), value);
    return from_data(std::move(shape), std::move(v), false);
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}, false); }

double Tensor::value() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::value: tensor of shape " + shape_str(shape()) + " is not scalar");
    return d_->data[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank()) throw std::invalid_argument("Tensor::at: index rank mismatch");
    std::size_t off = 0;
    int axis = 0;
    for (int i : idx) {
        if (i < 0 || i >= dim(axis)) throw std::out_of_range("Tensor::at: index out of range");
        off = off * static_cast<std::size_t>(dim(axis)) + static_cast<std::size_t>(i);
        ++axis;
    }
    return d_->data[off];
}

std::vector<double>& Tensor::grad() {
    ensure_grad(d_.get());
    return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (d_->grad.empty()) throw std::runtime_error("Tensor::grad: no gradient present");
    return d_->grad;
}

void Tensor::zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

void ensure_grad(TensorData* node) {
    if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
}

void Tape::record(std::vector<std::shared_ptr<TensorData>> inputs, std::shared_ptr<TensorData> output,
                  std::function<void()> backward) {
    tracked_.insert(output.get());
    records_.push_back(Record{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("Tape::backward: loss must be a defined scalar tensor");
    }
    if (!tracked(loss.raw())) {
        throw std::invalid_argument("Tape::backward: loss is not connected to this tape");
    }
    ensure_grad(loss.raw());
    loss.raw()->grad[0] = 1.0;

    std::unordered_set<const TensorData*> needed;
    needed.insert(loss.raw());
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (!needed.count(it->output.get())) continue;
        it->backward();
        for (const auto& in : it->inputs) needed.insert(in.get());
    }
}

Tape* Tape::current() { return g_current_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_current_tape) { g_current_tape = &tape; }

TapeScope::~TapeScope() { g_current_tape = prev_; }

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string(op) + ": produced non-finite value");
        }
    }
}

}  // namespace vlt
