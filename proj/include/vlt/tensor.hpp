#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

namespace vlt {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorData {
    Shape shape;
    std::vector<double> data;   // row-major float64
    std::vector<double> grad;   // empty until needed; same length as data once allocated
    bool requires_grad = false;
    std::uint64_t node_id = 0;  // assigned in creation order
};

/// Value-semantic handle to a dense float64 tensor. All model state and all
/// intermediate values use this type; gradients are recorded on the active Tape.
class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    int rank() const { return static_cast<int>(d_->shape.size()); }
    int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return d_->data.size(); }

    double* data() { return d_->data.data(); }
    const double* data() const { return d_->data.data(); }
    std::vector<double>& values() { return d_->data; }
    const std::vector<double>& values() const { return d_->data; }

    // Scalar fetch; throws unless numel() == 1.
    double value() const;
    double at(std::initializer_list<int> idx) const;

    bool requires_grad() const { return d_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        d_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !d_->grad.empty(); }
    std::vector<double>& grad();              // allocates zeros on first use
    const std::vector<double>& grad() const;  // throws if absent
    void zero_grad();

    std::uint64_t node_id() const { return d_->node_id; }
    TensorData* raw() const { return d_.get(); }
    std::shared_ptr<TensorData> ptr() const { return d_; }

private:
    std::shared_ptr<TensorData> d_;
};

/// Wengert list. Operations append records in execution order; backward walks
/// the list in reverse, visiting each record at most once and only if its
/// output contributes to the loss.
class Tape {
public:
    struct Record {
        std::vector<std::shared_ptr<TensorData>> inputs;
        std::shared_ptr<TensorData> output;
        std::function<void()> backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::vector<std::shared_ptr<TensorData>> inputs, std::shared_ptr<TensorData> output,
                std::function<void()> backward);

    bool tracked(const TensorData* node) const { return tracked_.count(node) > 0; }
    std::size_t size() const { return records_.size(); }

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    // contributing tensor. loss must be scalar and recorded on this tape.
    void backward(const Tensor& loss);

    static Tape* current();

private:
    friend class TapeScope;
    std::vector<Record> records_;
    std::unordered_set<const TensorData*> tracked_;
};

/// RAII activation of a tape for the current thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// Throws std::runtime_error if t contains NaN/Inf; op names the producer.
void check_finite(const Tensor& t, const char* op);

void ensure_grad(TensorData* node);

}  // namespace vlt
