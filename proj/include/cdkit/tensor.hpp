#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdkit {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

template <typename T>
struct Tensor;

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

/// Dense row-major tensor. Gradient buffer is allocated lazily when
/// requires_grad is switched on; it always mirrors the data shape.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
    std::int64_t dim(std::int64_t i) const { return shape[static_cast<std::size_t>(i)]; }

    void set_requires_grad(bool rg) {
        requires_grad = rg;
        if (rg && grad.size() != data.size()) grad.assign(data.size(), T(0));
        if (!rg) grad.clear();
    }

    void zero_grad() {
        if (requires_grad) std::fill(grad.begin(), grad.end(), T(0));
    }

    static TensorPtr<T> create(Shape s, bool rg = false) {
        for (auto d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: nonpositive dimension in shape " + shape_str(s));
        }
        auto t = std::make_shared<Tensor<T>>();
        t->shape = std::move(s);
        t->data.assign(static_cast<std::size_t>(shape_numel(t->shape)), T(0));
        t->set_requires_grad(rg);
        return t;
    }

    static TensorPtr<T> from(Shape s, std::vector<T> values, bool rg = false) {
        auto t = create(std::move(s), rg);
        if (values.size() != t->data.size()) {
            throw std::invalid_argument("tensor: value count " + std::to_string(values.size()) +
                                        " does not match shape " + shape_str(t->shape));
        }
        t->data = std::move(values);
        return t;
    }

    static TensorPtr<T> scalar(T v, bool rg = false) { return from({1}, {v}, rg); }

    static TensorPtr<T> full(Shape s, T v, bool rg = false) {
        auto t = create(std::move(s), rg);
        std::fill(t->data.begin(), t->data.end(), v);
        return t;
    }
};

/// Define-by-run tape: ops append one record per executed operation while a
/// tape is active on the current thread; backward replays the records in
/// reverse, accumulating adjoints (+=) into every requires_grad input.
template <typename T>
class GradTape {
public:
    void record(const char* op, TensorPtr<T> out, std::function<void()> fn) {
        records_.push_back(Record{op, std::move(out), std::move(fn)});
    }

    void backward(const TensorPtr<T>& loss) {
        if (!loss || loss->numel() != 1) {
            throw std::invalid_argument("backward: loss must be a scalar tensor");
        }
        if (loss->requires_grad) loss->grad[0] = T(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->fn();
    }

    void clear() { records_.clear(); }
    std::size_t size() const { return records_.size(); }

    static GradTape<T>*& active() {
        static thread_local GradTape<T>* tape = nullptr;
        return tape;
    }

private:
    struct Record {
        const char* op;
        TensorPtr<T> out;
        std::function<void()> fn;
    };
    std::vector<Record> records_;
};

/// RAII activation of a tape on the current thread. Tapes are thread-confined.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(GradTape<T>& tape) : prev_(GradTape<T>::active()) {
        GradTape<T>::active() = &tape;
    }
    ~TapeScope() { GradTape<T>::active() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    GradTape<T>* prev_;
};

template <typename T>
inline void backward(GradTape<T>& tape, const TensorPtr<T>& loss) {
    tape.backward(loss);
}

namespace detail {

/// Multiply-accumulate counter fed by matmul; used by the attention cost
/// accounting. Thread-local so concurrent branches do not interleave counts.
inline std::uint64_t& mac_counter() {
    static thread_local std::uint64_t n = 0;
    return n;
}

template <typename T>
inline bool any_requires_grad(std::initializer_list<TensorPtr<T>> xs) {
    for (const auto& x : xs)
        if (x && x->requires_grad) return true;
    return false;
}

/// Marks the output differentiable and records the adjoint closure, but only
/// when a tape is active and some input carries grad.
template <typename T>
inline void record_op(const char* name, std::initializer_list<TensorPtr<T>> inputs,
                      const TensorPtr<T>& out, std::function<void()> fn) {
    auto* tape = GradTape<T>::active();
    if (!tape || !any_requires_grad<T>(inputs)) return;
    out->set_requires_grad(true);
    tape->record(name, out, std::move(fn));
}

}  // namespace detail

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::int64_t worst_index = -1;
    bool has_nan = false;

    bool pass(double tol) const { return !has_nan && max_rel_error <= tol; }
};

/// Central-difference gradient check of a scalar-valued tensor function.
/// Intended for float64; finite differences are unreliable in float32.
inline GradCheckResult gradcheck(const std::function<TensorPtr<double>(const TensorPtr<double>&)>& f,
                                 const TensorPtr<double>& x, double epsilon = 1e-5) {
    // Analytic gradient.
    auto xg = Tensor<double>::from(x->shape, x->data, true);
    GradTape<double> tape;
    std::vector<double> analytic;
    {
        TapeScope<double> scope(tape);
        auto loss = f(xg);
        if (!loss || loss->numel() != 1) throw std::invalid_argument("gradcheck: f must be scalar-valued");
        tape.backward(loss);
        analytic = xg->requires_grad ? xg->grad : std::vector<double>(xg->data.size(), 0.0);
    }

    GradCheckResult res;
    auto eval = [&](const std::vector<double>& v) {
        auto xt = Tensor<double>::from(x->shape, v, false);
        return f(xt)->data[0];
    };
    std::vector<double> probe = x->data;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double x0 = probe[i];
        probe[i] = x0 + epsilon;
        const double fp = eval(probe);
        probe[i] = x0 - epsilon;
        const double fm = eval(probe);
        probe[i] = x0;
        const double numeric = (fp - fm) / (2.0 * epsilon);
        const double a = analytic[i];
        if (std::isnan(a) || std::isnan(numeric)) {
            res.has_nan = true;
            res.worst_index = static_cast<std::int64_t>(i);
            res.max_rel_error = std::numeric_limits<double>::infinity();
            return res;
        }
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(a - numeric) / denom;
        if (rel > res.max_rel_error) {
            res.max_rel_error = rel;
            res.worst_index = static_cast<std::int64_t>(i);
        }
    }
    return res;
}

}  // namespace cdkit
