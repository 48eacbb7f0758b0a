#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "slp/errors.hpp"
#include "slp/rng.hpp"

namespace slp {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int shape_numel(const Shape& s);

// Dense row-major tensor of 64-bit reals. Doubles both as a plain value
// container (corpus records, parameters at rest) and as a node in a
// computation graph, where `grad` mirrors `value` and `backward` pushes
// this node's gradient into its inputs.
struct Tensor {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty unless requires_grad
    bool requires_grad = false;
    std::function<void()> backward;  // unset on leaves

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor eye(int n);

    int size() const { return static_cast<int>(value.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rows() const { return shape[0]; }
    int cols() const { return shape[1]; }

    double& at(int r, int c) { return value[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return value[static_cast<std::size_t>(r) * cols() + c]; }
    double& operator[](int i) { return value[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return value[static_cast<std::size_t>(i)]; }

    void fill(double v);
    void fill_uniform(Rng& rng, double lo, double hi);
    bool all_finite() const;
};

using Var = std::shared_ptr<Tensor>;

// Fresh gradient-carrying leaf (model parameter).
Var make_param(const Tensor& t);
// Gradient-free leaf.
Var make_const(const Tensor& t);
// Detached copy: same value, no gradient tracking.
Var detach(const Var& v);

double scalar_value(const Var& v);

// Records every differentiable operation in execution order. Since an op
// can only consume already-created nodes, the record is topologically
// sorted; one reverse sweep propagates gradients from a scalar root to all
// requires_grad leaves, visiting each recorded node exactly once.
//
// A tape owns its intermediates and must be used from one thread; distinct
// tapes may run concurrently as long as they do not share mutable leaves.
class Tape {
public:
    // check_finite: validate every op output (and leaf) for NaN/Inf.
    // grad_enabled=false turns the tape into a pure forward evaluator:
    // no grad buffers, no backward closures, nothing recorded.
    explicit Tape(bool check_finite = false, bool grad_enabled = true)
        : check_finite_(check_finite), grad_enabled_(grad_enabled) {}

    Var leaf(const Tensor& t, bool requires_grad = false) const;

    // Seeds root (a scalar) with gradient 1 and replays the tape in reverse,
    // accumulating into every requires_grad leaf's grad buffer.
    void backward(const Var& root);

    std::size_t num_ops() const { return order_.size(); }
    bool check_finite() const { return check_finite_; }
    bool grad_enabled() const { return grad_enabled_; }

    // Used by op implementations: allocate and record the result node.
    Var emit(Shape shape, bool inputs_require_grad, const char* op_name);

private:
    std::vector<Var> order_;
    bool check_finite_;
    bool grad_enabled_;
};

enum class Activation { Tanh, Sigmoid, Relu };

// --- differentiable operations -------------------------------------------
// All ops validate shapes eagerly and compute values immediately; gradient
// closures are recorded on `tape` when gradients are enabled and at least
// one input requires them.

Var matmul(Tape& tape, const Var& a, const Var& b);      // [MxK]x[KxP] -> [MxP]
Var matvec(Tape& tape, const Var& a, const Var& x);      // [MxK]x[K]   -> [M]
Var transpose(Tape& tape, const Var& a);                 // [MxN] -> [NxM]
Var add(Tape& tape, const Var& a, const Var& b);         // same-shape
Var sub(Tape& tape, const Var& a, const Var& b);
Var mul(Tape& tape, const Var& a, const Var& b);         // elementwise
Var add_scalar(Tape& tape, const Var& a, double c);
Var mul_scalar(Tape& tape, const Var& a, double c);
Var rsub_scalar(Tape& tape, double c, const Var& a);     // c - a
Var add_rowvec(Tape& tape, const Var& x, const Var& b);  // [MxD] + [D] broadcast
Var softmax(Tape& tape, const Var& x, int axis);
Var elementwise(Tape& tape, const Var& x, Activation f);
Var tanh(Tape& tape, const Var& x);
Var sigmoid(Tape& tape, const Var& x);
Var relu(Tape& tape, const Var& x);
Var cosine(Tape& tape, const Var& u, const Var& v);      // [D],[D] -> scalar
Var concat(Tape& tape, const Var& a, const Var& b, int axis);
Var row(Tape& tape, const Var& x, int i);                // [MxD] -> [D]
Var stack_rows(Tape& tape, const std::vector<Var>& rows);
Var repeat_rows(Tape& tape, const Var& x, int times);    // row r -> rows r*times..r*times+times-1
Var tile_rows(Tape& tape, const Var& x, int times);      // whole block repeated
Var reshape(Tape& tape, const Var& x, Shape s);
Var sum(Tape& tape, const Var& x);                       // -> scalar
Var mean(Tape& tape, const Var& x);                      // -> scalar
Var log(Tape& tape, const Var& x);                       // x > 0 elementwise
Var clamp(Tape& tape, const Var& x, double lo, double hi);
Var smooth_l1(Tape& tape, const Var& pred, double target);  // scalar, delta = 1

}  // namespace slp
