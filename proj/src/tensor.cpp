#include "slp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace slp {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

int shape_numel(const Shape& s) {
    int n = 1;
    for (int d : s) {
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
    value.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
}

Tensor::Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), value(std::move(data)) {
    if (static_cast<int>(value.size()) != shape_numel(shape)) {
        throw DimensionError("data length " + std::to_string(value.size()) +
                             " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::eye(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

void Tensor::fill(double v) { std::fill(value.begin(), value.end(), v); }

void Tensor::fill_uniform(Rng& rng, double lo, double hi) {
    for (double& x : value) x = rng.uniform(lo, hi);
}

bool Tensor::all_finite() const {
    for (double x : value) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Var make_param(const Tensor& t) {
    auto v = std::make_shared<Tensor>(t);
    v->requires_grad = true;
    v->grad.assign(v->value.size(), 0.0);
    v->backward = nullptr;
    return v;
}

Var make_const(const Tensor& t) {
    auto v = std::make_shared<Tensor>(t);
    v->requires_grad = false;
    v->grad.clear();
    v->backward = nullptr;
    return v;
}

Var detach(const Var& v) {
    auto out = std::make_shared<Tensor>();
    out->shape = v->shape;
    out->value = v->value;
    return out;
}

double scalar_value(const Var& v) {
    if (v->size() != 1) {
        throw ContractError("expected a scalar, got shape " + shape_str(v->shape));
    }
    return v->value[0];
}

Var Tape::leaf(const Tensor& t, bool requires_grad) const {
    if (check_finite_ && !t.all_finite()) {
        throw NumericError("leaf tensor of shape " + shape_str(t.shape) + " contains NaN/Inf");
    }
    auto v = std::make_shared<Tensor>(t);
    v->backward = nullptr;
    if (requires_grad && grad_enabled_) {
        v->requires_grad = true;
        v->grad.assign(v->value.size(), 0.0);
    } else {
        v->requires_grad = false;
        v->grad.clear();
    }
    return v;
}

Var Tape::emit(Shape shape, bool inputs_require_grad, const char* op_name) {
    (void)op_name;
    auto v = std::make_shared<Tensor>(std::move(shape));
    if (grad_enabled_ && inputs_require_grad) {
        v->requires_grad = true;
        v->grad.assign(v->value.size(), 0.0);
        order_.push_back(v);
    }
    return v;
}

void Tape::backward(const Var& root) {
    if (!grad_enabled_) {
        throw ContractError("backward called on a gradient-disabled tape");
    }
    if (root->size() != 1) {
        throw ContractError("backward root must be scalar, got shape " + shape_str(root->shape));
    }
    if (!root->requires_grad) return;  // constant graph: nothing to propagate
    root->grad[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        if ((*it)->backward) (*it)->backward();
    }
}

namespace {

void finish(const Tape& tape, const Var& v, const char* op_name) {
    if (tape.check_finite() && !v->all_finite()) {
        throw NumericError(std::string(op_name) + " produced non-finite values");
    }
}

bool needs_grad(const Tape& tape, const Var& a) {
    return tape.grad_enabled() && a->requires_grad;
}

bool needs_grad(const Tape& tape, const Var& a, const Var& b) {
    return tape.grad_enabled() && (a->requires_grad || b->requires_grad);
}

void require_2d(const Var& v, const char* op) {
    if (v->ndim() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(v->shape));
    }
}

void require_1d(const Var& v, const char* op) {
    if (v->ndim() != 1) {
        throw DimensionError(std::string(op) + ": expected a vector, got shape " + shape_str(v->shape));
    }
}

}  // namespace

Var matmul(Tape& tape, const Var& a, const Var& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int m = a->rows(), k = a->cols(), p = b->cols();
    if (b->rows() != k) {
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }
    Var out = tape.emit({m, p}, needs_grad(tape, a, b), "matmul");
    const double* av = a->value.data();
    const double* bv = b->value.data();
    double* ov = out->value.data();
    for (int i = 0; i < m; ++i) {
        const double* arow = av + static_cast<std::size_t>(i) * k;
        double* orow = ov + static_cast<std::size_t>(i) * p;
        for (int kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            if (aik == 0.0) continue;
            const double* brow = bv + static_cast<std::size_t>(kk) * p;
            for (int j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, a, b, m, k, p]() {
            const double* g = self->grad.data();
            if (a->requires_grad) {
                double* da = a->grad.data();
                const double* bv = b->value.data();
                for (int i = 0; i < m; ++i) {
                    const double* grow = g + static_cast<std::size_t>(i) * p;
                    double* darow = da + static_cast<std::size_t>(i) * k;
                    for (int kk = 0; kk < k; ++kk) {
                        const double* brow = bv + static_cast<std::size_t>(kk) * p;
                        double acc = 0.0;
                        for (int j = 0; j < p; ++j) acc += grow[j] * brow[j];
                        darow[kk] += acc;
                    }
                }
            }
            if (b->requires_grad) {
                double* db = b->grad.data();
                const double* av = a->value.data();
                for (int i = 0; i < m; ++i) {
                    const double* grow = g + static_cast<std::size_t>(i) * p;
                    const double* arow = av + static_cast<std::size_t>(i) * k;
                    for (int kk = 0; kk < k; ++kk) {
                        const double aik = arow[kk];
                        if (aik == 0.0) continue;
                        double* dbrow = db + static_cast<std::size_t>(kk) * p;
                        for (int j = 0; j < p; ++j) dbrow[j] += aik * grow[j];
                    }
                }
            }
        };
    }
    finish(tape, out, "matmul");
    return out;
}

Var matvec(Tape& tape, const Var& a, const Var& x) {
    require_2d(a, "matvec");
    require_1d(x, "matvec");
    const int m = a->rows(), k = a->cols();
    if (x->size() != k) {
        throw DimensionError("matvec: dimensions disagree: " + shape_str(a->shape) + " vs " +
                             shape_str(x->shape));
    }
    Var out = tape.emit({m}, needs_grad(tape, a, x), "matvec");
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j) acc += a->value[static_cast<std::size_t>(i) * k + j] * x->value[j];
        out->value[i] = acc;
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, a, x, m, k]() {
            const double* g = self->grad.data();
            if (a->requires_grad) {
                for (int i = 0; i < m; ++i) {
                    const double gi = g[i];
                    if (gi == 0.0) continue;
                    double* darow = a->grad.data() + static_cast<std::size_t>(i) * k;
                    for (int j = 0; j < k; ++j) darow[j] += gi * x->value[j];
                }
            }
            if (x->requires_grad) {
                for (int i = 0; i < m; ++i) {
                    const double gi = g[i];
                    if (gi == 0.0) continue;
                    const double* arow = a->value.data() + static_cast<std::size_t>(i) * k;
                    for (int j = 0; j < k; ++j) x->grad[j] += gi * arow[j];
                }
            }
        };
    }
    finish(tape, out, "matvec");
    return out;
}

Var transpose(Tape& tape, const Var& a) {
    require_2d(a, "transpose");
    const int m = a->rows(), n = a->cols();
    Var out = tape.emit({n, m}, needs_grad(tape, a), "transpose");
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out->value[static_cast<std::size_t>(j) * m + i] = a->at(i, j);
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, a, m, n]() {
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    a->grad[static_cast<std::size_t>(i) * n + j] +=
                        self->grad[static_cast<std::size_t>(j) * m + i];
                }
            }
        };
    }
    finish(tape, out, "transpose");
    return out;
}

namespace {

Var binary_same_shape(Tape& tape, const Var& a, const Var& b, const char* name, int mode) {
    if (a->shape != b->shape) {
        throw DimensionError(std::string(name) + ": shapes disagree: " + shape_str(a->shape) +
                             " vs " + shape_str(b->shape));
    }
    Var out = tape.emit(a->shape, needs_grad(tape, a, b), name);
    const std::size_t n = a->value.size();
    for (std::size_t i = 0; i < n; ++i) {
        switch (mode) {
            case 0: out->value[i] = a->value[i] + b->value[i]; break;
            case 1: out->value[i] = a->value[i] - b->value[i]; break;
            default: out->value[i] = a->value[i] * b->value[i]; break;
        }
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, a, b, n, mode]() {
            const double* g = self->grad.data();
            if (a->requires_grad) {
                if (mode == 2) {
                    for (std::size_t i = 0; i < n; ++i) a->grad[i] += g[i] * b->value[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) a->grad[i] += g[i];
                }
            }
            if (b->requires_grad) {
                if (mode == 0) {
                    for (std::size_t i = 0; i < n; ++i) b->grad[i] += g[i];
                } else if (mode == 1) {
                    for (std::size_t i = 0; i < n; ++i) b->grad[i] -= g[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) b->grad[i] += g[i] * a->value[i];
                }
            }
        };
    }
    finish(tape, out, name);
    return out;
}

}  // namespace

Var add(Tape& tape, const Var& a, const Var& b) { return binary_same_shape(tape, a, b, "add", 0); }
Var sub(Tape& tape, const Var& a, const Var& b) { return binary_same_shape(tape, a, b, "sub", 1); }
Var mul(Tape& tape, const Var& a, const Var& b) { return binary_same_shape(tape, a, b, "mul", 2); }

Var add_scalar(Tape& tape, const Var& a, double c) {
    Var out = tape.emit(a->shape, needs_grad(tape, a), "add_scalar");
    for (std::size_t i = 0; i < a->value.size(); ++i) out->value[i] = a->value[i] + c;
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, a]() {
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += self->grad[i];
        };
    }
    finish(tape, out, "add_scalar");
    return out;
}

Var mul_scalar(Tape& tape, const Var& a, double c) {
    Var out = tape.emit(a->shape, needs_grad(tape, a), "mul_scalar");
    for (std::size_t i = 0; i < a->value.size(); ++i) out->value[i] = a->value[i] * c;
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, a, c]() {
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += c * self->grad[i];
        };
    }
    finish(tape, out, "mul_scalar");
    return out;
}

Var rsub_scalar(Tape& tape, double c, const Var& a) {
    Var out = tape.emit(a->shape, needs_grad(tape, a), "rsub_scalar");
    for (std::size_t i = 0; i < a->value.size(); ++i) out->value[i] = c - a->value[i];
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, a]() {
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] -= self->grad[i];
        };
    }
    finish(tape, out, "rsub_scalar");
    return out;
}

Var add_rowvec(Tape& tape, const Var& x, const Var& b) {
    require_2d(x, "add_rowvec");
    require_1d(b, "add_rowvec");
    const int m = x->rows(), d = x->cols();
    if (b->size() != d) {
        throw DimensionError("add_rowvec: shapes disagree: " + shape_str(x->shape) + " vs " +
                             shape_str(b->shape));
    }
    Var out = tape.emit(x->shape, needs_grad(tape, x, b), "add_rowvec");
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d; ++j) {
            out->value[static_cast<std::size_t>(i) * d + j] = x->at(i, j) + b->value[j];
        }
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x, b, m, d]() {
            const double* g = self->grad.data();
            if (x->requires_grad) {
                for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g[i];
            }
            if (b->requires_grad) {
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < d; ++j) b->grad[j] += g[static_cast<std::size_t>(i) * d + j];
                }
            }
        };
    }
    finish(tape, out, "add_rowvec");
    return out;
}

namespace {

// Iterates the 1-D slices along `axis` of a 1-D/2-D tensor.
struct SliceIter {
    int count;    // number of slices
    int len;      // elements per slice
    int stride;   // step between elements of one slice
    int base_step;  // step between slice starts

    static SliceIter make(const Var& x, int axis, const char* op) {
        if (x->ndim() == 1) {
            if (axis != 0) {
                throw DimensionError(std::string(op) + ": invalid axis " + std::to_string(axis) +
                                     " for shape " + shape_str(x->shape));
            }
            return {1, x->size(), 1, 0};
        }
        if (x->ndim() == 2) {
            const int r = x->rows(), c = x->cols();
            if (axis == 1) return {r, c, 1, c};
            if (axis == 0) return {c, r, c, 1};
            throw DimensionError(std::string(op) + ": invalid axis " + std::to_string(axis) +
                                 " for shape " + shape_str(x->shape));
        }
        throw DimensionError(std::string(op) + ": only vectors and matrices supported, got " +
                             shape_str(x->shape));
    }
};

}  // namespace

Var softmax(Tape& tape, const Var& x, int axis) {
    const SliceIter it = SliceIter::make(x, axis, "softmax");
    Var out = tape.emit(x->shape, needs_grad(tape, x), "softmax");
    for (int s = 0; s < it.count; ++s) {
        const int base = s * it.base_step;
        double mx = x->value[base];
        for (int i = 1; i < it.len; ++i) mx = std::max(mx, x->value[base + i * it.stride]);
        double total = 0.0;
        for (int i = 0; i < it.len; ++i) {
            const double e = std::exp(x->value[base + i * it.stride] - mx);
            out->value[base + i * it.stride] = e;
            total += e;
        }
        for (int i = 0; i < it.len; ++i) out->value[base + i * it.stride] /= total;
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x, it]() {
            for (int s = 0; s < it.count; ++s) {
                const int base = s * it.base_step;
                double dot = 0.0;
                for (int i = 0; i < it.len; ++i) {
                    const int idx = base + i * it.stride;
                    dot += self->grad[idx] * self->value[idx];
                }
                for (int i = 0; i < it.len; ++i) {
                    const int idx = base + i * it.stride;
                    x->grad[idx] += self->value[idx] * (self->grad[idx] - dot);
                }
            }
        };
    }
    finish(tape, out, "softmax");
    return out;
}

Var elementwise(Tape& tape, const Var& x, Activation f) {
    Var out = tape.emit(x->shape, needs_grad(tape, x), "elementwise");
    const std::size_t n = x->value.size();
    switch (f) {
        case Activation::Tanh:
            for (std::size_t i = 0; i < n; ++i) out->value[i] = std::tanh(x->value[i]);
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < n; ++i) {
                const double v = x->value[i];
                out->value[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                         : std::exp(v) / (1.0 + std::exp(v));
            }
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < n; ++i) out->value[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
            break;
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x, f, n]() {
            for (std::size_t i = 0; i < n; ++i) {
                double d = 0.0;
                const double y = self->value[i];
                switch (f) {
                    case Activation::Tanh: d = 1.0 - y * y; break;
                    case Activation::Sigmoid: d = y * (1.0 - y); break;
                    case Activation::Relu: d = x->value[i] > 0.0 ? 1.0 : 0.0; break;
                }
                x->grad[i] += self->grad[i] * d;
            }
        };
    }
    finish(tape, out, "elementwise");
    return out;
}

Var tanh(Tape& tape, const Var& x) { return elementwise(tape, x, Activation::Tanh); }
Var sigmoid(Tape& tape, const Var& x) { return elementwise(tape, x, Activation::Sigmoid); }
Var relu(Tape& tape, const Var& x) { return elementwise(tape, x, Activation::Relu); }

Var cosine(Tape& tape, const Var& u, const Var& v) {
    require_1d(u, "cosine");
    require_1d(v, "cosine");
    if (u->size() != v->size()) {
        throw DimensionError("cosine: lengths disagree: " + shape_str(u->shape) + " vs " +
                             shape_str(v->shape));
    }
    const int d = u->size();
    double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
    for (int i = 0; i < d; ++i) {
        dot += u->value[i] * v->value[i];
        nu2 += u->value[i] * u->value[i];
        nv2 += v->value[i] * v->value[i];
    }
    if (nu2 == 0.0 || nv2 == 0.0) {
        throw DegenerateInputError("cosine: zero-norm input vector");
    }
    const double nu = std::sqrt(nu2), nv = std::sqrt(nv2);
    const double c = dot / (nu * nv);
    Var out = tape.emit({1}, needs_grad(tape, u, v), "cosine");
    out->value[0] = c;
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, u, v, d, nu, nv, c]() {
            const double g = self->grad[0];
            if (u->requires_grad) {
                for (int i = 0; i < d; ++i) {
                    u->grad[i] += g * (v->value[i] / (nu * nv) - c * u->value[i] / (nu * nu));
                }
            }
            if (v->requires_grad) {
                for (int i = 0; i < d; ++i) {
                    v->grad[i] += g * (u->value[i] / (nu * nv) - c * v->value[i] / (nv * nv));
                }
            }
        };
    }
    finish(tape, out, "cosine");
    return out;
}

Var concat(Tape& tape, const Var& a, const Var& b, int axis) {
    if (a->ndim() != b->ndim()) {
        throw DimensionError("concat: rank mismatch: " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }
    if (a->ndim() == 1) {
        if (axis != 0) throw DimensionError("concat: invalid axis for vectors");
        Var out = tape.emit({a->size() + b->size()}, needs_grad(tape, a, b), "concat");
        std::copy(a->value.begin(), a->value.end(), out->value.begin());
        std::copy(b->value.begin(), b->value.end(), out->value.begin() + a->size());
        if (out->requires_grad) {
            Tensor* self = out.get();
            const int na = a->size(), nb = b->size();
            out->backward = [self, a, b, na, nb]() {
                if (a->requires_grad) {
                    for (int i = 0; i < na; ++i) a->grad[i] += self->grad[i];
                }
                if (b->requires_grad) {
                    for (int i = 0; i < nb; ++i) b->grad[i] += self->grad[na + i];
                }
            };
        }
        finish(tape, out, "concat");
        return out;
    }
    if (a->ndim() != 2) throw DimensionError("concat: only vectors and matrices supported");
    if (axis == 0) {
        if (a->cols() != b->cols()) {
            throw DimensionError("concat axis 0: column counts disagree: " + shape_str(a->shape) +
                                 " vs " + shape_str(b->shape));
        }
        Var out = tape.emit({a->rows() + b->rows(), a->cols()}, needs_grad(tape, a, b), "concat");
        std::copy(a->value.begin(), a->value.end(), out->value.begin());
        std::copy(b->value.begin(), b->value.end(), out->value.begin() + a->size());
        if (out->requires_grad) {
            Tensor* self = out.get();
            const int na = a->size(), nb = b->size();
            out->backward = [self, a, b, na, nb]() {
                if (a->requires_grad) {
                    for (int i = 0; i < na; ++i) a->grad[i] += self->grad[i];
                }
                if (b->requires_grad) {
                    for (int i = 0; i < nb; ++i) b->grad[i] += self->grad[na + i];
                }
            };
        }
        finish(tape, out, "concat");
        return out;
    }
    if (axis != 1) throw DimensionError("concat: invalid axis " + std::to_string(axis));
    if (a->rows() != b->rows()) {
        throw DimensionError("concat axis 1: row counts disagree: " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }
    const int m = a->rows(), ca = a->cols(), cb = b->cols();
    Var out = tape.emit({m, ca + cb}, needs_grad(tape, a, b), "concat");
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < ca; ++j) out->value[static_cast<std::size_t>(i) * (ca + cb) + j] = a->at(i, j);
        for (int j = 0; j < cb; ++j) {
            out->value[static_cast<std::size_t>(i) * (ca + cb) + ca + j] = b->at(i, j);
        }
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, a, b, m, ca, cb]() {
            for (int i = 0; i < m; ++i) {
                const double* grow = self->grad.data() + static_cast<std::size_t>(i) * (ca + cb);
                if (a->requires_grad) {
                    for (int j = 0; j < ca; ++j) a->grad[static_cast<std::size_t>(i) * ca + j] += grow[j];
                }
                if (b->requires_grad) {
                    for (int j = 0; j < cb; ++j) {
                        b->grad[static_cast<std::size_t>(i) * cb + j] += grow[ca + j];
                    }
                }
            }
        };
    }
    finish(tape, out, "concat");
    return out;
}

Var row(Tape& tape, const Var& x, int i) {
    require_2d(x, "row");
    if (i < 0 || i >= x->rows()) {
        throw ContractError("row index " + std::to_string(i) + " out of range for " +
                            shape_str(x->shape));
    }
    const int d = x->cols();
    Var out = tape.emit({d}, needs_grad(tape, x), "row");
    std::copy(x->value.begin() + static_cast<std::size_t>(i) * d,
              x->value.begin() + static_cast<std::size_t>(i + 1) * d, out->value.begin());
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x, i, d]() {
            for (int j = 0; j < d; ++j) x->grad[static_cast<std::size_t>(i) * d + j] += self->grad[j];
        };
    }
    finish(tape, out, "row");
    return out;
}

Var stack_rows(Tape& tape, const std::vector<Var>& rows) {
    if (rows.empty()) throw ContractError("stack_rows: empty input");
    const int d = rows[0]->size();
    bool any_grad = false;
    for (const auto& r : rows) {
        require_1d(r, "stack_rows");
        if (r->size() != d) {
            throw DimensionError("stack_rows: lengths disagree: " + shape_str(rows[0]->shape) +
                                 " vs " + shape_str(r->shape));
        }
        any_grad = any_grad || r->requires_grad;
    }
    const int m = static_cast<int>(rows.size());
    Var out = tape.emit({m, d}, tape.grad_enabled() && any_grad, "stack_rows");
    for (int i = 0; i < m; ++i) {
        std::copy(rows[i]->value.begin(), rows[i]->value.end(),
                  out->value.begin() + static_cast<std::size_t>(i) * d);
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        auto inputs = rows;
        out->backward = [self, inputs, m, d]() {
            for (int i = 0; i < m; ++i) {
                if (!inputs[i]->requires_grad) continue;
                for (int j = 0; j < d; ++j) {
                    inputs[i]->grad[j] += self->grad[static_cast<std::size_t>(i) * d + j];
                }
            }
        };
    }
    finish(tape, out, "stack_rows");
    return out;
}

Var repeat_rows(Tape& tape, const Var& x, int times) {
    require_2d(x, "repeat_rows");
    if (times < 1) throw ContractError("repeat_rows: times must be >= 1");
    const int r = x->rows(), d = x->cols();
    Var out = tape.emit({r * times, d}, needs_grad(tape, x), "repeat_rows");
    for (int i = 0; i < r; ++i) {
        for (int t = 0; t < times; ++t) {
            std::copy(x->value.begin() + static_cast<std::size_t>(i) * d,
                      x->value.begin() + static_cast<std::size_t>(i + 1) * d,
                      out->value.begin() + (static_cast<std::size_t>(i) * times + t) * d);
        }
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x, r, d, times]() {
            for (int i = 0; i < r; ++i) {
                for (int t = 0; t < times; ++t) {
                    const double* g = self->grad.data() + (static_cast<std::size_t>(i) * times + t) * d;
                    double* dx = x->grad.data() + static_cast<std::size_t>(i) * d;
                    for (int j = 0; j < d; ++j) dx[j] += g[j];
                }
            }
        };
    }
    finish(tape, out, "repeat_rows");
    return out;
}

Var tile_rows(Tape& tape, const Var& x, int times) {
    require_2d(x, "tile_rows");
    if (times < 1) throw ContractError("tile_rows: times must be >= 1");
    const int r = x->rows(), d = x->cols();
    Var out = tape.emit({r * times, d}, needs_grad(tape, x), "tile_rows");
    for (int t = 0; t < times; ++t) {
        std::copy(x->value.begin(), x->value.end(),
                  out->value.begin() + static_cast<std::size_t>(t) * r * d);
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x, r, d, times]() {
            for (int t = 0; t < times; ++t) {
                const double* g = self->grad.data() + static_cast<std::size_t>(t) * r * d;
                for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g[i];
            }
        };
    }
    finish(tape, out, "tile_rows");
    return out;
}

Var reshape(Tape& tape, const Var& x, Shape s) {
    if (shape_numel(s) != x->size()) {
        throw DimensionError("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(s));
    }
    Var out = tape.emit(std::move(s), needs_grad(tape, x), "reshape");
    out->value = x->value;
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x]() {
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += self->grad[i];
        };
    }
    finish(tape, out, "reshape");
    return out;
}

Var sum(Tape& tape, const Var& x) {
    Var out = tape.emit({1}, needs_grad(tape, x), "sum");
    double acc = 0.0;
    for (double v : x->value) acc += v;
    out->value[0] = acc;
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x]() {
            const double g = self->grad[0];
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        };
    }
    finish(tape, out, "sum");
    return out;
}

Var mean(Tape& tape, const Var& x) {
    Var out = tape.emit({1}, needs_grad(tape, x), "mean");
    double acc = 0.0;
    for (double v : x->value) acc += v;
    const double inv = 1.0 / static_cast<double>(x->size());
    out->value[0] = acc * inv;
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x, inv]() {
            const double g = self->grad[0] * inv;
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        };
    }
    finish(tape, out, "mean");
    return out;
}

Var log(Tape& tape, const Var& x) {
    Var out = tape.emit(x->shape, needs_grad(tape, x), "log");
    for (std::size_t i = 0; i < x->value.size(); ++i) {
        if (x->value[i] <= 0.0) throw NumericError("log: non-positive input");
        out->value[i] = std::log(x->value[i]);
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x]() {
            for (std::size_t i = 0; i < x->grad.size(); ++i) {
                x->grad[i] += self->grad[i] / x->value[i];
            }
        };
    }
    finish(tape, out, "log");
    return out;
}

Var clamp(Tape& tape, const Var& x, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    Var out = tape.emit(x->shape, needs_grad(tape, x), "clamp");
    for (std::size_t i = 0; i < x->value.size(); ++i) {
        out->value[i] = std::min(std::max(x->value[i], lo), hi);
    }
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, x, lo, hi]() {
            for (std::size_t i = 0; i < x->grad.size(); ++i) {
                if (x->value[i] >= lo && x->value[i] <= hi) x->grad[i] += self->grad[i];
            }
        };
    }
    finish(tape, out, "clamp");
    return out;
}

Var smooth_l1(Tape& tape, const Var& pred, double target) {
    if (pred->size() != 1) {
        throw ContractError("smooth_l1: prediction must be scalar, got " + shape_str(pred->shape));
    }
    const double d = pred->value[0] - target;
    const double ad = std::abs(d);
    Var out = tape.emit({1}, needs_grad(tape, pred), "smooth_l1");
    out->value[0] = ad < 1.0 ? 0.5 * d * d : ad - 0.5;
    if (out->requires_grad) {
        Tensor* self = out.get();
        out->backward = [self, pred, d, ad]() {
            const double slope = ad < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
            pred->grad[0] += self->grad[0] * slope;
        };
    }
    finish(tape, out, "smooth_l1");
    return out;
}

}  // namespace slp
