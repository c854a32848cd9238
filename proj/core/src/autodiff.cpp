#include "sphnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sphnet/errors.hpp"

namespace sphnet {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() > 2) throw ShapeError(std::string(op) + ": expected at most 2-D, got " + t.shape_str());
}

// out = a·b, out must be pre-sized m×n. ikj order keeps the inner loop contiguous.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    const double* A = a.data();
    const double* B = b.data();
    double* O = out.data();
    std::fill(O, O + static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* Ar = A + static_cast<std::size_t>(i) * k;
        double* Or = O + static_cast<std::size_t>(i) * n;
        for (int t = 0; t < k; ++t) {
            const double av = Ar[t];
            const double* Br = B + static_cast<std::size_t>(t) * n;
            for (int j = 0; j < n; ++j) Or[j] += av * Br[j];
        }
    }
}

// out += g·bᵀ  with g: m×n, b: k×n, out: m×k
void matmul_nt_acc(const Tensor& g, const Tensor& b, Tensor& out) {
    const int m = g.rows(), n = g.cols(), k = b.rows();
    const double* G = g.data();
    const double* B = b.data();
    double* O = out.data();
    for (int i = 0; i < m; ++i) {
        const double* Gr = G + static_cast<std::size_t>(i) * n;
        double* Or = O + static_cast<std::size_t>(i) * k;
        for (int t = 0; t < k; ++t) {
            const double* Br = B + static_cast<std::size_t>(t) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += Gr[j] * Br[j];
            Or[t] += dot;
        }
    }
}

// out += aᵀ·g  with a: m×k, g: m×n, out: k×n
void matmul_tn_acc(const Tensor& a, const Tensor& g, Tensor& out) {
    const int m = a.rows(), k = a.cols(), n = g.cols();
    const double* A = a.data();
    const double* G = g.data();
    double* O = out.data();
    for (int i = 0; i < m; ++i) {
        const double* Ar = A + static_cast<std::size_t>(i) * k;
        const double* Gr = G + static_cast<std::size_t>(i) * n;
        for (int t = 0; t < k; ++t) {
            const double av = Ar[t];
            double* Or = O + static_cast<std::size_t>(t) * n;
            for (int j = 0; j < n; ++j) Or[j] += av * Gr[j];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------- Tape

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

const Tensor& Tape::grad(Var v) const {
    static const Tensor kEmpty;
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.grad.empty() ? kEmpty : n.grad;
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

void Tape::accumulate_grad(int id, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    Tensor& buf = grad_buffer(id);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void Tape::backward(Var loss) {
    if (loss.tape != this || loss.id < 0) throw Error("backward: loss is not on this tape");
    Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (ln.value.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + ln.value.shape_str());
    }
    ln.grad = Tensor::full(ln.value.shape(), 1.0);
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty() || !n.requires_grad || !n.backprop) continue;
        n.backprop(*this, n);
    }
}

// ---------------------------------------------------------------- helpers

namespace {

bool any_requires_grad(Tape* t, std::initializer_list<Var> vs) {
    for (Var v : vs) {
        if (t->node(v.id).requires_grad) return true;
    }
    return false;
}

Tape* common_tape(std::initializer_list<Var> vs, const char* op) {
    Tape* t = nullptr;
    for (Var v : vs) {
        if (!v.valid()) throw Error(std::string(op) + ": invalid operand");
        if (t == nullptr) t = v.tape;
        if (v.tape != t) throw Error(std::string(op) + ": operands live on different tapes");
    }
    return t;
}

}  // namespace

// ---------------------------------------------------------------- primitives

Tensor matmul_values(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dims " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + " (shapes " + a.shape_str() + " and " +
                         b.shape_str() + ")");
    }
    Tensor out({a.rows(), b.cols()});
    matmul_into(a, b, out);
    return out;
}

Var matmul(Var a, Var b) {
    Tape* t = common_tape({a, b}, "matmul");
    Tape::Node n;
    n.value = matmul_values(t->value(a), t->value(b));
    n.inputs[0] = a.id;
    n.inputs[1] = b.id;
    n.n_inputs = 2;
    n.requires_grad = any_requires_grad(t, {a, b});
    n.backprop = [](Tape& tp, const Tape::Node& self) {
        const Tensor& g = self.grad;
        const int ia = self.inputs[0], ib = self.inputs[1];
        if (tp.node(ia).requires_grad) matmul_nt_acc(g, tp.node(ib).value, tp.grad_buffer(ia));
        if (tp.node(ib).requires_grad) matmul_tn_acc(tp.node(ia).value, g, tp.grad_buffer(ib));
    };
    return t->push(std::move(n));
}

namespace {

Var elementwise_binary(Var a, Var b, const char* op, double (*fwd)(double, double),
                       void (*bwd)(Tape&, const Tape::Node&)) {
    Tape* t = common_tape({a, b}, op);
    const Tensor& av = t->value(a);
    const Tensor& bv = t->value(b);
    if (!av.same_shape(bv)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    }
    Tape::Node n;
    n.value = Tensor(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = fwd(av[i], bv[i]);
    n.inputs[0] = a.id;
    n.inputs[1] = b.id;
    n.n_inputs = 2;
    n.requires_grad = any_requires_grad(t, {a, b});
    n.backprop = bwd;
    return t->push(std::move(n));
}

}  // namespace

Var add(Var a, Var b) {
    return elementwise_binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](Tape& tp, const Tape::Node& self) {
            tp.accumulate_grad(self.inputs[0], self.grad);
            tp.accumulate_grad(self.inputs[1], self.grad);
        });
}

Var sub(Var a, Var b) {
    return elementwise_binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](Tape& tp, const Tape::Node& self) {
            tp.accumulate_grad(self.inputs[0], self.grad);
            const int ib = self.inputs[1];
            if (tp.node(ib).requires_grad) {
                Tensor& buf = tp.grad_buffer(ib);
                for (std::size_t i = 0; i < self.grad.size(); ++i) buf[i] -= self.grad[i];
            }
        });
}

Var mul(Var a, Var b) {
    return elementwise_binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](Tape& tp, const Tape::Node& self) {
            const int ia = self.inputs[0], ib = self.inputs[1];
            const Tensor& av = tp.node(ia).value;
            const Tensor& bv = tp.node(ib).value;
            if (tp.node(ia).requires_grad) {
                Tensor& buf = tp.grad_buffer(ia);
                for (std::size_t i = 0; i < self.grad.size(); ++i) buf[i] += self.grad[i] * bv[i];
            }
            if (tp.node(ib).requires_grad) {
                Tensor& buf = tp.grad_buffer(ib);
                for (std::size_t i = 0; i < self.grad.size(); ++i) buf[i] += self.grad[i] * av[i];
            }
        });
}

Var add_row(Var m, Var row) {
    Tape* t = common_tape({m, row}, "add_row");
    const Tensor& mv = t->value(m);
    const Tensor& rv = t->value(row);
    require_2d(mv, "add_row");
    if (static_cast<int>(rv.size()) != mv.cols()) {
        throw ShapeError("add_row: row length " + std::to_string(rv.size()) +
                         " does not match matrix " + mv.shape_str());
    }
    Tape::Node n;
    n.value = Tensor(mv.shape());
    const int r = mv.rows(), c = mv.cols();
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) n.value[static_cast<std::size_t>(i) * c + j] = mv[static_cast<std::size_t>(i) * c + j] + rv[j];
    }
    n.inputs[0] = m.id;
    n.inputs[1] = row.id;
    n.n_inputs = 2;
    n.requires_grad = any_requires_grad(t, {m, row});
    n.backprop = [](Tape& tp, const Tape::Node& self) {
        tp.accumulate_grad(self.inputs[0], self.grad);
        const int ir = self.inputs[1];
        if (tp.node(ir).requires_grad) {
            Tensor& buf = tp.grad_buffer(ir);
            const int rows = self.grad.rows(), cols = self.grad.cols();
            for (int i = 0; i < rows; ++i) {
                for (int j = 0; j < cols; ++j) buf[j] += self.grad[static_cast<std::size_t>(i) * cols + j];
            }
        }
    };
    return t->push(std::move(n));
}

Var scale(Var a, double s) {
    Tape* t = common_tape({a}, "scale");
    const Tensor& av = t->value(a);
    Tape::Node n;
    n.value = Tensor(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] * s;
    n.inputs[0] = a.id;
    n.n_inputs = 1;
    n.requires_grad = t->node(a.id).requires_grad;
    n.backprop = [s](Tape& tp, const Tape::Node& self) {
        const int ia = self.inputs[0];
        if (tp.node(ia).requires_grad) {
            Tensor& buf = tp.grad_buffer(ia);
            for (std::size_t i = 0; i < self.grad.size(); ++i) buf[i] += self.grad[i] * s;
        }
    };
    return t->push(std::move(n));
}

Var transpose(Var a) {
    Tape* t = common_tape({a}, "transpose");
    const Tensor& av = t->value(a);
    require_2d(av, "transpose");
    const int r = av.rows(), c = av.cols();
    Tape::Node n;
    n.value = Tensor({c, r});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) n.value[static_cast<std::size_t>(j) * r + i] = av[static_cast<std::size_t>(i) * c + j];
    }
    n.inputs[0] = a.id;
    n.n_inputs = 1;
    n.requires_grad = t->node(a.id).requires_grad;
    n.backprop = [r, c](Tape& tp, const Tape::Node& self) {
        const int ia = self.inputs[0];
        if (!tp.node(ia).requires_grad) return;
        Tensor& buf = tp.grad_buffer(ia);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) buf[static_cast<std::size_t>(i) * c + j] += self.grad[static_cast<std::size_t>(j) * r + i];
        }
    };
    return t->push(std::move(n));
}

Tensor softmax_rows_values(const Tensor& a) {
    require_2d(a, "softmax_rows");
    const int r = a.rows(), c = a.cols();
    Tensor out(a.ndim() == 1 ? std::vector<int>{c} : std::vector<int>{r, c});
    for (int i = 0; i < r; ++i) {
        const double* x = a.data() + static_cast<std::size_t>(i) * c;
        double* y = out.data() + static_cast<std::size_t>(i) * c;
        double mx = x[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (int j = 0; j < c; ++j) y[j] /= sum;
    }
    return out;
}

Var softmax_rows(Var a) {
    Tape* t = common_tape({a}, "softmax_rows");
    Tape::Node n;
    n.value = softmax_rows_values(t->value(a));
    n.inputs[0] = a.id;
    n.n_inputs = 1;
    n.requires_grad = t->node(a.id).requires_grad;
    n.backprop = [](Tape& tp, const Tape::Node& self) {
        const int ia = self.inputs[0];
        if (!tp.node(ia).requires_grad) return;
        const Tensor& y = self.value;
        const Tensor& g = self.grad;
        Tensor& buf = tp.grad_buffer(ia);
        const int r = y.rows(), c = y.cols();
        for (int i = 0; i < r; ++i) {
            const double* yr = y.data() + static_cast<std::size_t>(i) * c;
            const double* gr = g.data() + static_cast<std::size_t>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += gr[j] * yr[j];
            double* br = buf.data() + static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) br[j] += yr[j] * (gr[j] - dot);
        }
    };
    return t->push(std::move(n));
}

Tensor layer_norm_values(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_2d(x, "layer_norm");
    const int r = x.rows(), d = x.cols();
    if (static_cast<int>(gamma.size()) != d || static_cast<int>(beta.size()) != d) {
        throw ShapeError("layer_norm: gamma/beta length must match last dim " + std::to_string(d));
    }
    Tensor out(x.shape());
    for (int i = 0; i < r; ++i) {
        const double* xr = x.data() + static_cast<std::size_t>(i) * d;
        double* yr = out.data() + static_cast<std::size_t>(i) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j) yr[j] = gamma[static_cast<std::size_t>(j)] * (xr[j] - mu) * inv + beta[static_cast<std::size_t>(j)];
    }
    return out;
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    Tape* t = common_tape({x, gamma, beta}, "layer_norm");
    Tape::Node n;
    n.value = layer_norm_values(t->value(x), t->value(gamma), t->value(beta), eps);
    n.inputs[0] = x.id;
    n.inputs[1] = gamma.id;
    n.inputs[2] = beta.id;
    n.n_inputs = 3;
    n.requires_grad = any_requires_grad(t, {x, gamma, beta});
    n.backprop = [eps](Tape& tp, const Tape::Node& self) {
        const int ix = self.inputs[0], ig = self.inputs[1], ib = self.inputs[2];
        const Tensor& xv = tp.node(ix).value;
        const Tensor& gv = tp.node(ig).value;
        const Tensor& g = self.grad;
        const int r = xv.rows(), d = xv.cols();
        const bool need_x = tp.node(ix).requires_grad;
        const bool need_g = tp.node(ig).requires_grad;
        const bool need_b = tp.node(ib).requires_grad;
        std::vector<double> xhat(static_cast<std::size_t>(d));
        for (int i = 0; i < r; ++i) {
            const double* xr = xv.data() + static_cast<std::size_t>(i) * d;
            const double* gr = g.data() + static_cast<std::size_t>(i) * d;
            double mu = 0.0;
            for (int j = 0; j < d; ++j) mu += xr[j];
            mu /= d;
            double var = 0.0;
            for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
            var /= d;
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int j = 0; j < d; ++j) xhat[static_cast<std::size_t>(j)] = (xr[j] - mu) * inv;
            if (need_b) {
                Tensor& bb = tp.grad_buffer(ib);
                for (int j = 0; j < d; ++j) bb[static_cast<std::size_t>(j)] += gr[j];
            }
            if (need_g) {
                Tensor& gb = tp.grad_buffer(ig);
                for (int j = 0; j < d; ++j) gb[static_cast<std::size_t>(j)] += gr[j] * xhat[static_cast<std::size_t>(j)];
            }
            if (need_x) {
                // d/dx of gamma*(x-mu)/sqrt(var+eps): project out the mean and
                // the x̂ component, then rescale.
                Tensor& xb = tp.grad_buffer(ix);
                double mean_gy = 0.0, mean_gyx = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double gy = gr[j] * gv[static_cast<std::size_t>(j)];
                    mean_gy += gy;
                    mean_gyx += gy * xhat[static_cast<std::size_t>(j)];
                }
                mean_gy /= d;
                mean_gyx /= d;
                double* xbr = xb.data() + static_cast<std::size_t>(i) * d;
                for (int j = 0; j < d; ++j) {
                    const double gy = gr[j] * gv[static_cast<std::size_t>(j)];
                    xbr[j] += inv * (gy - mean_gy - xhat[static_cast<std::size_t>(j)] * mean_gyx);
                }
            }
        }
    };
    return t->push(std::move(n));
}

namespace {

Var elementwise_unary(Var a, const char* op, double (*fwd)(double), double (*deriv)(double)) {
    Tape* t = common_tape({a}, op);
    const Tensor& av = t->value(a);
    Tape::Node n;
    n.value = Tensor(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = fwd(av[i]);
    n.inputs[0] = a.id;
    n.n_inputs = 1;
    n.requires_grad = t->node(a.id).requires_grad;
    n.backprop = [deriv](Tape& tp, const Tape::Node& self) {
        const int ia = self.inputs[0];
        if (!tp.node(ia).requires_grad) return;
        const Tensor& av = tp.node(ia).value;
        Tensor& buf = tp.grad_buffer(ia);
        for (std::size_t i = 0; i < self.grad.size(); ++i) buf[i] += self.grad[i] * deriv(av[i]);
    };
    return t->push(std::move(n));
}

}  // namespace

Var gelu(Var a) {
    return elementwise_unary(
        a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x) {
            return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        });
}

Var relu(Var a) {
    return elementwise_unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var mean_rows(Var a) {
    Tape* t = common_tape({a}, "mean_rows");
    const Tensor& av = t->value(a);
    require_2d(av, "mean_rows");
    const int r = av.rows(), c = av.cols();
    Tape::Node n;
    n.value = Tensor({1, c});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) n.value[static_cast<std::size_t>(j)] += av[static_cast<std::size_t>(i) * c + j];
    }
    for (int j = 0; j < c; ++j) n.value[static_cast<std::size_t>(j)] /= r;
    n.inputs[0] = a.id;
    n.n_inputs = 1;
    n.requires_grad = t->node(a.id).requires_grad;
    n.backprop = [r, c](Tape& tp, const Tape::Node& self) {
        const int ia = self.inputs[0];
        if (!tp.node(ia).requires_grad) return;
        Tensor& buf = tp.grad_buffer(ia);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) buf[static_cast<std::size_t>(i) * c + j] += self.grad[static_cast<std::size_t>(j)] / r;
        }
    };
    return t->push(std::move(n));
}

namespace {

Var reduce_all(Var a, bool mean) {
    Tape* t = common_tape({a}, mean ? "mean_all" : "sum_all");
    const Tensor& av = t->value(a);
    const double denom = mean ? static_cast<double>(av.size()) : 1.0;
    Tape::Node n;
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
    n.value = Tensor::scalar(s / denom);
    n.inputs[0] = a.id;
    n.n_inputs = 1;
    n.requires_grad = t->node(a.id).requires_grad;
    n.backprop = [denom](Tape& tp, const Tape::Node& self) {
        const int ia = self.inputs[0];
        if (!tp.node(ia).requires_grad) return;
        Tensor& buf = tp.grad_buffer(ia);
        const double g = self.grad[0] / denom;
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g;
    };
    return t->push(std::move(n));
}

}  // namespace

Var mean_all(Var a) { return reduce_all(a, true); }

Var sum_all(Var a) { return reduce_all(a, false); }

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error("concat_cols: no operands");
    Tape* t = parts[0].tape;
    int rows = t->value(parts[0]).rows();
    int total_cols = 0;
    for (Var p : parts) {
        if (p.tape != t) throw Error("concat_cols: operands live on different tapes");
        const Tensor& pv = t->value(p);
        require_2d(pv, "concat_cols");
        if (pv.rows() != rows) {
            throw ShapeError("concat_cols: row mismatch " + std::to_string(pv.rows()) + " vs " +
                             std::to_string(rows));
        }
        total_cols += pv.cols();
    }
    // Keep per-part ids/widths in the closure; Node::inputs only tracks up to 3.
    std::vector<int> ids(parts.size());
    std::vector<int> widths(parts.size());
    for (std::size_t p = 0; p < parts.size(); ++p) {
        ids[p] = parts[p].id;
        widths[p] = t->value(parts[p]).cols();
    }
    Tape::Node n;
    n.value = Tensor({rows, total_cols});
    {
        int off = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const Tensor& pv = t->value(parts[p]);
            const int c = widths[p];
            for (int i = 0; i < rows; ++i) {
                for (int j = 0; j < c; ++j) {
                    n.value[static_cast<std::size_t>(i) * total_cols + off + j] = pv[static_cast<std::size_t>(i) * c + j];
                }
            }
            off += c;
        }
    }
    bool req = false;
    for (int id : ids) req = req || t->node(id).requires_grad;
    n.requires_grad = req;
    n.backprop = [ids, widths, rows, total_cols](Tape& tp, const Tape::Node& self) {
        int off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            const int c = widths[p];
            if (tp.node(ids[p]).requires_grad) {
                Tensor& buf = tp.grad_buffer(ids[p]);
                for (int i = 0; i < rows; ++i) {
                    for (int j = 0; j < c; ++j) {
                        buf[static_cast<std::size_t>(i) * c + j] += self.grad[static_cast<std::size_t>(i) * total_cols + off + j];
                    }
                }
            }
            off += c;
        }
    };
    return t->push(std::move(n));
}

// ---------------------------------------------------------------- ParamStore

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    if (has(name)) throw ConfigError("parameter '" + name + "' already exists");
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, _] : items_) {
        if (n == name) return true;
    }
    return false;
}

Tensor& ParamStore::get(const std::string& name) {
    for (auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

const Tensor& ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

std::size_t ParamStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
}

// ---------------------------------------------------------------- grad_check

namespace {

double eval_loss(const LossBuilder& build, const ParamStore& params) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const auto& [_, t] : params.items()) vars.push_back(tape.leaf(t, false));
    Var loss = build(tape, vars);
    const Tensor& lv = tape.value(loss);
    if (lv.size() != 1) throw ShapeError("grad_check: loss must be scalar, got " + lv.shape_str());
    return lv[0];
}

}  // namespace

double grad_check(const LossBuilder& build, const ParamStore& params, int probe_count,
                  std::uint64_t seed, double step) {
    if (probe_count < 1) throw ConfigError("probe_count must be >= 1");
    if (params.total_elements() == 0) throw ConfigError("grad_check: empty parameter store");

    // One reverse-mode pass for all analytic gradients.
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(params.size());
        for (const auto& [_, t] : params.items()) vars.push_back(tape.leaf(t, true));
        Var loss = build(tape, vars);
        if (tape.value(loss).size() != 1) {
            throw ShapeError("grad_check: loss must be scalar, got " + tape.value(loss).shape_str());
        }
        tape.backward(loss);
        for (std::size_t i = 0; i < vars.size(); ++i) {
            const Tensor& g = tape.grad(vars[i]);
            analytic.push_back(g.empty() ? Tensor::zeros(params.items()[i].second.shape()) : g);
        }
    }

    ParamStore work;
    for (const auto& [name, t] : params.items()) work.add(name, t);

    std::mt19937_64 rng(seed);
    const std::size_t total = params.total_elements();
    double worst = 0.0;
    for (int p = 0; p < probe_count; ++p) {
        std::size_t flat = rng() % total;
        std::size_t ti = 0;
        while (flat >= work.items()[ti].second.size()) {
            flat -= work.items()[ti].second.size();
            ++ti;
        }
        Tensor& t = work.items()[ti].second;
        const double saved = t[flat];
        t[flat] = saved + step;
        const double f_plus = eval_loss(build, work);
        t[flat] = saved - step;
        const double f_minus = eval_loss(build, work);
        t[flat] = saved;
        const double fd = (f_plus - f_minus) / (2.0 * step);
        const double ad = analytic[ti][flat];
        const double denom = std::max({std::abs(ad), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(ad - fd) / denom);
    }
    return worst;
}

}  // namespace sphnet
