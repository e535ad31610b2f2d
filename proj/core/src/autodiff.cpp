#include "roadtagger/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "roadtagger/errors.hpp"
#include "roadtagger/rng.hpp"

namespace roadtagger {

namespace {

// C (n x m) += A (n x k) * B (k x m)
void gemm_nn(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (n x k) += G (n x m) * B^T (B is k x m)
void gemm_nt(const double* g, const double* b, double* c, int n, int m, int k) {
    for (int i = 0; i < n; ++i) {
        const double* grow = g + static_cast<std::size_t>(i) * m;
        double* crow = c + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * m;
            double acc = 0.0;
            for (int p = 0; p < m; ++p) acc += grow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C (k x m) += A^T (A is n x k) * G (n x m)
void gemm_tn(const double* a, const double* g, double* c, int n, int k, int m) {
    for (int p = 0; p < n; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * k;
        const double* grow = g + static_cast<std::size_t>(p) * m;
        for (int i = 0; i < k; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) crow[j] += av * grow[j];
        }
    }
}

void ensure_finite(const Tensor& t, const char* op) {
    if (!t.all_finite())
        throw NumericError(std::string(op) + ": non-finite value in output " + t.shape_str());
}

}  // namespace

Parameter& ParamStore::create(std::string name, Tensor init) {
    for (const auto& p : items_)
        if (p->name == name) throw DataError("ParamStore: duplicate parameter " + name);
    auto p = std::make_unique<Parameter>();
    p->name = std::move(name);
    p->grad = Tensor::zeros(init.shape());
    p->value = std::move(init);
    items_.push_back(std::move(p));
    return *items_.back();
}

Parameter* ParamStore::find(const std::string& name) {
    for (const auto& p : items_)
        if (p->name == name) return p.get();
    return nullptr;
}

void ParamStore::zero_grads() {
    for (auto& p : items_) p->zero_grad();
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p->value.size();
    return n;
}

std::vector<Tensor> ParamStore::state() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const auto& p : items_) out.push_back(p->value);
    return out;
}

void ParamStore::set_state(const std::vector<Tensor>& state) {
    if (state.size() != items_.size()) throw DataError("ParamStore: state size mismatch");
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (!state[i].same_shape(items_[i]->value))
            throw ShapeError("ParamStore: state shape mismatch for " + items_[i]->name);
        items_[i]->value = state[i];
    }
}

Tensor glorot_uniform(std::vector<int> shape, std::uint64_t seed) {
    int fan_in = 0, fan_out = 0;
    if (shape.size() >= 2) {
        fan_in = shape[0];
        fan_out = shape[1];
    } else if (shape.size() == 1) {
        fan_in = fan_out = shape[0];
    } else {
        throw ShapeError("glorot_uniform: rank-0 shape");
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double u = counter_uniform(seed, i);  // [0,1)
        t.data()[i] = limit * (2.0 * u - 1.0);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Var Tape::emplace(Tensor value, bool needs_grad, const char* op) {
    ensure_finite(value, op);
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

void Tape::check(Var v, const char* op) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
        throw ShapeError(std::string(op) + ": invalid tape handle");
}

Var Tape::input(Tensor value) { return emplace(std::move(value), true, "input"); }

Var Tape::constant(Tensor value) { return emplace(std::move(value), false, "constant"); }

Var Tape::param(Parameter& p) {
    for (const auto& [ptr, id] : param_nodes_)
        if (ptr == &p) return Var{id};
    Var v = emplace(p.value, true, "param");
    nodes_[v.id].bound = &p;
    param_nodes_.emplace_back(&p, v.id);
    return v;
}

const Tensor& Tape::value(Var v) const {
    check(v, "value");
    return nodes_[v.id].value;
}

Tensor Tape::grad(Var v) const {
    check(v, "grad");
    const Node& n = nodes_[v.id];
    if (n.grad.empty()) return Tensor::zeros(n.value.shape());
    return n.grad;
}

Var Tape::matmul(Var a, Var b) {
    check(a, "matmul");
    check(b, "matmul");
    const Tensor& ta = nodes_[a.id].value;
    const Tensor& tb = nodes_[b.id].value;
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
        throw ShapeError("matmul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    const int n = ta.rows(), k = ta.cols(), m = tb.cols();
    Tensor out({n, m});
    gemm_nn(ta.data(), tb.data(), out.data(), n, k, m);
    const bool ng = needs(a) || needs(b);
    Var v = emplace(std::move(out), ng, "matmul");
    if (ng) {
        nodes_[v.id].backprop = [this, a, b, v, n, k, m]() {
            const Tensor& g = nodes_[v.id].grad;
            if (needs(a)) gemm_nt(g.data(), nodes_[b.id].value.data(), grad_buf(a.id).data(), n, m, k);
            if (needs(b)) gemm_tn(nodes_[a.id].value.data(), g.data(), grad_buf(b.id).data(), n, k, m);
        };
    }
    return v;
}

Var Tape::add(Var a, Var b) {
    check(a, "add");
    check(b, "add");
    const Tensor& ta = nodes_[a.id].value;
    const Tensor& tb = nodes_[b.id].value;
    const bool broadcast = !ta.same_shape(tb);
    if (broadcast) {
        // b broadcast across the rows of a
        const bool row_like = (tb.rank() == 1 && tb.cols() == ta.cols()) ||
                              (tb.rank() == 2 && tb.rows() == 1 && tb.cols() == ta.cols());
        if (ta.rank() != 2 || !row_like)
            throw ShapeError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    const int rows = ta.rows(), cols = ta.cols();
    if (broadcast) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) out.at(r, c) += tb.at(c);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += tb.data()[i];
    }
    const bool ng = needs(a) || needs(b);
    Var v = emplace(std::move(out), ng, "add");
    if (ng) {
        nodes_[v.id].backprop = [this, a, b, v, broadcast, rows, cols]() {
            const Tensor& g = nodes_[v.id].grad;
            if (needs(a)) {
                Tensor& ga = grad_buf(a.id);
                for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i];
            }
            if (needs(b)) {
                Tensor& gb = grad_buf(b.id);
                if (broadcast) {
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < cols; ++c) gb.at(c) += g.at(r, c);
                } else {
                    for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] += g.data()[i];
                }
            }
        };
    }
    return v;
}

Var Tape::sub(Var a, Var b) {
    check(a, "sub");
    check(b, "sub");
    const Tensor& ta = nodes_[a.id].value;
    const Tensor& tb = nodes_[b.id].value;
    if (!ta.same_shape(tb))
        throw ShapeError("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= tb.data()[i];
    const bool ng = needs(a) || needs(b);
    Var v = emplace(std::move(out), ng, "sub");
    if (ng) {
        nodes_[v.id].backprop = [this, a, b, v]() {
            const Tensor& g = nodes_[v.id].grad;
            if (needs(a)) {
                Tensor& ga = grad_buf(a.id);
                for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i];
            }
            if (needs(b)) {
                Tensor& gb = grad_buf(b.id);
                for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] -= g.data()[i];
            }
        };
    }
    return v;
}

Var Tape::mul(Var a, Var b) {
    check(a, "elementwise_mul");
    check(b, "elementwise_mul");
    const Tensor& ta = nodes_[a.id].value;
    const Tensor& tb = nodes_[b.id].value;
    if (!ta.same_shape(tb))
        throw ShapeError("elementwise_mul: shape mismatch " + ta.shape_str() + " vs " +
                         tb.shape_str());
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= tb.data()[i];
    const bool ng = needs(a) || needs(b);
    Var v = emplace(std::move(out), ng, "elementwise_mul");
    if (ng) {
        nodes_[v.id].backprop = [this, a, b, v]() {
            const Tensor& g = nodes_[v.id].grad;
            if (needs(a)) {
                Tensor& ga = grad_buf(a.id);
                const Tensor& vb = nodes_[b.id].value;
                for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i] * vb.data()[i];
            }
            if (needs(b)) {
                Tensor& gb = grad_buf(b.id);
                const Tensor& va = nodes_[a.id].value;
                for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] += g.data()[i] * va.data()[i];
            }
        };
    }
    return v;
}

Var Tape::scale(Var a, double c) {
    check(a, "scale");
    Tensor out = nodes_[a.id].value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
    const bool ng = needs(a);
    Var v = emplace(std::move(out), ng, "scale");
    if (ng) {
        nodes_[v.id].backprop = [this, a, v, c]() {
            const Tensor& g = nodes_[v.id].grad;
            Tensor& ga = grad_buf(a.id);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += c * g.data()[i];
        };
    }
    return v;
}

Var Tape::sigmoid(Var a) {
    check(a, "sigmoid");
    Tensor out = nodes_[a.id].value;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out.data()[i];
        out.data()[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                 : std::exp(x) / (1.0 + std::exp(x));
    }
    const bool ng = needs(a);
    Var v = emplace(std::move(out), ng, "sigmoid");
    if (ng) {
        nodes_[v.id].backprop = [this, a, v]() {
            const Tensor& g = nodes_[v.id].grad;
            const Tensor& y = nodes_[v.id].value;
            Tensor& ga = grad_buf(a.id);
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga.data()[i] += g.data()[i] * y.data()[i] * (1.0 - y.data()[i]);
        };
    }
    return v;
}

Var Tape::tanh(Var a) {
    check(a, "tanh");
    Tensor out = nodes_[a.id].value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
    const bool ng = needs(a);
    Var v = emplace(std::move(out), ng, "tanh");
    if (ng) {
        nodes_[v.id].backprop = [this, a, v]() {
            const Tensor& g = nodes_[v.id].grad;
            const Tensor& y = nodes_[v.id].value;
            Tensor& ga = grad_buf(a.id);
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga.data()[i] += g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
        };
    }
    return v;
}

Var Tape::relu(Var a) {
    check(a, "relu");
    Tensor out = nodes_[a.id].value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(0.0, out.data()[i]);
    const bool ng = needs(a);
    Var v = emplace(std::move(out), ng, "relu");
    if (ng) {
        nodes_[v.id].backprop = [this, a, v]() {
            const Tensor& g = nodes_[v.id].grad;
            const Tensor& x = nodes_[a.id].value;
            Tensor& ga = grad_buf(a.id);
            for (std::size_t i = 0; i < ga.size(); ++i)
                if (x.data()[i] > 0.0) ga.data()[i] += g.data()[i];
        };
    }
    return v;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    int rows = -1, total = 0;
    bool ng = false;
    for (Var p : parts) {
        check(p, "concat");
        const Tensor& t = nodes_[p.id].value;
        if (t.rank() != 2) throw ShapeError("concat: rank-2 inputs required, got " + t.shape_str());
        if (rows < 0) rows = t.rows();
        if (t.rows() != rows)
            throw ShapeError("concat: row mismatch " + std::to_string(t.rows()) + " vs " +
                             std::to_string(rows));
        total += t.cols();
        ng = ng || needs(p);
    }
    Tensor out({rows, total});
    int off = 0;
    for (Var p : parts) {
        const Tensor& t = nodes_[p.id].value;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < t.cols(); ++c) out.at(r, off + c) = t.at(r, c);
        off += t.cols();
    }
    Var v = emplace(std::move(out), ng, "concat");
    if (ng) {
        std::vector<Var> held = parts;
        nodes_[v.id].backprop = [this, held, v, rows]() {
            const Tensor& g = nodes_[v.id].grad;
            int off = 0;
            for (Var p : held) {
                const int cols = nodes_[p.id].value.cols();
                if (needs(p)) {
                    Tensor& gp = grad_buf(p.id);
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < cols; ++c) gp.at(r, c) += g.at(r, off + c);
                }
                off += cols;
            }
        };
    }
    return v;
}

Var Tape::slice_chunk(Var a, int chunk, int chunk_count) {
    check(a, "slice_chunk");
    const Tensor& t = nodes_[a.id].value;
    if (t.rank() != 2 || chunk_count <= 0 || t.cols() % chunk_count != 0)
        throw ShapeError("slice_chunk: cannot split " + t.shape_str() + " into " +
                         std::to_string(chunk_count) + " chunks");
    if (chunk < 0 || chunk >= chunk_count)
        throw ShapeError("slice_chunk: chunk index out of range");
    const int rows = t.rows(), width = t.cols() / chunk_count, off = chunk * width;
    Tensor out({rows, width});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < width; ++c) out.at(r, c) = t.at(r, off + c);
    const bool ng = needs(a);
    Var v = emplace(std::move(out), ng, "slice_chunk");
    if (ng) {
        nodes_[v.id].backprop = [this, a, v, rows, width, off]() {
            const Tensor& g = nodes_[v.id].grad;
            Tensor& ga = grad_buf(a.id);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < width; ++c) ga.at(r, off + c) += g.at(r, c);
        };
    }
    return v;
}

Var Tape::softmax_rows(Var a) {
    check(a, "softmax");
    const Tensor& t = nodes_[a.id].value;
    if (t.rank() != 2) throw ShapeError("softmax: rank-2 input required, got " + t.shape_str());
    Tensor out = t;
    const int rows = t.rows(), cols = t.cols();
    for (int r = 0; r < rows; ++r) {
        double mx = out.at(r, 0);
        for (int c = 1; c < cols; ++c) mx = std::max(mx, out.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            out.at(r, c) = std::exp(out.at(r, c) - mx);
            sum += out.at(r, c);
        }
        for (int c = 0; c < cols; ++c) out.at(r, c) /= sum;
    }
    const bool ng = needs(a);
    Var v = emplace(std::move(out), ng, "softmax");
    if (ng) {
        nodes_[v.id].backprop = [this, a, v, rows, cols]() {
            const Tensor& g = nodes_[v.id].grad;
            const Tensor& y = nodes_[v.id].value;
            Tensor& ga = grad_buf(a.id);
            for (int r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += g.at(r, c) * y.at(r, c);
                for (int c = 0; c < cols; ++c)
                    ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
            }
        };
    }
    return v;
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& classes) {
    check(logits, "cross_entropy");
    const Tensor& t = nodes_[logits.id].value;
    if (t.rank() != 2)
        throw ShapeError("cross_entropy: rank-2 logits required, got " + t.shape_str());
    const int rows = t.rows(), cols = t.cols();
    if (static_cast<int>(classes.size()) != rows)
        throw ShapeError("cross_entropy: class count " + std::to_string(classes.size()) +
                         " does not match rows " + std::to_string(rows));
    for (int c : classes)
        if (c < 0 || c >= cols) throw ShapeError("cross_entropy: class index out of range");
    Tensor out({rows, 1});
    for (int r = 0; r < rows; ++r) {
        double mx = t.at(r, 0);
        for (int c = 1; c < cols; ++c) mx = std::max(mx, t.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) sum += std::exp(t.at(r, c) - mx);
        out.at(r, 0) = std::log(sum) + mx - t.at(r, classes[r]);
    }
    const bool ng = needs(logits);
    Var v = emplace(std::move(out), ng, "cross_entropy");
    if (ng) {
        std::vector<int> held = classes;
        nodes_[v.id].backprop = [this, logits, v, held, rows, cols]() {
            const Tensor& g = nodes_[v.id].grad;
            const Tensor& z = nodes_[logits.id].value;
            Tensor& gl = grad_buf(logits.id);
            for (int r = 0; r < rows; ++r) {
                double mx = z.at(r, 0);
                for (int c = 1; c < cols; ++c) mx = std::max(mx, z.at(r, c));
                double sum = 0.0;
                for (int c = 0; c < cols; ++c) sum += std::exp(z.at(r, c) - mx);
                for (int c = 0; c < cols; ++c) {
                    const double p = std::exp(z.at(r, c) - mx) / sum;
                    gl.at(r, c) += g.at(r, 0) * (p - (c == held[r] ? 1.0 : 0.0));
                }
            }
        };
    }
    return v;
}

Var Tape::mean_rows(Var a, const std::vector<std::vector<int>>& groups) {
    check(a, "mean_rows");
    const Tensor& t = nodes_[a.id].value;
    if (t.rank() != 2) throw ShapeError("mean_rows: rank-2 input required, got " + t.shape_str());
    const int rows = t.rows(), cols = t.cols();
    for (const auto& g : groups)
        for (int r : g)
            if (r < 0 || r >= rows) throw ShapeError("mean_rows: row index out of range");
    Tensor out({static_cast<int>(groups.size()), cols});
    for (int i = 0; i < static_cast<int>(groups.size()); ++i) {
        if (groups[i].empty()) continue;  // empty group -> zero row
        const double inv = 1.0 / static_cast<double>(groups[i].size());
        for (int r : groups[i])
            for (int c = 0; c < cols; ++c) out.at(i, c) += inv * t.at(r, c);
    }
    const bool ng = needs(a);
    Var v = emplace(std::move(out), ng, "mean_rows");
    if (ng) {
        std::vector<std::vector<int>> held = groups;
        nodes_[v.id].backprop = [this, a, v, held, cols]() {
            const Tensor& g = nodes_[v.id].grad;
            Tensor& ga = grad_buf(a.id);
            for (int i = 0; i < static_cast<int>(held.size()); ++i) {
                if (held[i].empty()) continue;
                const double inv = 1.0 / static_cast<double>(held[i].size());
                for (int r : held[i])
                    for (int c = 0; c < cols; ++c) ga.at(r, c) += inv * g.at(i, c);
            }
        };
    }
    return v;
}

Var Tape::row_sum(Var a) {
    check(a, "row_sum");
    const Tensor& t = nodes_[a.id].value;
    if (t.rank() != 2) throw ShapeError("row_sum: rank-2 input required, got " + t.shape_str());
    const int rows = t.rows(), cols = t.cols();
    Tensor out({rows, 1});
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int c = 0; c < cols; ++c) acc += t.at(r, c);
        out.at(r, 0) = acc;
    }
    const bool ng = needs(a);
    Var v = emplace(std::move(out), ng, "row_sum");
    if (ng) {
        nodes_[v.id].backprop = [this, a, v, rows, cols]() {
            const Tensor& g = nodes_[v.id].grad;
            Tensor& ga = grad_buf(a.id);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) ga.at(r, c) += g.at(r, 0);
        };
    }
    return v;
}

Var Tape::stop_gradient(Var a) {
    check(a, "stop_gradient");
    // forward identity, no backprop edge
    return emplace(nodes_[a.id].value, false, "stop_gradient");
}

void Tape::backward(Var loss) {
    if (nodes_.empty()) throw ShapeError("backward: no forward pass recorded");
    check(loss, "backward");
    const Node& ln = nodes_[loss.id];
    if (!ln.value.is_scalar())
        throw ShapeError("backward: loss must be scalar, got " + ln.value.shape_str());
    grad_buf(loss.id).fill(1.0);
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) continue;  // not an ancestor of the loss
        if (n.backprop) n.backprop();
        if (n.bound) {
            Tensor& pg = n.bound->grad;
            for (std::size_t i = 0; i < pg.size(); ++i) pg.data()[i] += n.grad.data()[i];
        }
    }
    ran_backward_ = true;
}

}  // namespace roadtagger
