#include "gnnpp/autodiff.hpp"

#include <cmath>
#include <memory>

#include "gnnpp/common.hpp"
#include "gnnpp/normal.hpp"

namespace gnnpp {

int ParameterStore::add(const std::string& name, Tensor init) {
    if (find(name) >= 0) throw ConfigError("duplicate parameter name: " + name);
    names_.push_back(name);
    grads_.emplace_back(init.n_rows, init.n_cols);
    values_.push_back(std::move(init));
    return static_cast<int>(values_.size()) - 1;
}

int ParameterStore::find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return static_cast<int>(i);
    return -1;
}

std::size_t ParameterStore::total_values() const {
    std::size_t n = 0;
    for (const Tensor& t : values_) n += t.numel();
    return n;
}

void ParameterStore::zero_grads() {
    for (Tensor& g : grads_) g.fill(0.0);
}

GradBuffer::GradBuffer(const ParameterStore& store) {
    grads_.reserve(static_cast<std::size_t>(store.count()));
    for (int i = 0; i < store.count(); ++i)
        grads_.emplace_back(store.value(i).n_rows, store.value(i).n_cols);
}

void GradBuffer::zero() {
    for (Tensor& g : grads_) g.fill(0.0);
}

void GradBuffer::add_from(const GradBuffer& other) {
    if (other.grads_.size() != grads_.size()) throw ShapeError("grad buffer layout mismatch");
    for (std::size_t i = 0; i < grads_.size(); ++i) kernels::axpy(1.0, other.grads_[i], grads_[i]);
}

bool GradBuffer::all_finite() const {
    for (const Tensor& g : grads_)
        if (!g.all_finite()) return false;
    return true;
}

int Tape::push(Tensor val, std::function<void()> back) {
    Node n;
    n.grad = Tensor(val.n_rows, val.n_cols);
    n.val = std::move(val);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::constant(Tensor value) { return push(std::move(value), nullptr); }

int Tape::param(int param_id) {
    if (!store_ || !buf_) throw ConfigError("tape has no parameter store bound");
    Node n;
    n.vext = &store_->value(param_id);
    n.gext = &buf_->grad(param_id);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Tape::val(int id) const {
    const Node& n = node(id);
    return n.vext ? *n.vext : n.val;
}

Tensor& Tape::grad(int id) {
    Node& n = node(id);
    return n.gext ? *n.gext : n.grad;
}

int Tape::matmul(int a, int b) {
    Tensor out(val(a).n_rows, val(b).n_cols);
    kernels::matmul(val(a), val(b), out, false);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, a, b, id] {
        kernels::matmul_nt(grad(id), val(b), grad(a), true);
        kernels::matmul_tn(val(a), grad(id), grad(b), true);
    };
    return id;
}

int Tape::add(int a, int b) {
    Tensor out(val(a).n_rows, val(a).n_cols);
    kernels::add(val(a), val(b), out);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, a, b, id] {
        kernels::axpy(1.0, grad(id), grad(a));
        kernels::axpy(1.0, grad(id), grad(b));
    };
    return id;
}

int Tape::add_bias(int x, int bias) {
    Tensor out(val(x).n_rows, val(x).n_cols);
    kernels::add_row_vector(val(x), val(bias), out);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, x, bias, id] {
        kernels::axpy(1.0, grad(id), grad(x));
        kernels::col_sum(grad(id), grad(bias), true);
    };
    return id;
}

int Tape::unary(kernels::Unary op, int x) {
    Tensor out(val(x).n_rows, val(x).n_cols);
    kernels::unary_forward(op, val(x), out);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, op, x, id] {
        kernels::unary_backward(op, val(x), val(id), grad(id), grad(x));
    };
    return id;
}

int Tape::scale(int x, double c) {
    Tensor out(val(x).n_rows, val(x).n_cols);
    kernels::scale(val(x), c, out);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, x, c, id] { kernels::axpy(c, grad(id), grad(x)); };
    return id;
}

int Tape::add_scalar(int x, double c) {
    Tensor out = val(x);
    for (double& v : out.v) v += c;
    int id = push(std::move(out), nullptr);
    node(id).back = [this, x, id] { kernels::axpy(1.0, grad(id), grad(x)); };
    return id;
}

int Tape::concat_cols(int a, int b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.n_rows != tb.n_rows) throw ShapeError("concat_cols: row counts differ");
    Tensor out(ta.n_rows, ta.n_cols + tb.n_cols);
    for (int i = 0; i < ta.n_rows; ++i) {
        double* o = out.row(i);
        const double* ra = ta.row(i);
        const double* rb = tb.row(i);
        for (int j = 0; j < ta.n_cols; ++j) o[j] = ra[j];
        for (int j = 0; j < tb.n_cols; ++j) o[ta.n_cols + j] = rb[j];
    }
    int id = push(std::move(out), nullptr);
    node(id).back = [this, a, b, id] {
        const Tensor& g = grad(id);
        Tensor& ga = grad(a);
        Tensor& gb = grad(b);
        for (int i = 0; i < g.n_rows; ++i) {
            const double* gi = g.row(i);
            double* rga = ga.row(i);
            double* rgb = gb.row(i);
            for (int j = 0; j < ga.n_cols; ++j) rga[j] += gi[j];
            for (int j = 0; j < gb.n_cols; ++j) rgb[j] += gi[ga.n_cols + j];
        }
    };
    return id;
}

int Tape::slice_cols(int x, int col_lo, int col_hi) {
    const Tensor& t = val(x);
    if (col_lo < 0 || col_hi > t.n_cols || col_lo >= col_hi)
        throw ShapeError("slice_cols: bad column range");
    Tensor out(t.n_rows, col_hi - col_lo);
    for (int i = 0; i < t.n_rows; ++i)
        for (int j = col_lo; j < col_hi; ++j) out.at(i, j - col_lo) = t.at(i, j);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, x, col_lo, id] {
        const Tensor& g = grad(id);
        Tensor& gx = grad(x);
        for (int i = 0; i < g.n_rows; ++i)
            for (int j = 0; j < g.n_cols; ++j) gx.at(i, col_lo + j) += g.at(i, j);
    };
    return id;
}

int Tape::gather(int x, const std::vector<int>* idx, const kernels::ScatterPlan* plan) {
    Tensor out(static_cast<int>(idx->size()), val(x).n_cols);
    kernels::gather_rows(val(x), *idx, out);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, x, plan, id] {
        kernels::segment_sum_rows(grad(id), *plan, grad(x), true);
    };
    return id;
}

int Tape::segment_softmax(int scores, const std::vector<int>* offsets) {
    Tensor out(val(scores).n_rows, val(scores).n_cols);
    kernels::segment_softmax(val(scores), *offsets, out);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, scores, offsets, id] {
        kernels::segment_softmax_backward(val(id), grad(id), *offsets, grad(scores));
    };
    return id;
}

int Tape::segment_mean_sorted(int x, const std::vector<int>* offsets) {
    Tensor out(static_cast<int>(offsets->size()) - 1, val(x).n_cols);
    kernels::segment_mean_rows_sorted(val(x), *offsets, out);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, x, offsets, id] {
        kernels::segment_mean_backward(grad(id), *offsets, grad(x));
    };
    return id;
}

int Tape::segment_sum(int x, const kernels::ScatterPlan* plan,
                      const std::vector<int>* seg_of_row) {
    Tensor out(static_cast<int>(plan->offsets.size()) - 1, val(x).n_cols);
    kernels::segment_sum_rows(val(x), *plan, out, false);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, x, seg_of_row, id] {
        Tensor expanded(static_cast<int>(seg_of_row->size()), grad(id).n_cols);
        kernels::gather_rows(grad(id), *seg_of_row, expanded);
        kernels::axpy(1.0, expanded, grad(x));
    };
    return id;
}

int Tape::head_scale(int alpha, int v) {
    Tensor out(val(v).n_rows, val(v).n_cols);
    kernels::head_scale(val(alpha), val(v), out);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, alpha, v, id] {
        kernels::head_scale_backward(val(alpha), val(v), grad(id), grad(alpha), grad(v));
    };
    return id;
}

int Tape::head_dot(int a, int x) {
    Tensor out(val(x).n_rows, val(a).n_rows);
    kernels::head_dot(val(a), val(x), out);
    int id = push(std::move(out), nullptr);
    node(id).back = [this, a, x, id] {
        kernels::head_dot_backward(val(a), val(x), grad(id), grad(a), grad(x));
    };
    return id;
}

int Tape::crps_gaussian_mean(int mu, int sigma, const std::vector<double>* y) {
    const Tensor& m = val(mu);
    const Tensor& s = val(sigma);
    const int n = m.n_rows;
    if (m.n_cols != 1 || s.n_cols != 1 || s.n_rows != n ||
        static_cast<int>(y->size()) != n)
        throw ShapeError("crps_gaussian_mean: expects matching column vectors");
    auto dmu = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    auto dsigma = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    std::vector<double> scores(static_cast<std::size_t>(n));
    kernels::crps_gaussian_batch(m.v.data(), s.v.data(), y->data(), n, scores.data(),
                                 dmu->data(), dsigma->data());
    double total = 0.0;
    for (double c : scores) total += c;
    Tensor out(1, 1, {total / static_cast<double>(n)});
    if (!out.all_finite()) throw NumericError("crps_gaussian_mean: non-finite loss");
    int id = push(std::move(out), nullptr);
    node(id).back = [this, mu, sigma, dmu, dsigma, n, id] {
        const double g = grad(id).v[0] / static_cast<double>(n);
        Tensor& gm = grad(mu);
        Tensor& gs = grad(sigma);
        for (int i = 0; i < n; ++i) {
            gm.v[static_cast<std::size_t>(i)] += g * (*dmu)[static_cast<std::size_t>(i)];
            gs.v[static_cast<std::size_t>(i)] += g * (*dsigma)[static_cast<std::size_t>(i)];
        }
    };
    return id;
}

void Tape::backward(int root, double seed) {
    const Tensor& r = val(root);
    if (r.n_rows != 1 || r.n_cols != 1) throw ShapeError("backward root must be a scalar node");
    grad(root).v[0] += seed;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
        if (nodes_[static_cast<std::size_t>(i)].back) nodes_[static_cast<std::size_t>(i)].back();
}

void Tape::check_finite(const std::string& where) const {
    for (const Node& n : nodes_) {
        const Tensor& v = n.vext ? *n.vext : n.val;
        const Tensor& g = n.gext ? *n.gext : n.grad;
        if (!v.all_finite() || !g.all_finite())
            throw NumericError("non-finite value in tape: " + where);
    }
}

}  // namespace gnnpp
