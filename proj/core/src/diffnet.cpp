#include "ctxkoop/diffnet.hpp"

#include "ctxkoop/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctxkoop {

std::string shape_string(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

namespace {

template <class Derived>
std::span<double> as_span(Eigen::PlainObjectBase<Derived>& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <class Derived>
std::span<const double> as_span(const Eigen::PlainObjectBase<Derived>& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

void apply_activation(Activation act, const Matrix& pre, Matrix& out) {
    if (act == Activation::ReLU) {
        out = pre.cwiseMax(0.0);
    } else {
        out = pre;
    }
}

}  // namespace

Mlp2 Mlp2::zeros(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Activation act) {
    Mlp2 m;
    m.w1 = Matrix::Zero(hidden, in);
    m.b1 = Vector::Zero(hidden);
    m.w2 = Matrix::Zero(out, hidden);
    m.b2 = Vector::Zero(out);
    m.activation = act;
    return m;
}

void Mlp2::validate() const {
    if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
        std::ostringstream os;
        os << "inconsistent Mlp2 shapes: w1 " << shape_string(w1) << ", b1 " << b1.size()
           << ", w2 " << shape_string(w2) << ", b2 " << b2.size();
        throw ShapeError(os.str());
    }
}

std::vector<std::span<double>> Mlp2::blocks() {
    return {as_span(w1), as_span(b1), as_span(w2), as_span(b2)};
}

std::vector<std::span<const double>> Mlp2::blocks() const {
    return {as_span(w1), as_span(b1), as_span(w2), as_span(b2)};
}

Mlp2Grad Mlp2Grad::zeros_like(const Mlp2& m) {
    return {Matrix::Zero(m.w1.rows(), m.w1.cols()), Vector::Zero(m.b1.size()),
            Matrix::Zero(m.w2.rows(), m.w2.cols()), Vector::Zero(m.b2.size())};
}

Mlp2Grad& Mlp2Grad::operator+=(const Mlp2Grad& other) {
    w1 += other.w1;
    b1 += other.b1;
    w2 += other.w2;
    b2 += other.b2;
    return *this;
}

Mlp2Grad& Mlp2Grad::operator*=(double s) {
    w1 *= s;
    b1 *= s;
    w2 *= s;
    b2 *= s;
    return *this;
}

std::vector<std::span<double>> Mlp2Grad::blocks() {
    return {as_span(w1), as_span(b1), as_span(w2), as_span(b2)};
}

std::vector<std::span<const double>> Mlp2Grad::blocks() const {
    return {as_span(w1), as_span(b1), as_span(w2), as_span(b2)};
}

MlpTape mlp_forward(const Mlp2& m, const Matrix& x) {
    if (x.cols() != m.in_dim()) {
        throw ShapeError("mlp_forward: input " + shape_string(x) + " does not match w1 " +
                         shape_string(m.w1));
    }
    MlpTape tape;
    tape.input = x;
    tape.pre_hidden = x * m.w1.transpose();
    tape.pre_hidden.rowwise() += m.b1.transpose();
    apply_activation(m.activation, tape.pre_hidden, tape.hidden);
    tape.output = tape.hidden * m.w2.transpose();
    tape.output.rowwise() += m.b2.transpose();
    return tape;
}

std::pair<Vector, MlpTape> mlp_forward(const Mlp2& m, const Vector& x) {
    MlpTape tape = mlp_forward(m, Matrix(x.transpose()));
    Vector y = tape.output.row(0).transpose();
    return {std::move(y), std::move(tape)};
}

Matrix mlp_eval(const Mlp2& m, const Matrix& x) {
    if (x.cols() != m.in_dim()) {
        throw ShapeError("mlp_eval: input " + shape_string(x) + " does not match w1 " +
                         shape_string(m.w1));
    }
    Matrix h = x * m.w1.transpose();
    h.rowwise() += m.b1.transpose();
    if (m.activation == Activation::ReLU) h = h.cwiseMax(0.0);
    Matrix y = h * m.w2.transpose();
    y.rowwise() += m.b2.transpose();
    return y;
}

Vector mlp_eval(const Mlp2& m, const Vector& x) {
    if (x.size() != m.in_dim()) {
        throw ShapeError("mlp_eval: input length " + std::to_string(x.size()) +
                         " does not match w1 " + shape_string(m.w1));
    }
    Vector h = m.w1 * x + m.b1;
    if (m.activation == Activation::ReLU) h = h.cwiseMax(0.0);
    return m.w2 * h + m.b2;
}

MlpTape mlp_replay(const Mlp2& m, const MlpTape& tape) { return mlp_forward(m, tape.input); }

MlpBackward mlp_backward(const Mlp2& m, const MlpTape& tape, const Matrix& dy,
                         bool want_input_grad) {
    if (dy.rows() != tape.output.rows() || dy.cols() != tape.output.cols()) {
        throw ShapeError("mlp_backward: cotangent " + shape_string(dy) +
                         " does not match recorded output " + shape_string(tape.output));
    }
    if (tape.hidden.cols() != m.hidden_dim() || tape.output.cols() != m.out_dim()) {
        throw ShapeError("mlp_backward: tape does not belong to a network with w2 " +
                         shape_string(m.w2));
    }
    MlpBackward out;
    out.grad.w2 = dy.transpose() * tape.hidden;
    out.grad.b2 = dy.colwise().sum().transpose();

    Matrix d_hidden = dy * m.w2;
    if (m.activation == Activation::ReLU) {
        // subgradient at exactly 0 is 0
        d_hidden = (tape.pre_hidden.array() > 0.0).select(d_hidden, 0.0);
    }
    out.grad.w1 = d_hidden.transpose() * tape.input;
    out.grad.b1 = d_hidden.colwise().sum().transpose();
    if (want_input_grad) out.dx = d_hidden * m.w1;
    return out;
}

MlpBackward mlp_backward(const Mlp2& m, const MlpTape& tape, const Vector& dy,
                         bool want_input_grad) {
    return mlp_backward(m, tape, Matrix(dy.transpose()), want_input_grad);
}

Matrix mlp_jacobian(const Mlp2& m, const Vector& x) {
    auto [y, tape] = mlp_forward(m, x);
    Matrix jac(y.size(), x.size());
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        Vector e = Vector::Zero(y.size());
        e(k) = 1.0;
        jac.row(k) = mlp_backward(m, tape, e).dx.row(0);
    }
    return jac;
}

double grad_check(const ScalarObjective& f, std::span<const double> params, double epsilon,
                  std::span<const std::size_t> coords) {
    if (!(epsilon > 0.0)) throw ParameterError("grad_check: epsilon must be positive");
    std::vector<double> theta(params.begin(), params.end());
    const double f0 = f.value(theta);
    if (!std::isfinite(f0)) throw NumericError("grad_check: objective is not finite");
    const std::vector<double> analytic = f.gradient(theta);
    if (analytic.size() != theta.size()) {
        throw ShapeError("grad_check: gradient length " + std::to_string(analytic.size()) +
                         " != parameter count " + std::to_string(theta.size()));
    }

    std::vector<std::size_t> all;
    if (coords.empty()) {
        all.resize(theta.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        coords = all;
    }

    double worst = 0.0;
    for (std::size_t i : coords) {
        if (i >= theta.size()) throw ShapeError("grad_check: coordinate out of range");
        const double saved = theta[i];
        theta[i] = saved + epsilon;
        const double fp = f.value(theta);
        theta[i] = saved - epsilon;
        const double fm = f.value(theta);
        theta[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("grad_check: objective is not finite at coordinate " +
                               std::to_string(i));
        }
        const double numeric = (fp - fm) / (2.0 * epsilon);
        const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

std::vector<double> flatten(const std::vector<std::span<const double>>& blocks) {
    std::vector<double> flat;
    flat.reserve(total_size(blocks));
    for (auto b : blocks) flat.insert(flat.end(), b.begin(), b.end());
    return flat;
}

std::vector<double> flatten(const std::vector<std::span<double>>& blocks) {
    std::vector<double> flat;
    for (auto b : blocks) flat.insert(flat.end(), b.begin(), b.end());
    return flat;
}

void unflatten(std::span<const double> flat, const std::vector<std::span<double>>& blocks) {
    std::size_t n = 0;
    for (auto b : blocks) n += b.size();
    if (n != flat.size()) {
        throw ShapeError("unflatten: " + std::to_string(flat.size()) + " values for " +
                         std::to_string(n) + " parameters");
    }
    std::size_t offset = 0;
    for (auto b : blocks) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), b.size(), b.begin());
        offset += b.size();
    }
}

std::size_t total_size(const std::vector<std::span<const double>>& blocks) {
    std::size_t n = 0;
    for (auto b : blocks) n += b.size();
    return n;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace ctxkoop
