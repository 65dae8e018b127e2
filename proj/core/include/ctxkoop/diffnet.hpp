#pragma once

// Dense two-layer network core with hand-written reverse-mode gradients.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ctxkoop {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation { ReLU, Identity };

std::string shape_string(const Matrix& m);

/// Two-layer perceptron y = w2 * act(w1 * x + b1) + b2. The output layer is always affine.
struct Mlp2 {
    Matrix w1;  // hidden x in
    Vector b1;  // hidden
    Matrix w2;  // out x hidden
    Vector b2;  // out
    Activation activation = Activation::ReLU;

    [[nodiscard]] Eigen::Index in_dim() const { return w1.cols(); }
    [[nodiscard]] Eigen::Index hidden_dim() const { return w1.rows(); }
    [[nodiscard]] Eigen::Index out_dim() const { return w2.rows(); }

    /// All-zero network of the given shape.
    static Mlp2 zeros(Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
                      Activation act = Activation::ReLU);

    /// Glorot-uniform weights, zero biases. Consumes draws from `rng`.
    template <class Rng>
    static Mlp2 glorot(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng,
                       Activation act = Activation::ReLU);

    /// Throws ShapeError if the shape chain is inconsistent.
    void validate() const;

    /// Parameter blocks in fixed order (w1, b1, w2, b2).
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
};

/// Parameter gradients of an Mlp2, same shapes as the network.
struct Mlp2Grad {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;

    static Mlp2Grad zeros_like(const Mlp2& m);
    Mlp2Grad& operator+=(const Mlp2Grad& other);
    Mlp2Grad& operator*=(double s);
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
};

/// Intermediates of a batched forward pass. Rows are samples.
struct MlpTape {
    Matrix input;       // N x in
    Matrix pre_hidden;  // N x hidden, before activation
    Matrix hidden;      // N x hidden, after activation
    Matrix output;      // N x out
};

/// Batched forward: each row of `x` is one input.
MlpTape mlp_forward(const Mlp2& m, const Matrix& x);

/// Single-sample forward returning the output and its tape.
std::pair<Vector, MlpTape> mlp_forward(const Mlp2& m, const Vector& x);

/// Forward without recording, for inference.
Matrix mlp_eval(const Mlp2& m, const Matrix& x);
Vector mlp_eval(const Mlp2& m, const Vector& x);

/// Recomputes the forward pass from the tape's recorded input.
MlpTape mlp_replay(const Mlp2& m, const MlpTape& tape);

struct MlpBackward {
    Matrix dx;  // N x in; empty when the input gradient was not requested
    Mlp2Grad grad;
};

/// Reverse pass for output cotangent `dy` (N x out). Linear in `dy`.
MlpBackward mlp_backward(const Mlp2& m, const MlpTape& tape, const Matrix& dy,
                         bool want_input_grad = true);
MlpBackward mlp_backward(const Mlp2& m, const MlpTape& tape, const Vector& dy,
                         bool want_input_grad = true);

/// Jacobian dy/dx (out x in) at a single point, by one reverse pass per output.
Matrix mlp_jacobian(const Mlp2& m, const Vector& x);

/// Scalar objective over a flat parameter vector, with an analytic gradient.
struct ScalarObjective {
    std::function<double(std::span<const double>)> value;
    std::function<std::vector<double>(std::span<const double>)> gradient;
};

/// Worst relative error between the analytic gradient and central differences.
///
/// The relative error of coordinate i is |a_i - n_i| / max(1, |a_i|, |n_i|). When `coords`
/// is empty every coordinate is checked; otherwise only the listed ones.
/// Throws NumericError if the objective evaluates to a non-finite value.
double grad_check(const ScalarObjective& f, std::span<const double> params, double epsilon,
                  std::span<const std::size_t> coords = {});

/// Copies parameter blocks into one flat vector, and back.
std::vector<double> flatten(const std::vector<std::span<const double>>& blocks);
std::vector<double> flatten(const std::vector<std::span<double>>& blocks);
void unflatten(std::span<const double> flat, const std::vector<std::span<double>>& blocks);
std::size_t total_size(const std::vector<std::span<const double>>& blocks);

/// True if every entry is finite.
bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

// ---------------------------------------------------------------------------

template <class Rng>
Mlp2 Mlp2::glorot(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng,
                  Activation act) {
    Mlp2 m = zeros(in, hidden, out, act);
    auto fill = [&rng](Matrix& w) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    };
    fill(m.w1);
    fill(m.w2);
    return m;
}

}  // namespace ctxkoop
