#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fedfr/common.hpp"

namespace fedfr {

// ---------------------------------------------------------------------------
// Plain (untaped) helpers. Used wherever gradients are not needed: frozen
// forward passes, hard-negative selection, evaluation.
// ---------------------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);

// Throws DegenerateInputError when ||v|| <= kNormEpsilon.
Vector l2_normalize(const Vector& v);

// Column-wise normalization; throws if any column is degenerate.
Matrix l2_normalize_columns(const Matrix& m);

// dot(u, v) / (||u|| ||v||), clamped to [-1, 1] against rounding.
double cosine_similarity(const Vector& u, const Vector& v);

inline double clamp_unit(double z) { return z < -1.0 ? -1.0 : (z > 1.0 ? 1.0 : z); }

// log(1 + e^x) without overflow.
double softplus(double x);

// Range-shaping map 2*((z+1)/2)^t - 1; monotone on [-1,1] with fixed
// endpoints g(-1) = -1 and g(1) = 1 for t >= 1.
double g_range(double z, double t);

// ---------------------------------------------------------------------------
// Tape: reverse-mode differentiation over Eigen matrices. One tape per
// training step; inputs() are leaves that receive gradients, constants do not.
// All values are dense double matrices (scalars are 1x1).
// ---------------------------------------------------------------------------

class Tape {
public:
    struct Var {
        std::int32_t id = -1;
    };

    Var input(Matrix value);
    Var constant(Matrix value);
    Var scalar_input(double v) { return input(Matrix::Constant(1, 1, v)); }
    Var scalar_constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

    // --- primitives -------------------------------------------------------
    Var matmul(Var a, Var b);     // A * B
    Var matmul_tn(Var a, Var b);  // A^T * B
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var add_colvec(Var m, Var bias);  // bias is a column vector broadcast over columns
    Var add_scalar(Var m, Var s);     // s is 1x1, broadcast elementwise
    Var relu(Var a);
    Var scale(Var a, double c);
    Var offset(Var a, double c);             // elementwise a + c
    Var cmul(Var a, const Matrix& weights);  // elementwise product with a constant
    Var cadd(Var a, const Matrix& c);
    Var hconcat(Var a, Var b);
    Var normalize_columns(Var m);  // unit-norm columns; degenerate columns throw
    Var dot(Var u, Var v);         // column vectors -> 1x1
    Var colwise_dot(Var m, const Matrix& c);  // 1xB: per-column dot with constant
    Var colwise_lse(Var z);                   // 1xB: log-sum-exp of each column
    Var gather_cols(Var z, const std::vector<int>& rows);  // 1xB: z(rows[b], b)
    Var softplus(Var x);
    Var clamp_unit(Var x);
    Var pow_range(Var z, double t);  // elementwise 2*((z+1)/2)^t - 1, z in [-1,1]
    Var sum(Var x);                  // 1x1 sum of all entries

    const Matrix& value(Var v) const { return node(v).value; }
    double scalar(Var v) const;

    // Reverse pass from a 1x1 output; throws DimensionError otherwise.
    void backward(Var output);

    // Gradient of the last backward() output w.r.t. a leaf (or any node).
    // Zero matrix of the node's shape if the node does not influence the output.
    const Matrix& gradient(Var v) const;

    std::size_t size() const { return nodes_.size(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        std::function<void(Tape&, const Matrix&)> back;  // empty for leaves
    };

    Var push(Matrix value, bool requires_grad, std::function<void(Tape&, const Matrix&)> back);
    Node& node(Var v);
    const Node& node(Var v) const;
    void accumulate(Var v, const Matrix& g);

    std::vector<Node> nodes_;
};

}  // namespace fedfr
