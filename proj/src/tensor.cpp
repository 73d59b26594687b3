#include "fedfr/tensor.hpp"

#include <cmath>
#include <utility>

namespace fedfr {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.rows()) + ")");
    }
    return a * b;
}

Vector l2_normalize(const Vector& v) {
    const double n = v.norm();
    if (n <= kNormEpsilon) throw DegenerateInputError("l2_normalize: near-zero norm");
    return v / n;
}

Matrix l2_normalize_columns(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double n = m.col(j).norm();
        if (n <= kNormEpsilon) {
            throw DegenerateInputError("l2_normalize_columns: column " + std::to_string(j) +
                                       " has near-zero norm");
        }
        out.col(j) = m.col(j) / n;
    }
    return out;
}

double cosine_similarity(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) throw DimensionError("cosine_similarity: size mismatch");
    const double nu = u.norm(), nv = v.norm();
    if (nu <= kNormEpsilon || nv <= kNormEpsilon) {
        throw DegenerateInputError("cosine_similarity: near-zero norm");
    }
    return clamp_unit(u.dot(v) / (nu * nv));
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

static double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double g_range(double z, double t) { return 2.0 * std::pow((z + 1.0) / 2.0, t) - 1.0; }

double Rng::gaussian() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    // Box-Muller; u clamped away from 0 so log stays finite.
    double u = uniform();
    if (u < 1e-300) u = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u));
    const double phi = 2.0 * M_PI * uniform();
    cached_ = r * std::sin(phi);
    has_cached_ = true;
    return r * std::cos(phi);
}

Vector Rng::gaussian_vector(int dim) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v[i] = gaussian();
    return v;
}

Vector Rng::unit_vector(int dim) {
    for (;;) {
        Vector v = gaussian_vector(dim);
        const double n = v.norm();
        if (n > 1e-6) return v / n;
    }
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Node& Tape::node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
const Tape::Node& Tape::node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

Tape::Var Tape::push(Matrix value, bool requires_grad,
                     std::function<void(Tape&, const Matrix&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tape::Var Tape::input(Matrix value) { return push(std::move(value), true, nullptr); }
Tape::Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

void Tape::accumulate(Var v, const Matrix& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
}

double Tape::scalar(Var v) const {
    const Matrix& m = node(v).value;
    if (m.rows() != 1 || m.cols() != 1) throw DimensionError("scalar: node is not 1x1");
    return m(0, 0);
}

const Matrix& Tape::gradient(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) {
        // lazily materialize zeros for untouched nodes
        const_cast<Node&>(n).grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
}

void Tape::backward(Var output) {
    Node& out = node(output);
    if (out.value.rows() != 1 || out.value.cols() != 1) {
        throw DimensionError("backward: output must be a scalar (1x1) node");
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    out.grad = Matrix::Constant(1, 1, 1.0);
    for (std::int32_t i = output.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || !n.back || n.grad.size() == 0) continue;
        n.back(*this, n.grad);
    }
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.rows()) throw DimensionError("Tape::matmul: inner dimensions disagree");
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(A * B, rg, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g * t.value(b).transpose());
        t.accumulate(b, t.value(a).transpose() * g);
    });
}

Tape::Var Tape::matmul_tn(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.rows() != B.rows()) throw DimensionError("Tape::matmul_tn: inner dimensions disagree");
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(A.transpose() * B, rg, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, t.value(b) * g.transpose());
        t.accumulate(b, t.value(a) * g);
    });
}

Tape::Var Tape::add(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("Tape::add: shape mismatch");
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(A + B, rg, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Tape::Var Tape::sub(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("Tape::sub: shape mismatch");
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(A - B, rg, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

Tape::Var Tape::add_colvec(Var m, Var bias) {
    const Matrix& M = value(m);
    const Matrix& b = value(bias);
    if (b.cols() != 1 || b.rows() != M.rows()) throw DimensionError("Tape::add_colvec: bias shape");
    Matrix out = M;
    out.colwise() += b.col(0);
    const bool rg = node(m).requires_grad || node(bias).requires_grad;
    return push(std::move(out), rg, [m, bias](Tape& t, const Matrix& g) {
        t.accumulate(m, g);
        t.accumulate(bias, g.rowwise().sum());
    });
}

Tape::Var Tape::add_scalar(Var m, Var s) {
    const Matrix& M = value(m);
    if (value(s).rows() != 1 || value(s).cols() != 1) throw DimensionError("Tape::add_scalar: s must be 1x1");
    const double sv = value(s)(0, 0);
    const bool rg = node(m).requires_grad || node(s).requires_grad;
    return push((M.array() + sv).matrix(), rg, [m, s](Tape& t, const Matrix& g) {
        t.accumulate(m, g);
        t.accumulate(s, Matrix::Constant(1, 1, g.sum()));
    });
}

Tape::Var Tape::relu(Var a) {
    const Matrix& A = value(a);
    return push(A.cwiseMax(0.0), node(a).requires_grad, [a](Tape& t, const Matrix& g) {
        const Matrix& A = t.value(a);
        t.accumulate(a, (A.array() > 0.0).cast<double>().matrix().cwiseProduct(g));
    });
}

Tape::Var Tape::scale(Var a, double c) {
    return push(value(a) * c, node(a).requires_grad,
                [a, c](Tape& t, const Matrix& g) { t.accumulate(a, c * g); });
}

Tape::Var Tape::offset(Var a, double c) {
    return push((value(a).array() + c).matrix(), node(a).requires_grad,
                [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Tape::Var Tape::cmul(Var a, const Matrix& weights) {
    const Matrix& A = value(a);
    if (A.rows() != weights.rows() || A.cols() != weights.cols()) {
        throw DimensionError("Tape::cmul: shape mismatch");
    }
    return push(A.cwiseProduct(weights), node(a).requires_grad,
                [a, weights](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseProduct(weights)); });
}

Tape::Var Tape::cadd(Var a, const Matrix& c) {
    const Matrix& A = value(a);
    if (A.rows() != c.rows() || A.cols() != c.cols()) throw DimensionError("Tape::cadd: shape mismatch");
    return push(A + c, node(a).requires_grad,
                [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Tape::Var Tape::hconcat(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.rows() != B.rows()) throw DimensionError("Tape::hconcat: row mismatch");
    Matrix out(A.rows(), A.cols() + B.cols());
    out.leftCols(A.cols()) = A;
    out.rightCols(B.cols()) = B;
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    const Eigen::Index ca = A.cols(), cb = B.cols();
    return push(std::move(out), rg, [a, b, ca, cb](Tape& t, const Matrix& g) {
        t.accumulate(a, g.leftCols(ca));
        t.accumulate(b, g.rightCols(cb));
    });
}

Tape::Var Tape::normalize_columns(Var m) {
    const Matrix& M = value(m);
    Matrix out(M.rows(), M.cols());
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
        const double n = M.col(j).norm();
        if (n <= kNormEpsilon) {
            throw DegenerateInputError("Tape::normalize_columns: column " + std::to_string(j) +
                                       " has near-zero norm");
        }
        out.col(j) = M.col(j) / n;
    }
    return push(std::move(out), node(m).requires_grad, [m](Tape& t, const Matrix& g) {
        const Matrix& M = t.value(m);
        Matrix gm(M.rows(), M.cols());
        for (Eigen::Index j = 0; j < M.cols(); ++j) {
            const double n = M.col(j).norm();
            const Vector u = M.col(j) / n;
            gm.col(j) = (g.col(j) - u * u.dot(g.col(j))) / n;
        }
        t.accumulate(m, gm);
    });
}

Tape::Var Tape::dot(Var u, Var v) {
    const Matrix& U = value(u);
    const Matrix& V = value(v);
    if (U.cols() != 1 || V.cols() != 1 || U.rows() != V.rows()) {
        throw DimensionError("Tape::dot: expects equal-length column vectors");
    }
    const double d = U.col(0).dot(V.col(0));
    const bool rg = node(u).requires_grad || node(v).requires_grad;
    return push(Matrix::Constant(1, 1, d), rg, [u, v](Tape& t, const Matrix& g) {
        t.accumulate(u, g(0, 0) * t.value(v));
        t.accumulate(v, g(0, 0) * t.value(u));
    });
}

Tape::Var Tape::colwise_dot(Var m, const Matrix& c) {
    const Matrix& M = value(m);
    if (M.rows() != c.rows() || M.cols() != c.cols()) {
        throw DimensionError("Tape::colwise_dot: shape mismatch");
    }
    Matrix out(1, M.cols());
    for (Eigen::Index j = 0; j < M.cols(); ++j) out(0, j) = M.col(j).dot(c.col(j));
    return push(std::move(out), node(m).requires_grad, [m, c](Tape& t, const Matrix& g) {
        Matrix gm(c.rows(), c.cols());
        for (Eigen::Index j = 0; j < c.cols(); ++j) gm.col(j) = g(0, j) * c.col(j);
        t.accumulate(m, gm);
    });
}

Tape::Var Tape::colwise_lse(Var z) {
    const Matrix& Z = value(z);
    if (Z.rows() < 1) throw DimensionError("Tape::colwise_lse: empty input");
    Matrix out(1, Z.cols());
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        const double m = Z.col(j).maxCoeff();
        out(0, j) = m + std::log((Z.col(j).array() - m).exp().sum());
    }
    return push(std::move(out), node(z).requires_grad, [z](Tape& t, const Matrix& g) {
        const Matrix& Z = t.value(z);
        Matrix gz(Z.rows(), Z.cols());
        for (Eigen::Index j = 0; j < Z.cols(); ++j) {
            const double m = Z.col(j).maxCoeff();
            Eigen::ArrayXd e = (Z.col(j).array() - m).exp();
            gz.col(j) = (g(0, j) * (e / e.sum())).matrix();
        }
        t.accumulate(z, gz);
    });
}

Tape::Var Tape::gather_cols(Var z, const std::vector<int>& rows) {
    const Matrix& Z = value(z);
    if (static_cast<Eigen::Index>(rows.size()) != Z.cols()) {
        throw DimensionError("Tape::gather_cols: one row index per column required");
    }
    Matrix out(1, Z.cols());
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        const int r = rows[static_cast<std::size_t>(j)];
        if (r < 0 || r >= Z.rows()) throw DimensionError("Tape::gather_cols: row index out of range");
        out(0, j) = Z(r, j);
    }
    return push(std::move(out), node(z).requires_grad, [z, rows](Tape& t, const Matrix& g) {
        const Matrix& Z = t.value(z);
        Matrix gz = Matrix::Zero(Z.rows(), Z.cols());
        for (Eigen::Index j = 0; j < Z.cols(); ++j) gz(rows[static_cast<std::size_t>(j)], j) = g(0, j);
        t.accumulate(z, gz);
    });
}

Tape::Var Tape::softplus(Var x) {
    const Matrix& X = value(x);
    Matrix out = X.unaryExpr([](double v) { return fedfr::softplus(v); });
    return push(std::move(out), node(x).requires_grad, [x](Tape& t, const Matrix& g) {
        const Matrix& X = t.value(x);
        t.accumulate(x, g.cwiseProduct(X.unaryExpr([](double v) { return sigmoid(v); })));
    });
}

Tape::Var Tape::clamp_unit(Var x) {
    const Matrix& X = value(x);
    Matrix out = X.cwiseMax(-1.0).cwiseMin(1.0);
    return push(std::move(out), node(x).requires_grad, [x](Tape& t, const Matrix& g) {
        const Matrix& X = t.value(x);
        Matrix mask = ((X.array() >= -1.0) && (X.array() <= 1.0)).cast<double>().matrix();
        t.accumulate(x, g.cwiseProduct(mask));
    });
}

Tape::Var Tape::pow_range(Var z, double t_exp) {
    if (t_exp < 1.0) throw DimensionError("Tape::pow_range: exponent must be >= 1");
    const Matrix& Z = value(z);
    Matrix out = Z.unaryExpr([t_exp](double v) { return g_range(v, t_exp); });
    return push(std::move(out), node(z).requires_grad, [z, t_exp](Tape& t, const Matrix& g) {
        const Matrix& Z = t.value(z);
        Matrix d = Z.unaryExpr(
            [t_exp](double v) { return t_exp * std::pow((v + 1.0) / 2.0, t_exp - 1.0); });
        t.accumulate(z, g.cwiseProduct(d));
    });
}

Tape::Var Tape::sum(Var x) {
    const Matrix& X = value(x);
    return push(Matrix::Constant(1, 1, X.sum()), node(x).requires_grad,
                [x](Tape& t, const Matrix& g) {
                    const Matrix& X = t.value(x);
                    t.accumulate(x, Matrix::Constant(X.rows(), X.cols(), g(0, 0)));
                });
}

}  // namespace fedfr
