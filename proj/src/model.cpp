#include "fedfr/model.hpp"

#include <cmath>

namespace fedfr {

static std::vector<int> chain_dims(int input_dim, const std::vector<int>& hidden, int embed_dim) {
    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(embed_dim);
    return dims;
}

BackboneParams BackboneParams::zeros(int input_dim, const std::vector<int>& hidden, int embed_dim) {
    BackboneParams p;
    p.input_dim = input_dim;
    p.hidden_dims = hidden;
    p.embed_dim = embed_dim;
    const auto dims = chain_dims(input_dim, hidden, embed_dim);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        p.layers.push_back({Matrix::Zero(dims[i + 1], dims[i]), Vector::Zero(dims[i + 1])});
    }
    return p;
}

BackboneParams BackboneParams::seeded(int input_dim, const std::vector<int>& hidden, int embed_dim,
                                      std::uint64_t seed) {
    BackboneParams p = zeros(input_dim, hidden, embed_dim);
    Rng rng(seed);
    for (auto& layer : p.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
                layer.weight(i, j) = rng.uniform(-bound, bound);
            }
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-bound, bound);
    }
    return p;
}

bool BackboneParams::same_shape(const BackboneParams& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
            layers[i].weight.cols() != other.layers[i].weight.cols() ||
            layers[i].bias.size() != other.layers[i].bias.size()) {
            return false;
        }
    }
    return true;
}

void BackboneParams::validate() const {
    const auto dims = chain_dims(input_dim, hidden_dims, embed_dim);
    if (layers.size() + 1 != dims.size()) throw DimensionError("backbone: layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.weight.rows() != dims[i + 1] || l.weight.cols() != dims[i] ||
            l.bias.size() != dims[i + 1]) {
            throw DimensionError("backbone: layer " + std::to_string(i) + " dims do not chain");
        }
        if (!l.weight.allFinite() || !l.bias.allFinite()) {
            throw NumericError("backbone: non-finite parameter in layer " + std::to_string(i));
        }
    }
}

Vector embed(const BackboneParams& theta, const Vector& x) {
    if (x.size() != theta.input_dim) throw DimensionError("embed: input dimension mismatch");
    Matrix f = embed_batch(theta, x);
    return f.col(0);
}

Matrix embed_batch(const BackboneParams& theta, const Matrix& X) {
    if (X.rows() != theta.input_dim) throw DimensionError("embed_batch: input dimension mismatch");
    Matrix h = X;
    for (std::size_t i = 0; i < theta.layers.size(); ++i) {
        Matrix z = theta.layers[i].weight * h;
        z.colwise() += theta.layers[i].bias;
        if (i + 1 < theta.layers.size()) {
            h = z.cwiseMax(0.0);
        } else {
            h = std::move(z);
        }
    }
    return h;
}

Tape::Var embed_batch_taped(Tape& tape, const std::vector<Tape::Var>& weights,
                            const std::vector<Tape::Var>& biases, Tape::Var X) {
    if (weights.size() != biases.size() || weights.empty()) {
        throw DimensionError("embed_batch_taped: layer list mismatch");
    }
    Tape::Var h = X;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        Tape::Var z = tape.add_colvec(tape.matmul(weights[i], h), biases[i]);
        h = (i + 1 < weights.size()) ? tape.relu(z) : z;
    }
    return h;
}

ClassEmbeddings ClassEmbeddings::seeded(int dim, int classes, ProxyRole role, std::uint64_t seed) {
    ClassEmbeddings e;
    e.role = role;
    e.columns = Matrix(dim, classes);
    Rng rng(seed);
    for (int j = 0; j < classes; ++j) e.columns.col(j) = rng.unit_vector(dim);
    return e;
}

DfcBranch DfcBranch::seeded(int d, int d_prime, int k_local, std::uint64_t seed) {
    DfcBranch b;
    Rng rng(seed);
    // The transform starts at the (partial) identity so the personalized space
    // begins where the backbone's ends; training specializes it from there.
    b.transform = Matrix::Identity(d, d_prime);
    b.transform_bias = Vector::Zero(d_prime);
    b.omega = Matrix(d_prime, k_local);
    for (int j = 0; j < k_local; ++j) b.omega.col(j) = rng.unit_vector(d_prime);
    b.bias = 0.0;
    return b;
}

Vector dfc_transform(const DfcBranch& branch, const Vector& f) {
    if (f.size() != branch.transform.rows()) {
        throw DimensionError("dfc_transform: feature dimension mismatch");
    }
    return branch.transform.transpose() * f + branch.transform_bias;
}

Matrix dfc_transform_batch(const DfcBranch& branch, const Matrix& F) {
    if (F.rows() != branch.transform.rows()) {
        throw DimensionError("dfc_transform_batch: feature dimension mismatch");
    }
    Matrix out = branch.transform.transpose() * F;
    out.colwise() += branch.transform_bias;
    return out;
}

Tape::Var dfc_transform_taped(Tape& tape, Tape::Var transform, Tape::Var transform_bias,
                              Tape::Var F) {
    return tape.add_colvec(tape.matmul_tn(transform, F), transform_bias);
}

Vector personalized_embed(const BackboneParams& theta, const DfcBranch& branch, const Vector& x) {
    return dfc_transform(branch, embed(theta, x));
}

}  // namespace fedfr
