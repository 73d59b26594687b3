#pragma once

#include <cstdint>
#include <vector>

#include "fedfr/tensor.hpp"

namespace fedfr {

// Multilayer perceptron backbone mapping input_dim -> hidden... -> embed_dim.
// Hidden layers use a rectifier; the output layer is linear.
struct BackboneLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
};

struct BackboneParams {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int embed_dim = 0;
    std::vector<BackboneLayer> layers;

    static BackboneParams zeros(int input_dim, const std::vector<int>& hidden, int embed_dim);
    // Uniform init scaled by 1/sqrt(fan_in); deterministic under seed.
    static BackboneParams seeded(int input_dim, const std::vector<int>& hidden, int embed_dim,
                                 std::uint64_t seed);

    bool same_shape(const BackboneParams& other) const;
    // Layer dims chain and all entries are finite.
    void validate() const;
};

Vector embed(const BackboneParams& theta, const Vector& x);
Matrix embed_batch(const BackboneParams& theta, const Matrix& X);

// Taped forward pass; `weights`/`biases` are per-layer leaves already on the tape.
Tape::Var embed_batch_taped(Tape& tape, const std::vector<Tape::Var>& weights,
                            const std::vector<Tape::Var>& biases, Tape::Var X);

enum class ProxyRole { Global, Local };

// One learnable column per identity; columns are stored unnormalized and
// normalized at loss/eval time.
struct ClassEmbeddings {
    Matrix columns;  // d x K
    ProxyRole role = ProxyRole::Global;

    int dim() const { return static_cast<int>(columns.rows()); }
    int class_count() const { return static_cast<int>(columns.cols()); }

    static ClassEmbeddings seeded(int dim, int classes, ProxyRole role, std::uint64_t seed);
};

// Client-private personalization branch: affine transform plus one binary
// classifier weight vector per registered identity.
struct DfcBranch {
    Matrix transform;       // d x d' (applied as transform^T * f)
    Vector transform_bias;  // d'
    Matrix omega;           // d' x K_local
    double bias = 0.0;

    int in_dim() const { return static_cast<int>(transform.rows()); }
    int out_dim() const { return static_cast<int>(transform.cols()); }
    int class_count() const { return static_cast<int>(omega.cols()); }

    static DfcBranch seeded(int d, int d_prime, int k_local, std::uint64_t seed);
};

Vector dfc_transform(const DfcBranch& branch, const Vector& f);
Matrix dfc_transform_batch(const DfcBranch& branch, const Matrix& F);
Tape::Var dfc_transform_taped(Tape& tape, Tape::Var transform, Tape::Var transform_bias,
                              Tape::Var F);

// f' = Pi(Theta(x)); the personalized feature space.
Vector personalized_embed(const BackboneParams& theta, const DfcBranch& branch, const Vector& x);

}  // namespace fedfr
