#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedfr/data.hpp"
#include "fedfr/model.hpp"

namespace fedfr {

// Binary container: magic string, version byte, then named tensor sections.
// Counts are 64-bit little-endian; payloads are 64-bit little-endian floats,
// row-major. Round-trips are bit-exact.
struct TensorRecord {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;  // row-major

    Matrix as_matrix() const;      // rank-2 sections
    Vector as_vector() const;      // rank-1 sections
    static TensorRecord from_matrix(std::string name, const Matrix& m);
    static TensorRecord from_vector(std::string name, const Vector& v);
};

void write_container(const std::string& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_container(const std::string& path);

// Serialize to an in-memory byte buffer (used for payload-size checks and hashing).
std::vector<std::uint8_t> serialize_container(const std::vector<TensorRecord>& records);

struct GlobalCheckpoint {
    BackboneParams backbone;
    Matrix phi;
};

void save_global_checkpoint(const std::string& path, const BackboneParams& backbone,
                            const Matrix& phi);
GlobalCheckpoint load_global_checkpoint(const std::string& path);

struct ClientCheckpoint {
    BackboneParams backbone;
    Matrix pi_weight;
    Vector pi_bias;
};

void save_clients_checkpoint(const std::string& path, const std::vector<ClientCheckpoint>& clients);
std::vector<ClientCheckpoint> load_clients_checkpoint(const std::string& path);

// Dataset dump/load in the same container discipline so runs can be replayed.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

std::vector<TensorRecord> backbone_records(const std::string& prefix, const BackboneParams& p);
BackboneParams backbone_from_records(const std::vector<TensorRecord>& records,
                                     const std::string& prefix);

}  // namespace fedfr
