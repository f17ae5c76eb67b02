#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "metainit/array.hpp"

namespace metainit {

enum class PoolRole { kTrain, kValidation, kTest };

const char* role_name(PoolRole role);

// Synthetic class family: isotropic Gaussian clusters with centers drawn
// uniformly from [-center_scale, center_scale]^F.
struct SyntheticSpec {
    std::size_t feature_dim = 2;
    std::size_t n_classes = 2;
    std::size_t instances_per_class = 20;
    double cluster_std = 1.0;
    double center_scale = 1.0;
    std::uint64_t seed = 0;
    std::uint32_t first_class_id = 0; // keeps class ids disjoint across roles

    void validate() const;
};

// Immutable per-class instance store; episode sampling is pure given a seed.
struct ClassPool {
    PoolRole role = PoolRole::kTrain;
    std::size_t feature_dim = 0;
    std::vector<std::uint32_t> class_ids;
    std::vector<Array> instances; // class i: n_i x feature_dim

    std::size_t class_count() const { return instances.size(); }
};

ClassPool gen_synthetic(const SyntheticSpec& spec, PoolRole role = PoolRole::kTrain);

// Dataset file: magic "FSDS", version u32, n_classes u32, feature_dim u32,
// then per class: class_id u32, n_instances u32, row-major f64 block.
// Little-endian. One file per role.
ClassPool load_pool(const std::filesystem::path& path, PoolRole role);
void write_pool(const ClassPool& pool, const std::filesystem::path& path);

// One N-way-K-shot task with a Q-query test split. Column j of the one-hot
// targets corresponds to class_ids[j]; the class order is the random draw
// order, fresh per episode.
struct Episode {
    Array x_train; // NK x F
    Array y_train; // NK x N
    Array x_test;  // NQ x F
    Array y_test;  // NQ x N
    std::size_t class_count = 0;
    std::size_t shots = 0;
    std::size_t queries = 0;
    std::vector<std::uint32_t> class_ids;
};

Episode sample_episode(const ClassPool& pool, std::size_t n_way, std::size_t shots,
                       std::size_t queries, std::uint64_t seed);

// Tasks sharing one class count c_b, drawn uniformly from [n_min, n_max].
struct MetaBatch {
    std::vector<Episode> episodes;
    std::size_t class_count = 0;
};

MetaBatch sample_meta_batch(const ClassPool& pool, std::size_t batch_size, std::size_t n_min,
                            std::size_t n_max, std::size_t shots, std::size_t queries,
                            std::uint64_t seed);

} // namespace metainit
