#include "metainit/episodes.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "metainit/rng.hpp"

namespace metainit {

const char* role_name(PoolRole role) {
    switch (role) {
        case PoolRole::kTrain: return "train";
        case PoolRole::kValidation: return "validation";
        case PoolRole::kTest: return "test";
    }
    return "?";
}

void SyntheticSpec::validate() const {
    if (feature_dim < 1) throw ValidationError("synthetic pool: feature_dim must be >= 1");
    if (n_classes < 1) throw ValidationError("synthetic pool: n_classes must be >= 1");
    if (instances_per_class < 1)
        throw ValidationError("synthetic pool: instances_per_class must be >= 1");
    if (cluster_std < 0.0) throw ValidationError("synthetic pool: cluster_std must be >= 0");
    if (center_scale <= 0.0) throw ValidationError("synthetic pool: center_scale must be > 0");
}

ClassPool gen_synthetic(const SyntheticSpec& spec, PoolRole role) {
    spec.validate();
    Rng rng(spec.seed);
    ClassPool pool;
    pool.role = role;
    pool.feature_dim = spec.feature_dim;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        std::vector<double> center(spec.feature_dim);
        for (double& v : center) v = rng.uniform(-spec.center_scale, spec.center_scale);
        Array block = Array::zeros(Shape::matrix(spec.instances_per_class, spec.feature_dim));
        for (std::size_t i = 0; i < spec.instances_per_class; ++i)
            for (std::size_t f = 0; f < spec.feature_dim; ++f)
                block.at(i, f) = center[f] + spec.cluster_std * rng.gaussian();
        pool.class_ids.push_back(spec.first_class_id + static_cast<std::uint32_t>(c));
        pool.instances.push_back(std::move(block));
    }
    return pool;
}

// ---------------------------------------------------------------------------
// FSDS file IO

namespace {

constexpr char kMagic[4] = {'F', 'S', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(std::string("dataset file truncated reading ") + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

void write_pool(const ClassPool& pool, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(pool.class_count()));
    put_u32(os, static_cast<std::uint32_t>(pool.feature_dim));
    for (std::size_t c = 0; c < pool.class_count(); ++c) {
        put_u32(os, pool.class_ids[c]);
        put_u32(os, static_cast<std::uint32_t>(pool.instances[c].shape.dims[0]));
        for (double v : pool.instances[c].data) put_f64(os, v);
    }
    if (!os) throw IoError("write failed for " + path.string());
}

ClassPool load_pool(const std::filesystem::path& path, PoolRole role) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path.string() + ": bad magic, not a dataset file");
    const std::uint32_t version = get_u32(is, "version");
    if (version != kVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));

    ClassPool pool;
    pool.role = role;
    const std::uint32_t n_classes = get_u32(is, "class count");
    pool.feature_dim = get_u32(is, "feature dim");
    if (pool.feature_dim < 1) throw FormatError(path.string() + ": zero feature dim");

    for (std::uint32_t c = 0; c < n_classes; ++c) {
        const std::uint32_t id = get_u32(is, "class id");
        const std::uint32_t count = get_u32(is, "instance count");
        if (count < 1)
            throw FormatError(path.string() + ": class " + std::to_string(id) +
                              " declares zero instances");
        Array block = Array::zeros(Shape::matrix(count, pool.feature_dim));
        const std::streamsize bytes = static_cast<std::streamsize>(block.data.size() * 8);
        std::vector<unsigned char> buf(block.data.size() * 8);
        if (!is.read(reinterpret_cast<char*>(buf.data()), bytes))
            throw FormatError(path.string() + ": header claims " + std::to_string(n_classes) +
                              " classes but the file ends inside class " + std::to_string(c));
        for (std::size_t i = 0; i < block.data.size(); ++i) {
            std::uint64_t u = 0;
            for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
            block.data[i] = std::bit_cast<double>(u);
        }
        pool.class_ids.push_back(id);
        pool.instances.push_back(std::move(block));
    }
    if (pool.class_count() != n_classes)
        throw FormatError(path.string() + ": class count mismatch");
    return pool;
}

// ---------------------------------------------------------------------------
// Episode sampling

Episode sample_episode(const ClassPool& pool, std::size_t n_way, std::size_t shots,
                       std::size_t queries, std::uint64_t seed) {
    if (n_way < 1) throw ValidationError("sample_episode: n_way must be >= 1");
    if (shots < 1) throw ValidationError("sample_episode: shots must be >= 1");
    if (pool.class_count() < n_way)
        throw CapacityError("sample_episode: episode needs " + std::to_string(n_way) +
                            " classes, pool has " + std::to_string(pool.class_count()));

    Rng rng(seed);

    // N distinct classes, partial Fisher-Yates; draw order is the column order.
    std::vector<std::size_t> order(pool.class_count());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < n_way; ++i) {
        const std::size_t j = i + rng.below(order.size() - i);
        std::swap(order[i], order[j]);
    }

    const std::size_t f = pool.feature_dim;
    Episode ep;
    ep.class_count = n_way;
    ep.shots = shots;
    ep.queries = queries;
    ep.x_train = Array::zeros(Shape::matrix(n_way * shots, f));
    ep.y_train = Array::zeros(Shape::matrix(n_way * shots, n_way));
    if (queries > 0) {
        ep.x_test = Array::zeros(Shape::matrix(n_way * queries, f));
        ep.y_test = Array::zeros(Shape::matrix(n_way * queries, n_way));
    }

    for (std::size_t c = 0; c < n_way; ++c) {
        const std::size_t cls = order[c];
        const Array& block = pool.instances[cls];
        const std::size_t available = block.shape.dims[0];
        if (available < shots + queries)
            throw CapacityError("sample_episode: class " + std::to_string(pool.class_ids[cls]) +
                                " has " + std::to_string(available) + " instances, needs " +
                                std::to_string(shots + queries));
        ep.class_ids.push_back(pool.class_ids[cls]);

        std::vector<std::size_t> rows(available);
        std::iota(rows.begin(), rows.end(), 0);
        for (std::size_t i = 0; i < shots + queries; ++i) {
            const std::size_t j = i + rng.below(rows.size() - i);
            std::swap(rows[i], rows[j]);
        }
        for (std::size_t k = 0; k < shots; ++k) {
            const std::size_t dst = c * shots + k;
            std::copy_n(block.data.begin() + rows[k] * f, f, ep.x_train.data.begin() + dst * f);
            ep.y_train.at(dst, c) = 1.0;
        }
        for (std::size_t q = 0; q < queries; ++q) {
            const std::size_t dst = c * queries + q;
            std::copy_n(block.data.begin() + rows[shots + q] * f, f,
                        ep.x_test.data.begin() + dst * f);
            ep.y_test.at(dst, c) = 1.0;
        }
    }
    return ep;
}

MetaBatch sample_meta_batch(const ClassPool& pool, std::size_t batch_size, std::size_t n_min,
                            std::size_t n_max, std::size_t shots, std::size_t queries,
                            std::uint64_t seed) {
    if (batch_size < 1) throw ValidationError("sample_meta_batch: batch_size must be >= 1");
    if (n_min < 2) throw ValidationError("sample_meta_batch: n_min must be >= 2");
    if (n_min > n_max)
        throw ValidationError("sample_meta_batch: empty class range [" + std::to_string(n_min) +
                              ", " + std::to_string(n_max) + "]");
    if (n_max > pool.class_count())
        throw ValidationError("sample_meta_batch: n_max " + std::to_string(n_max) +
                              " exceeds pool class count " + std::to_string(pool.class_count()));

    Rng rng(seed);
    MetaBatch batch;
    batch.class_count = n_min + rng.below(n_max - n_min + 1);
    batch.episodes.reserve(batch_size);
    for (std::size_t t = 0; t < batch_size; ++t)
        batch.episodes.push_back(
            sample_episode(pool, batch.class_count, shots, queries, rng.next_u64()));
    return batch;
}

} // namespace metainit
