#pragma once

// File formats shared across tools:
//   - "T2NT" binary container: named float32 arrays (checkpoints, samples)
//   - flat key:value sidecars ('#' comments), used for mask metadata, model
//     configs and CLI config files
//   - binary PGM (P5) image emission
//   - dataset directory layout with a manifest of per-slice seeds

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "t2net/mri_sim.hpp"
#include "t2net/model.hpp"

namespace t2net {

struct NamedArray {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<float> data;
};

/// Layout: magic "T2NT", version u32, then per-array records: name length
/// u32 + UTF-8 name, rank u32, dims u64 each, raw little-endian float32
/// payload. Round trips bit-exactly.
void write_container(const std::string& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_container(const std::string& path);

// ---- key:value sidecars ----

using KvPairs = std::vector<std::pair<std::string, std::string>>;

void write_kv(const std::string& path, const KvPairs& pairs);
KvPairs read_kv(const std::string& path);
std::optional<std::string> kv_find(const KvPairs& pairs, const std::string& key);
std::string kv_require(const KvPairs& pairs, const std::string& key);

// ---- checkpoints ----

void save_checkpoint(const std::string& path, const T2NetParams& params, const ModelConfig& cfg,
                     Variant variant);

struct Checkpoint {
    T2NetParams params;
    ModelConfig cfg;
    Variant variant = Variant::Full;
};

/// Reads the container and its config sidecar (path + ".cfg"), rebuilding the
/// parameter set. Name or shape mismatches are artifact errors.
Checkpoint load_checkpoint(const std::string& path);

// ---- samples / datasets ----

void save_sample(const std::string& path, const SampleTriple& sample);
SampleTriple load_sample(const std::string& path);

struct ManifestEntry {
    std::string file;
    std::uint64_t phantom_seed = 0;
    std::uint64_t mask_seed = 0;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

/// Loads every sample named by dir/manifest.txt.
std::vector<SampleTriple> load_dataset(const std::string& dir);

// ---- images / logs ----

void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels, int w, int h);

struct TrainLogRow {
    int step = 0;
    double total = 0.0, sr_term = 0.0, rec_term = 0.0;
};

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows);

}  // namespace t2net
