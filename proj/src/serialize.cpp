#include "t2net/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace t2net {

namespace {

constexpr char kMagic[4] = {'T', '2', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated file: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_container(const std::string& path, const std::vector<NamedArray>& arrays) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    for (const auto& a : arrays) {
        put_u32(os, static_cast<std::uint32_t>(a.name.size()));
        os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        put_u32(os, static_cast<std::uint32_t>(a.dims.size()));
        std::uint64_t n = 1;
        for (std::uint64_t d : a.dims) {
            put_u64(os, d);
            n *= d;
        }
        if (n != a.data.size())
            throw ContractError("container: array '" + a.name + "' dims do not match data size");
        for (float v : a.data) put_f32(os, v);
    }
    if (!os) throw IoError("write failed: " + path);
}

std::vector<NamedArray> read_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad magic bytes in " + path);
    const std::uint32_t version = get_u32(is, path);
    if (version != kVersion)
        throw IoError("unsupported container version " + std::to_string(version) + " in " + path);

    std::vector<NamedArray> arrays;
    while (true) {
        if (is.peek() == std::char_traits<char>::eof()) break;
        NamedArray a;
        const std::uint32_t name_len = get_u32(is, path);
        if (name_len > (1u << 20)) throw IoError("implausible name length in " + path);
        a.name.resize(name_len);
        if (!is.read(a.name.data(), name_len)) throw IoError("truncated file: " + path);
        const std::uint32_t rank = get_u32(is, path);
        if (rank > 8) throw IoError("implausible rank in " + path);
        std::uint64_t n = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            a.dims.push_back(get_u64(is, path));
            n *= a.dims.back();
        }
        if (n > (1ull << 32)) throw IoError("implausible array size in " + path);
        a.data.resize(n);
        for (std::uint64_t i = 0; i < n; ++i)
            a.data[i] = std::bit_cast<float>(get_u32(is, path));
        arrays.push_back(std::move(a));
    }
    return arrays;
}

// ----------------------------------------------------------------------------
// key:value sidecars
// ----------------------------------------------------------------------------

void write_kv(const std::string& path, const KvPairs& pairs) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    for (const auto& [k, v] : pairs) os << k << ": " << v << "\n";
    if (!os) throw IoError("write failed: " + path);
}

KvPairs read_kv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    KvPairs pairs;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) throw IoError("malformed line in " + path + ": " + line);
        pairs.emplace_back(trim(line.substr(0, colon)), trim(line.substr(colon + 1)));
    }
    return pairs;
}

std::optional<std::string> kv_find(const KvPairs& pairs, const std::string& key) {
    for (const auto& [k, v] : pairs)
        if (k == key) return v;
    return std::nullopt;
}

std::string kv_require(const KvPairs& pairs, const std::string& key) {
    auto v = kv_find(pairs, key);
    if (!v) throw IoError("missing key '" + key + "' in sidecar");
    return *v;
}

// ----------------------------------------------------------------------------
// checkpoints
// ----------------------------------------------------------------------------

namespace {

NamedArray array_from_tensor(const std::string& name, const TensorPtr& t) {
    NamedArray a;
    a.name = name;
    for (int d : t->shape) a.dims.push_back(static_cast<std::uint64_t>(d));
    a.data = t->values;
    return a;
}

KvPairs model_config_kv(const ModelConfig& cfg, Variant variant) {
    return {
        {"n_stages", std::to_string(cfg.n_stages)},
        {"channels", std::to_string(cfg.channels)},
        {"scale", std::to_string(cfg.scale)},
        {"patch_k", std::to_string(cfg.patch_k)},
        {"variant", variant_name(variant)},
    };
}

}  // namespace

void save_checkpoint(const std::string& path, const T2NetParams& params, const ModelConfig& cfg,
                     Variant variant) {
    std::vector<NamedArray> arrays;
    for (const auto& [name, t] : params.named_parameters()) arrays.push_back(array_from_tensor(name, t));
    write_container(path, arrays);
    write_kv(path + ".cfg", model_config_kv(cfg, variant));
}

Checkpoint load_checkpoint(const std::string& path) {
    const auto kv = read_kv(path + ".cfg");
    Checkpoint ckpt;
    ckpt.cfg.n_stages = std::stoi(kv_require(kv, "n_stages"));
    ckpt.cfg.channels = std::stoi(kv_require(kv, "channels"));
    ckpt.cfg.scale = std::stoi(kv_require(kv, "scale"));
    ckpt.cfg.patch_k = std::stoi(kv_require(kv, "patch_k"));
    ckpt.variant = variant_from_name(kv_require(kv, "variant"));
    ckpt.params = make_params<float>(ckpt.cfg, ckpt.variant, 0);

    auto arrays = read_container(path);
    auto named = ckpt.params.named_parameters();
    if (arrays.size() != named.size())
        throw IoError("checkpoint " + path + " holds " + std::to_string(arrays.size()) +
                      " arrays, model expects " + std::to_string(named.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& [name, t] = named[i];
        const auto& a = arrays[i];
        if (a.name != name)
            throw IoError("checkpoint " + path + ": expected array '" + name + "', found '" +
                          a.name + "'");
        if (a.data.size() != t->numel())
            throw IoError("checkpoint " + path + ": array '" + name + "' has wrong size");
        t->values = a.data;
    }
    return ckpt;
}

// ----------------------------------------------------------------------------
// samples / datasets
// ----------------------------------------------------------------------------

void save_sample(const std::string& path, const SampleTriple& sample) {
    std::vector<NamedArray> arrays;
    arrays.push_back(array_from_tensor("input_lr", sample.input_lr));
    arrays.push_back(array_from_tensor("target_rec", sample.target_rec));
    arrays.push_back(array_from_tensor("target_sr", sample.target_sr));
    write_container(path, arrays);

    std::ostringstream accel, cf;
    accel.precision(17);
    accel << sample.mask.acceleration;
    cf.precision(17);
    cf << sample.mask.center_fraction;
    write_kv(path + ".meta", {
                                 {"width", std::to_string(sample.mask.width)},
                                 {"acceleration", accel.str()},
                                 {"center_fraction", cf.str()},
                                 {"seed", std::to_string(sample.mask.seed)},
                             });
}

namespace {

TensorPtr tensor_from_array(const NamedArray& a, const std::string& path) {
    std::vector<int> shape;
    for (auto d : a.dims) shape.push_back(static_cast<int>(d));
    try {
        return make_tensor<float>(shape, a.data);
    } catch (const Error& e) {
        throw IoError("corrupt array '" + a.name + "' in " + path + ": " + e.what());
    }
}

}  // namespace

SampleTriple load_sample(const std::string& path) {
    auto arrays = read_container(path);
    SampleTriple s;
    for (const auto& a : arrays) {
        if (a.name == "input_lr") s.input_lr = tensor_from_array(a, path);
        else if (a.name == "target_rec") s.target_rec = tensor_from_array(a, path);
        else if (a.name == "target_sr") s.target_sr = tensor_from_array(a, path);
        else throw IoError("unexpected array '" + a.name + "' in sample " + path);
    }
    if (!s.input_lr || !s.target_rec || !s.target_sr)
        throw IoError("sample " + path + " is missing arrays");
    if (s.input_lr->rank() != 4 || s.target_sr->rank() != 4 ||
        s.input_lr->shape != s.target_rec->shape)
        throw IoError("sample " + path + " has inconsistent shapes");
    if (s.target_rec->dim(2) == 0 || s.target_sr->dim(2) % s.target_rec->dim(2) != 0)
        throw IoError("sample " + path + " has non-integer scale");
    s.scale = s.target_sr->dim(2) / s.target_rec->dim(2);

    const auto kv = read_kv(path + ".meta");
    try {
        s.mask = make_cartesian_mask(std::stoi(kv_require(kv, "width")),
                                     std::stod(kv_require(kv, "acceleration")),
                                     std::stod(kv_require(kv, "center_fraction")),
                                     std::stoull(kv_require(kv, "seed")));
    } catch (const ParameterError& e) {
        throw IoError("sample " + path + " has invalid mask metadata: " + e.what());
    }
    return s;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "# file phantom_seed mask_seed\n";
    for (const auto& e : entries) os << e.file << ' ' << e.phantom_seed << ' ' << e.mask_seed << '\n';
    if (!os) throw IoError("write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        ManifestEntry e;
        if (!(ss >> e.file >> e.phantom_seed >> e.mask_seed))
            throw IoError("malformed manifest line in " + path + ": " + line);
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<SampleTriple> load_dataset(const std::string& dir) {
    const auto entries = read_manifest(dir + "/manifest.txt");
    std::vector<SampleTriple> samples;
    samples.reserve(entries.size());
    for (const auto& e : entries) samples.push_back(load_sample(dir + "/" + e.file));
    return samples;
}

// ----------------------------------------------------------------------------
// images / logs
// ----------------------------------------------------------------------------

void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels, int w, int h) {
    if (pixels.size() != static_cast<std::size_t>(w) * h)
        throw DimensionError("pgm: pixel count does not match " + std::to_string(w) + "x" +
                             std::to_string(h));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P5\n" << w << ' ' << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!os) throw IoError("write failed: " + path);
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "step,total,sr_term,rec_term\n";
    os.precision(9);
    for (const auto& r : rows)
        os << r.step << ',' << r.total << ',' << r.sr_term << ',' << r.rec_term << '\n';
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace t2net
