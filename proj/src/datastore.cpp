#include "ctrlvdiff/datastore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ctrlvdiff/rng.hpp"

namespace ctrlvdiff {

using nlohmann::json;

namespace {

constexpr unsigned char kMagic[4] = {'M', 'M', 'V', '1'};

void put_u32(unsigned char* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

template <typename T>
void write_le(std::ostream& os, std::span<const T> payload) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts need byte swapping");
    os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size_bytes()));
}

template <typename T>
std::vector<T> read_le(std::istream& is, std::size_t count) {
    std::vector<T> out(count);
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * sizeof(T)));
    if (static_cast<std::size_t>(is.gcount()) != count * sizeof(T)) throw FormatError("tensor payload truncated");
    return out;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) throw RuntimeFailure("write failed: " + p.string());
}

json meta_to_json(const std::string& clip_id, const ClipMeta& m) {
    json j;
    j["clip_id"] = clip_id;
    j["shape"] = {m.frames, m.height, m.width};
    j["fps"] = m.fps;
    j["seed"] = m.seed;
    j["scene_hash"] = m.scene_hash;
    j["tags"] = m.tags;
    std::vector<std::string> names;
    for (Modality mod : m.modalities) names.emplace_back(name_of(mod));
    j["modalities"] = names;
    j["format_version"] = m.format_version;
    return j;
}

ClipMeta meta_from_json(const json& j) {
    try {
        ClipMeta m;
        const auto& shape = j.at("shape");
        if (!shape.is_array() || shape.size() != 3) throw FormatError("meta.json: shape must be [T,H,W]");
        m.frames = shape[0].get<int>();
        m.height = shape[1].get<int>();
        m.width = shape[2].get<int>();
        m.fps = j.at("fps").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.scene_hash = j.value("scene_hash", std::uint64_t{0});
        m.tags = j.value("tags", std::vector<std::string>{});
        for (const auto& name : j.value("modalities", std::vector<std::string>{}))
            m.modalities.push_back(parse_modality(name));
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != kFormatVersion)
            throw FormatError("meta.json: unsupported format_version " + std::to_string(m.format_version));
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("meta.json: ") + e.what());
    }
}

std::string unique_suffix() {
    static std::random_device rd;
    std::ostringstream os;
    os << std::hex << mix_seed(rd(), static_cast<std::uint64_t>(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    return os.str();
}

}  // namespace

std::array<unsigned char, kTensorHeaderBytes> encode_tensor_header(const TensorHeader& h) {
    std::array<unsigned char, kTensorHeaderBytes> b{};
    std::memcpy(b.data(), kMagic, 4);
    put_u32(b.data() + 4, static_cast<std::uint32_t>(h.shape.frames));
    put_u32(b.data() + 8, static_cast<std::uint32_t>(h.shape.height));
    put_u32(b.data() + 12, static_cast<std::uint32_t>(h.shape.width));
    put_u32(b.data() + 16, static_cast<std::uint32_t>(h.shape.channels));
    put_u32(b.data() + 20, h.modality_id);
    b[24] = static_cast<unsigned char>(h.dtype);
    return b;
}

TensorHeader decode_tensor_header(std::span<const unsigned char, kTensorHeaderBytes> b) {
    if (std::memcmp(b.data(), kMagic, 4) != 0) throw FormatError("tensor header: bad magic (expected MMV1)");
    TensorHeader h;
    h.shape.frames = static_cast<int>(get_u32(b.data() + 4));
    h.shape.height = static_cast<int>(get_u32(b.data() + 8));
    h.shape.width = static_cast<int>(get_u32(b.data() + 12));
    h.shape.channels = static_cast<int>(get_u32(b.data() + 16));
    h.modality_id = get_u32(b.data() + 20);
    for (std::size_t i = 25; i < kTensorHeaderBytes; ++i)
        if (b[i] != 0) throw FormatError("tensor header: reserved bytes must be zero");
    if (b[24] > 1) throw FormatError("tensor header: unknown dtype code");
    h.dtype = static_cast<TensorDtype>(b[24]);
    if (h.modality_id != kParameterTensorId) {
        if (h.modality_id >= static_cast<std::uint32_t>(kNumModalities))
            throw FormatError("tensor header: modality id out of range");
        if (h.dtype != TensorDtype::f32) throw FormatError("tensor header: clip tensors are float32");
    }
    return h;
}

void write_tensor(std::ostream& os, const TensorHeader& h, std::span<const float> payload) {
    if (h.dtype != TensorDtype::f32 || payload.size() != h.shape.numel())
        throw ValidationError("write_tensor: payload does not match header");
    const auto hdr = encode_tensor_header(h);
    os.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
    write_le(os, payload);
}

void write_tensor(std::ostream& os, const TensorHeader& h, std::span<const double> payload) {
    if (h.dtype != TensorDtype::f64 || payload.size() != h.shape.numel())
        throw ValidationError("write_tensor: payload does not match header");
    const auto hdr = encode_tensor_header(h);
    os.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
    write_le(os, payload);
}

TensorHeader read_tensor_header(std::istream& is) {
    std::array<unsigned char, kTensorHeaderBytes> b{};
    is.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (static_cast<std::size_t>(is.gcount()) != b.size()) throw FormatError("tensor header truncated");
    return decode_tensor_header(b);
}

std::vector<float> read_f32_payload(std::istream& is, const TensorHeader& h) {
    if (h.dtype != TensorDtype::f32) throw FormatError("expected float32 payload");
    return read_le<float>(is, h.shape.numel());
}

std::vector<double> read_f64_payload(std::istream& is, const TensorHeader& h) {
    if (h.dtype != TensorDtype::f64) throw FormatError("expected float64 payload");
    return read_le<double>(is, h.shape.numel());
}

void write_tensor_file(const fs::path& path, const ModalityTensor& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot create " + path.string());
    write_tensor(out, TensorHeader{m.shape, static_cast<std::uint32_t>(index_of(m.modality)), TensorDtype::f32},
                 std::span<const float>(m.data));
    out.flush();
    if (!out) throw RuntimeFailure("write failed: " + path.string());
}

ModalityTensor read_tensor_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    const TensorHeader h = read_tensor_header(in);
    if (h.modality_id == kParameterTensorId) throw FormatError(path.string() + ": parameter tensor, not a clip tensor");
    ModalityTensor m;
    m.modality = static_cast<Modality>(h.modality_id);
    m.space = Space::native;
    m.shape = h.shape;
    m.data = read_f32_payload(in, h);
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after payload");
    return m;
}

const ModalityTensor& ClipRecord::get(Modality m) const {
    auto it = tensors.find(m);
    if (it == tensors.end())
        throw ValidationError("clip " + clip_id + ": modality " + std::string(name_of(m)) + " not loaded");
    return it->second;
}

void ClipRecord::validate(bool allow_partial) const {
    require(!clip_id.empty() && clip_id.find('/') == std::string::npos && clip_id.front() != '.',
            "clip: invalid clip_id '" + clip_id + "'");
    require(!caption.empty(), "clip " + clip_id + ": caption must be non-empty");
    require(!tensors.empty(), "clip " + clip_id + ": no modality tensors");
    if (!allow_partial)
        for (Modality m : kAllModalities)
            require(has(m), "clip " + clip_id + ": missing modality " + std::string(name_of(m)));
    for (const auto& [m, t] : tensors) {
        require(t.modality == m, "clip " + clip_id + ": tensor keyed under the wrong modality");
        require(t.shape.frames == meta.frames && t.shape.height == meta.height && t.shape.width == meta.width,
                "clip " + clip_id + ": " + std::string(name_of(m)) + " shape " + to_string(t.shape) +
                    " disagrees with meta");
        validate_native(t);
    }
}

fs::path write_clip(const ClipRecord& record, const fs::path& root, const WriteOptions& opts) {
    record.validate(opts.allow_partial);
    fs::create_directories(root);
    const fs::path final_dir = root / record.clip_id;
    if (fs::exists(final_dir) && !opts.overwrite)
        throw ValidationError("clip " + record.clip_id + " already exists under " + root.string());

    const fs::path tmp = root / (".tmp-" + record.clip_id + "-" + unique_suffix());
    try {
        fs::create_directories(tmp);
        ClipMeta meta = record.meta;
        meta.modalities.clear();
        for (const auto& [m, t] : record.tensors) {
            write_tensor_file(tmp / (std::string(name_of(m)) + ".tensor"), t);
            meta.modalities.push_back(m);
        }
        write_text(tmp / "caption.txt", record.caption);
        write_text(tmp / "meta.json", meta_to_json(record.clip_id, meta).dump(2) + "\n");

        if (fs::exists(final_dir)) {
            const fs::path old = root / (".old-" + record.clip_id + "-" + unique_suffix());
            fs::rename(final_dir, old);
            fs::rename(tmp, final_dir);
            fs::remove_all(old);
        } else {
            fs::rename(tmp, final_dir);
        }
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
    return final_dir;
}

ClipMeta read_clip_meta(const fs::path& clip_dir) {
    const fs::path p = clip_dir / "meta.json";
    if (!fs::exists(p)) throw FormatError("missing meta.json in " + clip_dir.string());
    json j;
    try {
        j = json::parse(read_text(p));
    } catch (const json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
    return meta_from_json(j);
}

ClipRecord read_clip(const fs::path& root, const std::string& clip_id, const std::vector<Modality>& modalities,
                     const ReadOptions& opts) {
    const fs::path dir = root / clip_id;
    if (!fs::is_directory(dir)) throw ValidationError("clip '" + clip_id + "' not found under " + root.string());
    auto touch = [&](const fs::path& p) {
        if (opts.on_open) opts.on_open(p);
    };

    ClipRecord rec;
    rec.clip_id = clip_id;
    touch(dir / "meta.json");
    rec.meta = read_clip_meta(dir);
    touch(dir / "caption.txt");
    rec.caption = read_text(dir / "caption.txt");

    const std::vector<Modality> wanted = modalities.empty() ? rec.meta.modalities : modalities;
    for (Modality m : wanted) {
        const fs::path p = dir / (std::string(name_of(m)) + ".tensor");
        if (!fs::exists(p))
            throw ValidationError("clip '" + clip_id + "': missing modality file for " + std::string(name_of(m)));
        touch(p);
        ModalityTensor t = read_tensor_file(p);
        if (t.modality != m)
            throw FormatError("clip '" + clip_id + "': " + p.filename().string() + " header names modality " +
                              std::string(name_of(t.modality)));
        if (t.shape.frames != rec.meta.frames || t.shape.height != rec.meta.height ||
            t.shape.width != rec.meta.width || t.shape.channels != spec_of(m).native_channels)
            throw FormatError("clip '" + clip_id + "': shape mismatch between " + p.filename().string() + " header " +
                              to_string(t.shape) + " and meta.json");
        rec.tensors.emplace(m, std::move(t));
    }
    return rec;
}

std::vector<std::string> list_clips(const fs::path& root) {
    std::vector<std::string> ids;
    if (!fs::is_directory(root)) return ids;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.empty() || name.front() == '.') continue;
        if (fs::exists(entry.path() / "meta.json")) ids.push_back(name);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::string_view name_of(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

const std::vector<std::string>& Manifest::ids(Split s) const {
    static const std::vector<std::string> empty;
    auto it = splits.find(s);
    return it == splits.end() ? empty : it->second;
}

Manifest build_manifest(const fs::path& root, std::array<double, 3> fractions, std::uint64_t seed) {
    double total = 0;
    for (double f : fractions) {
        require(f >= 0.0, "build_manifest: split fractions must be non-negative");
        total += f;
    }
    require(std::abs(total - 1.0) <= 1e-9, "build_manifest: split fractions must sum to 1");
    Manifest man;
    man.root = root;
    man.clip_ids = list_clips(root);
    require(!man.clip_ids.empty(), "build_manifest: no clips under " + root.string());

    std::vector<std::string> order = man.clip_ids;
    Rng rng(mix_seed(seed, 0x5B117));
    rng.shuffle(order);
    const auto n = static_cast<long long>(order.size());
    const long long n_train = std::min(n, std::llround(fractions[0] * static_cast<double>(n)));
    const long long n_val = std::min(n - n_train, std::llround(fractions[1] * static_cast<double>(n)));
    auto take = [&](long long from, long long to) {
        std::vector<std::string> v(order.begin() + from, order.begin() + to);
        std::sort(v.begin(), v.end());
        return v;
    };
    man.splits[Split::train] = take(0, n_train);
    man.splits[Split::val] = take(n_train, n_train + n_val);
    man.splits[Split::test] = take(n_train + n_val, n);

    json j;
    j["format_version"] = man.format_version;
    j["seed"] = seed;
    j["clip_ids"] = man.clip_ids;
    for (const auto& [s, ids] : man.splits) j["splits"][std::string(name_of(s))] = ids;
    write_text(root / "manifest.json", j.dump(2) + "\n");
    return man;
}

Manifest read_manifest(const fs::path& root) {
    const fs::path p = root / "manifest.json";
    if (!fs::exists(p)) throw ValidationError("no manifest.json under " + root.string());
    try {
        const json j = json::parse(read_text(p));
        Manifest man;
        man.root = root;
        man.format_version = j.at("format_version").get<int>();
        man.clip_ids = j.at("clip_ids").get<std::vector<std::string>>();
        for (Split s : {Split::train, Split::val, Split::test})
            man.splits[s] = j.at("splits").value(std::string(name_of(s)), std::vector<std::string>{});
        return man;
    } catch (const json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

}  // namespace ctrlvdiff
