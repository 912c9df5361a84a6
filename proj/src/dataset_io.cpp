#include "tvssm/dataset_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tvssm/errors.hpp"
#include "tvssm/serialize.hpp"

namespace tvssm {

namespace {

constexpr char kMagic[8] = {'T', 'V', 'S', 'S', 'M', 'D', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
    const std::vector<unsigned char>& buf;
    const std::filesystem::path& path;
    std::size_t pos = 0;

    template <typename U>
    U get() {
        if (pos + sizeof(U) > buf.size()) throw IoError("dataset '" + path.string() + "' is truncated");
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[pos + i]) << (8 * i);
        pos += sizeof(U);
        return v;
    }
    double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
};

void put_array(std::string& out, const std::string& name, const SequenceBatch& a) {
    put_le(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le(out, static_cast<std::uint64_t>(a.batch));
    put_le(out, static_cast<std::uint64_t>(a.channels));
    put_le(out, static_cast<std::uint64_t>(a.steps));
    for (double v : a.data) put_f64(out, v);
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& path) { return path.string() + ".json"; }

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
    std::string out(kMagic, sizeof(kMagic));
    put_le(out, kVersion);
    std::vector<std::pair<std::string, const SequenceBatch*>> arrays{{"inputs", &d.inputs}, {"targets", &d.targets}};
    if (d.clean.batch) arrays.emplace_back("clean", &d.clean);
    if (d.scaled_noise.batch) arrays.emplace_back("scaled_noise", &d.scaled_noise);
    put_le(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, a] : arrays) put_array(out, name, *a);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write dataset '" + path.string() + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing dataset '" + path.string() + "'");

    json side;
    side["format"] = "tvssm-dataset";
    side["version"] = kVersion;
    side["seed"] = d.seed;
    side["provenance"] = d.provenance.empty() ? json::object() : json::parse(d.provenance);
    std::string split;
    for (auto s : d.split) split += static_cast<char>('0' + static_cast<int>(s));
    side["split"] = split;
    write_text_file(sidecar_path(path), side.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
    const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError("'" + path.string() + "' is not a dataset file");
    Reader r{buf, path, sizeof(kMagic)};
    if (const auto v = r.get<std::uint32_t>(); v != kVersion)
        throw IoError("dataset '" + path.string() + "' has unsupported version " + std::to_string(v));
    Dataset d;
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t a = 0; a < count; ++a) {
        const auto len = r.get<std::uint32_t>();
        if (r.pos + len > buf.size()) throw IoError("dataset '" + path.string() + "' is truncated");
        std::string name(reinterpret_cast<const char*>(buf.data() + r.pos), len);
        r.pos += len;
        const auto b = r.get<std::uint64_t>(), c = r.get<std::uint64_t>(), t = r.get<std::uint64_t>();
        if (b * c * t * 8 > buf.size() - r.pos) throw IoError("dataset '" + path.string() + "' is truncated");
        SequenceBatch arr(b, c, t);
        for (auto& v : arr.data) v = r.f64();
        if (name == "inputs") d.inputs = std::move(arr);
        else if (name == "targets") d.targets = std::move(arr);
        else if (name == "clean") d.clean = std::move(arr);
        else if (name == "scaled_noise") d.scaled_noise = std::move(arr);
        else throw IoError("dataset '" + path.string() + "' has unknown array '" + name + "'");
    }

    json side;
    try {
        side = json::parse(read_text_file(sidecar_path(path)));
    } catch (const json::exception& e) {
        throw IoError("corrupt dataset sidecar '" + sidecar_path(path).string() + "': " + e.what());
    }
    d.seed = side.at("seed").get<std::uint64_t>();
    d.provenance = side.at("provenance").dump();
    for (char ch : side.at("split").get<std::string>())
    {
        if (ch < '0' || ch > '2') throw IoError("bad split label in '" + sidecar_path(path).string() + "'");
        d.split.push_back(static_cast<Split>(ch - '0'));
    }
    if (d.split.size() != d.inputs.batch || !d.inputs.same_shape(d.targets))
        throw IoError("dataset '" + path.string() + "' arrays and split labels disagree");
    return d;
}

}  // namespace tvssm
