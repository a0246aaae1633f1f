#include "csg0/checkpoint.hpp"

#include "csg0/errors.hpp"
#include "csg0/run_config.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace csg0 {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'C', 'S', 'G', '0'};

class Writer {
  public:
    template <typename T>
    void put(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void put_string32(std::string_view s) {
        put(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void put_raw(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

  private:
    std::string out_;
};

class Reader {
  public:
    explicit Reader(std::string_view in, std::string what) : in_(in), what_(std::move(what)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        const auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string string32() { return std::string(raw(get<std::uint32_t>())); }
    bool done() const { return pos_ == in_.size(); }

  private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw ValidationError(what_ + ": truncated data");
        }
    }
    std::string_view in_;
    std::size_t pos_ = 0;
    std::string what_;
};

void put_params(Writer& w, const ParamTable& params) {
    w.put(static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        w.put_string32(name);
        w.put(static_cast<std::uint32_t>(t.ndim()));
        for (auto d : t.shape()) {
            w.put(static_cast<std::uint64_t>(d));
        }
        for (double v : t.data()) {
            w.put(v);
        }
    }
}

ParamTable get_params(Reader& r) {
    ParamTable params;
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.string32();
        const auto ndim = r.get<std::uint32_t>();
        if (ndim > 8) {
            throw ValidationError("checkpoint: tensor '" + name + "' has implausible rank");
        }
        Shape shape(ndim);
        for (auto& d : shape) {
            d = r.get<std::uint64_t>();
            if (d == 0 || d > (std::uint64_t{1} << 24)) {
                throw ValidationError("checkpoint: tensor '" + name + "' has an implausible shape");
            }
        }
        // Bound the allocation by the bytes actually present.
        const std::size_t n = shape_numel(shape);
        const auto bytes = r.raw(n * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), bytes.data(), bytes.size());
        if (!params.emplace(name, Tensor::from_data(shape, std::move(v))).second) {
            throw ValidationError("checkpoint: duplicate tensor '" + name + "'");
        }
    }
    return params;
}

} // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string encode_checkpoint(const GeneratorModel& model) {
    std::vector<std::pair<std::string, std::string>> sections;
    sections.emplace_back("config", to_json(model.config()).dump());
    sections.emplace_back("registry", model.registry().to_csv());
    {
        Writer w;
        put_params(w, model.base());
        sections.emplace_back("base", w.take());
    }
    for (const auto& d : model.deltas()) {
        Writer w;
        w.put_string32(d.domain);
        put_params(w, d.params);
        sections.emplace_back("delta/" + std::to_string(d.step), w.take());
    }
    Writer out;
    out.put_raw(std::string_view(kMagic, 4));
    out.put(kCheckpointVersion);
    out.put(static_cast<std::uint32_t>(sections.size()));
    for (const auto& [name, payload] : sections) {
        out.put_string32(name);
        out.put(static_cast<std::uint64_t>(payload.size()));
        out.put_raw(payload);
        out.put(fnv1a64(payload));
    }
    return out.take();
}

std::vector<Section> read_sections(std::string_view bytes) {
    Reader r(bytes, "checkpoint");
    if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4)) {
        throw ValidationError("checkpoint: bad magic bytes");
    }
    r.raw(4);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto count = r.get<std::uint32_t>();
    std::vector<Section> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        Section s;
        s.name = r.string32();
        s.payload = std::string(r.raw(r.get<std::uint64_t>()));
        s.digest = r.get<std::uint64_t>();
        if (fnv1a64(s.payload) != s.digest) {
            throw ValidationError("checkpoint: digest mismatch in section '" + s.name + "'");
        }
        out.push_back(std::move(s));
    }
    if (!r.done()) {
        throw ValidationError("checkpoint: trailing bytes after the last section");
    }
    return out;
}

GeneratorModel decode_checkpoint(std::string_view bytes) {
    const auto sections = read_sections(bytes);
    if (sections.size() < 3 || sections[0].name != "config" || sections[1].name != "registry" ||
        sections[2].name != "base") {
        throw ValidationError("checkpoint: expected config, registry and base sections first");
    }
    Json cfg;
    try {
        cfg = Json::parse(sections[0].payload);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("checkpoint: config section: ") + e.what());
    }
    auto config = generator_config_from_json(cfg);
    auto registry = LabelRegistry::from_csv(sections[1].payload);
    Reader base_reader(sections[2].payload, "base section");
    auto base = get_params(base_reader);
    std::vector<DomainDelta> deltas;
    for (std::size_t i = 3; i < sections.size(); ++i) {
        const std::size_t step = i - 2;
        if (sections[i].name != "delta/" + std::to_string(step)) {
            throw ValidationError("checkpoint: unexpected section '" + sections[i].name + "'");
        }
        Reader r(sections[i].payload, sections[i].name);
        DomainDelta d;
        d.step = step;
        d.domain = r.string32();
        d.params = get_params(r);
        if (!r.done()) {
            throw ValidationError("checkpoint: trailing bytes in " + sections[i].name);
        }
        deltas.push_back(std::move(d));
    }
    return GeneratorModel::from_parts(std::move(config), std::move(registry), std::move(base), std::move(deltas));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_checkpoint(const std::filesystem::path& path, const GeneratorModel& model) {
    const std::string bytes = encode_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

GeneratorModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

} // namespace csg0
