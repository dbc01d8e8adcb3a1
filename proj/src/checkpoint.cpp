#include "freqguide/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "freqguide/errors.hpp"

namespace freqguide::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kBaseMagic{'F', 'Q', 'G', 'B', 'A', 'S', 'E', '\0'};
constexpr std::array<char, 8> kLoraMagic{'F', 'Q', 'G', 'L', 'O', 'R', 'A', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    }
    template <typename V>
    void put(V v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(V));
    }
    void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
    void name(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    template <typename Container>
    void floats(const Container& v) {
        put(static_cast<std::uint64_t>(v.size()));
        for (auto x : v) put(static_cast<float>(x));
    }
    void finish() {
        out_.flush();
        if (!out_) throw IoError("write failed for " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open " + path.string());
    }
    template <typename V>
    V get() {
        V v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(V));
        check();
        return v;
    }
    std::string name() {
        const auto n = get<std::uint32_t>();
        if (n > 4096) fail("implausible name length");
        std::string s(n, '\0');
        in_.read(s.data(), n);
        check();
        return s;
    }
    std::vector<float> floats(std::uint64_t expected) {
        const auto n = get<std::uint64_t>();
        if (n != expected) fail("block has " + std::to_string(n) + " values, expected " + std::to_string(expected));
        return raw_floats(n);
    }
    std::vector<float> raw_floats(std::uint64_t n) {
        if (n > (std::uint64_t{1} << 32)) fail("implausible block size");
        std::vector<float> v(n);
        in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
        check();
        return v;
    }
    void magic(const std::array<char, 8>& expected) {
        std::array<char, 8> m{};
        in_.read(m.data(), 8);
        check();
        if (m != expected) fail("not a " + std::string(expected.data()) + " file");
        if (get<std::uint32_t>() != kVersion) fail("unsupported version");
    }
    void expect_end() {
        in_.peek();
        if (!in_.eof()) fail("trailing bytes");
    }
    [[noreturn]] void fail(const std::string& what) const { throw IoError(path_.string() + ": " + what); }

private:
    void check() const {
        if (!in_) fail("truncated file");
    }
    std::filesystem::path path_;
    std::ifstream in_;
};

void write_arch(Writer& w, const denoiser::ArchConfig& a) {
    for (auto v : {a.image_channels, a.image_size, a.base_width, a.time_dim, a.emb_dim, a.groups, a.mid_blocks,
                   a.n_subjects, a.n_actions}) {
        w.put(static_cast<std::uint32_t>(v));
    }
    w.put(static_cast<std::uint8_t>(a.coord_channels ? 1 : 0));
    w.put(static_cast<std::uint8_t>(a.input_skip ? 1 : 0));
}

denoiser::ArchConfig read_arch(Reader& r) {
    denoiser::ArchConfig a;
    for (auto* v : {&a.image_channels, &a.image_size, &a.base_width, &a.time_dim, &a.emb_dim, &a.groups,
                    &a.mid_blocks, &a.n_subjects, &a.n_actions}) {
        *v = r.get<std::uint32_t>();
    }
    a.coord_channels = r.get<std::uint8_t>() != 0;
    a.input_skip = r.get<std::uint8_t>() != 0;
    try {
        a.validate();
    } catch (const ConfigError& e) {
        r.fail(std::string("invalid architecture: ") + e.what());
    }
    return a;
}

}  // namespace

void save_base(const std::filesystem::path& path, const denoiser::DenoiserModel<float>& model,
               const TrainingState* state) {
    auto& m = const_cast<denoiser::DenoiserModel<float>&>(model);
    const auto params = m.parameters(nn::ParamRole::base);
    Writer w(path);
    w.bytes(kBaseMagic.data(), kBaseMagic.size());
    w.put(kVersion);
    write_arch(w, model.arch());
    w.put(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.name(p.name);
        w.floats(p.param->value);
    }
    w.put(static_cast<std::uint8_t>(state ? 1 : 0));
    if (state) {
        w.put(state->epoch);
        w.put(state->adam.steps);
        w.put(static_cast<std::uint32_t>(state->adam.moments.size()));
        for (const auto& [name, mv] : state->adam.moments) {
            w.name(name);
            w.put(static_cast<std::uint64_t>(mv.first.size()));
            w.bytes(mv.first.data(), mv.first.size() * sizeof(float));
            w.bytes(mv.second.data(), mv.second.size() * sizeof(float));
        }
        w.put(static_cast<std::uint64_t>(state->epoch_losses.size()));
        for (double l : state->epoch_losses) w.put(l);
    }
    w.finish();
}

LoadedBase load_base(const std::filesystem::path& path) {
    Reader r(path);
    r.magic(kBaseMagic);
    const auto arch = read_arch(r);
    LoadedBase out{denoiser::DenoiserModel<float>(arch, 0), std::nullopt};
    const auto params = out.model.parameters(nn::ParamRole::base);
    const auto count = r.get<std::uint32_t>();
    if (count != params.size()) r.fail("parameter block count does not match the architecture");
    for (const auto& p : params) {
        if (r.name() != p.name) r.fail("unexpected parameter block (wanted " + p.name + ")");
        const auto values = r.floats(p.param->size());
        std::copy(values.begin(), values.end(), p.param->value.begin());
    }
    if (r.get<std::uint8_t>() != 0) {
        TrainingState st;
        st.epoch = r.get<std::uint64_t>();
        st.adam.steps = r.get<std::uint64_t>();
        const auto n = r.get<std::uint32_t>();
        for (std::uint32_t i = 0; i < n; ++i) {
            auto name = r.name();
            const auto c = r.get<std::uint64_t>();
            auto mvals = r.raw_floats(c);
            auto vvals = r.raw_floats(c);
            st.adam.moments.emplace(std::move(name), std::make_pair(std::move(mvals), std::move(vvals)));
        }
        const auto nl = r.get<std::uint64_t>();
        if (nl > 1000000) r.fail("implausible loss history");
        for (std::uint64_t i = 0; i < nl; ++i) st.epoch_losses.push_back(r.get<double>());
        out.state = std::move(st);
    }
    r.expect_end();
    return out;
}

void save_adapters(const std::filesystem::path& path, const denoiser::DenoiserModel<float>& model) {
    if (!model.has_adapters()) throw ConfigError("save_adapters: model has no adapters");
    auto& m = const_cast<denoiser::DenoiserModel<float>&>(model);
    const auto targets = model.adapter_targets();
    const auto adapters = m.parameters(nn::ParamRole::adapter);
    Writer w(path);
    w.bytes(kLoraMagic.data(), kLoraMagic.size());
    w.put(kVersion);
    write_arch(w, model.arch());
    w.put(model.base_checksum());
    w.put(static_cast<std::uint32_t>(model.adapter_rank()));
    w.put(static_cast<std::uint32_t>(targets.size()));
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto [out, in] = model.layer_shape(targets[i]);
        w.name(targets[i]);
        w.put(static_cast<std::uint32_t>(out));
        w.put(static_cast<std::uint32_t>(in));
        const auto& a = adapters[2 * i].param->value;
        const auto& b = adapters[2 * i + 1].param->value;
        w.bytes(a.data(), a.size() * sizeof(float));
        w.bytes(b.data(), b.size() * sizeof(float));
    }
    w.finish();
}

void load_adapters(const std::filesystem::path& path, denoiser::DenoiserModel<float>& model) {
    Reader r(path);
    r.magic(kLoraMagic);
    if (read_arch(r) != model.arch()) r.fail("adapter architecture does not match the model");
    if (r.get<std::uint64_t>() != model.base_checksum()) r.fail("adapters were trained on a different base model");
    const auto rank = r.get<std::uint32_t>();
    const auto n = r.get<std::uint32_t>();
    std::vector<std::string> targets;
    std::vector<std::pair<std::vector<float>, std::vector<float>>> factors;
    for (std::uint32_t i = 0; i < n; ++i) {
        auto name = r.name();
        const auto out = r.get<std::uint32_t>();
        const auto in = r.get<std::uint32_t>();
        std::pair<std::size_t, std::size_t> shape;
        try {
            shape = model.layer_shape(name);
        } catch (const ConfigError&) {
            r.fail("unknown adapter layer '" + name + "'");
        }
        if (shape.first != out || shape.second != in) r.fail("adapter shape mismatch for '" + name + "'");
        auto a = r.raw_floats(std::uint64_t{rank} * in);
        auto b = r.raw_floats(std::uint64_t{out} * rank);
        targets.push_back(std::move(name));
        factors.emplace_back(std::move(a), std::move(b));
    }
    r.expect_end();
    model.attach_adapters(rank, targets, 0);
    // attach_adapters registers factors in network order; map by name.
    const auto attached = model.adapter_targets();
    const auto params = model.parameters(nn::ParamRole::adapter);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto pos = static_cast<std::size_t>(
            std::find(attached.begin(), attached.end(), targets[i]) - attached.begin());
        params[2 * pos].param->value.assign(factors[i].first.begin(), factors[i].first.end());
        params[2 * pos + 1].param->value.assign(factors[i].second.begin(), factors[i].second.end());
    }
}

}  // namespace freqguide::checkpoint
