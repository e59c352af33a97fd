#include "motion/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "motion/errors.hpp"

namespace motion {
namespace {

constexpr char kMagic[8] = {'M', 'O', 'T', 'I', 'O', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    template <typename T>
    void pod(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void str(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void doubles(std::span<const double> v) {
        out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    }
    void raw(const std::string& s) { out_ += s; }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    template <typename T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> doubles(std::size_t n) {
        need(n * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), data_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw ParseError("truncated checkpoint", 0);
    }

    std::string data_;
    std::size_t pos_ = 0;
};

std::map<std::string, std::string> hyper_entries(const ModelParams& p) {
    const ModelHyper& h = p.hyper();
    return {{"joints", std::to_string(h.joints)},
            {"dims", std::to_string(h.dims)},
            {"hidden", std::to_string(h.hidden)},
            {"latent_z", std::to_string(h.latent_z)},
            {"latent_c", std::to_string(h.latent_c)},
            {"heads", std::to_string(h.heads)},
            {"spl_hidden", std::to_string(h.spl_hidden)},
            {"disc_hidden", std::to_string(h.disc_hidden)},
            {"spl_residual", h.spl_residual ? "1" : "0"},
            {"parents", format_parents(p.tree())}};
}

std::size_t to_size(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("checkpoint hyper block lacks '" + key + "'", 0);
    try {
        return static_cast<std::size_t>(std::stoull(it->second));
    } catch (const std::exception&) {
        throw ParseError("checkpoint hyper '" + key + "' is not an integer", 0);
    }
}

void write_kv(Writer& w, const std::map<std::string, std::string>& kv) {
    w.pod(static_cast<std::uint32_t>(kv.size()));
    for (const auto& [k, v] : kv) {
        w.str(k);
        w.str(v);
    }
}

std::map<std::string, std::string> read_kv(Reader& r) {
    std::map<std::string, std::string> kv;
    const auto n = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string k = r.str();
        kv[k] = r.str();
    }
    return kv;
}

void write_stats(Writer& w, const CoordStats& s) {
    w.pod(static_cast<std::uint64_t>(s.mean.size()));
    w.doubles(s.mean);
    w.doubles(s.stddev);
}

CoordStats read_stats(Reader& r) {
    const auto n = r.pod<std::uint64_t>();
    CoordStats s;
    s.mean = r.doubles(n);
    s.stddev = r.doubles(n);
    return s;
}

}  // namespace

std::string serialize_group(const ModelParams& params, ParamGroup group) {
    Writer w;
    w.str(std::string(group_name(group)));
    const auto members = params.group(group);
    w.pod(static_cast<std::uint32_t>(members.size()));
    for (const Parameter* p : members) {
        w.str(p->name);
        w.pod(static_cast<std::uint32_t>(p->value.rank()));
        for (std::size_t d : p->value.shape()) w.pod(static_cast<std::uint64_t>(d));
        w.doubles(p->value.data());
    }
    return w.take();
}

std::uint64_t group_hash(const ModelParams& params, ParamGroup group) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : serialize_group(params, group)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    Writer w;
    for (char c : kMagic) w.pod(c);
    w.pod(kVersion);
    write_kv(w, hyper_entries(ckpt.params));
    write_kv(w, ckpt.meta);
    write_stats(w, ckpt.stats.position);
    write_stats(w, ckpt.stats.velocity);
    write_stats(w, ckpt.stats.acceleration);
    w.pod(static_cast<std::uint32_t>(kParamGroupCount));
    for (std::size_t g = 0; g < kParamGroupCount; ++g) w.raw(serialize_group(ckpt.params, static_cast<ParamGroup>(g)));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    const std::string bytes = w.take();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint " + path.string(), 0);
    Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

    if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw ParseError("not a checkpoint file", 0);
    if (r.pod<std::uint32_t>() != kVersion) throw ParseError("unsupported checkpoint version", 0);

    const auto hyper_kv = read_kv(r);
    ModelHyper hyper;
    hyper.joints = to_size(hyper_kv, "joints");
    hyper.dims = to_size(hyper_kv, "dims");
    hyper.hidden = to_size(hyper_kv, "hidden");
    hyper.latent_z = to_size(hyper_kv, "latent_z");
    hyper.latent_c = to_size(hyper_kv, "latent_c");
    hyper.heads = to_size(hyper_kv, "heads");
    hyper.spl_hidden = to_size(hyper_kv, "spl_hidden");
    hyper.disc_hidden = to_size(hyper_kv, "disc_hidden");
    hyper.spl_residual = to_size(hyper_kv, "spl_residual") != 0;
    auto parents = hyper_kv.find("parents");
    if (parents == hyper_kv.end()) throw ParseError("checkpoint hyper block lacks 'parents'", 0);

    Checkpoint ckpt{ModelParams(hyper, parse_parents(parents->second), 0), {}, read_kv(r)};
    ckpt.stats.position = read_stats(r);
    ckpt.stats.velocity = read_stats(r);
    ckpt.stats.acceleration = read_stats(r);

    std::set<std::string> assigned;
    const auto groups = r.pod<std::uint32_t>();
    for (std::uint32_t gi = 0; gi < groups; ++gi) {
        const ParamGroup group = parse_group(r.str());
        const auto count = r.pod<std::uint32_t>();
        for (std::uint32_t ti = 0; ti < count; ++ti) {
            const std::string name = r.str();
            const auto rank = r.pod<std::uint32_t>();
            Shape shape;
            for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.pod<std::uint64_t>()));
            Tensor value(shape, r.doubles(shape_numel(shape)));
            Parameter* p = ckpt.params.find(name);
            if (p == nullptr || p->group != group) {
                throw ConfigError("checkpoint tensor '" + name + "' is not part of group " +
                                  std::string(group_name(group)));
            }
            if (p->value.shape() != shape) {
                throw ConfigError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                                  shape_str(p->value.shape()));
            }
            if (!value.all_finite()) throw NumericError("checkpoint tensor '" + name + "' holds non-finite values");
            p->value = std::move(value);
            assigned.insert(name);
        }
    }
    if (!r.done()) throw ParseError("trailing bytes in checkpoint", 0);
    const std::size_t n_params = ckpt.params.parameters().size();
    if (assigned.size() != n_params) {
        throw ConfigError("checkpoint provides " + std::to_string(assigned.size()) + " of " +
                          std::to_string(n_params) + " parameter tensors");
    }
    const std::size_t n = hyper.pose_dim();
    for (const CoordStats* s : {&ckpt.stats.position, &ckpt.stats.velocity, &ckpt.stats.acceleration}) {
        if (s->mean.size() != n) throw ConfigError("checkpoint normalization statistics do not match pose size");
    }
    return ckpt;
}

}  // namespace motion
