#include "vseg/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "vseg/errors.hpp"

namespace vseg {
namespace {

constexpr const char* kArchKey = "__arch__";
constexpr const char* kSeedKey = "__seed__";
constexpr const char* kEpochKey = "__epoch__";
constexpr const char* kRngKey = "__rng__";
constexpr const char* kOptPrefix = "opt/";

template <typename U>
void put(std::ostream& os, U v)
{
    std::array<char, sizeof(U)> b{};
    for (std::size_t i = 0; i < sizeof(U); ++i)
        b[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    os.write(b.data(), sizeof(U));
}

template <typename U>
U get(std::istream& is)
{
    std::array<unsigned char, sizeof(U)> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), sizeof(U)))
        throw FormatError("checkpoint truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<U>(v);
}

void put_tensor(std::ostream& os, const std::string& name, const Tensor<float>& t)
{
    if (name.size() > 0xffff)
        throw FormatError("tensor name too long");
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape())
        put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (float v : t.values()) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put<std::uint32_t>(os, bits);
    }
}

// Small integers and bytes are exact in float32; the 64-bit seed is split
// into 16-bit limbs.
Tensor<float> encode_arch(const ArchConfig& a)
{
    return Tensor<float>(Shape{7}, {static_cast<float>(a.kind), static_cast<float>(a.num_scales),
                                    static_cast<float>(a.base_channels), static_cast<float>(a.per_path_channels),
                                    static_cast<float>(a.input_channels), a.deep_supervision ? 1.0f : 0.0f,
                                    static_cast<float>(a.input_size)});
}

ArchConfig decode_arch(const Tensor<float>& t)
{
    if (t.numel() != 7)
        throw FormatError("checkpoint architecture record malformed");
    ArchConfig a;
    const int kind = static_cast<int>(t[0]);
    if (kind < 0 || kind > 2)
        throw FormatError("checkpoint architecture kind invalid");
    a.kind = static_cast<ArchKind>(kind);
    a.num_scales = static_cast<int>(t[1]);
    a.base_channels = static_cast<int>(t[2]);
    a.per_path_channels = static_cast<int>(t[3]);
    a.input_channels = static_cast<int>(t[4]);
    a.deep_supervision = t[5] != 0.0f;
    a.input_size = static_cast<int>(t[6]);
    return a;
}

Tensor<float> encode_u64(std::uint64_t v)
{
    std::vector<float> limbs(4);
    for (int i = 0; i < 4; ++i)
        limbs[i] = static_cast<float>((v >> (16 * i)) & 0xffff);
    return Tensor<float>(Shape{4}, std::move(limbs));
}

std::uint64_t decode_u64(const Tensor<float>& t)
{
    if (t.numel() != 4)
        throw FormatError("checkpoint seed record malformed");
    std::uint64_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint64_t>(t[i]) << (16 * i);
    return v;
}

Tensor<float> encode_bytes(const std::string& s)
{
    std::vector<float> bytes(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size(); ++i)
        bytes[i] = static_cast<float>(static_cast<unsigned char>(s[i]));
    const Shape shape{static_cast<int>(bytes.size())};
    return Tensor<float>(shape, std::move(bytes));
}

std::string decode_bytes(const Tensor<float>& t)
{
    std::string s(t.numel(), '\0');
    for (std::size_t i = 0; i < t.numel(); ++i)
        s[i] = static_cast<char>(static_cast<unsigned char>(t[i]));
    return s;
}

bool reserved(const std::string& name)
{
    return name.size() > 4 && name.starts_with("__") && name.ends_with("__");
}

// Every tensor a network owns: trainable parameters and running statistics.
std::map<std::string, Tensor<float>*> network_tensors(Network<float>& network)
{
    std::map<std::string, Tensor<float>*> out;
    for (auto& p : network.params())
        out[p.name] = &p.value.mutable_value();
    for (auto& [name, st] : network.norm_states()) {
        out[name + ".running_mean"] = &st.running_mean;
        out[name + ".running_var"] = &st.running_var;
    }
    return out;
}

} // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const
{
    for (const auto& t : tensors)
        if (t.name == name)
            return &t.value;
    return nullptr;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt)
{
    os.write("VNCK", 4);
    put<std::uint32_t>(os, Checkpoint::kVersion);
    const std::uint32_t meta = ckpt.rng_state.empty() ? 3 : 4;
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()) + meta);
    put_tensor(os, kArchKey, encode_arch(ckpt.arch));
    put_tensor(os, kSeedKey, encode_u64(ckpt.seed));
    put_tensor(os, kEpochKey, encode_u64(static_cast<std::uint64_t>(ckpt.epoch)));
    if (!ckpt.rng_state.empty())
        put_tensor(os, kRngKey, encode_bytes(ckpt.rng_state));
    for (const auto& t : ckpt.tensors)
        put_tensor(os, t.name, t.value);
    if (!os)
        throw FormatError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& is)
{
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || std::string_view(magic.data(), 4) != "VNCK")
        throw FormatError("not a checkpoint: bad magic bytes");
    const auto version = get<std::uint32_t>(is);
    if (version != Checkpoint::kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto count = get<std::uint32_t>(is);

    Checkpoint ckpt;
    bool have_arch = false;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get<std::uint16_t>(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len))
            throw FormatError("checkpoint truncated in tensor name");
        const auto rank = get<std::uint8_t>(is);
        if (rank == 0 || rank > 8)
            throw FormatError("tensor '" + name + "' has invalid rank");
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            const auto e = get<std::uint32_t>(is);
            if (e == 0 || e > (1u << 28))
                throw FormatError("tensor '" + name + "' has invalid extent");
            d = static_cast<int>(e);
            n *= e;
        }
        if (n > (std::size_t{1} << 30))
            throw FormatError("tensor '" + name + "' too large");
        std::vector<float> values(n);
        for (float& v : values) {
            const auto bits = get<std::uint32_t>(is);
            std::memcpy(&v, &bits, 4);
        }
        Tensor<float> t(std::move(shape), std::move(values));
        if (name == kArchKey) {
            ckpt.arch = decode_arch(t);
            have_arch = true;
        } else if (name == kSeedKey) {
            ckpt.seed = decode_u64(t);
        } else if (name == kEpochKey) {
            ckpt.epoch = static_cast<int>(decode_u64(t));
        } else if (name == kRngKey) {
            ckpt.rng_state = decode_bytes(t);
        } else if (reserved(name)) {
            throw FormatError("unknown reserved record '" + name + "'");
        } else {
            ckpt.tensors.push_back({std::move(name), std::move(t)});
        }
    }
    if (!have_arch)
        throw FormatError("checkpoint has no architecture record");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    // Serialize fully before touching the file so a failure leaves no partial checkpoint.
    std::ostringstream buffer;
    write_checkpoint(buffer, ckpt);
    std::ofstream os(path, std::ios::binary);
    const std::string bytes = buffer.str();
    if (!os || !os.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
        throw FormatError("cannot write checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("checkpoint not found: '" + path.string() + "'");
    return read_checkpoint(is);
}

Checkpoint make_checkpoint(const Network<float>& network, int epoch, const RmsProp* optimizer, const Rng* rng)
{
    Checkpoint ckpt;
    ckpt.arch = network.config();
    ckpt.seed = network.seed();
    ckpt.epoch = epoch;
    if (rng)
        ckpt.rng_state = rng->state();
    for (const auto& p : network.params())
        ckpt.tensors.push_back({p.name, p.value.value()});
    for (const auto& [name, st] : network.norm_states()) {
        ckpt.tensors.push_back({name + ".running_mean", st.running_mean});
        ckpt.tensors.push_back({name + ".running_var", st.running_var});
    }
    if (optimizer)
        for (const auto& [name, v] : optimizer->state())
            ckpt.tensors.push_back({kOptPrefix + name, v});
    return ckpt;
}

LoadReport load_pretrained(const Checkpoint& ckpt, Network<float>& network, LoadMode mode)
{
    auto targets = network_tensors(network);
    std::map<std::string, const Tensor<float>*> source;
    for (const auto& t : ckpt.tensors)
        if (!t.name.starts_with(kOptPrefix))
            source[t.name] = &t.value;

    std::vector<std::pair<Tensor<float>*, const Tensor<float>*>> copies;
    std::vector<std::string> offenders;
    for (const auto& [name, dst] : targets) {
        auto it = source.find(name);
        if (it == source.end()) {
            offenders.push_back(name + " (missing)");
            continue;
        }
        if (it->second->shape() != dst->shape()) {
            offenders.push_back(name + " (shape " + shape_string(it->second->shape()) + " vs " +
                                shape_string(dst->shape()) + ")");
            continue;
        }
        copies.emplace_back(dst, it->second);
    }
    for (const auto& [name, src] : source)
        if (!targets.count(name))
            offenders.push_back(name + " (unexpected)");

    if (mode == LoadMode::strict && !offenders.empty()) {
        std::ostringstream msg;
        msg << "strict load failed for " << offenders.size() << " tensor(s):";
        for (std::size_t i = 0; i < offenders.size() && i < 20; ++i)
            msg << ' ' << offenders[i];
        throw LoadError(msg.str());
    }

    for (auto& [dst, src] : copies)
        *dst = *src;

    LoadReport report;
    report.total = network.params().size();
    for (const auto& p : network.params()) {
        auto it = source.find(p.name);
        if (it != source.end() && it->second->shape() == p.value.shape())
            ++report.matched;
    }
    return report;
}

Network<float> network_from_checkpoint(const Checkpoint& ckpt)
{
    Network<float> net = build_network<float>(ckpt.arch, ckpt.seed);
    load_pretrained(ckpt, net, LoadMode::strict);
    return net;
}

void restore_optimizer(const Checkpoint& ckpt, RmsProp& optimizer)
{
    for (const auto& t : ckpt.tensors)
        if (t.name.starts_with(kOptPrefix))
            optimizer.state()[t.name.substr(std::string(kOptPrefix).size())] = t.value;
}

} // namespace vseg
