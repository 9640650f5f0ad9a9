#include "vseg/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vseg/errors.hpp"

namespace vseg {
namespace {

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw FormatError("cannot write '" + path.string() + "'");
    return os;
}

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("cannot read '" + path.string() + "'");
    return is;
}

void write_u32(std::ostream& os, std::uint32_t v)
{
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

std::uint32_t read_u32(std::istream& is)
{
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4))
        throw FormatError("truncated file");
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& is)
{
    std::string tok;
    char c;
    while (is.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(is, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty())
                return tok;
            continue;
        }
        tok.push_back(c);
    }
    if (tok.empty())
        throw FormatError("truncated PGM header");
    return tok;
}

int parse_int(const std::string& s, const std::string& what)
{
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("invalid " + what + " '" + s + "'");
    return v;
}

Raster<std::uint8_t> read_pgm_bytes(const std::filesystem::path& path)
{
    auto is = open_in(path);
    if (pgm_token(is) != "P5")
        throw FormatError("'" + path.string() + "' is not a binary PGM (P5)");
    const int w = parse_int(pgm_token(is), "PGM width");
    const int h = parse_int(pgm_token(is), "PGM height");
    const int maxval = parse_int(pgm_token(is), "PGM maxval");
    if (w <= 0 || h <= 0 || maxval != 255)
        throw FormatError("'" + path.string() + "': unsupported PGM geometry or maxval");
    Raster<std::uint8_t> out(h, w);
    if (!is.read(reinterpret_cast<char*>(out.values.data()), static_cast<std::streamsize>(out.size())))
        throw FormatError("'" + path.string() + "': truncated PGM payload");
    return out;
}

void write_pgm_bytes(const std::filesystem::path& path, const Raster<std::uint8_t>& r)
{
    auto os = open_out(path);
    os << "P5\n" << r.width << ' ' << r.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(r.values.data()), static_cast<std::streamsize>(r.size()));
}

std::string format_double(double v)
{
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

double parse_double(const std::string& s, const std::string& what)
{
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("invalid " + what + " '" + s + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

void write_pgm(const std::filesystem::path& path, const Image& image)
{
    Raster<std::uint8_t> bytes(image.height, image.width);
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double v = std::clamp(static_cast<double>(image.values[i]), 0.0, 1.0);
        bytes.values[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
    write_pgm_bytes(path, bytes);
}

Image read_pgm(const std::filesystem::path& path)
{
    const auto bytes = read_pgm_bytes(path);
    Image out(bytes.height, bytes.width);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        out.values[i] = static_cast<float>(bytes.values[i] / 255.0);
    return out;
}

void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask)
{
    Raster<std::uint8_t> bytes(mask.height(), mask.width());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes.values[i] = mask.bits.values[i] ? 255 : 0;
    write_pgm_bytes(path, bytes);
}

BinaryMask read_mask_pgm(const std::filesystem::path& path, Spacing spacing)
{
    const auto bytes = read_pgm_bytes(path);
    BinaryMask out(bytes.height, bytes.width, spacing);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const auto v = bytes.values[i];
        if (v != 0 && v != 255)
            throw FormatError("'" + path.string() + "': mask PGM must contain only 0 and 255");
        out.bits.values[i] = v ? 1 : 0;
    }
    return out;
}

void write_pmap(const std::filesystem::path& path, const ProbabilityMap& map)
{
    auto os = open_out(path);
    os.write("PMAP", 4);
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(map.height));
    write_u32(os, static_cast<std::uint32_t>(map.width));
    for (float v : map.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        write_u32(os, bits);
    }
}

ProbabilityMap read_pmap(const std::filesystem::path& path)
{
    auto is = open_in(path);
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || std::string_view(magic.data(), 4) != "PMAP")
        throw FormatError("'" + path.string() + "' is not a PMAP file");
    if (read_u32(is) != 1)
        throw FormatError("'" + path.string() + "': unsupported PMAP version");
    const auto h = read_u32(is), w = read_u32(is);
    if (h == 0 || w == 0 || h > 65536 || w > 65536)
        throw FormatError("'" + path.string() + "': implausible PMAP dimensions");
    ProbabilityMap map(static_cast<int>(h), static_cast<int>(w));
    for (float& v : map.values) {
        const std::uint32_t bits = read_u32(is);
        std::memcpy(&v, &bits, 4);
    }
    return map;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows)
{
    auto os = open_out(path);
    os << kManifestHeader << '\n';
    for (const auto& r : rows)
        os << r.id << ',' << r.image_path << ',' << r.mask_path << ',' << r.patient_id << ',' << r.view_tag << ','
           << format_double(r.spacing_row_mm) << ',' << format_double(r.spacing_col_mm) << '\n';
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw FormatError("manifest not found: '" + path.string() + "'");
    std::string line;
    if (!std::getline(is, line) || split_csv_line(line) != split_csv_line(kManifestHeader))
        throw FormatError("'" + path.string() + "': manifest header must be " + kManifestHeader);
    std::vector<ManifestRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        const auto f = split_csv_line(line);
        if (f.size() != 7)
            throw FormatError("'" + path.string() + "' line " + std::to_string(lineno) + ": expected 7 fields");
        rows.push_back({f[0], f[1], f[2], f[3], f[4], parse_double(f[5], "spacing"), parse_double(f[6], "spacing")});
    }
    return rows;
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest_path)
{
    const auto rows = read_manifest(manifest_path);
    const auto base = manifest_path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    std::vector<Sample> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        Sample s;
        s.id = r.id;
        s.patient_id = r.patient_id;
        s.view_tag = r.view_tag;
        s.image = read_pgm(resolve(r.image_path));
        s.mask = read_mask_pgm(resolve(r.mask_path), Spacing{r.spacing_row_mm, r.spacing_col_mm});
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace vseg
