#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include "lascar/volume.hpp"

// MetaImage-style two-file format: an ASCII `Key = Value` header next to a
// little-endian raw file. FLOAT32 carries intensities, UINT8 carries labels.
// Round-trips are bit-exact: doubles are printed shortest-exact via to_chars.

namespace lascar {

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

inline std::string raw_name(const std::filesystem::path& header_path) {
    return header_path.stem().string() + ".raw";
}

template <typename T>
void write_header(const Grid3<T>& v, const std::filesystem::path& path,
                  const char* element_type) {
    std::ofstream h(path);
    if (!h) throw std::runtime_error("cannot write header: " + path.string());
    h << "NDims = 3\n";
    h << "DimSize = " << v.dims[0] << " " << v.dims[1] << " " << v.dims[2] << "\n";
    h << "ElementSpacing = " << fmt_double(v.spacing[0]) << " " << fmt_double(v.spacing[1])
      << " " << fmt_double(v.spacing[2]) << "\n";
    h << "Offset = " << fmt_double(v.origin[0]) << " " << fmt_double(v.origin[1]) << " "
      << fmt_double(v.origin[2]) << "\n";
    h << "ElementType = " << element_type << "\n";
    h << "ElementDataFile = " << raw_name(path) << "\n";
}

template <typename T>
void write_raw(const Grid3<T>& v, const std::filesystem::path& raw_path) {
    static_assert(std::endian::native == std::endian::little,
                  "raw format is little-endian");
    std::ofstream r(raw_path, std::ios::binary);
    if (!r) throw std::runtime_error("cannot write raw: " + raw_path.string());
    r.write(reinterpret_cast<const char*>(v.data.data()),
            static_cast<std::streamsize>(v.data.size() * sizeof(T)));
}

}  // namespace detail

inline void save_volume(const Volume3D& v, const std::filesystem::path& path) {
    detail::write_header(v, path, "FLOAT32");
    detail::write_raw(v, path.parent_path() / detail::raw_name(path));
}

inline void save_volume(const LabelVolume& v, const std::filesystem::path& path) {
    detail::write_header(v, path, "UINT8");
    detail::write_raw(v, path.parent_path() / detail::raw_name(path));
}

using AnyVolume = std::variant<Volume3D, LabelVolume>;

inline AnyVolume load_volume(const std::filesystem::path& path) {
    std::ifstream h(path);
    if (!h) throw std::runtime_error("cannot open header: " + path.string());

    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1, 1, 1};
    std::array<double, 3> origin{0, 0, 0};
    std::string element_type, data_file;
    bool have_dims = false;

    std::string line;
    while (std::getline(h, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed header line: " + line);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        std::istringstream vs(val);
        if (key == "NDims") {
            int nd = 0;
            vs >> nd;
            if (nd != 3) throw std::runtime_error("NDims must be 3");
        } else if (key == "DimSize") {
            if (!(vs >> dims[0] >> dims[1] >> dims[2]))
                throw std::runtime_error("malformed DimSize");
            have_dims = true;
        } else if (key == "ElementSpacing") {
            if (!(vs >> spacing[0] >> spacing[1] >> spacing[2]))
                throw std::runtime_error("malformed ElementSpacing");
        } else if (key == "Offset") {
            if (!(vs >> origin[0] >> origin[1] >> origin[2]))
                throw std::runtime_error("malformed Offset");
        } else if (key == "ElementType") {
            element_type = val;
        } else if (key == "ElementDataFile") {
            data_file = val;
        }
        // Unknown keys are ignored.
    }
    if (!have_dims || element_type.empty() || data_file.empty())
        throw std::runtime_error("header missing required keys: " + path.string());

    const auto raw_path = path.parent_path() / data_file;
    std::ifstream r(raw_path, std::ios::binary | std::ios::ate);
    if (!r) throw std::runtime_error("cannot open raw: " + raw_path.string());
    const auto nbytes = static_cast<size_t>(r.tellg());
    r.seekg(0);

    const size_t nvox = static_cast<size_t>(dims[0]) * dims[1] * dims[2];

    if (element_type == "FLOAT32") {
        if (nbytes != nvox * sizeof(float))
            throw std::runtime_error("raw size mismatch: expected " +
                                     std::to_string(nvox * sizeof(float)) + " bytes, got " +
                                     std::to_string(nbytes));
        auto v = Volume3D::create(dims, spacing, origin);
        r.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(nbytes));
        return v;
    }
    if (element_type == "UINT8") {
        if (nbytes != nvox)
            throw std::runtime_error("raw size mismatch: expected " + std::to_string(nvox) +
                                     " bytes, got " + std::to_string(nbytes));
        auto v = LabelVolume::create(dims, spacing, origin);
        r.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(nbytes));
        return v;
    }
    throw std::runtime_error("unknown ElementType: " + element_type);
}

inline Volume3D load_volume_f32(const std::filesystem::path& path) {
    auto any = load_volume(path);
    if (auto* v = std::get_if<Volume3D>(&any)) return std::move(*v);
    throw std::runtime_error("expected FLOAT32 volume: " + path.string());
}

inline LabelVolume load_label_volume(const std::filesystem::path& path) {
    auto any = load_volume(path);
    if (auto* v = std::get_if<LabelVolume>(&any)) return std::move(*v);
    throw std::runtime_error("expected UINT8 volume: " + path.string());
}

}  // namespace lascar
