#ifndef GEOSEG_NN_ARCHIVE_HPP
#define GEOSEG_NN_ARCHIVE_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geoseg/core/error.hpp"
#include "geoseg/nn/tensor.hpp"

namespace geoseg::nn {

/// Named-tensor archive:
///
///   8 bytes   magic "GSTARCH1"
///   8 bytes   little-endian u64 length L of the JSON index
///   L bytes   UTF-8 JSON {"tensors": {name: {"shape", "dtype", "offset",
///             "nbytes"}}, "metadata": {...}}
///   payload   little-endian float32 data; offsets are relative to the
///             first payload byte
///
/// Tensors are laid out in name order, so equal contents give equal bytes.
struct Archive {
    std::map<std::string, Tensor> tensors;
    nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr char kArchiveMagic[8] = {'G', 'S', 'T', 'A', 'R', 'C', 'H', '1'};

inline void write_archive(const Archive& archive, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little, "archive writer assumes a little-endian host");
    nlohmann::json index = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : archive.tensors) {
        const std::uint64_t nbytes = t.numel() * sizeof(float);
        index[name] = {{"shape", t.shape()}, {"dtype", "f32"}, {"offset", offset}, {"nbytes", nbytes}};
        offset += nbytes;
    }
    const nlohmann::json header = {{"tensors", index}, {"metadata", archive.metadata}};
    const std::string text = header.dump();
    const std::uint64_t len = text.size();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write archive '" + path.string() + "'");
    out.write(kArchiveMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : archive.tensors)
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw DataError("cannot write archive '" + path.string() + "'");
}

inline Archive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open archive '" + path.string() + "'");
    char magic[8];
    std::uint64_t len = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&len), 8);
    if (!in || std::memcmp(magic, kArchiveMagic, 8) != 0) throw DataError("'" + path.string() + "' is not a tensor archive");
    if (len > (std::uint64_t{1} << 32)) throw DataError("'" + path.string() + "': implausible index length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("'" + path.string() + "': truncated index");
    std::vector<char> payload{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    Archive archive;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
        archive.metadata = header.value("metadata", nlohmann::json::object());
        for (const auto& [name, entry] : header.at("tensors").items()) {
            if (entry.at("dtype").get<std::string>() != "f32")
                throw DataError("tensor '" + name + "' has unsupported dtype");
            const auto shape = entry.at("shape").get<std::vector<int>>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
            Tensor t(shape);
            if (nbytes != t.numel() * sizeof(float) || offset + nbytes > payload.size())
                throw DataError("tensor '" + name + "' has an inconsistent extent");
            std::memcpy(t.data(), payload.data() + offset, nbytes);
            archive.tensors.emplace(name, std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("'" + path.string() + "': malformed index: " + e.what());
    } catch (const ConfigError& e) {
        throw DataError("'" + path.string() + "': " + e.what());
    }
    return archive;
}

}  // namespace geoseg::nn

#endif  // GEOSEG_NN_ARCHIVE_HPP
