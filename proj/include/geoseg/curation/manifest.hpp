#ifndef GEOSEG_CURATION_MANIFEST_HPP
#define GEOSEG_CURATION_MANIFEST_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/core/format.hpp"
#include "geoseg/core/rng.hpp"

namespace geoseg::curation {

enum class Split { Train, Val, Test };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw DataError("unknown split tag '" + std::string(s) + "'");
}

struct ManifestEntry {
    std::string tile_path;
    std::string mask_path;
    double gsd = 1.0;
    std::string source_id;
    Split split = Split::Train;
    std::string composite_path;  // empty until featurised

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Line-oriented dataset index.
///
///   #geoseg-manifest v1 prng=<name> seed=<int>
///   #key=value            (optional annotations, e.g. composite=cb1)
///   tile<TAB>mask<TAB>gsd<TAB>source<TAB>split[<TAB>composite]
///
/// Relative paths are resolved against the manifest's own directory.
struct Manifest {
    std::string prng{Rng::kAlgorithm};
    std::uint64_t seed = 0;
    std::map<std::string, std::string> annotations;
    std::vector<ManifestEntry> entries;

    friend bool operator==(const Manifest&, const Manifest&) = default;

    std::vector<ManifestEntry> with_split(Split s) const {
        std::vector<ManifestEntry> out;
        for (const auto& e : entries)
            if (e.split == s) out.push_back(e);
        return out;
    }
};

inline constexpr std::string_view kManifestMagic = "#geoseg-manifest v1";

inline std::filesystem::path resolve_entry_path(const std::filesystem::path& manifest_path, const std::string& p) {
    const std::filesystem::path entry(p);
    if (entry.is_absolute()) return entry;
    return manifest_path.parent_path() / entry;
}

inline void validate_entry(const ManifestEntry& e, std::size_t index) {
    const std::string who = "manifest entry " + std::to_string(index) + " ('" + e.tile_path + "')";
    if (e.tile_path.empty()) throw DataError(who + ": missing tile path");
    if (e.mask_path.empty()) throw DataError(who + ": missing mask path");
    if (!(e.gsd > 0.0)) throw DataError(who + ": gsd must be positive");
    for (auto field : {&e.tile_path, &e.mask_path, &e.source_id, &e.composite_path})
        if (field->find_first_of("\t\n") != std::string::npos) throw DataError(who + ": field contains a tab or newline");
}

inline std::string serialize_manifest(const Manifest& m) {
    std::ostringstream out;
    out << kManifestMagic << " prng=" << m.prng << " seed=" << m.seed << '\n';
    for (const auto& [k, v] : m.annotations) out << '#' << k << '=' << v << '\n';
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        validate_entry(e, i + 1);
        out << e.tile_path << '\t' << e.mask_path << '\t' << format_double(e.gsd) << '\t' << e.source_id << '\t'
            << to_string(e.split);
        if (!e.composite_path.empty()) out << '\t' << e.composite_path;
        out << '\n';
    }
    return out.str();
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
    const std::string text = serialize_manifest(m);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
}

inline Manifest parse_manifest(const std::string& text, const std::string& name = "<manifest>") {
    Manifest m;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    auto fail = [&](const std::string& why) -> DataError {
        return DataError(name + ":" + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!header_seen) {
            if (line.rfind(kManifestMagic, 0) != 0) throw fail("missing '#geoseg-manifest v1' header");
            std::istringstream fields(line.substr(kManifestMagic.size()));
            std::string kv;
            while (fields >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw fail("malformed header field '" + kv + "'");
                const auto key = kv.substr(0, eq);
                const auto value = kv.substr(eq + 1);
                try {
                    if (key == "prng") m.prng = value;
                    else if (key == "seed") m.seed = parse_int<std::uint64_t>(value, "seed");
                } catch (const ConfigError& e) {
                    throw fail(e.what());
                }
            }
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw fail("malformed annotation");
            m.annotations[line.substr(1, eq - 1)] = line.substr(eq + 1);
            continue;
        }
        const auto parts = split_view(line, '\t');
        if (parts.size() != 5 && parts.size() != 6)
            throw fail("expected 5 or 6 tab-separated fields, got " + std::to_string(parts.size()));
        ManifestEntry e;
        e.tile_path = std::string(parts[0]);
        e.mask_path = std::string(parts[1]);
        try {
            e.gsd = parse_double(parts[2], "gsd");
            e.source_id = std::string(parts[3]);
            e.split = parse_split(parts[4]);
            if (parts.size() == 6) e.composite_path = std::string(parts[5]);
            validate_entry(e, m.entries.size() + 1);
        } catch (const Error& err) {
            throw fail(err.what());
        }
        m.entries.push_back(std::move(e));
    }
    if (!header_seen) throw DataError(name + ": empty file, missing header");
    return m;
}

/// Parse a manifest. With `check_files`, every referenced raster must exist.
inline Manifest read_manifest(const std::filesystem::path& path, bool check_files = true) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    Manifest m = parse_manifest(buf.str(), path.string());
    if (check_files) {
        for (std::size_t i = 0; i < m.entries.size(); ++i) {
            const auto& e = m.entries[i];
            for (const auto* p : {&e.tile_path, &e.mask_path, &e.composite_path}) {
                if (p->empty()) continue;
                if (!std::filesystem::exists(resolve_entry_path(path, *p)))
                    throw DataError("manifest entry " + std::to_string(i + 1) + ": missing file '" + *p + "'");
            }
        }
    }
    return m;
}

}  // namespace geoseg::curation

#endif  // GEOSEG_CURATION_MANIFEST_HPP
