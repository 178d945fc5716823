#ifndef GEOSEG_FEATURES_COMPOSITE_HPP
#define GEOSEG_FEATURES_COMPOSITE_HPP

#include <array>
#include <string>
#include <string_view>

#include "geoseg/core/error.hpp"
#include "geoseg/features/mbi.hpp"
#include "geoseg/features/pca.hpp"
#include "geoseg/features/spectral.hpp"
#include "geoseg/raster/raster.hpp"

namespace geoseg::features {

enum class CompositeKind { CB0, CB1, CB2 };

inline std::string_view to_string(CompositeKind k) {
    switch (k) {
        case CompositeKind::CB0: return "cb0";
        case CompositeKind::CB1: return "cb1";
        case CompositeKind::CB2: return "cb2";
    }
    return "cb0";
}

inline CompositeKind parse_composite(std::string_view s) {
    if (s == "cb0" || s == "CB0") return CompositeKind::CB0;
    if (s == "cb1" || s == "CB1") return CompositeKind::CB1;
    if (s == "cb2" || s == "CB2") return CompositeKind::CB2;
    throw ConfigError("unknown composite '" + std::string(s) + "' (expected cb0, cb1 or cb2)");
}

/// Which named band fills each of the three output slots.
struct CompositeSpec {
    CompositeKind kind = CompositeKind::CB0;
    std::array<std::string, 3> slot_bands{"R", "G", "B"};

    static CompositeSpec of(CompositeKind kind) {
        switch (kind) {
            case CompositeKind::CB0: return {kind, {"R", "G", "B"}};
            case CompositeKind::CB1: return {kind, {"SOBEL", "VDVI", "PC1"}};
            case CompositeKind::CB2: return {kind, {"SOBEL", "VDVI", "MBI"}};
        }
        return {};
    }
};

/// The RGB tile extended with the bands a composite needs: SOBEL (of
/// luma, per-image range), VDVI ([-1, 1]), and PC1 or MBI on demand.
inline Tile with_guiding_bands(const Tile& rgb, CompositeKind kind, const MbiParams& mbi_params = {}) {
    require_rgb(rgb, "with_guiding_bands");
    Tile out = rgb;
    if (kind == CompositeKind::CB0) return out;
    out.bands.push_back(sobel_magnitude(luma(rgb)));
    out.bands.push_back(vdvi(rgb));
    if (kind == CompositeKind::CB1) out.bands.push_back(pc1(rgb).pc1);
    else out.bands.push_back(mbi(rgb, mbi_params));
    return out;
}

/// Three-band tile whose slots hold the bands named in spec, each mapped from its
/// declared range onto [0, 255]. CB0 passes the RGB bands through.
inline Tile assemble_composite(const Tile& tile, const CompositeSpec& spec) {
    std::vector<Band> slots;
    for (const auto& name : spec.slot_bands) {
        const Band& src = tile.band(name);
        if (spec.kind == CompositeKind::CB0) slots.push_back(src);
        else slots.push_back(normalize_band(src, kByteRange));
    }
    return Tile(std::move(slots), tile.gsd, tile.source_id, tile.origin);
}

inline Tile make_composite(const Tile& rgb, CompositeKind kind, const MbiParams& mbi_params = {}) {
    return assemble_composite(with_guiding_bands(rgb, kind, mbi_params), CompositeSpec::of(kind));
}

}  // namespace geoseg::features

#endif  // GEOSEG_FEATURES_COMPOSITE_HPP
