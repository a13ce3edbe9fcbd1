// Sectional-plane featurization: slab slicing along nine fixed normals,
// orthogonal projection, and rasterization into two-channel 64x64 images.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "cofap/structure.hpp"

namespace cofap {

inline constexpr int kSectionSize = 64;
inline constexpr int kSectionPlanes = 9;

// Canonical plane normals, in order: the three axes, three face diagonals,
// the body diagonal, one skew diagonal, and two higher-index directions.
const std::array<std::array<int, 3>, kSectionPlanes>& nine_normals();

struct SectionPlane {
    std::array<int, 3> normal{1, 0, 0};
    // Slab-center position along the normal, as a fraction of the cell's
    // projected span (0 = low face, 1 = high face).
    double offset_frac = 0.5;
    double thickness = 2.0;  // Å
};

struct SectionImage {
    // Row-major 64x64. atom holds element codes in [0,1]; bond holds {0,1}.
    std::vector<float> atom = std::vector<float>(kSectionSize * kSectionSize, 0.0f);
    std::vector<float> bond = std::vector<float>(kSectionSize * kSectionSize, 0.0f);
};

struct SectionSet {
    std::array<SectionImage, kSectionPlanes> images;
};

struct Projection {
    struct Point {
        double u = 0.0, v = 0.0;
        Element element = Element::Other;
    };
    struct Segment {
        double u0 = 0.0, v0 = 0.0, u1 = 0.0, v1 = 0.0;
    };
    std::vector<Point> points;
    std::vector<Segment> segments;
};

// Atom-channel encoding; Other maps to 0 and is not drawn.
double atom_code(Element e);

// Atoms whose signed distance to the slab-center plane is <= thickness/2,
// orthogonally projected onto a deterministic in-plane (u, v) basis; bonds
// kept when both (minimum-image) endpoints fall inside the slab.
Projection slice_and_project(const CrystalStructure& s, const SectionPlane& plane,
                             const std::vector<NeighborPair>& bonds);

// Maps a square window of physical width extent (Å), centered on the content
// bounding box, onto 64x64 pixels. Atom pixels max-combine on collision;
// segments are drawn as 1-pixel Bresenham lines.
SectionImage rasterize(const Projection& proj, double extent);

struct SectionConfig {
    std::array<int, 3> supercell{2, 2, 2};
    double thickness = 2.0;       // Å
    double bond_tolerance = 0.40;  // Å, covalent-radius slack
};

// Full per-structure pipeline: supercell, bond inference, one image per
// canonical normal with the slab centered on the atom centroid.
SectionSet featurize_sections(const CrystalStructure& s, const SectionConfig& cfg = {});

// Flat little-endian float32 blob of length 9*2*64*64 (plane, channel, row,
// column) plus a JSON sidecar at blob_path + ".json".
void write_section_set(const SectionSet& set, const std::string& blob_path,
                       const std::string& name);
SectionSet read_section_set(const std::string& blob_path);

}  // namespace cofap
