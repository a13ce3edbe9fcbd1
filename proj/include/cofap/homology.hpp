// Vietoris-Rips persistent homology (H0/H1) of 3D point clouds and the
// 18-dimensional birth/death histogram fingerprint.
#pragma once

#include <array>
#include <vector>

#include "cofap/structure.hpp"

namespace cofap {

struct PersistencePair {
    int dim = 0;          // 0 or 1
    double birth = 0.0;   // Å
    double death = 0.0;   // Å; essential classes carry death = max_edge
};

// H0: births 0, deaths = minimum-spanning-tree merge lengths, one essential
// class per final connected component. H1: boundary-matrix reduction over Z/2
// on simplices up to dimension 2 (filtration value = max pairwise distance),
// zero-persistence pairs included, unkilled cycles reported as essential.
std::vector<PersistencePair> rips_persistence(const std::vector<Vec3>& points,
                                              double max_edge = 10.0);

// Keeps exactly the pairs with death - birth > min_persistence.
std::vector<PersistencePair> filter_pairs(const std::vector<PersistencePair>& pairs,
                                          double min_persistence);

// 2 dims x 3x3 (birth, death) histogram with uniform bins over [0,5]^2;
// out-of-range values clamp into the boundary bin. H0 occupies indices 0-8,
// H1 indices 9-17.
using TopoFingerprint = std::array<double, 18>;
TopoFingerprint vectorize(const std::vector<PersistencePair>& pairs);

struct HomologyConfig {
    double max_edge = 10.0;        // Å
    double min_persistence = 0.01; // Å
    // Padding radius for periodic images around the unit cell; 0 keeps the
    // bare cell (the default filtration population).
    double image_padding = 0.0;
};

// Point cloud of one structure (unit-cell Cartesian coordinates, optionally
// padded with nearby periodic images), filtered and vectorized.
TopoFingerprint topo_fingerprint(const CrystalStructure& s, const HomologyConfig& cfg = {});

}  // namespace cofap
