// Coarse-grained bipartite linker/linkage representation: aromatic-ring
// exclusion, distance-based linkage-motif detection, linker fragmentation,
// and complete bipartite assembly with chemical node features.
#pragma once

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cofap/structure.hpp"

namespace cofap {

enum class LinkageMotif { CC, Imine, Amide, Other };

const char* motif_name(LinkageMotif m);

struct LinkageSite {
    LinkageMotif motif = LinkageMotif::Other;
    std::vector<int> atom_indices;  // ascending; CC: 2 atoms, imine: 2, amide: 3
    Vec3 position;                  // Cartesian centroid (Å)
    // Bond removed when fragmenting the structure into linkers (the bond that
    // bridges the two building blocks).
    std::pair<int, int> scissile = {-1, -1};
};

// All geometric windows are covalent-geometry defaults, exposed so a dataset
// with unusual relaxation can widen them.
struct SupragraphConfig {
    double ring_bond_min = 1.30;     // Å, aromatic C/N cycle bonds
    double ring_bond_max = 1.45;
    double ring_coplanar_tol = 0.15;  // Å, max deviation from best-fit plane
    double imine_min = 1.20;          // Å, C=N
    double imine_max = 1.35;
    double amide_cn_min = 1.28;  // Å, N-C(=O)
    double amide_cn_max = 1.40;
    double amide_co_min = 1.18;  // Å, C=O
    double amide_co_max = 1.28;
    double cc_min = 1.40;  // Å, sp3/sp2 C-C bridge between ring systems
    double cc_max = 1.58;
};

struct SupragraphNode {
    std::string label;
    std::vector<double> features;
};

constexpr int kLinkageFeatureDim = 8;   // one-hot motif (4) + C/H/O/N counts
constexpr int kLinkerFeatureDim = 22;   // C/H/O/N counts, atom count, ring count, id one-hot (16)

struct Supragraph {
    std::string name;
    std::vector<SupragraphNode> linkage_nodes;  // feature width kLinkageFeatureDim
    std::vector<SupragraphNode> linker_nodes;   // feature width kLinkerFeatureDim

    // Edges are implicit: every (linkage, linker) pair is connected.
    size_t edge_count() const { return linkage_nodes.size() * linker_nodes.size(); }
};

// Simple 5/6-cycles of C/N atoms whose cycle bonds all lie in the ring-bond
// window and whose atoms are coplanar within the tolerance; ring carbons must
// additionally have exactly three bonded neighbors. Each ring is reported as
// an ascending atom-index list, deduplicated.
std::vector<std::vector<int>> aromatic_rings(const CrystalStructure& s,
                                             const SupragraphConfig& cfg = {});

// Union of the atoms of all aromatic rings.
std::set<int> detect_aromatic_rings(const CrystalStructure& s,
                                    const SupragraphConfig& cfg = {});

// Distance-based motif scan over non-ring atoms. Overlapping candidates
// resolve by priority amide > imine > CC; sites are deduplicated by atom set
// and every returned site is disjoint from the excluded ring atoms.
std::vector<LinkageSite> detect_linkages(const CrystalStructure& s,
                                         const std::set<int>& excluded,
                                         const SupragraphConfig& cfg = {});

// Assembles the complete bipartite graph. Linker nodes are the connected
// components of the bonded graph after cutting every site's scissile bond,
// collapsed by canonical formula. linker_ids (typically parsed from the
// structure name) are assigned to the distinct linker types in order of first
// appearance; when the count does not match, ids fall back to a formula hash.
Supragraph build_supragraph(const CrystalStructure& s, const std::vector<LinkageSite>& sites,
                            const std::vector<int>& linker_ids,
                            const SupragraphConfig& cfg = {});

// Full chain: ring exclusion, linkage detection, linker ids from the
// structure name ("linker<id>" occurrences), bipartite assembly.
Supragraph featurize_supragraph(const CrystalStructure& s, const SupragraphConfig& cfg = {});

nlohmann::json supragraph_to_json(const Supragraph& g);
Supragraph supragraph_from_json(const nlohmann::json& j);

}  // namespace cofap
