#include "cofap/supragraph.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <regex>

#include <Eigen/Eigenvalues>

#include "cofap/io.hpp"

namespace cofap {

namespace {

struct BondGraph {
    std::vector<std::vector<int>> adj;
    std::map<std::pair<int, int>, double> length;  // key (min, max)

    double len(int i, int j) const { return length.at({std::min(i, j), std::max(i, j)}); }
    bool bonded(int i, int j) const { return length.count({std::min(i, j), std::max(i, j)}) > 0; }
};

BondGraph make_bond_graph(const CrystalStructure& s) {
    BondGraph g;
    g.adj.resize(s.sites.size());
    for (const auto& b : infer_bonds(s)) {
        g.adj[b.i].push_back(static_cast<int>(b.j));
        g.adj[b.j].push_back(static_cast<int>(b.i));
        g.length[{static_cast<int>(b.i), static_cast<int>(b.j)}] = b.dist;
    }
    for (auto& nbrs : g.adj) std::sort(nbrs.begin(), nbrs.end());
    return g;
}

// Positions of a connected atom walk, unwrapped so consecutive atoms use the
// nearest periodic image of their predecessor.
std::vector<Vec3> unwrap_walk(const CrystalStructure& s, const std::vector<int>& atoms) {
    std::vector<Vec3> pos;
    pos.push_back(s.cart(static_cast<size_t>(atoms[0])));
    for (size_t k = 1; k < atoms.size(); ++k) {
        Vec3 dfrac = s.sites[static_cast<size_t>(atoms[k])].frac -
                     s.sites[static_cast<size_t>(atoms[k - 1])].frac;
        pos.push_back(pos.back() + min_image_delta(s.lattice, dfrac));
    }
    return pos;
}

bool coplanar(const std::vector<Vec3>& pts, double tol) {
    Vec3 c{0, 0, 0};
    for (const auto& p : pts) c = c + p;
    c = c * (1.0 / static_cast<double>(pts.size()));
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) {
        Eigen::Vector3d d(p.x - c.x, p.y - c.y, p.z - c.z);
        cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Eigen::Vector3d n = eig.eigenvectors().col(0);  // smallest spread direction
    for (const auto& p : pts) {
        double dev = std::abs(n.x() * (p.x - c.x) + n.y() * (p.y - c.y) + n.z() * (p.z - c.z));
        if (dev > tol) return false;
    }
    return true;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

uint64_t fnv1a(std::string_view text) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Vec3 site_centroid(const CrystalStructure& s, const std::vector<int>& atoms) {
    Vec3 base = s.cart(static_cast<size_t>(atoms[0]));
    Vec3 sum = base;
    for (size_t k = 1; k < atoms.size(); ++k) {
        Vec3 dfrac = s.sites[static_cast<size_t>(atoms[k])].frac -
                     s.sites[static_cast<size_t>(atoms[0])].frac;
        sum = sum + base + min_image_delta(s.lattice, dfrac);
    }
    return sum * (1.0 / static_cast<double>(atoms.size()));
}

}  // namespace

const char* motif_name(LinkageMotif m) {
    switch (m) {
        case LinkageMotif::CC: return "CC";
        case LinkageMotif::Imine: return "imine";
        case LinkageMotif::Amide: return "amide";
        case LinkageMotif::Other: return "other";
    }
    return "other";
}

std::vector<std::vector<int>> aromatic_rings(const CrystalStructure& s,
                                             const SupragraphConfig& cfg) {
    const int n = static_cast<int>(s.sites.size());
    BondGraph g = make_bond_graph(s);

    // Cycle search restricted to C/N atoms joined by window-length bonds.
    std::vector<std::vector<int>> ring_adj(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Element ei = s.sites[static_cast<size_t>(i)].element;
        if (ei != Element::C && ei != Element::N) continue;
        for (int j : g.adj[static_cast<size_t>(i)]) {
            Element ej = s.sites[static_cast<size_t>(j)].element;
            if (ej != Element::C && ej != Element::N) continue;
            double d = g.len(i, j);
            if (d >= cfg.ring_bond_min && d <= cfg.ring_bond_max)
                ring_adj[static_cast<size_t>(i)].push_back(j);
        }
    }

    std::set<std::vector<int>> seen;
    std::vector<std::vector<int>> rings;
    std::vector<int> path;
    std::vector<char> in_path(static_cast<size_t>(n), 0);

    auto accept = [&](const std::vector<int>& cycle) {
        std::vector<int> key = cycle;
        std::sort(key.begin(), key.end());
        if (!seen.insert(key).second) return;
        // Criterion (a): ring carbons carry exactly three bonded neighbors.
        for (int a : cycle)
            if (s.sites[static_cast<size_t>(a)].element == Element::C &&
                g.adj[static_cast<size_t>(a)].size() != 3)
                return;
        // Criterion (b): aromatic geometry — window-length bonds (enforced by
        // the restricted adjacency) and coplanarity.
        if (!coplanar(unwrap_walk(s, cycle), cfg.ring_coplanar_tol)) return;
        rings.push_back(key);
    };

    // Each cycle is enumerated once: the start is its smallest index and the
    // traversal direction is fixed by path[1] < path.back().
    auto dfs = [&](auto&& self, int start, int current) -> void {
        for (int nb : ring_adj[static_cast<size_t>(current)]) {
            if (nb == start && path.size() >= 5) {
                if (path[1] < path.back()) accept(path);
            } else if (nb > start && !in_path[static_cast<size_t>(nb)] && path.size() < 6) {
                path.push_back(nb);
                in_path[static_cast<size_t>(nb)] = 1;
                self(self, start, nb);
                in_path[static_cast<size_t>(nb)] = 0;
                path.pop_back();
            }
        }
    };
    for (int start = 0; start < n; ++start) {
        if (ring_adj[static_cast<size_t>(start)].empty()) continue;
        path = {start};
        in_path[static_cast<size_t>(start)] = 1;
        dfs(dfs, start, start);
        in_path[static_cast<size_t>(start)] = 0;
    }
    std::sort(rings.begin(), rings.end());
    return rings;
}

std::set<int> detect_aromatic_rings(const CrystalStructure& s, const SupragraphConfig& cfg) {
    std::set<int> atoms;
    for (const auto& ring : aromatic_rings(s, cfg)) atoms.insert(ring.begin(), ring.end());
    return atoms;
}

std::vector<LinkageSite> detect_linkages(const CrystalStructure& s, const std::set<int>& excluded,
                                         const SupragraphConfig& cfg) {
    const int n = static_cast<int>(s.sites.size());
    BondGraph g = make_bond_graph(s);
    auto elem = [&](int i) { return s.sites[static_cast<size_t>(i)].element; };
    auto is_ring = [&](int i) { return excluded.count(i) > 0; };

    // Ring systems: fused rings collapse into one component.
    UnionFind systems(static_cast<size_t>(n));
    for (int i : excluded)
        for (int j : g.adj[static_cast<size_t>(i)])
            if (is_ring(j)) systems.unite(i, j);

    std::vector<char> used(static_cast<size_t>(n), 0);
    std::set<std::vector<int>> taken;
    std::vector<LinkageSite> sites;

    auto claim = [&](LinkageMotif motif, std::vector<int> atoms, std::pair<int, int> scissile) {
        std::sort(atoms.begin(), atoms.end());
        for (int a : atoms)
            if (used[static_cast<size_t>(a)]) return;
        if (!taken.insert(atoms).second) return;
        for (int a : atoms) used[static_cast<size_t>(a)] = 1;
        LinkageSite site;
        site.motif = motif;
        site.position = site_centroid(s, atoms);
        site.scissile = {std::min(scissile.first, scissile.second),
                         std::max(scissile.first, scissile.second)};
        site.atom_indices = std::move(atoms);
        sites.push_back(std::move(site));
    };

    // Candidate bonds in deterministic (i, j) order; priority amide > imine > CC.
    std::vector<std::pair<int, int>> bonds;
    for (const auto& [key, d] : g.length) bonds.push_back(key);

    for (const auto& [a, b] : bonds) {  // amide: N-C(=O)
        int c, nn;
        if (elem(a) == Element::C && elem(b) == Element::N) c = a, nn = b;
        else if (elem(a) == Element::N && elem(b) == Element::C) c = b, nn = a;
        else continue;
        if (is_ring(c) || is_ring(nn)) continue;
        double d_cn = g.len(c, nn);
        if (d_cn < cfg.amide_cn_min || d_cn > cfg.amide_cn_max) continue;
        for (int o : g.adj[static_cast<size_t>(c)]) {
            if (elem(o) != Element::O || is_ring(o)) continue;
            double d_co = g.len(c, o);
            if (d_co < cfg.amide_co_min || d_co > cfg.amide_co_max) continue;
            claim(LinkageMotif::Amide, {nn, c, o}, {c, nn});
            break;
        }
    }

    for (const auto& [a, b] : bonds) {  // imine: C=N with the C on a ring carbon
        int c, nn;
        if (elem(a) == Element::C && elem(b) == Element::N) c = a, nn = b;
        else if (elem(a) == Element::N && elem(b) == Element::C) c = b, nn = a;
        else continue;
        if (is_ring(c) || is_ring(nn)) continue;
        double d_cn = g.len(c, nn);
        if (d_cn < cfg.imine_min || d_cn > cfg.imine_max) continue;
        bool anchored = false;
        for (int r : g.adj[static_cast<size_t>(c)])
            if (is_ring(r) && elem(r) == Element::C) anchored = true;
        if (!anchored) continue;
        claim(LinkageMotif::Imine, {c, nn}, {c, nn});
    }

    for (const auto& [a, b] : bonds) {  // CC bridge between two distinct ring systems
        if (elem(a) != Element::C || elem(b) != Element::C) continue;
        if (is_ring(a) || is_ring(b)) continue;
        double d = g.len(a, b);
        if (d < cfg.cc_min || d > cfg.cc_max) continue;
        bool distinct = false;
        for (int ra : g.adj[static_cast<size_t>(a)]) {
            if (!is_ring(ra)) continue;
            for (int rb : g.adj[static_cast<size_t>(b)]) {
                if (!is_ring(rb)) continue;
                if (systems.find(ra) != systems.find(rb)) distinct = true;
            }
        }
        if (!distinct) continue;
        claim(LinkageMotif::CC, {a, b}, {a, b});
    }
    return sites;
}

Supragraph build_supragraph(const CrystalStructure& s, const std::vector<LinkageSite>& sites,
                            const std::vector<int>& linker_ids, const SupragraphConfig& cfg) {
    if (sites.empty())
        throw ArgumentError("supragraph for '" + s.name +
                            "': no linkage nodes (no linkage motifs were detected)");
    if (s.sites.empty())
        throw ArgumentError("supragraph for '" + s.name +
                            "': no linker nodes (structure has no atoms)");

    Supragraph graph;
    graph.name = s.name;

    for (const auto& site : sites) {
        SupragraphNode node;
        node.label = motif_name(site.motif);
        node.features.assign(kLinkageFeatureDim, 0.0);
        node.features[static_cast<size_t>(site.motif)] = 1.0;
        for (int a : site.atom_indices) {
            Element e = s.sites[static_cast<size_t>(a)].element;
            if (e != Element::Other) node.features[4 + static_cast<size_t>(e)] += 1.0;
        }
        graph.linkage_nodes.push_back(std::move(node));
    }

    // Fragment: cut every scissile bond, then take connected components.
    std::set<std::pair<int, int>> cut;
    for (const auto& site : sites)
        if (site.scissile.first >= 0) cut.insert(site.scissile);
    UnionFind uf(s.sites.size());
    for (const auto& bond : infer_bonds(s)) {
        std::pair<int, int> key{static_cast<int>(bond.i), static_cast<int>(bond.j)};
        if (!cut.count(key)) uf.unite(key.first, key.second);
    }
    std::map<int, std::vector<int>> by_root;
    for (size_t i = 0; i < s.sites.size(); ++i)
        by_root[uf.find(static_cast<int>(i))].push_back(static_cast<int>(i));
    std::vector<std::vector<int>> components;  // ordered by each fragment's first atom
    for (auto& [root, atoms] : by_root) components.push_back(std::move(atoms));
    std::sort(components.begin(), components.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });

    auto rings = aromatic_rings(s, cfg);

    struct LinkerType {
        std::string formula;
        std::array<double, 4> counts{};  // C, H, O, N
        double atom_count = 0;
        double ring_count = 0;
    };
    std::vector<LinkerType> types;
    std::map<std::string, size_t> type_of;
    for (const auto& atoms : components) {
        LinkerType t;
        for (int a : atoms) {
            Element e = s.sites[static_cast<size_t>(a)].element;
            if (e != Element::Other) t.counts[static_cast<size_t>(e)] += 1.0;
        }
        t.atom_count = static_cast<double>(atoms.size());
        std::set<int> in_comp(atoms.begin(), atoms.end());
        for (const auto& ring : rings)
            if (std::all_of(ring.begin(), ring.end(),
                            [&](int a) { return in_comp.count(a) > 0; }))
                t.ring_count += 1.0;
        const char* sym[4] = {"C", "H", "O", "N"};
        for (int e = 0; e < 4; ++e)
            if (t.counts[static_cast<size_t>(e)] > 0)
                t.formula += sym[e] + std::to_string(static_cast<long>(t.counts[static_cast<size_t>(e)]));
        if (t.formula.empty()) t.formula = "X" + std::to_string(atoms.size());
        if (!type_of.count(t.formula)) {
            type_of[t.formula] = types.size();
            types.push_back(std::move(t));
        }
    }

    bool ids_match = linker_ids.size() == types.size();
    for (size_t k = 0; k < types.size(); ++k) {
        const auto& t = types[k];
        long id = ids_match ? linker_ids[k]
                            : static_cast<long>(fnv1a(t.formula) % 1000000ULL);
        SupragraphNode node;
        node.label = ids_match ? "linker" + std::to_string(id) : t.formula;
        node.features.assign(kLinkerFeatureDim, 0.0);
        for (int e = 0; e < 4; ++e) node.features[static_cast<size_t>(e)] = t.counts[static_cast<size_t>(e)];
        node.features[4] = t.atom_count;
        node.features[5] = t.ring_count;
        node.features[6 + static_cast<size_t>(id % 16)] = 1.0;
        graph.linker_nodes.push_back(std::move(node));
    }
    return graph;
}

Supragraph featurize_supragraph(const CrystalStructure& s, const SupragraphConfig& cfg) {
    auto excluded = detect_aromatic_rings(s, cfg);
    auto sites = detect_linkages(s, excluded, cfg);
    std::vector<int> ids;
    static const std::regex kLinkerId("linker(\\d+)");
    for (auto it = std::sregex_iterator(s.name.begin(), s.name.end(), kLinkerId);
         it != std::sregex_iterator(); ++it)
        ids.push_back(std::stoi((*it)[1].str()));
    return build_supragraph(s, sites, ids, cfg);
}

nlohmann::json supragraph_to_json(const Supragraph& g) {
    nlohmann::json j;
    j["name"] = g.name;
    j["complete_bipartite"] = true;
    auto dump_nodes = [](const std::vector<SupragraphNode>& nodes) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& n : nodes) arr.push_back({{"label", n.label}, {"features", n.features}});
        return arr;
    };
    j["linkage_nodes"] = dump_nodes(g.linkage_nodes);
    j["linker_nodes"] = dump_nodes(g.linker_nodes);
    return j;
}

Supragraph supragraph_from_json(const nlohmann::json& j) {
    Supragraph g;
    g.name = j.at("name").get<std::string>();
    auto load_nodes = [](const nlohmann::json& arr) {
        std::vector<SupragraphNode> nodes;
        for (const auto& item : arr) {
            SupragraphNode n;
            n.label = item.at("label").get<std::string>();
            n.features = item.at("features").get<std::vector<double>>();
            nodes.push_back(std::move(n));
        }
        return nodes;
    };
    g.linkage_nodes = load_nodes(j.at("linkage_nodes"));
    g.linker_nodes = load_nodes(j.at("linker_nodes"));
    return g;
}

}  // namespace cofap
