#include "cofap/homology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cofap/io.hpp"

namespace cofap {
namespace {

struct Edge {
    double filt;
    int i, j;  // i < j
    bool operator<(const Edge& o) const {
        if (filt != o.filt) return filt < o.filt;
        if (i != o.i) return i < o.i;
        return j < o.j;
    }
};

struct Triangle {
    double filt;
    int i, j, k;  // i < j < k
    bool operator<(const Triangle& o) const {
        if (filt != o.filt) return filt < o.filt;
        if (i != o.i) return i < o.i;
        if (j != o.j) return j < o.j;
        return k < o.k;
    }
};

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool merge(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

// Z/2 column addition on ascending index lists (pivot = back element).
std::vector<int> symdiff(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    out.reserve(a.size() + b.size());
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(),
                                  std::back_inserter(out));
    return out;
}

}  // namespace

std::vector<PersistencePair> rips_persistence(const std::vector<Vec3>& points,
                                              double max_edge) {
    if (points.empty()) throw ArgumentError("rips_persistence: empty point cloud");
    if (max_edge <= 0) throw ArgumentError("rips_persistence: max_edge must be positive");
    const int n = static_cast<int>(points.size());

    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d = (points[j] - points[i]).norm();
            if (d <= max_edge) edges.push_back({d, i, j});
        }
    std::sort(edges.begin(), edges.end());

    std::vector<PersistencePair> pairs;

    // H0: Kruskal over the sorted edges. Merging edges are the H0 deaths;
    // non-merging edges create 1-cycles and are the H1 birth candidates.
    UnionFind uf(n);
    std::vector<char> creates_cycle(edges.size(), 0);
    for (size_t e = 0; e < edges.size(); ++e) {
        if (uf.merge(edges[e].i, edges[e].j)) pairs.push_back({0, 0.0, edges[e].filt});
        else creates_cycle[e] = 1;
    }
    int components = 0;
    for (int i = 0; i < n; ++i) components += (uf.find(i) == i);
    for (int c = 0; c < components; ++c) pairs.push_back({0, 0.0, max_edge});

    // H1: reduce triangle columns over the edge-indexed boundary. Only the
    // dimension-2 columns need reducing; the pivot of a reduced column is
    // always a cycle-creating edge and yields the pair (edge filt, tri filt).
    std::vector<int> edge_id(edges.size());
    std::vector<Triangle> tris;
    {
        // position lookup for (i, j) -> sorted edge index
        std::vector<std::vector<std::pair<int, int>>> by_i(n);
        for (size_t e = 0; e < edges.size(); ++e)
            by_i[edges[e].i].push_back({edges[e].j, static_cast<int>(e)});
        auto lookup = [&](int i, int j) {
            for (const auto& [jj, id] : by_i[i])
                if (jj == j) return id;
            return -1;
        };
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                int eij = lookup(i, j);
                if (eij < 0) continue;
                for (int k = j + 1; k < n; ++k) {
                    int eik = lookup(i, k), ejk = lookup(j, k);
                    if (eik < 0 || ejk < 0) continue;
                    double f = std::max({edges[eij].filt, edges[eik].filt, edges[ejk].filt});
                    tris.push_back({f, i, j, k});
                }
            }
        std::sort(tris.begin(), tris.end());
        // edge ids are just positions in the sorted edge order
        std::iota(edge_id.begin(), edge_id.end(), 0);
    }

    std::vector<int> pivot_owner(edges.size(), -1);  // edge id -> triangle index
    std::vector<std::vector<int>> columns(tris.size());
    {
        std::vector<std::vector<std::pair<int, int>>> by_i(n);
        for (size_t e = 0; e < edges.size(); ++e)
            by_i[edges[e].i].push_back({edges[e].j, static_cast<int>(e)});
        auto lookup = [&](int i, int j) {
            for (const auto& [jj, id] : by_i[i])
                if (jj == j) return id;
            return -1;
        };
        for (size_t t = 0; t < tris.size(); ++t) {
            std::vector<int> col = {lookup(tris[t].i, tris[t].j), lookup(tris[t].i, tris[t].k),
                                    lookup(tris[t].j, tris[t].k)};
            std::sort(col.begin(), col.end());
            while (!col.empty() && pivot_owner[col.back()] >= 0)
                col = symdiff(col, columns[pivot_owner[col.back()]]);
            if (col.empty()) continue;  // creator of a 2-cycle; out of scope
            int low = col.back();
            pivot_owner[low] = static_cast<int>(t);
            columns[t] = std::move(col);
            pairs.push_back({1, edges[low].filt, tris[t].filt});
        }
    }

    // Cycle edges never killed by a triangle are essential H1 classes.
    for (size_t e = 0; e < edges.size(); ++e)
        if (creates_cycle[e] && pivot_owner[e] < 0)
            pairs.push_back({1, edges[e].filt, max_edge});

    std::sort(pairs.begin(), pairs.end(), [](const PersistencePair& a, const PersistencePair& b) {
        if (a.dim != b.dim) return a.dim < b.dim;
        if (a.birth != b.birth) return a.birth < b.birth;
        return a.death < b.death;
    });
    return pairs;
}

std::vector<PersistencePair> filter_pairs(const std::vector<PersistencePair>& pairs,
                                          double min_persistence) {
    if (min_persistence < 0) throw ArgumentError("min_persistence must be non-negative");
    std::vector<PersistencePair> out;
    for (const auto& p : pairs)
        if (p.death - p.birth > min_persistence) out.push_back(p);
    return out;
}

TopoFingerprint vectorize(const std::vector<PersistencePair>& pairs) {
    TopoFingerprint fp{};
    auto bin = [](double v) {
        int b = static_cast<int>(std::floor(v / (5.0 / 3.0)));
        return std::clamp(b, 0, 2);
    };
    for (const auto& p : pairs) {
        int block = (p.dim == 0) ? 0 : 9;
        fp[block + 3 * bin(p.birth) + bin(p.death)] += 1.0;
    }
    return fp;
}

TopoFingerprint topo_fingerprint(const CrystalStructure& s, const HomologyConfig& cfg) {
    std::vector<Vec3> points;
    for (size_t i = 0; i < s.sites.size(); ++i) points.push_back(s.cart(i));

    if (cfg.image_padding > 0.0) {
        // Image copies within the padding margin of the cell, measured as a
        // fractional margin along each axis.
        double vol = std::abs(s.lattice.volume());
        double margin[3];
        for (int k = 0; k < 3; ++k) {
            const Vec3& u = s.lattice.cell[(k + 1) % 3];
            const Vec3& v = s.lattice.cell[(k + 2) % 3];
            margin[k] = cfg.image_padding / (vol / u.cross(v).norm());
        }
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    for (const auto& site : s.sites) {
                        Vec3 f = {site.frac.x + dx, site.frac.y + dy, site.frac.z + dz};
                        if (f.x < -margin[0] || f.x >= 1.0 + margin[0]) continue;
                        if (f.y < -margin[1] || f.y >= 1.0 + margin[1]) continue;
                        if (f.z < -margin[2] || f.z >= 1.0 + margin[2]) continue;
                        points.push_back(s.lattice.to_cart(f));
                    }
                }
    }
    return vectorize(filter_pairs(rips_persistence(points, cfg.max_edge), cfg.min_persistence));
}

}  // namespace cofap
