#include "cofap/sections.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cofap/io.hpp"

namespace cofap {

const std::array<std::array<int, 3>, kSectionPlanes>& nine_normals() {
    static const std::array<std::array<int, 3>, kSectionPlanes> kNormals = {{
        {1, 0, 0}, {0, 1, 0}, {0, 0, 1},
        {1, 1, 0}, {0, 1, 1}, {1, 1, 1},
        {-1, 1, 1}, {2, 1, 0}, {0, 2, 1},
    }};
    return kNormals;
}

double atom_code(Element e) {
    switch (e) {
        case Element::C: return 0.25;
        case Element::O: return 0.50;
        case Element::H: return 0.75;
        case Element::N: return 1.00;
        default: return 0.0;
    }
}

namespace {

Vec3 plane_normal_cart(const Lattice& lat, const std::array<int, 3>& normal) {
    Vec3 n = lat.cell[0] * static_cast<double>(normal[0]) +
             lat.cell[1] * static_cast<double>(normal[1]) +
             lat.cell[2] * static_cast<double>(normal[2]);
    if (n.norm() < 1e-12) throw ArgumentError("plane normal must be nonzero");
    return n.normalized();
}

// Projected extent of the cell along n: min/max over the 8 corners.
std::pair<double, double> cell_span(const Lattice& lat, const Vec3& n) {
    double lo = 1e300, hi = -1e300;
    for (int cx = 0; cx <= 1; ++cx)
        for (int cy = 0; cy <= 1; ++cy)
            for (int cz = 0; cz <= 1; ++cz) {
                double t = lat.to_cart({double(cx), double(cy), double(cz)}).dot(n);
                lo = std::min(lo, t);
                hi = std::max(hi, t);
            }
    return {lo, hi};
}

// In-plane basis: u = n x e with e the coordinate axis least parallel to n.
void plane_basis(const Vec3& n, Vec3& u, Vec3& v) {
    Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    int least = 0;
    double best = 2.0;
    for (int k = 0; k < 3; ++k) {
        double a = std::abs(n.dot(axes[k]));
        if (a < best) {
            best = a;
            least = k;
        }
    }
    u = n.cross(axes[least]).normalized();
    v = n.cross(u);
}

}  // namespace

Projection slice_and_project(const CrystalStructure& s, const SectionPlane& plane,
                             const std::vector<NeighborPair>& bonds) {
    if (plane.thickness <= 0) throw ArgumentError("slab thickness must be positive");
    Vec3 n = plane_normal_cart(s.lattice, plane.normal);
    auto [lo, hi] = cell_span(s.lattice, n);
    if (plane.thickness >= hi - lo)
        throw ArgumentError("slab thickness exceeds the cell extent along the normal");

    double t0 = lo + plane.offset_frac * (hi - lo);
    Vec3 center = n * t0;
    Vec3 u, v;
    plane_basis(n, u, v);
    double half = plane.thickness / 2.0;

    Projection out;
    std::vector<char> in_slab(s.sites.size(), 0);
    for (size_t i = 0; i < s.sites.size(); ++i) {
        Vec3 r = s.cart(i);
        if (std::abs(r.dot(n) - t0) <= half) {
            in_slab[i] = 1;
            Vec3 d = r - center;
            out.points.push_back({d.dot(u), d.dot(v), s.sites[i].element});
        }
    }
    for (const auto& b : bonds) {
        // Use the bonded image of j, which may differ from its in-cell copy.
        Vec3 ri = s.cart(b.i);
        Vec3 rj = ri + min_image_delta(s.lattice, s.sites[b.j].frac - s.sites[b.i].frac);
        if (std::abs(ri.dot(n) - t0) <= half && std::abs(rj.dot(n) - t0) <= half) {
            Vec3 di = ri - center, dj = rj - center;
            out.segments.push_back({di.dot(u), di.dot(v), dj.dot(u), dj.dot(v)});
        }
    }
    return out;
}

namespace {

void draw_line(std::vector<float>& img, int x0, int y0, int x1, int y1) {
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        img[static_cast<size_t>(y0) * kSectionSize + x0] = 1.0f;
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

}  // namespace

SectionImage rasterize(const Projection& proj, double extent) {
    if (extent <= 0) throw ArgumentError("raster extent must be positive");
    SectionImage img;
    if (proj.points.empty() && proj.segments.empty()) return img;

    // Window centered on the content bounding box.
    double ulo = 1e300, uhi = -1e300, vlo = 1e300, vhi = -1e300;
    auto grow = [&](double pu, double pv) {
        ulo = std::min(ulo, pu); uhi = std::max(uhi, pu);
        vlo = std::min(vlo, pv); vhi = std::max(vhi, pv);
    };
    for (const auto& p : proj.points) grow(p.u, p.v);
    for (const auto& sgm : proj.segments) {
        grow(sgm.u0, sgm.v0);
        grow(sgm.u1, sgm.v1);
    }
    double cu = (ulo + uhi) / 2.0, cv = (vlo + vhi) / 2.0;

    auto to_px = [&](double coord, double c) {
        int p = static_cast<int>(std::floor((coord - c + extent / 2.0) / extent * kSectionSize));
        return std::clamp(p, 0, kSectionSize - 1);
    };
    for (const auto& p : proj.points) {
        double code = atom_code(p.element);
        if (code <= 0.0) continue;  // tolerated elements are not drawn
        int x = to_px(p.u, cu), y = to_px(p.v, cv);
        size_t idx = static_cast<size_t>(y) * kSectionSize + x;
        img.atom[idx] = std::max(img.atom[idx], static_cast<float>(code));
    }
    for (const auto& sgm : proj.segments)
        draw_line(img.bond, to_px(sgm.u0, cu), to_px(sgm.v0, cv),
                  to_px(sgm.u1, cu), to_px(sgm.v1, cv));
    return img;
}

SectionSet featurize_sections(const CrystalStructure& s, const SectionConfig& cfg) {
    CrystalStructure sc = make_supercell(s, cfg.supercell[0], cfg.supercell[1], cfg.supercell[2]);
    auto bonds = infer_bonds(sc, cfg.bond_tolerance);

    Vec3 centroid;
    for (size_t i = 0; i < sc.sites.size(); ++i) centroid = centroid + sc.cart(i);
    centroid = centroid * (1.0 / static_cast<double>(sc.sites.size()));

    SectionSet set;
    const auto& normals = nine_normals();
    for (int k = 0; k < kSectionPlanes; ++k) {
        Vec3 n = plane_normal_cart(sc.lattice, normals[k]);
        auto [lo, hi] = cell_span(sc.lattice, n);
        SectionPlane plane;
        plane.normal = normals[k];
        plane.offset_frac = (centroid.dot(n) - lo) / (hi - lo);
        plane.thickness = cfg.thickness;
        Projection proj = slice_and_project(sc, plane, bonds);

        double span = 0.0;
        double ulo = 1e300, uhi = -1e300, vlo = 1e300, vhi = -1e300;
        auto grow = [&](double pu, double pv) {
            ulo = std::min(ulo, pu); uhi = std::max(uhi, pu);
            vlo = std::min(vlo, pv); vhi = std::max(vhi, pv);
        };
        for (const auto& p : proj.points) grow(p.u, p.v);
        for (const auto& sgm : proj.segments) {
            grow(sgm.u0, sgm.v0);
            grow(sgm.u1, sgm.v1);
        }
        if (uhi >= ulo) span = std::max(uhi - ulo, vhi - vlo);
        if (proj.points.empty() && proj.segments.empty()) continue;  // stays zero
        // A hair of margin keeps the max-coordinate content inside the window.
        set.images[k] = rasterize(proj, std::max(span, 1.0) * (1.0 + 1e-9));
    }
    return set;
}

void write_section_set(const SectionSet& set, const std::string& blob_path,
                       const std::string& name) {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(kSectionPlanes) * 2 * kSectionSize * kSectionSize);
    for (const auto& img : set.images) {
        for (float x : img.atom) flat.push_back(x);
        for (float x : img.bond) flat.push_back(x);
    }
    write_f32_blob(blob_path, flat);

    nlohmann::ordered_json sidecar;
    sidecar["name"] = name;
    sidecar["shape"] = {kSectionPlanes, 2, kSectionSize, kSectionSize};
    sidecar["channels"] = {"atom", "bond"};
    sidecar["element_codes"] = {{"C", 0.25}, {"O", 0.50}, {"H", 0.75}, {"N", 1.00}};
    sidecar["dtype"] = "float32le";
    atomic_write_file(blob_path + ".json", sidecar.dump(2) + "\n");
}

SectionSet read_section_set(const std::string& blob_path) {
    auto flat = read_f32_blob(blob_path);
    const size_t per_channel = static_cast<size_t>(kSectionSize) * kSectionSize;
    if (flat.size() != static_cast<size_t>(kSectionPlanes) * 2 * per_channel)
        throw ParseError("section blob has wrong length: " + blob_path);
    SectionSet set;
    size_t off = 0;
    for (auto& img : set.images) {
        for (size_t i = 0; i < per_channel; ++i) img.atom[i] = static_cast<float>(flat[off + i]);
        off += per_channel;
        for (size_t i = 0; i < per_channel; ++i) img.bond[i] = static_cast<float>(flat[off + i]);
        off += per_channel;
    }
    return set;
}

}  // namespace cofap
