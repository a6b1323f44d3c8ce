#include "lgcp/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "lgcp/error.hpp"
#include "lgcp/log.hpp"

namespace lgcp {

void MeshParams::validate() const {
  if (!(cutoff > 0.0)) throw ConfigError("mesh.cutoff must be > 0");
  if (!(max_edge[0] > 0.0)) throw ConfigError("mesh.max_edge inner must be > 0");
  if (!(max_edge[1] >= max_edge[0])) throw ConfigError("mesh.max_edge requires inner <= outer");
  if (!(min_angle > 0.0 && min_angle < 34.0)) throw ConfigError("mesh.min_angle must lie in (0, 34)");
  if (!(offset[0] >= 0.0)) throw ConfigError("mesh.offset inner must be >= 0");
  if (!(offset[1] > offset[0])) throw ConfigError("mesh.offset requires outer > inner");
  if (n_initial[0] < 3 || n_initial[1] < 3) throw ConfigError("mesh.n_initial entries must be >= 3");
}

Region Mesh2d::triangle_region(int t) const {
  for (int v : triangles[t])
    if (markers[v] == Region::Inner) return Region::Inner;
  return Region::Outer;
}

double triangle_area(const Mesh2d& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  return 0.5 * orient2d(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
}

double min_triangle_angle(const Point2& a, const Point2& b, const Point2& c) {
  const double la = distance(b, c), lb = distance(a, c), lc = distance(a, b);
  // The smallest angle is opposite the shortest edge.
  double s = la, p = lb, q = lc;
  if (lb < s) { s = lb; p = la; q = lc; }
  if (lc < s) { s = lc; p = la; q = lb; }
  const double cosv = std::clamp((p * p + q * q - s * s) / (2.0 * p * q), -1.0, 1.0);
  return std::acos(cosv) * 180.0 / std::numbers::pi;
}

namespace {

double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& p) {
  const double adx = a.x - p.x, ady = a.y - p.y;
  const double bdx = b.x - p.x, bdy = b.y - p.y;
  const double cdx = c.x - p.x, cdy = c.y - p.y;
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) + clift * (adx * bdy - bdx * ady);
}

Point2 circumcenter(const Point2& a, const Point2& b, const Point2& c) {
  const double bx = b.x - a.x, by = b.y - a.y;
  const double cx = c.x - a.x, cy = c.y - a.y;
  const double d = 2.0 * (bx * cy - by * cx);
  const double b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
  return {a.x + (cy * b2 - by * c2) / d, a.y + (bx * c2 - cx * b2) / d};
}

// Equally spaced nodes along a closed ring, by arc length.
Ring resample_ring(const Ring& ring, int count) {
  const double total = perimeter(ring);
  Ring out;
  out.reserve(count);
  std::size_t seg = 0;
  double seg_start = 0.0;
  double seg_len = distance(ring[0], ring[1 % ring.size()]);
  for (int k = 0; k < count; ++k) {
    const double s = total * k / count;
    while (seg_start + seg_len < s && seg + 1 < ring.size()) {
      seg_start += seg_len;
      ++seg;
      seg_len = distance(ring[seg], ring[(seg + 1) % ring.size()]);
    }
    const Point2& a = ring[seg];
    const Point2& b = ring[(seg + 1) % ring.size()];
    const double t = seg_len > 0.0 ? std::clamp((s - seg_start) / seg_len, 0.0, 1.0) : 0.0;
    out.push_back(a + (b - a) * t);
  }
  return out;
}

int ring_node_count(const Ring& ring, double spacing, int n_initial, double cutoff) {
  const double len = perimeter(ring);
  int n = std::max(n_initial, static_cast<int>(std::ceil(len / spacing)));
  const int cap = static_cast<int>(std::floor(len / cutoff));
  return std::max(3, std::min(n, cap));
}

// Incremental Delaunay triangulation (Bowyer-Watson) with the refinement
// bookkeeping needed for Ruppert's algorithm. Triangle i stores its vertices
// counter-clockwise and nbr[k], the triangle across the edge opposite v[k].
class Triangulator {
 public:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> nbr;
    bool alive = true;
    unsigned generation = 0;
  };

  explicit Triangulator(const BBox& box) {
    const double cx = 0.5 * (box.xmin + box.xmax), cy = 0.5 * (box.ymin + box.ymax);
    const double span = std::max({box.width(), box.height(), 1e-3});
    const double r = 20.0 * span;
    pts_ = {{cx - r * std::sqrt(3.0), cy - r}, {cx + r * std::sqrt(3.0), cy - r}, {cx, cy + 2.0 * r}};
    tris_.push_back({{0, 1, 2}, {-1, -1, -1}, true, 0});
    vtri_ = {0, 0, 0};
  }

  static constexpr int kSuper = 3;  // vertices below this index are the super-triangle
  const std::vector<Point2>& points() const { return pts_; }
  const std::vector<Tri>& tris() const { return tris_; }
  const Point2& pt(int v) const { return pts_[v]; }

  int locate(const Point2& p, int hint) const {
    int t = (hint >= 0 && hint < static_cast<int>(tris_.size()) && tris_[hint].alive) ? hint : vtri_.back();
    if (!tris_[t].alive) t = first_alive();
    const int max_steps = 4 * static_cast<int>(std::sqrt(static_cast<double>(tris_.size()))) + 2000;
    for (int step = 0; step < max_steps; ++step) {
      const Tri& tri = tris_[t];
      int next = -1;
      for (int k0 = 0; k0 < 3; ++k0) {
        const int k = (k0 + step) % 3;
        if (orient2d(pts_[tri.v[(k + 1) % 3]], pts_[tri.v[(k + 2) % 3]], p) < 0.0) {
          next = tri.nbr[k];
          break;
        }
      }
      if (next < 0) return t;
      t = next;
    }
    // Walk failed to settle (degenerate geometry); fall back to a scan.
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(tris_.size()); ++i) {
      if (!tris_[i].alive) continue;
      const Tri& tri = tris_[i];
      double worst = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 3; ++k)
        worst = std::min(worst, orient2d(pts_[tri.v[(k + 1) % 3]], pts_[tri.v[(k + 2) % 3]], p));
      if (worst > best_score) {
        best_score = worst;
        best = i;
      }
    }
    return best;
  }

  // Inserts p; returns the new vertex id, or -1 if p duplicates a vertex.
  // Indices of the created triangles are appended to `created`.
  int insert(const Point2& p, int hint, std::vector<int>* created = nullptr) {
    const int t0 = locate(p, hint);
    for (int v : tris_[t0].v) {
      if (distance(pts_[v], p) <= 1e-12 * std::max(1.0, std::abs(p.x) + std::abs(p.y))) return -1;
    }
    ++stamp_;
    if (mark_.size() < tris_.size()) mark_.resize(tris_.size() + 1024, 0);
    std::vector<int> cavity{t0};
    mark_[t0] = stamp_;
    for (std::size_t i = 0; i < cavity.size(); ++i) {
      const Tri& tri = tris_[cavity[i]];
      for (int k = 0; k < 3; ++k) {
        const int n = tri.nbr[k];
        if (n < 0 || mark_[n] == stamp_) continue;
        const Tri& nt = tris_[n];
        if (incircle(pts_[nt.v[0]], pts_[nt.v[1]], pts_[nt.v[2]], p) > 0.0) {
          mark_[n] = stamp_;
          cavity.push_back(n);
        }
      }
    }

    struct Edge {
      int a, b, outside, owner;
    };
    std::vector<Edge> boundary;
    for (int repair = 0;; ++repair) {
      if (repair > 1000) throw MeshError("cavity repair did not converge");
      boundary.clear();
      int bad_owner = -1, bad_outside = -1;
      for (int t : cavity) {
        const Tri& tri = tris_[t];
        for (int k = 0; k < 3; ++k) {
          const int n = tri.nbr[k];
          if (n >= 0 && mark_[n] == stamp_) continue;
          const int a = tri.v[(k + 1) % 3], b = tri.v[(k + 2) % 3];
          boundary.push_back({a, b, n, t});
          if (bad_owner < 0 && orient2d(pts_[a], pts_[b], p) <= 0.0) {
            bad_owner = t;
            bad_outside = n;
          }
        }
      }
      if (bad_owner < 0) break;
      if (bad_owner == t0) {
        // p sits on an edge of its containing triangle: grow across it.
        if (bad_outside < 0) throw MeshError("point on the outer hull");
        mark_[bad_outside] = stamp_;
        cavity.push_back(bad_outside);
      } else {
        // Inconsistent incircle results: shrink the cavity and keep it
        // connected to t0.
        mark_[bad_owner] = 0;
        std::vector<int> kept{t0};
        ++stamp_;
        std::vector<char> want(tris_.size(), 0);
        for (int t : cavity)
          if (t != bad_owner) want[t] = 1;
        mark_[t0] = stamp_;
        for (std::size_t i = 0; i < kept.size(); ++i) {
          for (int n : tris_[kept[i]].nbr) {
            if (n >= 0 && want[n] && mark_[n] != stamp_) {
              mark_[n] = stamp_;
              kept.push_back(n);
            }
          }
        }
        cavity = std::move(kept);
      }
    }

    // The boundary must be one closed loop around p.
    for (std::size_t i = 0; i < boundary.size(); ++i) {
      int starts = 0, ends = 0;
      for (const auto& e : boundary) {
        starts += e.a == boundary[i].a;
        ends += e.b == boundary[i].a;
      }
      if (starts != 1 || ends != 1) throw MeshError("non-simple insertion cavity");
    }
    {
      std::vector<int> verts;
      for (int t : cavity) verts.insert(verts.end(), tris_[t].v.begin(), tris_[t].v.end());
      std::sort(verts.begin(), verts.end());
      verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
      if (verts.size() != boundary.size()) throw MeshError("insertion cavity encloses a vertex");
    }

    const int pv = static_cast<int>(pts_.size());
    pts_.push_back(p);
    vtri_.push_back(-1);
    for (int t : cavity) {
      tris_[t].alive = false;
      free_.push_back(t);
    }
    std::vector<int> fresh;
    fresh.reserve(boundary.size());
    for (const auto& e : boundary) {
      int id;
      if (!free_.empty()) {
        id = free_.back();
        free_.pop_back();
        const unsigned gen = tris_[id].generation + 1;
        tris_[id] = {{e.a, e.b, pv}, {-1, -1, e.outside}, true, gen};
      } else {
        id = static_cast<int>(tris_.size());
        tris_.push_back({{e.a, e.b, pv}, {-1, -1, e.outside}, true, 0});
      }
      if (e.outside >= 0) {
        Tri& o = tris_[e.outside];
        // Match by shared edge; ids of dead cavity triangles may already be
        // reused by this fan.
        for (int k = 0; k < 3; ++k)
          if (o.v[(k + 1) % 3] == e.b && o.v[(k + 2) % 3] == e.a) o.nbr[k] = id;
      }
      vtri_[e.a] = id;
      vtri_[e.b] = id;
      fresh.push_back(id);
    }
    vtri_[pv] = fresh.front();
    // Link the fan: edge (b, p) of the triangle starting at a is shared with
    // the triangle whose boundary edge starts at b.
    for (std::size_t i = 0; i < boundary.size(); ++i) {
      for (std::size_t j = 0; j < boundary.size(); ++j) {
        if (boundary[j].a == boundary[i].b) {
          tris_[fresh[i]].nbr[0] = fresh[j];  // opposite a: edge (b, p)
          tris_[fresh[j]].nbr[1] = fresh[i];  // opposite b': edge (p, a')
        }
      }
    }
    if (created) created->insert(created->end(), fresh.begin(), fresh.end());
    return pv;
  }

  // Triangle containing the directed or undirected edge (a, b), or -1.
  // `apexes` receives the opposite vertices of both incident triangles.
  bool find_edge(int a, int b, std::array<int, 2>& apexes, int& tri_out) const {
    apexes = {-1, -1};
    tri_out = -1;
    bool found = false;
    const int start = vtri_[a];
    if (start < 0 || !tris_[start].alive) return false;
    // Rotate around a in both directions.
    for (int dir = 0; dir < 2; ++dir) {
      int t = start;
      for (int guard = 0; guard < 1000 && t >= 0; ++guard) {
        const Tri& tri = tris_[t];
        const int i = index_of(tri, a);
        const int j1 = (i + 1) % 3, j2 = (i + 2) % 3;
        if (tri.v[j1] == b) {
          apexes[0] = tri.v[j2];
          tri_out = t;
          found = true;
        } else if (tri.v[j2] == b) {
          apexes[1] = tri.v[j1];
          tri_out = t;
          found = true;
        }
        t = dir == 0 ? tri.nbr[j2] : tri.nbr[j1];
        if (t == start) break;
      }
    }
    return found;
  }

  int num_points() const { return static_cast<int>(pts_.size()); }

 private:
  static int index_of(const Tri& t, int v) {
    for (int k = 0; k < 3; ++k)
      if (t.v[k] == v) return k;
    throw MeshError("triangle-vertex bookkeeping broken");
  }
  int first_alive() const {
    for (int i = 0; i < static_cast<int>(tris_.size()); ++i)
      if (tris_[i].alive) return i;
    throw MeshError("no live triangles");
  }

  std::vector<Point2> pts_;
  std::vector<Tri> tris_;
  std::vector<int> vtri_;
  std::vector<int> free_;
  std::vector<unsigned> mark_;
  unsigned stamp_ = 0;
};

bool ring_contains(const Ring& ring, const Point2& p) { return point_in_ring(p, ring); }

}  // namespace

Mesh2d build_mesh_2d(const Polygon& boundary, const MeshParams& params, const MeshBuildOptions& opts) {
  params.validate();
  if (boundary.exterior.size() < 3 || polygon_area(boundary) <= 0.0) throw GeometryError("boundary polygon");

  const Polygon inner_region = dilate(boundary, params.offset[0]);
  // Chords between resampled nodes cut inside the rounded corners. Grow the
  // offset by the sagitta bound so the node ring encloses the plain dilation.
  const Polygon nominal_outer = dilate(boundary, params.offset[1]);
  const int n_outer = ring_node_count(nominal_outer.exterior, params.max_edge[1], params.n_initial[1], params.cutoff);
  const double spacing = 1.1 * perimeter(nominal_outer.exterior) / n_outer;
  const double r = params.offset[1];
  const double sagitta = r * (1.0 / std::cos(std::numbers::pi / 32.0) - 1.0) + spacing * spacing / (8.0 * r);
  const Polygon outer_region = dilate(boundary, r + std::min(sagitta, 0.5 * spacing));
  const Ring outer_nodes = resample_ring(outer_region.exterior, n_outer);
  const Ring inner_nodes = resample_ring(
      inner_region.exterior,
      ring_node_count(inner_region.exterior, params.max_edge[0], params.n_initial[0], params.cutoff));
  const Polygon domain{outer_nodes, {}};

  Triangulator tri(bbox(domain));
  std::vector<char> inner_flag(Triangulator::kSuper, 0);
  auto add_vertex = [&](int v, const Point2& p) {
    if (v < 0) return;
    if (static_cast<int>(inner_flag.size()) <= v) inner_flag.resize(v + 1, 0);
    inner_flag[v] = point_in_polygon(p, inner_region) ? 1 : 0;
  };

  // Seeds: outer ring first, then inner ring, skipping nodes within cutoff of
  // an accepted seed.
  std::vector<int> outer_ids;
  std::vector<Point2> accepted;
  int hint = 0;
  for (const auto& p : outer_nodes) {
    const int v = tri.insert(p, hint);
    if (v < 0) throw MeshError("duplicate boundary node");
    add_vertex(v, p);
    outer_ids.push_back(v);
    accepted.push_back(p);
    hint = -1;
  }
  for (const auto& p : inner_nodes) {
    bool close = false;
    for (const auto& q : accepted)
      if (distance(p, q) < params.cutoff) close = true;
    if (close) continue;
    const int v = tri.insert(p, -1);
    add_vertex(v, p);
    accepted.push_back(p);
  }

  std::vector<std::array<int, 2>> segments;
  for (std::size_t i = 0; i < outer_ids.size(); ++i)
    segments.push_back({outer_ids[i], outer_ids[(i + 1) % outer_ids.size()]});

  const double outer_area = polygon_area(outer_region);
  const std::size_t cap =
      opts.max_vertices > 0
          ? opts.max_vertices
          : static_cast<std::size_t>(50.0 * outer_area / (0.433 * params.max_edge[0] * params.max_edge[0])) + 20000;

  auto encroached_by = [&](const std::array<int, 2>& s, const Point2& p) {
    const Point2& a = tri.pt(s[0]);
    const Point2& b = tri.pt(s[1]);
    const double dot = (a.x - p.x) * (b.x - p.x) + (a.y - p.y) * (b.y - p.y);
    return dot < -1e-12 * distance(a, b) * distance(a, b);
  };
  auto segment_encroached = [&](const std::array<int, 2>& s) {
    std::array<int, 2> apex;
    int t;
    if (!tri.find_edge(s[0], s[1], apex, t)) return true;
    for (int o : apex) {
      if (o >= Triangulator::kSuper && encroached_by(s, tri.pt(o))) return true;
    }
    return false;
  };
  std::vector<int> created;
  auto split_segment = [&](std::size_t si) {
    const auto s = segments[si];
    const Point2 mid = (tri.pt(s[0]) + tri.pt(s[1])) * 0.5;
    std::array<int, 2> apex;
    int t = -1;
    tri.find_edge(s[0], s[1], apex, t);
    const int v = tri.insert(mid, t, &created);
    if (v < 0) throw MeshError("segment split produced a duplicate vertex");
    add_vertex(v, mid);
    segments[si] = {s[0], v};
    segments.push_back({v, s[1]});
  };
  auto fix_encroachment = [&] {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t i = 0; i < segments.size(); ++i) {
        if (segment_encroached(segments[i])) {
          split_segment(i);
          changed = true;
        }
      }
    }
  };

  const double min_angle = params.min_angle;
  auto in_domain = [&](const Triangulator::Tri& t) {
    for (int v : t.v)
      if (v < Triangulator::kSuper) return false;
    const Point2 c = (tri.pt(t.v[0]) + tri.pt(t.v[1]) + tri.pt(t.v[2])) * (1.0 / 3.0);
    return ring_contains(domain.exterior, c);
  };
  auto size_limit = [&](const Triangulator::Tri& t) {
    for (int v : t.v)
      if (inner_flag[v]) return params.max_edge[0];
    const Point2 c = (tri.pt(t.v[0]) + tri.pt(t.v[1]) + tri.pt(t.v[2])) * (1.0 / 3.0);
    return point_in_polygon(c, inner_region) ? params.max_edge[0] : params.max_edge[1];
  };
  auto is_bad = [&](const Triangulator::Tri& t) {
    const Point2 &a = tri.pt(t.v[0]), &b = tri.pt(t.v[1]), &c = tri.pt(t.v[2]);
    const double longest = std::max({distance(a, b), distance(b, c), distance(a, c)});
    if (longest > size_limit(t)) return true;
    return min_triangle_angle(a, b, c) < min_angle;
  };

  fix_encroachment();

  std::deque<std::pair<int, unsigned>> queue;
  for (int i = 0; i < static_cast<int>(tri.tris().size()); ++i)
    if (tri.tris()[i].alive) queue.emplace_back(i, tri.tris()[i].generation);

  std::size_t iterations = 0;
  while (!queue.empty()) {
    if (static_cast<std::size_t>(tri.num_points()) > cap) {
      std::ostringstream msg;
      msg << "vertex cap " << cap << " exceeded after " << iterations << " iterations";
      throw MeshError(msg.str());
    }
    if (opts.deadline && (++iterations % 256 == 0) && std::chrono::steady_clock::now() > *opts.deadline)
      throw MeshTimeout();
    const auto [ti, gen] = queue.front();
    queue.pop_front();
    const Triangulator::Tri t = tri.tris()[ti];
    if (!t.alive || t.generation != gen) continue;
    if (!in_domain(t) || !is_bad(t)) continue;

    const Point2 cc = circumcenter(tri.pt(t.v[0]), tri.pt(t.v[1]), tri.pt(t.v[2]));
    std::vector<std::size_t> hit;
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (encroached_by(segments[i], cc)) hit.push_back(i);
    if (hit.empty() && !ring_contains(domain.exterior, cc)) {
      // Numerically outside without encroaching: split the nearest segment.
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < segments.size(); ++i) {
        const double d = distance((tri.pt(segments[i][0]) + tri.pt(segments[i][1])) * 0.5, cc);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      hit.push_back(best);
    }
    created.clear();
    if (!hit.empty()) {
      for (std::size_t i : hit) split_segment(i);
      fix_encroachment();
      queue.emplace_back(ti, gen);
    } else {
      const int v = tri.insert(cc, ti, &created);
      if (v < 0) continue;
      add_vertex(v, cc);
    }
    for (int c : created)
      if (tri.tris()[c].alive) queue.emplace_back(c, tri.tris()[c].generation);
  }

  // Extract domain triangles and compact the vertex numbering.
  Mesh2d mesh;
  mesh.params = params;
  std::vector<int> remap(tri.num_points(), -1);
  for (int v = Triangulator::kSuper; v < tri.num_points(); ++v) {
    remap[v] = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(tri.pt(v));
    mesh.markers.push_back(inner_flag[v] ? Region::Inner : Region::Outer);
  }
  for (const auto& t : tri.tris()) {
    if (!t.alive || !in_domain(t)) continue;
    mesh.triangles.push_back({remap[t.v[0]], remap[t.v[1]], remap[t.v[2]]});
  }
  // Drop vertices not referenced by any kept triangle.
  std::vector<int> used(mesh.vertices.size(), 0);
  for (const auto& t : mesh.triangles)
    for (int v : t) used[v] = 1;
  std::vector<int> compact(mesh.vertices.size(), -1);
  Mesh2d out;
  out.params = params;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!used[v]) continue;
    compact[v] = static_cast<int>(out.vertices.size());
    out.vertices.push_back(mesh.vertices[v]);
    out.markers.push_back(mesh.markers[v]);
  }
  for (const auto& t : mesh.triangles) out.triangles.push_back({compact[t[0]], compact[t[1]], compact[t[2]]});
  logger()->debug("mesh: {} vertices, {} triangles", out.num_vertices(), out.num_triangles());
  return out;
}

MeshQuality mesh_quality(const Mesh2d& mesh) {
  MeshQuality q;
  q.num_vertices = mesh.num_vertices();
  q.num_triangles = mesh.num_triangles();
  q.min_angle = 180.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
    q.min_angle = std::min(q.min_angle, min_triangle_angle(a, b, c));
    const double longest = std::max({distance(a, b), distance(b, c), distance(a, c)});
    if (mesh.triangle_region(t) == Region::Inner)
      q.max_inner_edge = std::max(q.max_inner_edge, longest);
    else
      q.max_outer_edge = std::max(q.max_outer_edge, longest);
    q.area += triangle_area(mesh, t);
  }
  // Closest pair via a sort-and-sweep on x.
  std::vector<Point2> pts = mesh.vertices;
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return a.x < b.x; });
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size() && pts[j].x - pts[i].x < best; ++j)
      best = std::min(best, distance(pts[i], pts[j]));
  q.min_vertex_distance = best;
  return q;
}

TriangleLocator::TriangleLocator(const Mesh2d& mesh) : mesh_(&mesh) {
  box_ = bbox(std::span<const Point2>(mesh.vertices));
  const double area = std::max(box_.width() * box_.height(), 1e-12);
  const double per_cell = std::max(1.0, static_cast<double>(mesh.num_triangles()) / 2.0);
  cell_ = std::sqrt(area / per_cell);
  if (!(cell_ > 0.0)) cell_ = 1.0;
  nx_ = std::max(1, static_cast<int>(std::ceil(box_.width() / cell_)));
  ny_ = std::max(1, static_cast<int>(std::ceil(box_.height() / cell_)));
  buckets_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    BBox tb;
    for (int v : mesh.triangles[t]) tb.expand(mesh.vertices[v]);
    const int x0 = std::clamp(static_cast<int>((tb.xmin - box_.xmin) / cell_), 0, nx_ - 1);
    const int x1 = std::clamp(static_cast<int>((tb.xmax - box_.xmin) / cell_), 0, nx_ - 1);
    const int y0 = std::clamp(static_cast<int>((tb.ymin - box_.ymin) / cell_), 0, ny_ - 1);
    const int y1 = std::clamp(static_cast<int>((tb.ymax - box_.ymin) / cell_), 0, ny_ - 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) buckets_[static_cast<std::size_t>(y) * nx_ + x].push_back(t);
  }
}

std::optional<std::pair<int, std::array<double, 3>>> TriangleLocator::locate(const Point2& p) const {
  const double tol = 1e-12;
  if (p.x < box_.xmin - tol || p.x > box_.xmax + tol || p.y < box_.ymin - tol || p.y > box_.ymax + tol)
    return std::nullopt;
  const int x = std::clamp(static_cast<int>((p.x - box_.xmin) / cell_), 0, nx_ - 1);
  const int y = std::clamp(static_cast<int>((p.y - box_.ymin) / cell_), 0, ny_ - 1);
  for (int t : buckets_[static_cast<std::size_t>(y) * nx_ + x]) {
    const auto& tri = mesh_->triangles[t];
    const Point2 &a = mesh_->vertices[tri[0]], &b = mesh_->vertices[tri[1]], &c = mesh_->vertices[tri[2]];
    const double area2 = orient2d(a, b, c);
    std::array<double, 3> w = {orient2d(b, c, p) / area2, orient2d(c, a, p) / area2, orient2d(a, b, p) / area2};
    if (w[0] >= -tol && w[1] >= -tol && w[2] >= -tol) {
      double s = 0.0;
      for (auto& wi : w) {
        wi = std::max(wi, 0.0);
        s += wi;
      }
      for (auto& wi : w) wi /= s;
      return std::make_pair(t, w);
    }
  }
  return std::nullopt;
}

SpMat basis_eval(const TriangleLocator& locator, std::span<const Point2> pts) {
  const Mesh2d& mesh = locator.mesh();
  std::vector<Triplet> trip;
  trip.reserve(pts.size() * 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto hit = locator.locate(pts[i]);
    if (!hit) {
      std::ostringstream msg;
      msg << "point " << i << " (" << pts[i].x << ", " << pts[i].y << ") is not covered by the mesh";
      throw CoverageError(msg.str(), static_cast<long>(i));
    }
    const auto& tri = mesh.triangles[hit->first];
    for (int k = 0; k < 3; ++k)
      if (hit->second[k] != 0.0) trip.emplace_back(static_cast<int>(i), tri[k], hit->second[k]);
  }
  SpMat a(static_cast<Eigen::Index>(pts.size()), mesh.num_vertices());
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

SpMat basis_eval(const Mesh2d& mesh, std::span<const Point2> pts) {
  const TriangleLocator locator(mesh);
  return basis_eval(locator, pts);
}

FemMatrices assemble_fem(const Mesh2d& mesh) {
  const int m = mesh.num_vertices();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
  std::vector<Triplet> gt;
  gt.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 9);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = triangle_area(mesh, t);
    if (!(area > 0.0)) {
      std::ostringstream msg;
      msg << "degenerate triangle " << t;
      throw NumericalError("FEM assembly: " + msg.str());
    }
    std::array<Point2, 3> e;
    for (int k = 0; k < 3; ++k) e[k] = mesh.vertices[tri[(k + 2) % 3]] - mesh.vertices[tri[(k + 1) % 3]];
    for (int i = 0; i < 3; ++i) {
      c[tri[i]] += area / 3.0;
      for (int j = 0; j < 3; ++j) gt.emplace_back(tri[i], tri[j], (e[i].x * e[j].x + e[i].y * e[j].y) / (4.0 * area));
    }
  }
  FemMatrices fem;
  fem.c_diag = c;
  fem.c.resize(m, m);
  std::vector<Triplet> ct;
  for (int i = 0; i < m; ++i) ct.emplace_back(i, i, c[i]);
  fem.c.setFromTriplets(ct.begin(), ct.end());
  fem.g.resize(m, m);
  fem.g.setFromTriplets(gt.begin(), gt.end());
  const SpMat cinv_g = c.cwiseInverse().asDiagonal() * fem.g;
  fem.g2 = (fem.g * cinv_g).pruned();
  fem.g2 = 0.5 * (SpMat(fem.g2.transpose()) + fem.g2);
  return fem;
}

void write_mesh(std::ostream& os, const Mesh2d& mesh) {
  os.precision(17);
  os << "MESH2D v1\n";
  const auto& p = mesh.params;
  os << "PARAMS cutoff " << p.cutoff << " max_edge " << p.max_edge[0] << ' ' << p.max_edge[1] << " min_angle "
     << p.min_angle << " offset " << p.offset[0] << ' ' << p.offset[1] << " n " << p.n_initial[0] << ' '
     << p.n_initial[1] << '\n';
  os << "VERTICES " << mesh.vertices.size() << '\n';
  for (const auto& v : mesh.vertices) os << v.x << ' ' << v.y << '\n';
  os << "TRIANGLES " << mesh.triangles.size() << '\n';
  for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "MARKERS " << mesh.markers.size() << '\n';
  for (auto m : mesh.markers) os << (m == Region::Inner ? 0 : 1) << '\n';
}

Mesh2d read_mesh(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("MESH2D v1", 0) != 0) throw DataError("mesh file: missing 'MESH2D v1' header");
  Mesh2d mesh;
  std::string key;
  while (is >> key) {
    if (key == "PARAMS") {
      std::string k;
      auto& p = mesh.params;
      is >> k >> p.cutoff >> k >> p.max_edge[0] >> p.max_edge[1] >> k >> p.min_angle >> k >> p.offset[0] >>
          p.offset[1] >> k >> p.n_initial[0] >> p.n_initial[1];
    } else if (key == "VERTICES") {
      std::size_t n;
      is >> n;
      mesh.vertices.resize(n);
      for (auto& v : mesh.vertices) is >> v.x >> v.y;
    } else if (key == "TRIANGLES") {
      std::size_t n;
      is >> n;
      mesh.triangles.resize(n);
      for (auto& t : mesh.triangles) is >> t[0] >> t[1] >> t[2];
    } else if (key == "MARKERS") {
      std::size_t n;
      is >> n;
      mesh.markers.resize(n);
      for (auto& m : mesh.markers) {
        int v;
        is >> v;
        m = v == 0 ? Region::Inner : Region::Outer;
      }
    } else {
      throw DataError("mesh file: unknown section " + key);
    }
    if (!is) throw DataError("mesh file: truncated section " + key);
  }
  if (mesh.markers.size() != mesh.vertices.size()) throw DataError("mesh file: marker count mismatch");
  for (const auto& t : mesh.triangles)
    for (int v : t)
      if (v < 0 || v >= mesh.num_vertices()) throw DataError("mesh file: triangle index out of range");
  return mesh;
}

}  // namespace lgcp
