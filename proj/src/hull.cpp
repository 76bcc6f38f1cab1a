#include "cellvis/hull.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "cellvis/errors.hpp"

namespace cellvis {
namespace {

struct Face {
  std::array<std::uint32_t, 3> v{};
  std::array<int, 3> adj{-1, -1, -1};  // adj[k] lies across edge v[k] -> v[(k+1)%3]
  Vec3 normal;
  double offset = 0.0;
  std::vector<std::uint32_t> outside;
  bool alive = true;
  int visitStamp = -1;

  double distance(const Vec3& p) const { return dot(normal, p) - offset; }
};

class Quickhull {
 public:
  Quickhull(std::span<const Vec3> pts, double eps) : pts_(pts), eps_(eps) {}

  std::vector<std::uint32_t> run(const std::array<std::uint32_t, 4>& simplex);

 private:
  int makeFace(std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    Face f;
    f.v = {a, b, c};
    Vec3 n = cross(pts_[b] - pts_[a], pts_[c] - pts_[a]);
    const double len = norm(n);
    f.normal = len > 0.0 ? n / len : Vec3{};
    f.offset = dot(f.normal, pts_[a]);
    faces_.push_back(std::move(f));
    return static_cast<int>(faces_.size()) - 1;
  }

  void assign(std::uint32_t p, std::span<const int> candidates) {
    int best = -1;
    double bestDist = eps_;
    for (int fi : candidates) {
      const double d = faces_[fi].distance(pts_[p]);
      if (d > bestDist) {
        bestDist = d;
        best = fi;
      }
    }
    if (best >= 0) faces_[best].outside.push_back(p);
  }

  std::span<const Vec3> pts_;
  double eps_;
  std::vector<Face> faces_;
};

std::vector<std::uint32_t> Quickhull::run(const std::array<std::uint32_t, 4>& s) {
  const Vec3 inner = (pts_[s[0]] + pts_[s[1]] + pts_[s[2]] + pts_[s[3]]) * 0.25;

  // Orient the base triangle so its normal points away from the fourth vertex.
  std::array<std::uint32_t, 4> t = s;
  {
    Vec3 n = cross(pts_[t[1]] - pts_[t[0]], pts_[t[2]] - pts_[t[0]]);
    if (dot(n, pts_[t[3]] - pts_[t[0]]) > 0.0) std::swap(t[1], t[2]);
  }
  const int f0 = makeFace(t[0], t[1], t[2]);
  const int f1 = makeFace(t[0], t[3], t[1]);
  const int f2 = makeFace(t[1], t[3], t[2]);
  const int f3 = makeFace(t[2], t[3], t[0]);
  // Adjacency from shared directed edges.
  {
    std::unordered_map<std::uint64_t, std::pair<int, int>> edgeOwner;
    auto key = [](std::uint32_t a, std::uint32_t b) {
      return (static_cast<std::uint64_t>(a) << 32) | b;
    };
    for (int fi : {f0, f1, f2, f3})
      for (int k = 0; k < 3; ++k) edgeOwner[key(faces_[fi].v[k], faces_[fi].v[(k + 1) % 3])] = {fi, k};
    for (int fi : {f0, f1, f2, f3})
      for (int k = 0; k < 3; ++k) {
        auto it = edgeOwner.find(key(faces_[fi].v[(k + 1) % 3], faces_[fi].v[k]));
        if (it == edgeOwner.end()) throw std::logic_error("quickhull: open initial simplex");
        faces_[fi].adj[k] = it->second.first;
      }
  }
  for (int fi : {f0, f1, f2, f3})
    if (faces_[fi].distance(inner) > 0.0) throw std::logic_error("quickhull: inverted simplex");

  {
    const int initial[4] = {f0, f1, f2, f3};
    for (std::uint32_t p = 0; p < pts_.size(); ++p) {
      if (p == s[0] || p == s[1] || p == s[2] || p == s[3]) continue;
      assign(p, initial);
    }
  }

  std::vector<int> pending = {f0, f1, f2, f3};
  std::vector<int> visible;
  std::vector<int> stack;
  std::vector<std::array<int, 2>> horizon;  // (visible face, edge slot)
  std::vector<int> created;
  std::vector<std::uint32_t> orphans;
  int stamp = 0;

  while (!pending.empty()) {
    const int fi = pending.back();
    pending.pop_back();
    if (!faces_[fi].alive || faces_[fi].outside.empty()) continue;

    // Farthest outside point becomes the eye.
    std::uint32_t eye = faces_[fi].outside.front();
    double far = faces_[fi].distance(pts_[eye]);
    for (auto p : faces_[fi].outside) {
      const double d = faces_[fi].distance(pts_[p]);
      if (d > far) {
        far = d;
        eye = p;
      }
    }
    const Vec3 eyePt = pts_[eye];

    // Flood fill the faces that see the eye and collect horizon edges.
    ++stamp;
    visible.clear();
    horizon.clear();
    stack.assign(1, fi);
    faces_[fi].visitStamp = stamp;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      visible.push_back(cur);
      for (int k = 0; k < 3; ++k) {
        const int nb = faces_[cur].adj[k];
        if (faces_[nb].visitStamp == stamp) continue;
        if (faces_[nb].distance(eyePt) > eps_) {
          faces_[nb].visitStamp = stamp;
          stack.push_back(nb);
        } else {
          horizon.push_back({cur, k});
        }
      }
    }
    // Faces reached as "not visible" may be reached again from another
    // visible face; only visible faces carry the stamp, so horizon edges are
    // unique per (visible face, slot).

    orphans.clear();
    for (int vf : visible) {
      auto& out = faces_[vf].outside;
      for (auto p : out)
        if (p != eye) orphans.push_back(p);
      out.clear();
      out.shrink_to_fit();
      faces_[vf].alive = false;
    }

    created.clear();
    std::unordered_map<std::uint32_t, int> byStart, byEnd;
    for (const auto& [vf, k] : horizon) {
      const std::uint32_t a = faces_[vf].v[k];
      const std::uint32_t b = faces_[vf].v[(k + 1) % 3];
      const int nb = faces_[vf].adj[k];
      const int nf = makeFace(a, b, eye);
      faces_[nf].adj[0] = nb;
      for (int m = 0; m < 3; ++m)
        if (faces_[nb].adj[m] == vf) faces_[nb].adj[m] = nf;
      if (!byStart.emplace(a, nf).second || !byEnd.emplace(b, nf).second)
        throw std::logic_error("quickhull: horizon is not a simple loop");
      created.push_back(nf);
    }
    for (int nf : created) {
      const std::uint32_t a = faces_[nf].v[0];
      const std::uint32_t b = faces_[nf].v[1];
      auto itB = byStart.find(b);
      auto itA = byEnd.find(a);
      if (itB == byStart.end() || itA == byEnd.end())
        throw std::logic_error("quickhull: horizon is not closed");
      faces_[nf].adj[1] = itB->second;  // edge b -> eye, shared with face starting at b
      faces_[nf].adj[2] = itA->second;  // edge eye -> a, shared with face ending at a
    }

    for (auto p : orphans) assign(p, created);
    for (int nf : created)
      if (!faces_[nf].outside.empty()) pending.push_back(nf);
  }

  std::vector<std::uint32_t> verts;
  for (const auto& f : faces_)
    if (f.alive) verts.insert(verts.end(), f.v.begin(), f.v.end());
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
  return verts;
}

std::vector<std::uint32_t> planarHull(std::span<const Vec3> pts, std::uint32_t i0,
                                      std::uint32_t i1, std::uint32_t i2, double eps) {
  const Vec3 o = pts[i0];
  Vec3 u = pts[i1] - o;
  u = u / norm(u);
  Vec3 n = cross(pts[i1] - o, pts[i2] - o);
  n = n / norm(n);
  const Vec3 w = cross(n, u);

  struct P2 {
    double x, y;
    std::uint32_t idx;
  };
  std::vector<P2> q;
  q.reserve(pts.size());
  for (std::uint32_t i = 0; i < pts.size(); ++i) {
    const Vec3 d = pts[i] - o;
    q.push_back({dot(d, u), dot(d, w), i});
  }
  std::sort(q.begin(), q.end(), [](const P2& a, const P2& b) {
    return a.x < b.x || (a.x == b.x && (a.y < b.y || (a.y == b.y && a.idx < b.idx)));
  });
  // Turn test: b must lie more than eps to the left of the line o->a.
  auto leftOf = [eps](const P2& o2, const P2& a, const P2& b) {
    const double ex = a.x - o2.x, ey = a.y - o2.y;
    const double len = std::hypot(ex, ey);
    if (len <= eps) return false;
    return (ex * (b.y - o2.y) - ey * (b.x - o2.x)) / len > eps;
  };
  std::vector<P2> hull;
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t base = hull.size();
    for (const auto& p : q) {
      while (hull.size() >= base + 2 && !leftOf(hull[hull.size() - 2], hull.back(), p))
        hull.pop_back();
      if (hull.size() >= base + 1 && std::hypot(hull.back().x - p.x, hull.back().y - p.y) <= eps)
        continue;
      hull.push_back(p);
    }
    hull.pop_back();
    std::reverse(q.begin(), q.end());
  }
  std::vector<std::uint32_t> out;
  for (const auto& p : hull) out.push_back(p.idx);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

double hullEpsilon(std::span<const Vec3> points) {
  if (points.empty()) return 0.0;
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  return 1e-10 * norm(hi - lo);
}

std::vector<std::uint32_t> convexHull3d(std::span<const Vec3> pts) {
  const auto n = static_cast<std::uint32_t>(pts.size());
  if (n < 4) {
    std::vector<std::uint32_t> all(n);
    for (std::uint32_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  for (const auto& p : pts)
    if (!isFinite(p)) throw ArgumentError("convex_hull_3d: non-finite input point");
  const double eps = hullEpsilon(pts);

  // Farthest pair among the axis extremes.
  std::array<std::uint32_t, 6> ext{};
  for (std::uint32_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      if (pts[i][a] < pts[ext[2 * a]][a]) ext[2 * a] = i;
      if (pts[i][a] > pts[ext[2 * a + 1]][a]) ext[2 * a + 1] = i;
    }
  std::uint32_t i0 = ext[0], i1 = ext[1];
  double best = -1.0;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) {
      const double d = squaredNorm(pts[ext[a]] - pts[ext[b]]);
      if (d > best) {
        best = d;
        i0 = ext[a];
        i1 = ext[b];
      }
    }
  if (std::sqrt(best) <= eps) return {std::min(i0, i1)};

  const Vec3 dir = (pts[i1] - pts[i0]) / norm(pts[i1] - pts[i0]);
  std::uint32_t i2 = i0;
  best = -1.0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const double d = norm(cross(pts[i] - pts[i0], dir));
    if (d > best) {
      best = d;
      i2 = i;
    }
  }
  if (best <= eps) {
    std::uint32_t lo = i0, hi = i0;
    for (std::uint32_t i = 0; i < n; ++i) {
      const double t = dot(pts[i] - pts[i0], dir);
      if (t < dot(pts[lo] - pts[i0], dir)) lo = i;
      if (t > dot(pts[hi] - pts[i0], dir)) hi = i;
    }
    std::vector<std::uint32_t> out{lo, hi};
    std::sort(out.begin(), out.end());
    return out;
  }

  Vec3 normal = cross(pts[i1] - pts[i0], pts[i2] - pts[i0]);
  normal = normal / norm(normal);
  std::uint32_t i3 = i0;
  best = -1.0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const double d = std::abs(dot(pts[i] - pts[i0], normal));
    if (d > best) {
      best = d;
      i3 = i;
    }
  }
  if (best <= eps) return planarHull(pts, i0, i1, i2, eps);

  Quickhull qh(pts, eps);
  return qh.run({i0, i1, i2, i3});
}

}  // namespace cellvis
