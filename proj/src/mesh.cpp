#include "objslam/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace objslam {

namespace mc {

const std::array<std::array<int, 2>, 12> kEdgeCorners = {{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // along x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // along y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
}};

namespace {

// Faces as cyclic corner sequences; consecutive corners differ in one bit.
constexpr int kFaces[6][4] = {{0, 2, 6, 4}, {1, 3, 7, 5}, {0, 1, 5, 4},
                              {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 5, 7, 6}};

int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e) {
    const auto& c = kEdgeCorners[static_cast<std::size_t>(e)];
    if ((c[0] == a && c[1] == b) || (c[0] == b && c[1] == a)) return e;
  }
  throw std::logic_error("corners are not adjacent");
}

Vec3 corner_position(int c) {
  return {static_cast<double>(c & 1), static_cast<double>((c >> 1) & 1),
          static_cast<double>((c >> 2) & 1)};
}

// On every face each maximal run of inside corners is cut off by one segment
// from its entering edge to its leaving edge. Both cubes sharing a face derive
// the same segments, which keeps the surface crack-free; in the ambiguous
// face case this separates the two inside corners.
CaseLoops build_case(int inside_mask) {
  auto inside = [inside_mask](int c) { return ((inside_mask >> c) & 1) != 0; };
  std::array<std::vector<int>, 12> links;
  for (const auto& face : kFaces) {
    for (int s = 0; s < 4; ++s) {
      const int prev = face[(s + 3) % 4];
      if (!inside(face[s]) || inside(prev)) continue;
      int last = s;
      while (inside(face[(last + 1) % 4])) last = (last + 1) % 4;
      const int enter = edge_between(prev, face[s]);
      const int leave = edge_between(face[last], face[(last + 1) % 4]);
      links[static_cast<std::size_t>(enter)].push_back(leave);
      links[static_cast<std::size_t>(leave)].push_back(enter);
    }
  }

  CaseLoops out;
  std::array<bool, 12> used{};
  for (int start = 0; start < 12; ++start) {
    if (used[static_cast<std::size_t>(start)] || links[static_cast<std::size_t>(start)].empty()) {
      continue;
    }
    std::vector<int> loop{start};
    used[static_cast<std::size_t>(start)] = true;
    int prev = -1;
    int cur = start;
    for (;;) {
      const auto& nb = links[static_cast<std::size_t>(cur)];
      const int next = (nb[0] != prev) ? nb[0] : nb[1];
      if (next == start) break;
      used[static_cast<std::size_t>(next)] = true;
      loop.push_back(next);
      prev = cur;
      cur = next;
    }

    Vec3 newell = Vec3::Zero();
    Vec3 outward = Vec3::Zero();
    for (std::size_t n = 0; n < loop.size(); ++n) {
      const auto& ea = kEdgeCorners[static_cast<std::size_t>(loop[n])];
      const auto& eb = kEdgeCorners[static_cast<std::size_t>(loop[(n + 1) % loop.size()])];
      const Vec3 pa = 0.5 * (corner_position(ea[0]) + corner_position(ea[1]));
      const Vec3 pb = 0.5 * (corner_position(eb[0]) + corner_position(eb[1]));
      newell += pa.cross(pb);
      const int in = inside(ea[0]) ? ea[0] : ea[1];
      const int outc = inside(ea[0]) ? ea[1] : ea[0];
      outward += corner_position(outc) - corner_position(in);
    }
    if (newell.dot(outward) < 0.0) std::reverse(loop.begin(), loop.end());
    out.loops.push_back(std::move(loop));
  }
  return out;
}

}  // namespace

const std::array<CaseLoops, 256>& case_table() {
  static const std::array<CaseLoops, 256> table = [] {
    std::array<CaseLoops, 256> t;
    for (int m = 0; m < 256; ++m) t[static_cast<std::size_t>(m)] = build_case(m);
    return t;
  }();
  return table;
}

}  // namespace mc

TriangleMesh extract_mesh(const TsdfVolume& volume, double foreground_threshold,
                          bool require_foreground) {
  const VoxelGrid& grid = volume.grid;
  const int r = grid.resolution();
  const auto& table = mc::case_table();
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

  for (int k = 0; k + 1 < r; ++k) {
    for (int j = 0; j + 1 < r; ++j) {
      for (int i = 0; i + 1 < r; ++i) {
        const Voxel* corner[8];
        int mask = 0;
        bool observed = true;
        double fg = 0.0;
        for (int c = 0; c < 8; ++c) {
          const Voxel& v = grid.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          if (v.weight == 0) {
            observed = false;
            break;
          }
          corner[c] = &v;
          if (v.sdf < 0.0f) mask |= 1 << c;
          fg += static_cast<double>(v.fg) / (static_cast<double>(v.fg) + v.bg);
        }
        if (!observed || mask == 0 || mask == 255) continue;
        if (require_foreground && !(fg / 8.0 > foreground_threshold)) continue;

        std::uint32_t ids[12];
        for (const auto& loop : table[static_cast<std::size_t>(mask)].loops) {
          for (int e : loop) {
            const auto& ec = mc::kEdgeCorners[static_cast<std::size_t>(e)];
            const int a = ec[0];
            const int b = ec[1];
            const int ai = i + (a & 1), aj = j + ((a >> 1) & 1), ak = k + ((a >> 2) & 1);
            const int axis = e / 4;
            const std::uint64_t key = grid.index(ai, aj, ak) * 3 + static_cast<std::uint64_t>(axis);
            auto [it, fresh] = edge_vertex.try_emplace(key, 0u);
            if (fresh) {
              const double sa = corner[a]->sdf;
              const double sb = corner[b]->sdf;
              const double t = sa / (sa - sb);
              const Vec3 pa = grid.voxel_centre(ai, aj, ak);
              const Vec3 pb = grid.voxel_centre(i + (b & 1), j + ((b >> 1) & 1),
                                                k + ((b >> 2) & 1));
              it->second = static_cast<std::uint32_t>(mesh.vertices.size());
              mesh.vertices.push_back(volume.pose * (pa + t * (pb - pa)));
            }
            ids[e] = it->second;
          }
          for (std::size_t n = 1; n + 1 < loop.size(); ++n) {
            mesh.triangles.push_back({ids[loop[0]], ids[loop[n]], ids[loop[n + 1]]});
          }
        }
      }
    }
  }
  return mesh;
}

TriangleMesh extract_mesh(const ObjectVolume& object, double foreground_threshold) {
  return extract_mesh(object.volume, foreground_threshold, true);
}

std::vector<Vec3> triangle_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> out;
  out.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                       .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    const double len = n.norm();
    out.push_back(len > 0.0 ? Vec3(n / len) : Vec3::Zero());
  }
  return out;
}

void write_ply(std::ostream& out, const TriangleMesh& mesh) {
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.triangles.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  char buf[96];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& t : mesh.triangles) {
    out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  }
}

void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_ply(f, mesh);
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

TriangleMesh read_ply(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t nv = 0, nf = 0;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string w, kind;
    ls >> w;
    if (w == "element") {
      ls >> kind;
      if (kind == "vertex") ls >> nv;
      if (kind == "face") ls >> nf;
    } else if (w == "end_header") {
      break;
    }
  }
  TriangleMesh mesh;
  mesh.vertices.resize(nv);
  for (auto& v : mesh.vertices) f >> v.x() >> v.y() >> v.z();
  mesh.triangles.resize(nf);
  for (auto& t : mesh.triangles) {
    int n = 0;
    f >> n >> t[0] >> t[1] >> t[2];
    if (n != 3) throw std::runtime_error(path.string() + ": only triangles supported");
  }
  if (!f) throw std::runtime_error(path.string() + ": truncated PLY body");
  return mesh;
}

}  // namespace objslam
