// Iso-surface extraction from object volumes and ASCII PLY export.
#pragma once

#include "objslam/geometry.hpp"
#include "objslam/object_volume.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace objslam {

struct TriangleMesh {
  std::vector<Vec3> vertices;                    // world frame
  std::vector<std::array<std::uint32_t, 3>> triangles;  // CCW seen from outside

  bool empty() const { return triangles.empty(); }
};

/// Marching cubes at sdf = 0 over cells whose 8 corners are observed and whose
/// mean foreground probability exceeds `foreground_threshold`. Shared edge
/// vertices are welded, so the output is indexed and crack-free.
TriangleMesh extract_mesh(const TsdfVolume& volume, double foreground_threshold = 0.5,
                          bool require_foreground = true);
TriangleMesh extract_mesh(const ObjectVolume& object, double foreground_threshold = 0.5);

/// Per-triangle unit normals (zero for degenerate triangles).
std::vector<Vec3> triangle_normals(const TriangleMesh& mesh);

/// ASCII PLY: "element vertex N" (x y z as float), "element face M"
/// (list uchar int vertex_indices).
void write_ply(std::ostream& out, const TriangleMesh& mesh);
void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_ply(const std::filesystem::path& path);

namespace mc {

/// One polygonisation case: closed loops of cube edge ids, oriented so their
/// right-hand normal points from inside (sdf < 0) to outside.
struct CaseLoops {
  std::vector<std::vector<int>> loops;
};

/// Corner c sits at ((c&1), (c>>1)&1, (c>>2)&1); edge e joins kEdgeCorners[e].
extern const std::array<std::array<int, 2>, 12> kEdgeCorners;

/// Case table indexed by the 8-bit inside mask (bit c set when corner c has
/// sdf < 0). Built once from face-consistent rules; see mesh.cpp.
const std::array<CaseLoops, 256>& case_table();

}  // namespace mc

}  // namespace objslam
