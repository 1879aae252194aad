// Object-level pose graph: camera and object nodes joined by virtual
// relative-pose measurements, optimised with robust Levenberg-Marquardt.
//
// Edge error: e = log(Z^-1 T_a^-1 T_b), node updates T <- T exp(zeta).
#pragma once

#include "objslam/geometry.hpp"

#include <compare>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace objslam {

enum class NodeKind { Camera, Object };
std::string to_string(NodeKind kind);
NodeKind node_kind_from_string(const std::string& s);

struct NodeKey {
  NodeKind kind = NodeKind::Camera;
  int id = 0;
  auto operator<=>(const NodeKey&) const = default;
};
inline NodeKey camera_key(int id) { return {NodeKind::Camera, id}; }
inline NodeKey object_key(int id) { return {NodeKind::Object, id}; }

struct GraphNode {
  NodeKey key;
  Pose state;  // T_WC or T_WO
  bool fixed = false;
};

struct GraphEdge {
  NodeKey from;  // previous camera or object
  NodeKey to;    // camera
  Pose measurement;
  Mat6 information = Mat6::Identity();
};

struct VirtualMeasurement {
  Pose measurement;  // target_pose^-1 * refined camera pose
  Mat6 information;
  Pose refined_camera;
};

/// One extra Gauss-Newton step on a partitioned ICP system (left-perturbation
/// normal equations about `camera_pose`), then the relative pose to
/// `target_pose` and the information Adj^T (J^T J) Adj. Nullopt when the
/// system has fewer than 6 rows or its condition number exceeds max_condition.
std::optional<VirtualMeasurement> make_virtual_measurement(
    const Mat6& jtj, const Vec6& jtr, int residual_count, const Pose& camera_pose,
    const Pose& target_pose, double max_condition = 1e8);

struct OptimizeParams {
  double huber = 1.0;  // threshold on e^T H e
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  double min_relative_decrease = 1e-9;
  double min_step = 1e-10;
  int max_iterations = 100;
};

struct OptimizeReport {
  double initial_error = 0.0;
  double final_error = 0.0;
  int iterations = 0;
  int accepted = 0;
  std::string stop_reason;
  std::vector<NodeKey> untouched;  // not connected to the fixed node
};

/// Huber-robustified cost of a squared Mahalanobis error s.
double huber_cost(double s, double threshold);

class PoseGraph {
 public:
  /// The first camera node becomes the fixed gauge node. Throws
  /// std::invalid_argument on a duplicate key.
  void add_camera_node(int id, const Pose& state);
  void add_object_node(int id, const Pose& state);
  /// Throws std::invalid_argument when a node is missing, the edge would be a
  /// self-loop, or the information matrix is not symmetric PSD.
  void add_edge(const GraphEdge& edge);

  void remove_object(int id);
  /// Re-expresses object `id` in a new frame O' with new_from_old = T_{O'O}:
  /// state T_WO T_{O'O}^-1, measurements T_{O'O} Z. Leaves every edge error
  /// unchanged.
  void recentre_object(int id, const Pose& new_from_old);

  bool has_node(const NodeKey& key) const;
  const GraphNode& node(const NodeKey& key) const;
  void set_state(const NodeKey& key, const Pose& state);
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  std::optional<NodeKey> last_camera() const;

  Vec6 edge_error(const GraphEdge& edge) const;
  double total_error(double huber = OptimizeParams{}.huber) const;

  OptimizeReport optimize(const OptimizeParams& params = {});

  /// Line format: "VERTEX id kind t(3) R(9) fixed" and "EDGE kind id kind id
  /// t(3) R(9) info(21, upper triangle row-major)"; read(write(g)) == g exactly.
  void write(std::ostream& os) const;
  static PoseGraph read(std::istream& is);

 private:
  std::size_t index_of(const NodeKey& key) const;
  void add_node(const GraphNode& node);

  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
};

}  // namespace objslam
