#include "objslam/posegraph.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace objslam {

std::string to_string(NodeKind kind) {
  return kind == NodeKind::Camera ? "camera" : "object";
}

NodeKind node_kind_from_string(const std::string& s) {
  if (s == "camera") return NodeKind::Camera;
  if (s == "object") return NodeKind::Object;
  throw std::invalid_argument("unknown node kind '" + s + "'");
}

std::optional<VirtualMeasurement> make_virtual_measurement(
    const Mat6& jtj, const Vec6& jtr, int residual_count, const Pose& camera_pose,
    const Pose& target_pose, double max_condition) {
  if (residual_count < 6) return std::nullopt;
  const Eigen::SelfAdjointEigenSolver<Mat6> es(jtj, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  if (!(lo > 0.0) || es.eigenvalues()(5) / lo > max_condition) return std::nullopt;
  const Vec6 zeta = jtj.ldlt().solve(-jtr);
  VirtualMeasurement vm;
  vm.refined_camera = se3_exp(zeta) * camera_pose;
  vm.refined_camera.normalize();
  vm.measurement = target_pose.inverse() * vm.refined_camera;
  // Left perturbation zeta_l = Adj(T) zeta_r, so the quadratic form moves
  // to the graph's right-perturbation tangent space through Adj(T_WC).
  const Mat6 adj = adjoint(vm.refined_camera);
  vm.information = adj.transpose() * jtj * adj;
  vm.information = 0.5 * (vm.information + vm.information.transpose()).eval();
  return vm;
}

double huber_cost(double s, double threshold) {
  if (s <= threshold) return s;
  return 2.0 * std::sqrt(threshold * s) - threshold;
}

namespace {

double huber_weight(double s, double threshold) {
  return s <= threshold ? 1.0 : std::sqrt(threshold / s);
}

void check_information(const Mat6& h) {
  if (!h.allFinite()) throw std::invalid_argument("information matrix is not finite");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw std::invalid_argument("information matrix is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Mat6> es(h, Eigen::EigenvaluesOnly);
  if (es.eigenvalues()(0) < -1e-9 * scale) {
    throw std::invalid_argument("information matrix is not positive semi-definite");
  }
}

Vec6 relative_error(const Pose& z, const Pose& a, const Pose& b) {
  return se3_log(z.inverse() * a.inverse() * b);
}

}  // namespace

void PoseGraph::add_node(const GraphNode& node) {
  if (has_node(node.key)) {
    throw std::invalid_argument("duplicate " + to_string(node.key.kind) + " node " +
                                std::to_string(node.key.id));
  }
  nodes_.push_back(node);
}

void PoseGraph::add_camera_node(int id, const Pose& state) {
  const bool first = std::none_of(nodes_.begin(), nodes_.end(),
                                  [](const GraphNode& n) { return n.fixed; });
  add_node({camera_key(id), state, first});
}

void PoseGraph::add_object_node(int id, const Pose& state) {
  add_node({object_key(id), state, false});
}

void PoseGraph::add_edge(const GraphEdge& edge) {
  if (!has_node(edge.from) || !has_node(edge.to)) {
    throw std::invalid_argument("edge references a missing node");
  }
  if (edge.from == edge.to) throw std::invalid_argument("edge is a self-loop");
  check_information(edge.information);
  edges_.push_back(edge);
}

void PoseGraph::remove_object(int id) {
  const NodeKey key = object_key(id);
  nodes_.erase(index_of(key) + nodes_.begin());
  std::erase_if(edges_, [&](const GraphEdge& e) { return e.from == key || e.to == key; });
}

void PoseGraph::recentre_object(int id, const Pose& new_from_old) {
  const NodeKey key = object_key(id);
  GraphNode& n = nodes_[index_of(key)];
  n.state = n.state * new_from_old.inverse();
  for (auto& e : edges_) {
    if (e.from == key) e.measurement = new_from_old * e.measurement;
    // Objects only appear as edge sources; a target would take Z T_{O'O}^-1.
    if (e.to == key) e.measurement = e.measurement * new_from_old.inverse();
  }
}

bool PoseGraph::has_node(const NodeKey& key) const {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [&](const GraphNode& n) { return n.key == key; });
}

std::size_t PoseGraph::index_of(const NodeKey& key) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].key == key) return i;
  }
  throw std::out_of_range("no " + to_string(key.kind) + " node " + std::to_string(key.id));
}

const GraphNode& PoseGraph::node(const NodeKey& key) const { return nodes_[index_of(key)]; }

void PoseGraph::set_state(const NodeKey& key, const Pose& state) {
  nodes_[index_of(key)].state = state;
}

std::optional<NodeKey> PoseGraph::last_camera() const {
  std::optional<NodeKey> out;
  for (const auto& n : nodes_) {
    if (n.key.kind == NodeKind::Camera && (!out || n.key.id > out->id)) out = n.key;
  }
  return out;
}

Vec6 PoseGraph::edge_error(const GraphEdge& edge) const {
  return relative_error(edge.measurement, node(edge.from).state, node(edge.to).state);
}

double PoseGraph::total_error(double huber) const {
  double sum = 0.0;
  for (const auto& e : edges_) {
    const Vec6 r = edge_error(e);
    sum += huber_cost(r.dot(e.information * r), huber);
  }
  return sum;
}

OptimizeReport PoseGraph::optimize(const OptimizeParams& params) {
  OptimizeReport report;
  report.initial_error = report.final_error = total_error(params.huber);

  // Nodes reachable from the fixed node; the rest are reported and left alone.
  const std::size_t n_nodes = nodes_.size();
  std::vector<std::size_t> from(edges_.size()), to(edges_.size());
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    from[k] = index_of(edges_[k].from);
    to[k] = index_of(edges_[k].to);
  }
  std::vector<char> reached(n_nodes, 0);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (nodes_[i].fixed) {
      reached[i] = 1;
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      const std::size_t other = from[k] == i ? to[k] : (to[k] == i ? from[k] : n_nodes);
      if (other < n_nodes && !reached[other]) {
        reached[other] = 1;
        stack.push_back(other);
      }
    }
  }
  std::vector<int> var(n_nodes, -1);
  int n_var = 0;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (!reached[i]) report.untouched.push_back(nodes_[i].key);
    else if (!nodes_[i].fixed) var[i] = n_var++;
  }
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    if (reached[from[k]]) active.push_back(k);
  }
  if (n_var == 0 || active.empty()) {
    report.stop_reason = "nothing to optimise";
    return report;
  }

  auto cost_of = [&](const std::vector<Pose>& states) {
    double sum = 0.0;
    for (std::size_t k : active) {
      const Vec6 r = relative_error(edges_[k].measurement, states[from[k]], states[to[k]]);
      sum += huber_cost(r.dot(edges_[k].information * r), params.huber);
    }
    return sum;
  };

  std::vector<Pose> states(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) states[i] = nodes_[i].state;
  double cost = report.initial_error = cost_of(states);
  double lambda = params.initial_lambda;
  const int dim = 6 * n_var;
  report.stop_reason = "max iterations";

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    report.iterations = iter + 1;
    if (cost <= 0.0) {
      report.stop_reason = "zero error";
      break;
    }
    // Iteratively reweighted normal equations: the Huber weight makes the
    // gradient exact for the robust cost.
    std::map<std::pair<int, int>, Mat6> blocks;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (std::size_t k : active) {
      const GraphEdge& e = edges_[k];
      const Pose& ta = states[from[k]];
      const Pose& tb = states[to[k]];
      const Vec6 r = relative_error(e.measurement, ta, tb);
      const Vec6 hr = e.information * r;
      const double s = r.dot(hr);
      const double w = huber_weight(s, params.huber);
      const Mat6 jr_inv = se3_right_jacobian_inverse(r);
      const Mat6 jb = jr_inv;
      const Mat6 ja = -jr_inv * adjoint(tb.inverse() * ta);
      // In the linear part of the kernel the cost grows like sqrt(s): its
      // curvature along the residual direction vanishes. Dropping that
      // direction (a PSD projection in whitened space) gives Newton-like
      // convergence instead of the linear rate of plain reweighting.
      Mat6 wh = w * e.information;
      if (s > params.huber) wh -= (w / s) * hr * hr.transpose();
      const int va = var[from[k]], vb = var[to[k]];
      const std::pair<int, const Mat6*> parts[2] = {{va, &ja}, {vb, &jb}};
      for (const auto& [vi, ji] : parts) {
        if (vi < 0) continue;
        g.segment<6>(6 * vi) += w * ji->transpose() * hr;
        for (const auto& [vj, jj] : parts) {
          if (vj < 0) continue;
          auto [it, inserted] = blocks.try_emplace({vi, vj}, Mat6::Zero());
          it->second += ji->transpose() * wh * *jj;
        }
      }
    }

    bool improved = false;
    bool stop = false;
    while (!improved && !stop) {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(blocks.size() * 36);
      for (const auto& [ij, b] : blocks) {
        for (int r = 0; r < 6; ++r) {
          for (int c = 0; c < 6; ++c) {
            double v = b(r, c);
            if (ij.first == ij.second && r == c) v += lambda * std::max(b(r, c), 1e-12);
            trip.emplace_back(6 * ij.first + r, 6 * ij.second + c, v);
          }
        }
      }
      Eigen::SparseMatrix<double> a(dim, dim);
      a.setFromTriplets(trip.begin(), trip.end());
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
      Eigen::VectorXd step;
      if (solver.info() == Eigen::Success) step = solver.solve(-g);
      if (solver.info() != Eigen::Success || !step.allFinite()) {
        lambda *= params.lambda_up;
        if (lambda > 1e16) {
          report.stop_reason = "damping diverged";
          stop = true;
        }
        continue;
      }
      if (step.norm() < params.min_step) {
        report.stop_reason = "small step";
        stop = true;
        break;
      }
      std::vector<Pose> trial = states;
      for (std::size_t i = 0; i < n_nodes; ++i) {
        if (var[i] < 0) continue;
        trial[i] = perturb_right(states[i], step.segment<6>(6 * var[i]));
        trial[i].normalize();
      }
      const double trial_cost = cost_of(trial);
      if (trial_cost < cost) {
        const double rel = (cost - trial_cost) / cost;
        states = std::move(trial);
        cost = trial_cost;
        lambda *= params.lambda_down;
        ++report.accepted;
        improved = true;
        if (rel < params.min_relative_decrease) {
          report.stop_reason = "small decrease";
          stop = true;
        }
      } else {
        lambda *= params.lambda_up;
        if (lambda > 1e16) {
          report.stop_reason = "damping diverged";
          stop = true;
        }
      }
    }
    if (stop) break;
  }
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (var[i] >= 0) nodes_[i].state = states[i];
  }
  report.final_error = total_error(params.huber);
  return report;
}

namespace {

// Translation then the row-major rotation matrix: %.17g makes the text form
// an exact image of the in-memory pose (a quaternion would not round-trip).
void write_pose(std::ostream& os, const Pose& p) {
  const Vec3& t = p.translation();
  const Mat3& r = p.rotation();
  char buf[32];
  for (int i = 0; i < 3; ++i) {
    std::snprintf(buf, sizeof buf, i ? " %.17g" : "%.17g", t[i]);
    os << buf;
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      std::snprintf(buf, sizeof buf, " %.17g", r(i, j));
      os << buf;
    }
}

Pose read_pose(std::istream& is) {
  Vec3 t;
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    if (!(is >> t[i])) throw std::runtime_error("truncated pose");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (!(is >> r(i, j))) throw std::runtime_error("truncated pose");
  if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-9 || r.determinant() < 0.0)
    throw std::runtime_error("pose rotation is not orthonormal");
  return Pose(r, t);
}

}  // namespace

void PoseGraph::write(std::ostream& os) const {
  for (const auto& n : nodes_) {
    os << "VERTEX " << n.key.id << ' ' << to_string(n.key.kind) << ' ';
    write_pose(os, n.state);
    os << ' ' << (n.fixed ? 1 : 0) << '\n';
  }
  char buf[32];
  for (const auto& e : edges_) {
    os << "EDGE " << to_string(e.from.kind) << ' ' << e.from.id << ' ' << to_string(e.to.kind)
       << ' ' << e.to.id << ' ';
    write_pose(os, e.measurement);
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) {
        std::snprintf(buf, sizeof buf, " %.17g", e.information(r, c));
        os << buf;
      }
    }
    os << '\n';
  }
}

PoseGraph PoseGraph::read(std::istream& is) {
  PoseGraph g;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    try {
      if (tag == "VERTEX") {
        GraphNode n;
        std::string kind;
        int fixed = 0;
        ls >> n.key.id >> kind;
        n.key.kind = node_kind_from_string(kind);
        n.state = read_pose(ls);
        if (!(ls >> fixed)) throw std::runtime_error("missing fixed flag");
        n.fixed = fixed != 0;
        g.add_node(n);
      } else if (tag == "EDGE") {
        GraphEdge e;
        std::string fk, tk;
        ls >> fk >> e.from.id >> tk >> e.to.id;
        e.from.kind = node_kind_from_string(fk);
        e.to.kind = node_kind_from_string(tk);
        e.measurement = read_pose(ls);
        for (int r = 0; r < 6; ++r) {
          for (int c = r; c < 6; ++c) {
            if (!(ls >> e.information(r, c))) throw std::runtime_error("truncated information");
            e.information(c, r) = e.information(r, c);
          }
        }
        g.add_edge(e);
      } else {
        throw std::runtime_error("unknown record '" + tag + "'");
      }
    } catch (const std::exception& ex) {
      throw std::runtime_error("graph line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return g;
}

}  // namespace objslam
