#include "modesleuth/grid_model.hpp"

#include <cmath>
#include <deque>

#include "modesleuth/errors.hpp"
#include "modesleuth/model_io.hpp"

namespace modesleuth {

namespace {

constexpr int kMaxNewton = 50;
constexpr double kResidualTol = 1e-10;

std::vector<int> ancestors(const SpanningTree& tree, int node) {
  std::vector<int> chain;
  for (int v = node; v >= 0; v = tree.parent[static_cast<std::size_t>(v)]) chain.push_back(v);
  return chain;
}

int depth(const SpanningTree& tree, int node) { return static_cast<int>(ancestors(tree, node).size()) - 1; }

// Index of the edge whose child is `node`.
std::vector<int> edge_of_child(const SpanningTree& tree) {
  std::vector<int> idx(static_cast<std::size_t>(tree.nodes()), -1);
  for (std::size_t e = 0; e < tree.edges.size(); ++e) idx[static_cast<std::size_t>(tree.edges[e].child)] = static_cast<int>(e);
  return idx;
}

Matrix square_from_json(const nlohmann::json& v, Eigen::Index k, const char* what) {
  if (!v.is_array()) throw Error(Errc::parse_error, std::string(what) + " must be an array");
  if (!v.empty() && v.front().is_array()) {
    Matrix m = matrix_from_json(v);
    if (m.rows() != k || m.cols() != k) throw Error(Errc::parse_error, std::string(what) + " has the wrong size");
    return m;
  }
  const Vector d = vector_from_json(v);
  if (d.size() != k) throw Error(Errc::parse_error, std::string(what) + " has the wrong length");
  return d.asDiagonal();
}

}  // namespace

Matrix SpanningTree::path_matrix() const {
  const int k = nodes();
  Matrix p = Matrix::Zero(k, k - 1);
  const std::vector<int> idx = edge_of_child(*this);
  for (int l = 0; l < k; ++l) {
    for (int v = l; v != root; v = parent[static_cast<std::size_t>(v)]) p(l, idx[static_cast<std::size_t>(v)]) = 1.0;
  }
  return p;
}

double SpanningTree::phase_between(const Vector& delta, int from, int to) const {
  const Vector phi = phases_from_edges(*this, delta);
  return phi(to) - phi(from);
}

void SpanningTree::validate() const {
  const int k = nodes();
  if (k < 1 || root < 0 || root >= k) throw Error(Errc::invalid_tree, "tree root out of range");
  if (static_cast<int>(edges.size()) != k - 1) throw Error(Errc::invalid_tree, "a spanning tree has k-1 edges");
  if (parent[static_cast<std::size_t>(root)] != -1) throw Error(Errc::invalid_tree, "root must have no parent");
  for (int l = 0; l < k; ++l) {
    int steps = 0;
    for (int v = l; v != root; v = parent[static_cast<std::size_t>(v)]) {
      if (v < 0 || v >= k || ++steps > k) throw Error(Errc::invalid_tree, "node does not reach the root");
    }
  }
  std::vector<int> seen(static_cast<std::size_t>(k), 0);
  for (const auto& e : edges) {
    if (e.child < 0 || e.child >= k || parent[static_cast<std::size_t>(e.child)] != e.parent ||
        seen[static_cast<std::size_t>(e.child)]++) {
      throw Error(Errc::invalid_tree, "edge list disagrees with the parent list");
    }
  }
}

SpanningTree spanning_tree_coordinates(const Matrix& adjacency, int root) {
  const auto k = static_cast<int>(adjacency.rows());
  if (adjacency.cols() != k || k < 1) throw Error(Errc::invalid_graph, "adjacency must be square and nonempty");
  if (root < 0 || root >= k) throw Error(Errc::invalid_graph, "root out of range");
  SpanningTree t;
  t.root = root;
  t.parent.assign(static_cast<std::size_t>(k), -2);
  t.parent[static_cast<std::size_t>(root)] = -1;
  std::deque<int> queue{root};
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v = 0; v < k; ++v) {
      if (v == u || t.parent[static_cast<std::size_t>(v)] != -2) continue;
      if (adjacency(u, v) == 0.0 && adjacency(v, u) == 0.0) continue;
      t.parent[static_cast<std::size_t>(v)] = u;
      t.edges.push_back({u, v});
      queue.push_back(v);
    }
  }
  if (static_cast<int>(t.edges.size()) != k - 1) throw Error(Errc::invalid_graph, "graph is not connected");
  return t;
}

Vector equilibrium_power(const AcNetwork& net, double frequency, const Vector& phases) {
  const int k = net.nodes();
  if (phases.size() != k || net.susceptance.rows() != k || net.conductance.rows() != k ||
      net.frequency_loss.size() != k) {
    throw Error(Errc::invalid_input, "network arrays have inconsistent sizes");
  }
  Vector p(k);
  for (int l = 0; l < k; ++l) {
    double s = net.frequency_loss(l) * frequency * frequency;
    for (int m = 0; m < k; ++m) {
      const double d = phases(l) - phases(m);
      s += net.voltage(l) * net.voltage(m) * (net.susceptance(l, m) * std::sin(d) + net.conductance(l, m) * std::cos(d));
    }
    p(l) = s;
  }
  return p;
}

Vector phases_from_edges(const SpanningTree& tree, const Vector& delta) {
  if (delta.size() != tree.nodes() - 1) throw Error(Errc::invalid_input, "one phase difference per tree edge");
  return tree.path_matrix() * delta;
}

Matrix coupling_at(const AcNetwork& net, const Vector& phases) {
  const int k = net.nodes();
  Matrix t = Matrix::Zero(k, k);
  for (int l = 0; l < k; ++l) {
    for (int m = 0; m < k; ++m) {
      if (l == m) continue;
      const double d = phases(l) - phases(m);
      t(l, m) = net.voltage(l) * net.voltage(m) * (net.susceptance(l, m) * std::cos(d) - net.conductance(l, m) * std::sin(d));
    }
  }
  return t;
}

Vector solve_equilibrium(const AcNetwork& net, const Vector& power, double frequency, const SpanningTree& tree) {
  tree.validate();
  const int k = net.nodes();
  if (tree.nodes() != k || power.size() != k) throw Error(Errc::invalid_input, "power/tree size mismatch");
  const Matrix path = tree.path_matrix();
  Vector delta = Vector::Zero(k - 1);
  for (int it = 0; it <= kMaxNewton; ++it) {
    const Vector phi = path * delta;
    const Vector r = equilibrium_power(net, frequency, phi) - power;
    if (r.cwiseAbs().maxCoeff() < kResidualTol) return delta;
    if (it == kMaxNewton || k == 1) break;
    // ∂p_l/∂φ_m: Jacobian of the power balance in node phases
    Matrix jac = Matrix::Zero(k, k);
    for (int l = 0; l < k; ++l) {
      for (int m = 0; m < k; ++m) {
        if (l == m) continue;
        const double d = phi(l) - phi(m);
        const double w = net.voltage(l) * net.voltage(m) *
                         (net.susceptance(l, m) * std::cos(d) - net.conductance(l, m) * std::sin(d));
        jac(l, l) += w;
        jac(l, m) -= w;
      }
    }
    const Matrix jd = jac * path;
    const Vector step = jd.colPivHouseholderQr().solve(-r);
    if (!step.allFinite()) break;
    delta += step;
  }
  throw Error(Errc::no_equilibrium, "power balance has no nearby equilibrium");
}

LinearizedGrid linearize(const GridParams& params) {
  const int k = params.nodes();
  params.tree.validate();
  if (params.tree.nodes() != k) throw Error(Errc::invalid_tree, "tree does not span the grid nodes");
  if (params.damping.size() != k || params.coupling.rows() != k || params.coupling.cols() != k) {
    throw Error(Errc::invalid_input, "grid arrays have inconsistent sizes");
  }
  if ((params.inertia.array() <= 0).any() || (params.damping.array() <= 0).any()) {
    throw Error(Errc::invalid_input, "inertias and dampings must be positive");
  }
  const Matrix& t = params.coupling;
  Matrix lap = -t;
  lap.diagonal() = t.rowwise().sum() - t.diagonal();
  const Vector inv_m = params.inertia.cwiseInverse();
  const Matrix path = params.tree.path_matrix();

  LinearizedGrid g;
  const int n = 2 * k - 1;
  g.a = Matrix::Zero(n, n);
  g.a.topLeftCorner(k, k) = (-params.damping.cwiseProduct(inv_m)).asDiagonal();
  g.a.topRightCorner(k, k - 1) = -(inv_m.asDiagonal() * lap * path);
  for (int e = 0; e < k - 1; ++e) {
    const TreeEdge& edge = params.tree.edges[static_cast<std::size_t>(e)];
    g.a(k + e, edge.child) += 1.0;
    g.a(k + e, edge.parent) -= 1.0;
  }
  g.c = Matrix::Zero(n, k);
  g.c.topRows(k) = inv_m.asDiagonal();
  return g;
}

JointGridSystem::JointGridSystem(Matrix a, Matrix c, Matrix relaxation, Matrix imbalance_noise, Vector mean_imbalance)
    : a_(std::move(a)),
      c_(std::move(c)),
      j_(std::move(relaxation)),
      joint_([&] {
        const Eigen::Index np = j_.rows(), nx = a_.rows();
        if (c_.rows() != nx || c_.cols() != np || j_.cols() != np || imbalance_noise.rows() != np ||
            imbalance_noise.cols() != np) {
          throw Error(Errc::invalid_input, "joint grid blocks have inconsistent sizes");
        }
        Matrix drift = Matrix::Zero(np + nx, np + nx);
        drift.topLeftCorner(np, np) = -j_;
        drift.bottomLeftCorner(nx, np) = c_;
        drift.bottomRightCorner(nx, nx) = a_;
        Matrix k = Matrix::Zero(np + nx, np + nx);
        k.topLeftCorner(np, np) = imbalance_noise;
        Vector m = Vector::Zero(np + nx);
        if (mean_imbalance.size() == np) m.head(np) = mean_imbalance;
        else if (mean_imbalance.size() != 0) throw Error(Errc::invalid_input, "mean imbalance has the wrong length");
        return LtiSystem(drift, k, m);
      }()) {
  e_ = solve_sylvester(a_, j_, c_);
  sigma_ = stationary_covariance(joint_);
}

Matrix JointGridSystem::impulse_xp(double t) const { return expm(a_, t) * e_ - e_ * expm(-j_, t); }

JointGridSystem assemble_joint(const Matrix& a, const Matrix& c, const Matrix& relaxation,
                               const Matrix& imbalance_noise, const Vector& mean_imbalance) {
  return JointGridSystem(a, c, relaxation, imbalance_noise, mean_imbalance);
}

JointGridSystem assemble_joint(const GridParams& params) {
  const LinearizedGrid g = linearize(params);
  return assemble_joint(g.a, g.c, params.relaxation, params.imbalance_noise, params.mean_imbalance);
}

Matrix skew_covariance(const JointGridSystem& jgs, double tau) {
  if (tau < 0.0) return skew_covariance(jgs, -tau).transpose();
  const Eigen::Index np = jgs.imbalance_dim(), nx = jgs.swing_dim();
  const Matrix& s = jgs.joint_stationary();
  const Matrix s_xp = s.block(np, 0, nx, np);
  const Matrix s_xx = s.block(np, np, nx, nx);
  if (tau == 0.0) return s_xx;
  return s_xp * jgs.impulse_xp(tau).transpose() + s_xx * expm(jgs.a().transpose(), tau);
}

Matrix GridObservation::joint_map(Eigen::Index imbalance_dim) const {
  Matrix z = Matrix::Zero(swing_map.rows(), imbalance_dim + swing_map.cols());
  z.rightCols(swing_map.cols()) = swing_map;
  return z;
}

std::vector<int> GridObservation::mean_groups() const {
  std::vector<int> g(pmus.size(), 0);
  for (std::size_t e = 0; e < edges.size(); ++e) g.push_back(static_cast<int>(e + 1));
  return g;
}

GridObservation grid_observation(const GridParams& params, std::vector<int> pmus) {
  const int k = params.nodes();
  if (pmus.empty()) {
    for (int l = 0; l < k; ++l) pmus.push_back(l);
  }
  std::vector<int> is_pmu(static_cast<std::size_t>(k), 0);
  for (int p : pmus) {
    if (p < 0 || p >= k || is_pmu[static_cast<std::size_t>(p)]++) {
      throw Error(Errc::invalid_input, "PMU nodes must be distinct grid nodes");
    }
  }
  const SpanningTree& tree = params.tree;
  // Shrunk root: the shallowest PMU (lowest index on ties).
  int root = pmus.front();
  for (int p : pmus) {
    if (depth(tree, p) < depth(tree, root) || (depth(tree, p) == depth(tree, root) && p < root)) root = p;
  }
  GridObservation obs;
  obs.pmus = pmus;
  std::vector<int> order = pmus;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return depth(tree, a) < depth(tree, b); });
  for (int p : order) {
    if (p == root) continue;
    int parent = root;
    const auto chain = ancestors(tree, p);
    for (std::size_t i = 1; i < chain.size(); ++i) {
      if (is_pmu[static_cast<std::size_t>(chain[i])]) {
        parent = chain[i];
        break;
      }
    }
    obs.edges.push_back({parent, p});
  }
  const auto nx = static_cast<Eigen::Index>(2 * k - 1);
  const auto m = static_cast<Eigen::Index>(pmus.size() + obs.edges.size());
  obs.swing_map = Matrix::Zero(m, nx);
  const Matrix path = tree.path_matrix();
  auto name = [&](int l) {
    return params.node_names.empty() ? std::to_string(l) : params.node_names[static_cast<std::size_t>(l)];
  };
  Eigen::Index row = 0;
  for (int p : pmus) {
    obs.swing_map(row++, p) = 1.0;
    obs.channel_names.push_back("f_" + name(p));
  }
  for (const auto& e : obs.edges) {
    obs.swing_map.row(row++).tail(k - 1) = path.row(e.child) - path.row(e.parent);
    obs.channel_names.push_back("dphi_" + name(e.parent) + "_" + name(e.child));
  }
  return obs;
}

GridParams grid_params_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format") != kGridModelFormat) throw Error(Errc::parse_error, "unsupported grid format");
    GridParams g;
    const auto& nodes = doc.at("nodes");
    const auto k = static_cast<Eigen::Index>(nodes.size());
    if (k < 1) throw Error(Errc::parse_error, "grid needs at least one node");
    g.inertia.resize(k);
    g.damping.resize(k);
    for (Eigen::Index l = 0; l < k; ++l) {
      const auto& node = nodes[static_cast<std::size_t>(l)];
      g.inertia(l) = node.at("inertia").get<double>();
      g.damping(l) = node.at("damping").get<double>();
      g.node_names.push_back(node.contains("name") ? node.at("name").get<std::string>() : std::to_string(l));
    }
    if (doc.contains("coupling")) {
      g.coupling = matrix_from_json(doc.at("coupling"));
    } else {
      AcNetwork net;
      net.voltage = doc.contains("voltage") ? vector_from_json(doc.at("voltage")) : Vector::Ones(k);
      net.susceptance = Matrix::Zero(k, k);
      net.conductance = Matrix::Zero(k, k);
      net.frequency_loss = Vector::Zero(k);
      for (const auto& line : doc.at("lines")) {
        const int a = line.at("from").get<int>(), b = line.at("to").get<int>();
        if (a < 0 || b < 0 || a >= k || b >= k || a == b) throw Error(Errc::parse_error, "line endpoints invalid");
        net.susceptance(a, b) = net.susceptance(b, a) = line.at("B").get<double>();
        net.conductance(a, b) = net.conductance(b, a) = line.value("G", 0.0);
      }
      const Vector phases = doc.contains("phases") ? vector_from_json(doc.at("phases")) : Vector::Zero(k);
      g.coupling = coupling_at(net, phases);
    }
    if (g.coupling.rows() != k || g.coupling.cols() != k) throw Error(Errc::parse_error, "coupling has the wrong size");
    g.relaxation = square_from_json(doc.at("relaxation"), k, "relaxation");
    g.imbalance_noise = square_from_json(doc.at("imbalance_noise"), k, "imbalance_noise");
    if (doc.contains("mean_imbalance")) g.mean_imbalance = vector_from_json(doc.at("mean_imbalance"));
    g.tree = spanning_tree_coordinates(g.coupling, doc.value("root", 0));
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("grid JSON: ") + e.what());
  }
}

nlohmann::json to_json(const GridParams& params) {
  nlohmann::json doc;
  doc["format"] = kGridModelFormat;
  doc["nodes"] = nlohmann::json::array();
  for (int l = 0; l < params.nodes(); ++l) {
    doc["nodes"].push_back({{"name", params.node_names.empty() ? std::to_string(l) : params.node_names[static_cast<std::size_t>(l)]},
                            {"inertia", params.inertia(l)},
                            {"damping", params.damping(l)}});
  }
  doc["coupling"] = matrix_to_json(params.coupling);
  doc["relaxation"] = matrix_to_json(params.relaxation);
  doc["imbalance_noise"] = matrix_to_json(params.imbalance_noise);
  if (params.mean_imbalance.size()) doc["mean_imbalance"] = vector_to_json(params.mean_imbalance);
  doc["root"] = params.tree.root;
  return doc;
}

}  // namespace modesleuth
