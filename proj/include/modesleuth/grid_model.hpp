#pragma once

// Linearized AC-network swing dynamics driven by filtered power-imbalance
// noise, in spanning-tree phase coordinates.
//
// State ordering: x = (δf ∈ ℝᵏ, δΔ ∈ ℝᵏ⁻¹) with δΔ_e = δφ_child − δφ_parent
// along tree edges oriented away from the root; the joint skew-product system
// stacks the imbalance δp ∈ ℝᵏ first: (δp, x).

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "modesleuth/lsp_model.hpp"

namespace modesleuth {

struct TreeEdge {
  int parent = 0;
  int child = 0;
};

struct SpanningTree {
  int root = 0;
  std::vector<int> parent;     ///< parent[root] = -1
  std::vector<TreeEdge> edges; ///< breadth-first order, oriented away from the root

  int nodes() const { return static_cast<int>(parent.size()); }
  /// k × (k−1): entry (l, e) is 1 when edge e lies on the root→l path.
  Matrix path_matrix() const;
  /// φ_to − φ_from from edge differences (a signed sum of Δ along the tree path).
  double phase_between(const Vector& delta, int from, int to) const;
  /// Throws InvalidTree unless this is a tree spanning all nodes.
  void validate() const;
};

/// Breadth-first spanning tree of the graph whose edges are the nonzero
/// off-diagonal entries of `adjacency`; neighbours are visited in index order.
/// Throws InvalidGraph if the graph is disconnected.
SpanningTree spanning_tree_coordinates(const Matrix& adjacency, int root);

/// Static network data for the equilibrium equations.
struct AcNetwork {
  Vector voltage;      ///< V_l
  Matrix susceptance;  ///< B, symmetric
  Matrix conductance;  ///< G, symmetric
  Vector frequency_loss;  ///< Γ_l (power per frequency²)

  int nodes() const { return static_cast<int>(voltage.size()); }
};

/// p_l = Γ_l F² + Σ_l' V_l V_l' (B_ll' sin(φ_l − φ_l') + G_ll' cos(φ_l − φ_l')).
Vector equilibrium_power(const AcNetwork& net, double frequency, const Vector& phases);

/// Gauss–Newton on the power balance from Δ = 0 with the root phase fixed at 0.
/// Returns tree-edge phase differences. NoEquilibrium if the residual does not
/// reach 1e-10 within 50 iterations.
Vector solve_equilibrium(const AcNetwork& net, const Vector& power, double frequency, const SpanningTree& tree);

/// Node phases (root at 0) from tree-edge differences.
Vector phases_from_edges(const SpanningTree& tree, const Vector& delta);

/// T_ll' = V_l V_l' (B_ll' cos(φ_l − φ_l') − G_ll' sin(φ_l − φ_l')), zero diagonal.
Matrix coupling_at(const AcNetwork& net, const Vector& phases);

struct GridParams {
  Vector inertia;   ///< M_l
  Vector damping;   ///< γ_l
  Matrix coupling;  ///< T, symmetric with zero diagonal
  Matrix relaxation;       ///< J (−J stable)
  Matrix imbalance_noise;  ///< K, forcing rate of δp
  Vector mean_imbalance;   ///< mean forcing rate of δp, default zero
  SpanningTree tree;
  std::vector<std::string> node_names;

  int nodes() const { return static_cast<int>(inertia.size()); }
};

struct LinearizedGrid {
  Matrix a;  ///< (2k−1) × (2k−1)
  Matrix c;  ///< (2k−1) × k, [diag(1/M); 0]
};

/// Throws InvalidTree for a non-spanning tree and InvalidInput for bad parameters.
LinearizedGrid linearize(const GridParams& params);

class JointGridSystem {
 public:
  JointGridSystem(Matrix a, Matrix c, Matrix relaxation, Matrix imbalance_noise, Vector mean_imbalance = Vector());

  const Matrix& a() const { return a_; }
  const Matrix& c() const { return c_; }
  const Matrix& relaxation() const { return j_; }
  /// E with A E + E J = C.
  const Matrix& sylvester() const { return e_; }
  const LtiSystem& joint() const { return joint_; }
  const Matrix& joint_stationary() const { return sigma_; }
  Eigen::Index imbalance_dim() const { return j_.rows(); }
  Eigen::Index swing_dim() const { return a_.rows(); }

  /// h_xp(t) = e^{At} E − E e^{−Jt}, the δp→x block of the joint impulse response.
  Matrix impulse_xp(double t) const;

 private:
  Matrix a_, c_, j_, e_, sigma_;
  LtiSystem joint_;
};

JointGridSystem assemble_joint(const Matrix& a, const Matrix& c, const Matrix& relaxation,
                               const Matrix& imbalance_noise, const Vector& mean_imbalance = Vector());
JointGridSystem assemble_joint(const GridParams& params);

/// Cˣ(τ) = Σ_xp h_xpᵀ(τ) + Σ_xx e^{Aᵀτ} for τ >= 0; transposed for τ < 0.
Matrix skew_covariance(const JointGridSystem& jgs, double tau);

/// Observable channels for a PMU subset: frequency at each PMU node, then
/// phase differences along the spanning tree shrunk to the PMU nodes.
struct GridObservation {
  std::vector<int> pmus;
  std::vector<TreeEdge> edges;  ///< shrunk tree over PMU nodes
  Matrix swing_map;             ///< (2k_pmu − 1) × (2k − 1), acts on x
  std::vector<std::string> channel_names;

  /// Same map acting on the joint state (δp, x).
  Matrix joint_map(Eigen::Index imbalance_dim) const;
  /// Chart mean groups: every frequency channel shares group 0, each phase channel its own.
  std::vector<int> mean_groups() const;
};
GridObservation grid_observation(const GridParams& params, std::vector<int> pmus);

inline constexpr const char* kGridModelFormat = "grid-model/1";

/// {"format": "grid-model/1", "nodes": [{"name", "inertia", "damping"}...],
///  "coupling": [[T]] or "lines": [{"from", "to", "B", "G"}] with "voltage"
///  (and optional "phases"), "relaxation": [J] or [[J]], "imbalance_noise":
///  [K] or [[K]], "mean_imbalance": [...] (optional), "root": 0}
GridParams grid_params_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const GridParams& params);

}  // namespace modesleuth
