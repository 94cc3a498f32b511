#pragma once

#include <loco/model.hpp>
#include <loco/qp.hpp>

#include <optional>
#include <string>
#include <vector>

namespace loco
{

/** @brief Feedback wiring of the trajectory-adjustment layer.
 *
 * Rhp integrates its own prediction and never consumes state measurements;
 * Mpc closes the loop on measured centroidal feedback every cycle.
 */
enum class OcpMode
{
    Rhp,
    Mpc
};

struct CbfConfig
{
    double alpha{1.0};
    double gamma{0.1};
};

struct FrictionConfig
{
    double mu{0.5};
    int n_facets{8};
};

struct SqpConfig
{
    int max_iter{30};
    double tol{1e-6};
    double armijo{1e-4};
    double backtrack{0.5};
    int max_line_search{20};
    double penalty{1e4};
    QpSettings qp{1e-6, 20000};
};

/** @brief Horizon discretization, cost weights and constraint parameters of
 * the centroidal optimal control problem.
 *
 * Weight vectors are the diagonals of the corresponding quadratic penalty
 * matrices. step_box bounds apply to the nominal-frame planar offset
 * R^T (p_nominal - p_contact), so they must bracket zero.
 */
struct MpcConfig
{
    double t_mpc{0.06};
    int horizon_samples{20};

    Vec3 w_h_ang{10.0, 10.0, 10.0};
    Vec3 w_com{200.0, 200.0, 200.0};
    Vec3 w_contact{100.0, 100.0, 100.0};
    Vec3 w_force_share{5e-3, 5e-3, 5e-3};
    double w_force_z{1e-3};
    Vec3 w_force_rate{1e-5, 1e-5, 1e-5};

    CbfConfig cbf;
    Vec2 step_box_lower{-0.10, -0.08};
    Vec2 step_box_upper{0.10, 0.08};
    FrictionConfig friction;
    SqpConfig sqp;

    double horizon_length() const { return t_mpc * horizon_samples; }

    /** @brief Throws std::invalid_argument on non-positive timing, negative
     * weights, alpha <= 0, gamma outside (0, 1], a step box not bracketing
     * zero, mu <= 0 or fewer than four cone facets. */
    void validate() const;
};

/** @brief Mode defaults: 60 ms sampling for Rhp, 50 ms for Mpc, both spanning
 * a 1.2 s prediction window. */
MpcConfig default_mpc_config(OcpMode mode);

using VertexForces = std::array<std::array<Vec3, kNumVertices>, kNumContacts>;

/** @brief Decision trajectory of one solve: states and contact positions at
 * nodes 0..N, vertex forces and contact velocities on intervals 0..N-1. */
struct OcpDecision
{
    std::vector<Vec3> p_com;
    std::vector<Vec3> h_lin;
    std::vector<Vec3> h_ang;
    std::vector<std::array<Vec3, kNumContacts>> p_contact;
    std::vector<VertexForces> forces;
    std::vector<std::array<Vec3, kNumContacts>> v_contact;

    int horizon() const { return static_cast<int>(forces.size()); }

    static OcpDecision zero(int horizon_samples);

    /** @brief Throws std::invalid_argument when any sequence length disagrees
     * with the horizon. */
    void validate(int horizon_samples) const;
};

struct SolveStats
{
    int sqp_iterations{0};
    double kkt_residual{0.0};
    double wall_time{0.0};
    bool converged{false};
    bool cbf_slack_active{false};
    bool relaxed_qp_used{false};
    int saturated_box_rows{0};
    std::vector<double> merit_history;
};

struct OcpSolution
{
    OcpDecision decision;
    std::vector<Footstep> adjusted_footsteps;
    std::vector<Vec3> predicted_com;
    std::vector<Vec3> predicted_h_lin;
    std::vector<Vec3> predicted_h_ang;
    SolveStats stats;
};

/** @brief External push expressed as a pure force and its application point. */
struct DisturbanceWrench
{
    Vec3 force{Vec3::Zero()};
    Vec3 application_point{Vec3::Zero()};

    bool finite() const { return force.allFinite() && application_point.allFinite(); }
};

struct CentroidalDerivative
{
    Vec3 p_com_dot{Vec3::Zero()};
    Vec3 h_lin_dot{Vec3::Zero()};
    Vec3 h_ang_dot{Vec3::Zero()};
};

/** @brief Centroidal dynamics right-hand side under per-contact activation.
 *
 * Inactive contacts (gamma = 0) contribute nothing regardless of the force
 * values. The optional disturbance adds its force and the torque of that
 * force about the CoM. Throws std::invalid_argument on non-finite inputs.
 */
CentroidalDerivative centroidal_rhs(const CentroidalState& state, const VertexForces& forces,
                                    const std::array<ContactPatch, kNumContacts>& patches,
                                    const std::array<int, kNumContacts>& gamma,
                                    const RobotParams& params,
                                    const std::optional<DisturbanceWrench>& disturbance = {});

/** @brief Contact position dynamics: frozen when sigma = 1, else the slack
 * velocity. Throws std::invalid_argument unless sigma is 0 or 1. */
Vec3 contact_rhs(int sigma, const Vec3& v_contact);

/** @brief Barrier value for the CoM height band; positive inside
 * (com_z_min, com_z_max), zero on the boundary, negative outside. */
double cbf_value(double com_z, const RobotParams& params, double alpha);

/** @brief Linearized friction cone A f <= b in the contact frame.
 *
 * n_facets tangent planes of the quadratic cone |f_xy| <= mu f_z at equally
 * spaced directions, plus the unilateral row -f_z <= 0; b is zero. The true
 * cone is inscribed in the returned polyhedron and touches every facet.
 */
struct FrictionCone
{
    MatX A;
    VecX b;
};

FrictionCone friction_facets(double mu, int n_facets);

/** @brief Foot corner offsets in the contact frame derived from the foot
 * rectangle dimensions, ordered (+,+), (+,-), (-,-), (-,+). */
std::array<Vec3, kNumVertices> foot_vertex_offsets(const RobotParams& params);

/** @brief Multiple-shooting transcription of the centroidal OCP on a uniform
 * grid of horizon_samples explicit-Euler intervals.
 *
 * Decision variables are ordered node-major so the constraint Jacobians stay
 * banded. Equality rows pin the initial state and contacts, enforce the
 * shooting defects, freeze contact velocities where sigma = 1 (and their
 * vertical component everywhere), and zero the forces of inactive contacts.
 * Inequality rows are the barrier decrease conditions, the friction facets of
 * every active vertex force, and the planar step box around each nominal
 * footstep. The barrier row of the first interval depends only on the fixed
 * feedback; when the feedback already violates it, a slack variable with a
 * stiff quadratic penalty keeps the problem feasible.
 */
class OcpNlp
{
  public:
    OcpNlp(const ReferenceBundle& refs, const GaitTimeline& timeline,
           const CentroidalState& feedback, const MpcConfig& cfg, const RobotParams& params,
           const std::optional<DisturbanceWrench>& disturbance = {});

    const MpcConfig& config() const { return cfg_; }
    const RobotParams& params() const { return params_; }
    double start_time() const { return start_time_; }
    const CentroidalState& feedback() const { return feedback_; }
    bool cbf_slack_armed() const { return cbf_slack_; }

    int n_vars() const { return n_vars_; }
    int n_eq() const { return n_eq_; }
    int n_ineq() const { return n_ineq_; }
    int shooting_state_rows() const { return 9 * cfg_.horizon_samples; }
    int shooting_contact_rows() const { return 6 * cfg_.horizon_samples; }

    int idx_com(int k) const { return 45 * k; }
    int idx_h_lin(int k) const { return 45 * k + 3; }
    int idx_h_ang(int k) const { return 45 * k + 6; }
    int idx_contact(int k, int i) const { return 45 * k + 9 + 3 * i; }
    int idx_force(int k, int i, int j) const { return 45 * k + 15 + 12 * i + 3 * j; }
    int idx_v_contact(int k, int i) const { return 45 * k + 39 + 3 * i; }
    int idx_cbf_slack() const { return cbf_slack_ ? n_vars_ - 1 : -1; }

    /** @brief Flattens a decision into the variable vector; the barrier slack,
     * when armed, is set to the smallest feasible value. */
    VecX pack(const OcpDecision& decision) const;
    OcpDecision unpack(const VecX& x) const;

    /** @brief Decision built from the references: states and contacts on the
     * nominal plan, active vertex forces sharing the nominal vertical load,
     * zero contact velocities. */
    OcpDecision reference_decision() const;

    /** @brief Stacked equality constraint residuals r(x); feasible iff zero. */
    VecX equality_residual(const VecX& x) const;

    /** @brief Stacked inequality row values q(x), feasible iff bounded by
     * inequality_lower/upper componentwise. */
    VecX inequality_value(const VecX& x) const;
    const VecX& inequality_lower() const { return ineq_lower_; }
    const VecX& inequality_upper() const { return ineq_upper_; }

    double cost_value(const VecX& x) const;
    const MatX& cost_hessian() const { return cost_h_; }
    const VecX& cost_linear() const { return cost_c_; }
    VecX cost_gradient(const VecX& x) const { return cost_h_ * x + cost_c_; }

    /** @brief Quadratic subproblem in the step delta at the current iterate:
     * exact cost expansion, linearized constraints. */
    QpProblem linearize(const VecX& x) const;

    /** @brief Largest equality or inequality violation at x. */
    double primal_violation(const VecX& x) const;

    /** @brief One-norm violation used by the merit function. */
    double violation_l1(const VecX& x) const;

    const std::vector<Footstep>& nominal_footsteps() const { return footsteps_; }

    /** @brief Footsteps overlapping the horizon with positions replaced by the
     * decision contact location at their touchdown node. */
    std::vector<Footstep> adjusted_footsteps(const OcpDecision& decision) const;

    /** @brief Count of step-box rows within tol of either bound at x. */
    int saturated_box_rows(const VecX& x, double tol) const;

    /** @brief Node/contact pairs carrying step-box rows: nodes whose contact
     * point is stationary. A travelling swing contact is unconstrained until
     * its placement freezes. */
    const std::vector<std::pair<int, int>>& box_entries() const { return box_entries_; }

    /** @brief Nominal contact position of contact i at node k. */
    const Vec3& nominal_contact(int k, int i) const;
    const ContactFlags& flags(int k) const;

    /** @brief Dynamics right-hand side of interval k evaluated on a decision,
     * with the transcription's frozen flags and first-sample disturbance. */
    CentroidalDerivative node_derivative(const OcpDecision& decision, int k) const;

  private:
    struct Node
    {
        ContactFlags flags;
        std::array<Vec3, kNumContacts> p_nom;
        std::array<Mat3, kNumContacts> r_nom;
        std::array<double, kNumContacts> fz_nom{{0.0, 0.0}};
        Vec3 com_ref{Vec3::Zero()};
        Vec3 h_ang_ref{Vec3::Zero()};
    };

    void build_cost();
    ContactPatch patch_at(const VecX& x, int k, int i) const;
    CentroidalDerivative node_rhs(const VecX& x, int k) const;

    MpcConfig cfg_;
    RobotParams params_;
    CentroidalState feedback_;
    std::optional<DisturbanceWrench> disturbance_;
    double start_time_{0.0};
    std::vector<Node> nodes_;
    std::vector<Footstep> footsteps_;
    std::array<Vec3, kNumVertices> vertex_offsets_;
    FrictionCone cone_;
    bool cbf_slack_{false};
    std::vector<std::pair<int, int>> box_entries_;
    int n_vars_{0};
    int n_eq_{0};
    int n_ineq_{0};
    int box_row_begin_{0};
    VecX ineq_lower_;
    VecX ineq_upper_;
    MatX cost_h_;
    VecX cost_c_;
};

/** @brief Convenience wrapper building the transcription. */
OcpNlp transcribe(const ReferenceBundle& refs, const GaitTimeline& timeline,
                  const CentroidalState& feedback, const MpcConfig& cfg,
                  const RobotParams& params,
                  const std::optional<DisturbanceWrench>& disturbance = {});

/** @brief Gauss-Newton SQP with an l1 merit line search.
 *
 * Each iteration solves the linearized subproblem, falls back to a
 * slack-relaxed subproblem when the QP is infeasible, and backtracks until
 * the merit function decreases. Returns converged = false with the last
 * iterate when the iteration or line-search budget runs out.
 */
OcpSolution solve_sqp(const OcpNlp& nlp, const OcpDecision& warm_start);

struct AdvanceOutput
{
    OcpSolution solution;
    CentroidalState control_state;
    bool stale_feedback{false};
    bool deadline_missed{false};
};

/** @brief Receding-horizon driver owning warm starts and the feedback wiring.
 *
 * One advance per sampling period: transcribes the current reference window,
 * solves, and emits the state the control layer should track. In Rhp mode the
 * feedback is the internally integrated prediction (plus the measured
 * disturbance); in Mpc mode the measured centroidal state closes the loop and
 * a missing measurement holds the previous output and raises the stale flag.
 * advance calls must not overlap; a solve outrunning the sampling period is
 * recorded by the deadline watchdog.
 */
class TrajectoryAdjuster
{
  public:
    TrajectoryAdjuster(OcpMode mode, const MpcConfig& cfg, const RobotParams& params);

    OcpMode mode() const { return mode_; }
    const MpcConfig& config() const { return cfg_; }

    AdvanceOutput advance(const ReferenceBundle& refs,
                          const std::optional<CentroidalState>& measured = {},
                          const std::optional<DisturbanceWrench>& disturbance = {});

    /** @brief Integrator state driving Rhp feedback; meaningful after the
     * first advance. */
    const CentroidalState& internal_state() const { return internal_; }

    int deadline_misses() const { return deadline_misses_; }
    bool primed() const { return primed_; }
    void reset();

    static std::vector<std::string> telemetry_columns();

    /** @brief Flat record of the last advance for the per-cycle CSV log. */
    std::vector<double> telemetry_row(double timestamp) const;

  private:
    CentroidalState state_from_references(const ReferenceBundle& refs) const;
    OcpDecision shifted_warm_start() const;

    OcpMode mode_;
    MpcConfig cfg_;
    RobotParams params_;
    bool primed_{false};
    CentroidalState internal_;
    OcpDecision last_decision_;
    AdvanceOutput last_output_;
    double expected_start_{0.0};
    int deadline_misses_{0};
};

} // namespace loco
