#pragma once

#include <loco/common.hpp>
#include <loco/kinematics.hpp>
#include <loco/qp.hpp>

#include <array>
#include <string>

namespace loco
{

/** @brief Diagonal gains of the ground-plane CoM velocity law. Units 1/s. */
struct ZmpControllerGains
{
    Vec2 k_zmp{Vec2(1.0, 1.0)};
    Vec2 k_com{Vec2(4.0, 4.0)};

    /** @brief Throws std::invalid_argument on negative entries. */
    void validate() const;

    /** @brief Entrywise k_com < k_zmp, the gain ordering usually quoted for
     * this law. The closed kinematic loop converges with the opposite
     * ordering, which the defaults follow; validate() logs when the quoted
     * ordering holds anyway. */
    bool quoted_gain_ordering() const;
};

/** @brief Desired ground-plane CoM velocity
 *
 *   v* = com_vel_ref - K_zmp (zmp_ref - zmp_meas) + K_com (com_pos_ref - com_meas)
 */
Vec2 com_zmp_law(const Vec2& com_pos_ref, const Vec2& com_vel_ref, const Vec2& com_meas,
                 const Vec2& zmp_ref, const Vec2& zmp_meas, const ZmpControllerGains& gains);

/** @brief Cubic polynomial in local time with value/derivative evaluation. */
struct Cubic
{
    std::array<double, 4> c{0.0, 0.0, 0.0, 0.0};

    double value(double t) const { return c[0] + t * (c[1] + t * (c[2] + t * c[3])); }
    double deriv(double t) const { return c[1] + t * (2.0 * c[2] + t * 3.0 * c[3]); }
    double accel(double t) const { return 2.0 * c[2] + 6.0 * c[3] * t; }
};

/** @brief Minimum-acceleration interpolant between boundary positions and
 * velocities over a duration. */
Cubic cubic_from_boundary(double p0, double v0, double p1, double v1, double duration);

/** @brief Two-segment swing-foot trajectory.
 *
 * Each translation axis carries one cubic per segment in segment-local time;
 * the segments join at tm with continuous position and velocity. Orientation
 * follows R(t) = exp(phi(t)) * rot_anchor with phi a vector cubic over the
 * whole span.
 */
struct SwingPlan
{
    Pose start;
    Pose target;
    double t0{0.0};
    double tm{0.0};
    double t1{0.0};
    double apex{0.0};
    double waypoint_z{0.0};
    bool has_waypoint{true};
    std::array<Cubic, 3> first;
    std::array<Cubic, 3> second;
    Mat3 rot_anchor{Mat3::Identity()};
    std::array<Cubic, 3> rot;
};

/** @brief Plans a swing from rest to rest over [t0, t1]; the vertical axis
 * passes through max(start_z, target_z) + apex at mid-time.
 *
 * Throws std::invalid_argument when t1 <= t0 or apex < 0.
 */
SwingPlan plan_swing(const Pose& start, const Pose& target, double t0, double t1, double apex);

/** @brief Re-targets a plan mid-flight, keeping position, velocity and
 * orientation rate continuous at t_now and landing at the original end time.
 *
 * Throws std::invalid_argument when t_now < t0 and std::out_of_range when
 * t_now >= t1 (too late; keep the old plan).
 */
SwingPlan replan_swing(const SwingPlan& plan, double t_now, const Pose& new_target);

/** @brief Pose at time t, held constant outside [t0, t1]. */
Pose swing_pose(const SwingPlan& plan, double t);

/** @brief World-frame twist (linear then angular) at time t, clamped. */
Vec6 swing_velocity(const SwingPlan& plan, double t);

/** @brief Task weights and gains of the differential IK. Hard tasks become
 * equality constraints; soft tasks and the base regularizer fill the cost. */
struct IkTaskStack
{
    std::string chest_frame{"torso"};
    double foot_gain{5.0};
    double com_gain{5.0};
    double postural_weight{0.1};
    double postural_gain{2.0};
    double chest_weight{1.0};
    double chest_gain{2.0};
    double base_weight{1e-3};
    bool feet_hard{true};
    bool com_hard{true};
    bool chest_soft{true};

    /** @brief Throws std::invalid_argument on negative weights or gains and
     * on zero postural or base regularization. */
    void validate() const;
};

/** @brief Desired poses and feedforward velocities consumed by ik_step. */
struct IkTargets
{
    std::array<Pose, kNumContacts> foot_pose;
    std::array<Vec6, kNumContacts> foot_velocity{Vec6::Zero(), Vec6::Zero()};
    Vec3 com_position{Vec3::Zero()};
    Vec3 com_velocity{Vec3::Zero()};
    VecX q_postural;
    Mat3 chest_orientation{Mat3::Identity()};
};

struct IkResult
{
    VecX nu;
    VecX dq;
    VecX q_next;
    double hard_residual{0.0};
    int qp_iterations{0};
};

/** @brief One differential IK step: solves for the robot velocity that meets
 * the hard foot/CoM tasks and trades off the soft regularizers, then
 * integrates the joint positions by explicit Euler over dt.
 *
 * Throws std::invalid_argument on non-positive dt or when the hard rows
 * outnumber the variables, and std::runtime_error with the per-task residuals
 * when the constraint set is infeasible.
 */
IkResult ik_step(const ChainModel& model, const RobotState& state, const IkTaskStack& stack,
                 const IkTargets& targets, double dt);

} // namespace loco
