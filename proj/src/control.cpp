#include <loco/control.hpp>

#include <loco/model.hpp>

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace loco
{

namespace
{

Mat3 left_jacobian_so3(const Vec3& phi)
{
    const double theta2 = phi.squaredNorm();
    const Mat3 k = skew(phi);
    double c1 = 0.0;
    double c2 = 0.0;
    if (theta2 < 1e-12)
    {
        c1 = 0.5 - theta2 / 24.0;
        c2 = 1.0 / 6.0 - theta2 / 120.0;
    }
    else
    {
        const double theta = std::sqrt(theta2);
        c1 = (1.0 - std::cos(theta)) / theta2;
        c2 = (theta - std::sin(theta)) / (theta2 * theta);
    }
    return Mat3::Identity() + c1 * k + c2 * k * k;
}

Cubic shift_cubic(const Cubic& c, double dt)
{
    Cubic out;
    out.c[0] = c.value(dt);
    out.c[1] = c.deriv(dt);
    out.c[2] = 0.5 * c.accel(dt);
    out.c[3] = c.c[3];
    return out;
}

std::pair<Cubic, Cubic> split_cubic(const Cubic& c, double t_split)
{
    return {c, shift_cubic(c, t_split)};
}

std::pair<Cubic, Cubic> fit_through_waypoint(double p0, double v0, double w, double p1,
                                             double v1, double t_first, double t_second)
{
    Eigen::Matrix<double, 8, 8> m = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 8, 1> rhs = Eigen::Matrix<double, 8, 1>::Zero();
    const double ta = t_first;
    const double tb = t_second;

    m(0, 0) = 1.0;
    rhs(0) = p0;
    m(1, 1) = 1.0;
    rhs(1) = v0;
    m(2, 4) = 1.0;
    m(2, 5) = tb;
    m(2, 6) = tb * tb;
    m(2, 7) = tb * tb * tb;
    rhs(2) = p1;
    m(3, 5) = 1.0;
    m(3, 6) = 2.0 * tb;
    m(3, 7) = 3.0 * tb * tb;
    rhs(3) = v1;
    m(4, 0) = 1.0;
    m(4, 1) = ta;
    m(4, 2) = ta * ta;
    m(4, 3) = ta * ta * ta;
    rhs(4) = w;
    m(5, 4) = 1.0;
    rhs(5) = w;
    m(6, 1) = 1.0;
    m(6, 2) = 2.0 * ta;
    m(6, 3) = 3.0 * ta * ta;
    m(6, 5) = -1.0;
    m(7, 2) = 2.0;
    m(7, 3) = 6.0 * ta;
    m(7, 6) = -2.0;

    const Eigen::Matrix<double, 8, 1> sol = m.fullPivLu().solve(rhs);
    if (!sol.allFinite())
    {
        throw std::runtime_error("swing segment fit failed");
    }
    Cubic a;
    Cubic b;
    for (int i = 0; i < 4; ++i)
    {
        a.c[static_cast<std::size_t>(i)] = sol(i);
        b.c[static_cast<std::size_t>(i)] = sol(4 + i);
    }
    return {a, b};
}

} // namespace

void ZmpControllerGains::validate() const
{
    if ((k_zmp.array() < 0.0).any() || (k_com.array() < 0.0).any() || !k_zmp.allFinite()
        || !k_com.allFinite())
    {
        throw std::invalid_argument("zmp controller gains must be non-negative");
    }
    if (quoted_gain_ordering())
    {
        log::info("zmp gains follow the quoted ordering k_com < k_zmp");
    }
}

bool ZmpControllerGains::quoted_gain_ordering() const
{
    return (k_com.array() < k_zmp.array()).all();
}

Vec2 com_zmp_law(const Vec2& com_pos_ref, const Vec2& com_vel_ref, const Vec2& com_meas,
                 const Vec2& zmp_ref, const Vec2& zmp_meas, const ZmpControllerGains& gains)
{
    return com_vel_ref - gains.k_zmp.cwiseProduct(zmp_ref - zmp_meas)
           + gains.k_com.cwiseProduct(com_pos_ref - com_meas);
}

Cubic cubic_from_boundary(double p0, double v0, double p1, double v1, double duration)
{
    if (!(duration > 0.0))
    {
        throw std::invalid_argument("cubic duration must be positive");
    }
    const double t = duration;
    Cubic out;
    out.c[0] = p0;
    out.c[1] = v0;
    out.c[2] = (3.0 * (p1 - p0) - (2.0 * v0 + v1) * t) / (t * t);
    out.c[3] = (2.0 * (p0 - p1) + (v0 + v1) * t) / (t * t * t);
    return out;
}

SwingPlan plan_swing(const Pose& start, const Pose& target, double t0, double t1, double apex)
{
    if (!(t1 > t0))
    {
        throw std::invalid_argument("swing end time must exceed the start time");
    }
    if (apex < 0.0)
    {
        throw std::invalid_argument("swing apex must be non-negative");
    }
    SwingPlan plan;
    plan.start = start;
    plan.target = target;
    plan.t0 = t0;
    plan.t1 = t1;
    plan.tm = 0.5 * (t0 + t1);
    plan.apex = apex;
    plan.waypoint_z = std::max(start.position[2], target.position[2]) + apex;
    plan.has_waypoint = true;

    const double half = plan.tm - t0;
    for (int i = 0; i < 2; ++i)
    {
        const auto ai = static_cast<std::size_t>(i);
        const Cubic whole =
            cubic_from_boundary(start.position[i], 0.0, target.position[i], 0.0, t1 - t0);
        std::tie(plan.first[ai], plan.second[ai]) = split_cubic(whole, half);
    }
    std::tie(plan.first[2], plan.second[2]) =
        fit_through_waypoint(start.position[2], 0.0, plan.waypoint_z, target.position[2], 0.0,
                             half, t1 - plan.tm);

    plan.rot_anchor = start.rotation;
    const Vec3 phi_end = log_so3(target.rotation * start.rotation.transpose());
    for (int i = 0; i < 3; ++i)
    {
        plan.rot[static_cast<std::size_t>(i)] =
            cubic_from_boundary(0.0, 0.0, phi_end[i], 0.0, t1 - t0);
    }
    return plan;
}

SwingPlan replan_swing(const SwingPlan& plan, double t_now, const Pose& new_target)
{
    if (t_now < plan.t0)
    {
        throw std::invalid_argument("replan time precedes the plan");
    }
    if (t_now >= plan.t1)
    {
        throw std::out_of_range("replan time is past the landing instant");
    }

    const Pose pose_now = swing_pose(plan, t_now);
    const Vec6 vel_now = swing_velocity(plan, t_now);
    const double span = plan.t1 - t_now;

    SwingPlan out;
    out.start = pose_now;
    out.target = new_target;
    out.t0 = t_now;
    out.t1 = plan.t1;
    out.apex = plan.apex;

    const bool keep_waypoint =
        plan.has_waypoint && plan.tm - t_now > 1e-7 * (plan.t1 - plan.t0);
    out.tm = keep_waypoint ? plan.tm : t_now + 0.5 * span;
    out.has_waypoint = keep_waypoint;
    out.waypoint_z = keep_waypoint
                         ? std::max(plan.waypoint_z, new_target.position[2] + plan.apex)
                         : plan.waypoint_z;

    for (int i = 0; i < 2; ++i)
    {
        const auto ai = static_cast<std::size_t>(i);
        const Cubic whole = cubic_from_boundary(pose_now.position[i], vel_now[i],
                                                new_target.position[i], 0.0, span);
        std::tie(out.first[ai], out.second[ai]) = split_cubic(whole, out.tm - t_now);
    }
    if (keep_waypoint)
    {
        std::tie(out.first[2], out.second[2]) =
            fit_through_waypoint(pose_now.position[2], vel_now[2], out.waypoint_z,
                                 new_target.position[2], 0.0, out.tm - t_now,
                                 plan.t1 - out.tm);
    }
    else
    {
        const Cubic whole = cubic_from_boundary(pose_now.position[2], vel_now[2],
                                                new_target.position[2], 0.0, span);
        std::tie(out.first[2], out.second[2]) = split_cubic(whole, out.tm - t_now);
    }

    out.rot_anchor = pose_now.rotation;
    const Vec3 phi_end = log_so3(new_target.rotation * pose_now.rotation.transpose());
    for (int i = 0; i < 3; ++i)
    {
        out.rot[static_cast<std::size_t>(i)] =
            cubic_from_boundary(0.0, vel_now[3 + i], phi_end[i], 0.0, span);
    }
    return out;
}

Pose swing_pose(const SwingPlan& plan, double t)
{
    const double tc = std::clamp(t, plan.t0, plan.t1);
    Pose pose;
    for (int i = 0; i < 3; ++i)
    {
        const auto ai = static_cast<std::size_t>(i);
        pose.position[i] = tc < plan.tm ? plan.first[ai].value(tc - plan.t0)
                                        : plan.second[ai].value(tc - plan.tm);
    }
    Vec3 phi;
    for (int i = 0; i < 3; ++i)
    {
        phi[i] = plan.rot[static_cast<std::size_t>(i)].value(tc - plan.t0);
    }
    pose.rotation = exp_so3(phi) * plan.rot_anchor;
    return pose;
}

Vec6 swing_velocity(const SwingPlan& plan, double t)
{
    Vec6 twist = Vec6::Zero();
    if (t < plan.t0 || t > plan.t1)
    {
        return twist;
    }
    for (int i = 0; i < 3; ++i)
    {
        const auto ai = static_cast<std::size_t>(i);
        twist[i] = t < plan.tm ? plan.first[ai].deriv(t - plan.t0)
                               : plan.second[ai].deriv(t - plan.tm);
    }
    Vec3 phi;
    Vec3 dphi;
    for (int i = 0; i < 3; ++i)
    {
        const auto ai = static_cast<std::size_t>(i);
        phi[i] = plan.rot[ai].value(t - plan.t0);
        dphi[i] = plan.rot[ai].deriv(t - plan.t0);
    }
    twist.tail<3>() = left_jacobian_so3(phi) * dphi;
    return twist;
}

void IkTaskStack::validate() const
{
    if (foot_gain < 0.0 || com_gain < 0.0 || postural_gain < 0.0 || chest_gain < 0.0)
    {
        throw std::invalid_argument("ik task gains must be non-negative");
    }
    if (postural_weight <= 0.0 || base_weight <= 0.0 || chest_weight < 0.0)
    {
        throw std::invalid_argument("ik regularization weights must be positive");
    }
}

IkResult ik_step(const ChainModel& model, const RobotState& state, const IkTaskStack& stack,
                 const IkTargets& targets, double dt)
{
    stack.validate();
    if (!(dt > 0.0))
    {
        throw std::invalid_argument("ik integration period must be positive");
    }
    const int n = model.n_joints();
    const int nv = 6 + n;
    if (state.q.size() != n || targets.q_postural.size() != n)
    {
        throw std::invalid_argument("joint vector size mismatch");
    }

    const int m_hard = (stack.feet_hard ? 6 * kNumContacts : 0) + (stack.com_hard ? 3 : 0);
    if (m_hard > nv)
    {
        throw std::invalid_argument("hard task rows exceed the velocity variables");
    }

    MatX a_eq = MatX::Zero(m_hard, nv);
    VecX b_eq = VecX::Zero(m_hard);
    int row = 0;
    if (stack.feet_hard)
    {
        for (int i = 0; i < kNumContacts; ++i)
        {
            const auto fi = static_cast<std::size_t>(i);
            const std::string& frame = contact_names()[fi];
            const Pose current = forward_kinematics(model, state, frame);
            a_eq.middleRows(row, 6) = jacobian(model, state, frame);
            b_eq.segment<3>(row) =
                targets.foot_velocity[fi].head<3>()
                + stack.foot_gain * (targets.foot_pose[fi].position - current.position);
            b_eq.segment<3>(row + 3) =
                targets.foot_velocity[fi].tail<3>()
                + stack.foot_gain
                      * log_so3(targets.foot_pose[fi].rotation * current.rotation.transpose());
            row += 6;
        }
    }
    if (stack.com_hard)
    {
        const CentroidalState centroidal = com_and_momentum(model, state);
        a_eq.middleRows(row, 3) = com_jacobian(model, state);
        b_eq.segment<3>(row) =
            targets.com_velocity + stack.com_gain * (targets.com_position - centroidal.p_com);
        row += 3;
    }

    MatX h = MatX::Zero(nv, nv);
    VecX c = VecX::Zero(nv);
    h.topLeftCorner(6, 6) = stack.base_weight * Eigen::Matrix<double, 6, 6>::Identity();
    h.bottomRightCorner(n, n) += stack.postural_weight * MatX::Identity(n, n);
    c.tail(n) -= stack.postural_weight * stack.postural_gain * (targets.q_postural - state.q);
    if (stack.chest_soft && stack.chest_weight > 0.0)
    {
        const Pose chest = forward_kinematics(model, state, stack.chest_frame);
        const MatX j_ang = jacobian(model, state, stack.chest_frame).bottomRows(3);
        const Vec3 omega_des =
            stack.chest_gain * log_so3(targets.chest_orientation * chest.rotation.transpose());
        h += stack.chest_weight * j_ang.transpose() * j_ang;
        c -= stack.chest_weight * j_ang.transpose() * omega_des;
    }

    QpProblem problem;
    problem.H = h;
    problem.c = c;
    problem.A_eq = a_eq;
    problem.b_eq = b_eq;
    problem.A_in = MatX::Zero(0, nv);
    problem.l_in = VecX::Zero(0);
    problem.u_in = VecX::Zero(0);

    QpSettings settings;
    settings.tol = 1e-8;
    const QpSolution sol = solve_qp(problem, settings);
    if (sol.status == QpStatus::Infeasible || sol.status == QpStatus::Unbounded)
    {
        std::ostringstream msg;
        msg << "ik hard tasks " << to_string(sol.status) << ";";
        int at = 0;
        if (stack.feet_hard)
        {
            for (int i = 0; i < kNumContacts; ++i)
            {
                msg << " " << contact_names()[static_cast<std::size_t>(i)] << " residual "
                    << b_eq.segment<6>(at).norm();
                at += 6;
            }
        }
        if (stack.com_hard)
        {
            msg << " com residual " << b_eq.segment<3>(at).norm();
        }
        throw std::runtime_error(msg.str());
    }
    if (sol.status == QpStatus::MaxIter)
    {
        log::warn("ik qp hit the iteration limit, residual "
                  + std::to_string(sol.kkt_residual));
    }

    IkResult result;
    result.nu = sol.x;
    result.dq = sol.x.tail(n);
    result.q_next = state.q + dt * result.dq;
    result.hard_residual =
        m_hard > 0 ? (a_eq * sol.x - b_eq).cwiseAbs().maxCoeff() : 0.0;
    result.qp_iterations = sol.iterations;
    return result;
}

} // namespace loco
