#pragma once

#include <loco/common.hpp>
#include <loco/model.hpp>

#include <string>
#include <vector>

namespace loco
{

enum class JointType
{
    Fixed,
    Revolute
};

/** @brief One rigid link attached to its parent by a fixed transform and an
 * optional revolute joint acting after that transform. */
struct Link
{
    std::string name;
    int parent{-1};
    Pose origin;
    JointType joint{JointType::Fixed};
    Vec3 axis{Vec3::UnitZ()};
    int q_index{-1};
    double mass{0.0};
    Vec3 com_offset{Vec3::Zero()};
    Mat3 inertia{Mat3::Zero()};
};

/** @brief Tree-structured kinematic model; links are stored parent-first. */
struct ChainModel
{
    std::vector<Link> links;
    int base{0};

    int n_joints() const;
    double total_mass() const;

    /** @brief Index of a named link; throws std::out_of_range when missing. */
    int frame_index(const std::string& name) const;

    bool has_frame(const std::string& name) const;

    /** @brief Names of the revolute joints in q order. */
    std::vector<std::string> joint_names() const;

    /** @brief Throws std::invalid_argument on structural defects. */
    void validate() const;
};

/** @brief Floating-base configuration and velocity.
 *
 * base_twist is mixed representation: linear velocity of the base origin and
 * angular velocity, both in inertial coordinates. q follows the model's
 * revolute-joint order.
 */
struct RobotState
{
    Pose base_pose;
    Vec6 base_twist{Vec6::Zero()};
    VecX q;
    VecX dq;

    static RobotState zero(const ChainModel& model);
};

/** @brief World pose of every link, parent-first order matching model.links. */
std::vector<Pose> link_poses(const ChainModel& model, const RobotState& state);

/** @brief World pose of one named frame. */
Pose forward_kinematics(const ChainModel& model, const RobotState& state,
                        const std::string& frame);

/** @brief Geometric Jacobian of a frame, 6 x (6 + n).
 *
 * Rows: linear then angular, inertial coordinates. Columns: base linear,
 * base angular, then joints in q order.
 */
MatX jacobian(const ChainModel& model, const RobotState& state, const std::string& frame);

/** @brief Jacobian of the whole-body CoM position, 3 x (6 + n). */
MatX com_jacobian(const ChainModel& model, const RobotState& state);

/** @brief Whole-body CoM and centroidal momentum.
 *
 * h_lin = sum of m_l v_l over links; h_ang sums the moments of link momenta
 * about the CoM plus the rotational terms R_l I_l R_l^T w_l.
 */
CentroidalState com_and_momentum(const ChainModel& model, const RobotState& state);

/** @brief Loads a ChainModel from a JSON document (see data/biped.json for the
 * schema: ordered link list with parent, origin, axis, mass, inertia). */
ChainModel load_chain_model(const std::string& path);

/** @brief Same as load_chain_model but from an in-memory JSON string. */
ChainModel parse_chain_model(const std::string& json_text);

} // namespace loco
