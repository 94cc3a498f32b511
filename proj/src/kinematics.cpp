#include <loco/kinematics.hpp>

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <fstream>
#include <set>
#include <sstream>

namespace loco
{

namespace
{

/** @brief World axis and joint anchor point per link, filled by the forward pass. */
struct FrameData
{
    std::vector<Pose> poses;
    std::vector<Vec3> axes;
};

FrameData forward_pass(const ChainModel& model, const RobotState& state)
{
    FrameData data;
    data.poses.resize(model.links.size());
    data.axes.resize(model.links.size(), Vec3::Zero());
    for (std::size_t i = 0; i < model.links.size(); ++i)
    {
        const Link& link = model.links[i];
        const Pose parent_pose =
            link.parent < 0 ? state.base_pose
                            : data.poses[static_cast<std::size_t>(link.parent)];
        Pose pose = link.parent < 0 ? state.base_pose : parent_pose * link.origin;
        if (link.joint == JointType::Revolute)
        {
            const double q = state.q[link.q_index];
            pose.rotation = pose.rotation * exp_so3(link.axis * q);
            data.axes[i] = pose.rotation * link.axis;
        }
        data.poses[i] = pose;
    }
    return data;
}

} // namespace

int ChainModel::n_joints() const
{
    int n = 0;
    for (const auto& link : links)
    {
        if (link.joint == JointType::Revolute)
        {
            ++n;
        }
    }
    return n;
}

double ChainModel::total_mass() const
{
    double m = 0.0;
    for (const auto& link : links)
    {
        m += link.mass;
    }
    return m;
}

int ChainModel::frame_index(const std::string& name) const
{
    for (std::size_t i = 0; i < links.size(); ++i)
    {
        if (links[i].name == name)
        {
            return static_cast<int>(i);
        }
    }
    throw std::out_of_range("unknown frame '" + name + "'");
}

bool ChainModel::has_frame(const std::string& name) const
{
    for (const auto& link : links)
    {
        if (link.name == name)
        {
            return true;
        }
    }
    return false;
}

std::vector<std::string> ChainModel::joint_names() const
{
    std::vector<std::string> names(static_cast<std::size_t>(n_joints()));
    for (const auto& link : links)
    {
        if (link.joint == JointType::Revolute)
        {
            names[static_cast<std::size_t>(link.q_index)] = link.name;
        }
    }
    return names;
}

void ChainModel::validate() const
{
    if (links.empty())
    {
        throw std::invalid_argument("model has no links");
    }
    std::set<std::string> names;
    int joints = 0;
    for (std::size_t i = 0; i < links.size(); ++i)
    {
        const Link& link = links[i];
        if (!names.insert(link.name).second)
        {
            throw std::invalid_argument("duplicate link name '" + link.name + "'");
        }
        if (i == 0 && link.parent >= 0)
        {
            throw std::invalid_argument("first link must be the base");
        }
        if (i > 0 && (link.parent < 0 || link.parent >= static_cast<int>(i)))
        {
            throw std::invalid_argument("link '" + link.name
                                        + "': parent must precede it in the list");
        }
        if (link.mass < 0.0)
        {
            throw std::invalid_argument("link '" + link.name + "': negative mass");
        }
        if ((link.inertia - link.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        {
            throw std::invalid_argument("link '" + link.name + "': inertia not symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Mat3> eig(link.inertia);
        if (eig.eigenvalues().minCoeff() < -1e-9)
        {
            throw std::invalid_argument("link '" + link.name + "': inertia not PSD");
        }
        if (link.joint == JointType::Revolute)
        {
            if (std::abs(link.axis.norm() - 1.0) > 1e-9)
            {
                throw std::invalid_argument("link '" + link.name + "': axis not unit");
            }
            if (link.q_index != joints)
            {
                throw std::invalid_argument("link '" + link.name + "': bad q index");
            }
            ++joints;
        }
    }
    if (!(total_mass() > 0.0))
    {
        throw std::invalid_argument("model total mass must be positive");
    }
}

RobotState RobotState::zero(const ChainModel& model)
{
    RobotState state;
    state.q = VecX::Zero(model.n_joints());
    state.dq = VecX::Zero(model.n_joints());
    return state;
}

std::vector<Pose> link_poses(const ChainModel& model, const RobotState& state)
{
    return forward_pass(model, state).poses;
}

Pose forward_kinematics(const ChainModel& model, const RobotState& state,
                        const std::string& frame)
{
    const int idx = model.frame_index(frame);
    return forward_pass(model, state).poses[static_cast<std::size_t>(idx)];
}

MatX jacobian(const ChainModel& model, const RobotState& state, const std::string& frame)
{
    const int idx = model.frame_index(frame);
    const FrameData data = forward_pass(model, state);
    const Vec3 p_f = data.poses[static_cast<std::size_t>(idx)].position;

    MatX jac = MatX::Zero(6, 6 + model.n_joints());
    jac.block<3, 3>(0, 0) = Mat3::Identity();
    jac.block<3, 3>(0, 3) = -skew(p_f - state.base_pose.position);
    jac.block<3, 3>(3, 3) = Mat3::Identity();

    int cur = idx;
    while (cur >= 0)
    {
        const Link& link = model.links[static_cast<std::size_t>(cur)];
        if (link.joint == JointType::Revolute)
        {
            const auto ci = static_cast<std::size_t>(cur);
            const Vec3& axis = data.axes[ci];
            const Vec3& p_j = data.poses[ci].position;
            jac.block<3, 1>(0, 6 + link.q_index) = axis.cross(p_f - p_j);
            jac.block<3, 1>(3, 6 + link.q_index) = axis;
        }
        cur = link.parent;
    }
    return jac;
}

MatX com_jacobian(const ChainModel& model, const RobotState& state)
{
    const FrameData data = forward_pass(model, state);
    const double total = model.total_mass();

    MatX jac = MatX::Zero(3, 6 + model.n_joints());
    jac.block<3, 3>(0, 0) = Mat3::Identity();

    for (std::size_t l = 0; l < model.links.size(); ++l)
    {
        const Link& link = model.links[l];
        if (link.mass <= 0.0)
        {
            continue;
        }
        const double w = link.mass / total;
        const Vec3 c_l = data.poses[l] * link.com_offset;
        jac.block<3, 3>(0, 3) += w * (-skew(c_l - state.base_pose.position));
        int cur = static_cast<int>(l);
        while (cur >= 0)
        {
            const Link& anc = model.links[static_cast<std::size_t>(cur)];
            if (anc.joint == JointType::Revolute)
            {
                const auto ci = static_cast<std::size_t>(cur);
                jac.block<3, 1>(0, 6 + anc.q_index) +=
                    w * data.axes[ci].cross(c_l - data.poses[ci].position);
            }
            cur = anc.parent;
        }
    }
    return jac;
}

CentroidalState com_and_momentum(const ChainModel& model, const RobotState& state)
{
    const FrameData data = forward_pass(model, state);
    const double total = model.total_mass();

    std::vector<Vec3> lin_vel(model.links.size());
    std::vector<Vec3> ang_vel(model.links.size());
    for (std::size_t i = 0; i < model.links.size(); ++i)
    {
        const Link& link = model.links[i];
        Vec3 v_parent;
        Vec3 w_parent;
        Vec3 p_parent;
        if (link.parent < 0)
        {
            v_parent = state.base_twist.head<3>();
            w_parent = state.base_twist.tail<3>();
            p_parent = state.base_pose.position;
        }
        else
        {
            const auto pi = static_cast<std::size_t>(link.parent);
            v_parent = lin_vel[pi];
            w_parent = ang_vel[pi];
            p_parent = data.poses[pi].position;
        }
        if (link.parent < 0)
        {
            lin_vel[i] = v_parent;
            ang_vel[i] = w_parent;
        }
        else
        {
            lin_vel[i] = v_parent + w_parent.cross(data.poses[i].position - p_parent);
            ang_vel[i] = w_parent;
        }
        if (link.joint == JointType::Revolute)
        {
            ang_vel[i] += data.axes[i] * state.dq[link.q_index];
        }
    }

    CentroidalState out;
    Vec3 weighted_com = Vec3::Zero();
    for (std::size_t i = 0; i < model.links.size(); ++i)
    {
        const Link& link = model.links[i];
        if (link.mass <= 0.0)
        {
            continue;
        }
        weighted_com += link.mass * (data.poses[i] * link.com_offset);
    }
    out.p_com = weighted_com / total;

    for (std::size_t i = 0; i < model.links.size(); ++i)
    {
        const Link& link = model.links[i];
        if (link.mass <= 0.0)
        {
            continue;
        }
        const Vec3 c_l = data.poses[i] * link.com_offset;
        const Vec3 v_c = lin_vel[i] + ang_vel[i].cross(data.poses[i].rotation * link.com_offset);
        const Mat3 inertia_world =
            data.poses[i].rotation * link.inertia * data.poses[i].rotation.transpose();
        out.h_lin += link.mass * v_c;
        out.h_ang += (c_l - out.p_com).cross(link.mass * v_c) + inertia_world * ang_vel[i];
    }
    return out;
}

namespace
{

Vec3 read_vec3(const nlohmann::json& node, const std::string& key, const Vec3& fallback)
{
    if (!node.contains(key))
    {
        return fallback;
    }
    const auto& arr = node.at(key);
    if (!arr.is_array() || arr.size() != 3)
    {
        throw std::invalid_argument("model field '" + key + "' must be a 3-array");
    }
    return {arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
}

Mat3 rpy_rotation(const Vec3& rpy)
{
    return (exp_so3(Vec3::UnitZ() * rpy.z()) * exp_so3(Vec3::UnitY() * rpy.y())
            * exp_so3(Vec3::UnitX() * rpy.x()));
}

} // namespace

ChainModel parse_chain_model(const std::string& json_text)
{
    nlohmann::json doc;
    try
    {
        doc = nlohmann::json::parse(json_text);
    }
    catch (const nlohmann::json::parse_error& err)
    {
        throw std::invalid_argument(std::string("model file is not valid JSON: ")
                                    + err.what());
    }
    if (!doc.contains("links") || !doc.at("links").is_array())
    {
        throw std::invalid_argument("model file needs a 'links' array");
    }

    ChainModel model;
    int q_index = 0;
    for (const auto& node : doc.at("links"))
    {
        Link link;
        link.name = node.at("name").get<std::string>();
        if (node.contains("parent"))
        {
            const std::string parent = node.at("parent").get<std::string>();
            link.parent = model.frame_index(parent);
        }
        link.origin.position = read_vec3(node, "origin_xyz", Vec3::Zero());
        link.origin.rotation = rpy_rotation(read_vec3(node, "origin_rpy", Vec3::Zero()));
        if (node.contains("axis"))
        {
            link.joint = JointType::Revolute;
            link.axis = read_vec3(node, "axis", Vec3::UnitZ()).normalized();
            link.q_index = q_index++;
        }
        link.mass = node.value("mass", 0.0);
        link.com_offset = read_vec3(node, "com", Vec3::Zero());
        const Vec3 inertia_diag = read_vec3(node, "inertia_diag", Vec3::Zero());
        link.inertia = inertia_diag.asDiagonal();
        model.links.push_back(link);
    }
    if (doc.contains("base_link")
        && model.frame_index(doc.at("base_link").get<std::string>()) != 0)
    {
        throw std::invalid_argument("base_link must be the first listed link");
    }
    model.validate();
    return model;
}

ChainModel load_chain_model(const std::string& path)
{
    std::ifstream stream(path);
    if (!stream)
    {
        throw std::runtime_error("cannot open model file " + path);
    }
    std::stringstream buffer;
    buffer << stream.rdbuf();
    return parse_chain_model(buffer.str());
}

} // namespace loco
