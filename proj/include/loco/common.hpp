#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace loco
{

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;

constexpr int kNumContacts = 2;
constexpr int kNumVertices = 4;

/** @brief Rigid transform: position + rotation, world convention unless stated. */
struct Pose
{
    Vec3 position{Vec3::Zero()};
    Mat3 rotation{Mat3::Identity()};

    static Pose identity() { return {}; }

    Pose operator*(const Pose& other) const
    {
        return {position + rotation * other.position, rotation * other.rotation};
    }

    Vec3 operator*(const Vec3& p) const { return position + rotation * p; }

    Pose inverse() const
    {
        return {-(rotation.transpose() * position), rotation.transpose()};
    }
};

inline Mat3 skew(const Vec3& v)
{
    Mat3 s;
    s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return s;
}

/** @brief Rodrigues formula, exp of an axis-angle vector. */
inline Mat3 exp_so3(const Vec3& w)
{
    const double theta = w.norm();
    if (theta < 1e-12)
    {
        return Mat3::Identity() + skew(w);
    }
    const Mat3 k = skew(w / theta);
    return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

/** @brief Log map of a rotation matrix, robust near 0 and pi. */
inline Vec3 log_so3(const Mat3& r)
{
    const double cos_theta = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    const double theta = std::acos(cos_theta);
    if (theta < 1e-9)
    {
        return 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    }
    if (theta > M_PI - 1e-6)
    {
        // near pi the antisymmetric part degenerates, use the symmetric one
        Vec3 axis;
        const Mat3 s = 0.5 * (r + Mat3::Identity());
        axis.x() = std::sqrt(std::max(0.0, s(0, 0)));
        axis.y() = std::sqrt(std::max(0.0, s(1, 1)));
        axis.z() = std::sqrt(std::max(0.0, s(2, 2)));
        // fix signs from the off-diagonal terms
        int k = 0;
        axis.maxCoeff(&k);
        for (int i = 0; i < 3; ++i)
        {
            if (i != k && s(k, i) < 0)
            {
                axis[i] = -axis[i];
            }
        }
        if (axis[k] < 0)
        {
            axis = -axis;
        }
        return theta * axis.normalized();
    }
    const double f = theta / (2.0 * std::sin(theta));
    return f * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
}

inline Mat3 yaw_rotation(double yaw)
{
    Mat3 r;
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return r;
}

inline double yaw_of(const Mat3& r) { return std::atan2(r(1, 0), r(0, 0)); }

namespace log
{

enum class Level
{
    Debug = 0,
    Info = 1,
    Warn = 2,
    Error = 3
};

inline Level& threshold()
{
    static Level lvl = [] {
        const char* env = std::getenv("LOCO_LOG");
        if (env == nullptr)
        {
            return Level::Warn;
        }
        const std::string v(env);
        if (v == "debug")
        {
            return Level::Debug;
        }
        if (v == "info")
        {
            return Level::Info;
        }
        if (v == "error")
        {
            return Level::Error;
        }
        return Level::Warn;
    }();
    return lvl;
}

inline void write(Level lvl, const char* tag, const std::string& msg)
{
    if (lvl < threshold())
    {
        return;
    }
    std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

inline void debug(const std::string& msg) { write(Level::Debug, "debug", msg); }
inline void info(const std::string& msg) { write(Level::Info, "info", msg); }
inline void warn(const std::string& msg) { write(Level::Warn, "warn", msg); }
inline void error(const std::string& msg) { write(Level::Error, "error", msg); }

} // namespace log

} // namespace loco
