#pragma once

#include <loco/common.hpp>

#include <string>
#include <vector>

namespace loco
{

/** @brief Centroidal quantities: CoM position plus linear/angular momentum.
 *
 * Momenta are expressed in a frame centered at the CoM and oriented as the
 * inertial frame.
 */
struct CentroidalState
{
    Vec3 p_com{Vec3::Zero()};
    Vec3 h_lin{Vec3::Zero()};
    Vec3 h_ang{Vec3::Zero()};

    bool finite() const
    {
        return p_com.allFinite() && h_lin.allFinite() && h_ang.allFinite();
    }
};

/** @brief Rectangular contact surface: pose plus four vertices in the patch frame. */
struct ContactPatch
{
    std::string name;
    Pose pose;
    std::array<Vec3, kNumVertices> vertices;

    /** @brief World position of vertex j. */
    Vec3 vertex_world(int j) const
    {
        return pose * vertices[static_cast<std::size_t>(j)];
    }

    /** @brief Throws std::invalid_argument on a non-orthonormal rotation or
     * non-coplanar vertices. */
    void validate() const;
};

/** @brief Planned contact interval with its nominal pose. */
struct Footstep
{
    std::string contact_name;
    Pose pose;
    double activation_time{0.0};
    double deactivation_time{0.0};

    void validate() const;
};

struct ContactFlags
{
    std::array<int, kNumContacts> gamma{0, 0};
    std::array<int, kNumContacts> sigma{0, 0};
};

/** @brief One timeline phase over the half-open interval [t0, t1). */
struct GaitPhase
{
    double t0{0.0};
    double t1{0.0};
    ContactFlags flags;
};

/** @brief Per-contact activity (gamma) and position-freeze (sigma) flags over time.
 *
 * Intervals are half-open so a boundary instant belongs to the next phase.
 */
struct GaitTimeline
{
    std::vector<GaitPhase> phases;
    double lead_window{0.0};

    double span_begin() const { return phases.empty() ? 0.0 : phases.front().t0; }
    double span_end() const { return phases.empty() ? 0.0 : phases.back().t1; }

    /** @brief Throws std::invalid_argument if phases are not contiguous,
     * increasing, or violate sigma >= gamma. */
    void validate() const;
};

/** @brief Mass, gravity, friction and safe-set bounds shared by all layers. */
struct RobotParams
{
    double mass{0.0};
    Vec3 gravity{0.0, 0.0, -9.81};
    double friction_mu{0.5};
    double foot_length{0.0};
    double foot_width{0.0};
    double com_z_min{0.0};
    double com_z_max{0.0};

    void validate() const;

    double weight() const { return mass * gravity.norm(); }
};

/** @brief Reference trajectories handed from the generation layer to the
 * adjustment and control layers.
 *
 * All sample sequences share the same uniform grid t = start_time + k * sampling_period.
 * nominal_force_z carries the per-contact vertical force plan used by the
 * force-regularization cost; it is an artifact of the wiring, not a tracked output.
 */
struct ReferenceBundle
{
    double sampling_period{0.0};
    double start_time{0.0};
    std::vector<Vec3> com_ref;
    std::vector<Vec3> h_ang_ref;
    std::vector<VecX> joint_postural;
    std::vector<std::array<double, kNumContacts>> nominal_force_z;
    std::vector<Footstep> footsteps;
    GaitTimeline timeline;

    std::size_t samples() const { return com_ref.size(); }
    double sample_time(std::size_t k) const
    {
        return start_time + static_cast<double>(k) * sampling_period;
    }
    double end_time() const
    {
        return samples() == 0 ? start_time : sample_time(samples() - 1);
    }

    void validate() const;
};

/** @brief Flags of the unique phase containing t; half-open phase intervals.
 *
 * Throws std::out_of_range when t lies outside the timeline span.
 */
ContactFlags contact_flags_at(const GaitTimeline& timeline, double t);

/** @brief Builds the gamma/sigma phase table from a footstep plan.
 *
 * gamma_i(t) = 1 iff t lies inside a footstep span of contact i; sigma adds a
 * freeze window of lead_window seconds before every activation. Phases cover
 * [0, horizon_end) at least. Throws std::invalid_argument when footsteps of
 * one contact overlap.
 */
GaitTimeline derive_timeline(const std::vector<Footstep>& footsteps, double lead_window,
                             double horizon_end);

/** @brief Index of a contact name in the fixed (left, right) pair, -1 if unknown. */
int contact_index(const std::string& name);

/** @brief Canonical contact names, index order used everywhere. */
const std::array<std::string, kNumContacts>& contact_names();

} // namespace loco
