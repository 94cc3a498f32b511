#pragma once

#include <loco/control.hpp>
#include <loco/estimation.hpp>
#include <loco/gaitgen.hpp>
#include <loco/kinematics.hpp>
#include <loco/model.hpp>
#include <loco/ocp.hpp>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace loco
{

/** @brief One RK4 step of the centroidal plant under zero-order-hold vertex
 * forces, active-contact flags and an optional external push.
 *
 * Throws std::invalid_argument on non-positive dt or non-finite inputs.
 */
CentroidalState plant_step(const CentroidalState& state, const VertexForces& forces,
                           const std::array<ContactPatch, kNumContacts>& patches,
                           const std::array<int, kNumContacts>& gamma,
                           const RobotParams& params,
                           const std::optional<DisturbanceWrench>& disturbance, double dt);

/** @brief Ground-plane zero-moment point of a vertical force distribution:
 * the f_z-weighted average of the vertex world positions.
 *
 * Throws std::domain_error when the total vertical force is below 1 N (no
 * support, the point is undefined).
 */
Vec2 zmp_from_forces(const std::array<ContactPatch, kNumContacts>& patches,
                     const VertexForces& forces);

/** @brief Contiguous sample window [first, first + count) of a bundle as a
 * stand-alone bundle: start_time shifts onto the window, footsteps and
 * timeline pass through unchanged.
 *
 * Throws std::out_of_range when the window leaves the sample range and
 * std::invalid_argument on an empty window.
 */
ReferenceBundle slice_bundle(const ReferenceBundle& bundle, std::size_t first,
                             std::size_t count);

/** @brief Velocity command holding from t_start until the next segment. */
struct CommandSegment
{
    double t_start{0.0};
    Vec3 command{Vec3::Zero()};
};

/** @brief External push active over [t_start, t_start + duration).
 *
 * The wrench application point is an offset from the current CoM, so a zero
 * offset is a pure force through the CoM.
 */
struct ScheduledPush
{
    double t_start{0.0};
    double duration{0.0};
    DisturbanceWrench wrench;
};

/** @brief Ideal substitutes the adjustment layer's own output for the plant
 * state; Integrating runs the RK4 centroidal plant on the commanded forces. */
enum class PlantMode
{
    Ideal,
    Integrating
};

/** @brief One experiment: command profile, scripted pushes, measurement noise
 * and the plant wiring. */
struct Scenario
{
    double duration{5.0};
    std::vector<CommandSegment> commands;
    std::vector<ScheduledPush> pushes;
    double joint_noise_std{0.0};
    PlantMode plant{PlantMode::Integrating};
    std::uint64_t seed{0};

    /** @brief Throws std::invalid_argument on a non-positive duration,
     * negative noise, unsorted command segments, or push windows that overlap
     * each other or leave [0, duration]. */
    void validate() const;

    /** @brief Command of the last segment starting at or before t; zero
     * before the first segment. */
    Vec3 command_at(double t) const;

    /** @brief The push active at t, its application point resolved to the
     * world frame about com; empty when none is active. */
    std::optional<DisturbanceWrench> push_at(double t, const Vec3& com) const;
};

/** @brief Layer configurations shared by every scenario run. */
struct SimConfig
{
    GaitGenConfig gait;
    MpcConfig mpc;
    ZmpControllerGains zmp_gains;
    IkTaskStack ik;
    Genes kf_genes{(Genes() << 1.0, 1e-6, 1e-4, 1.0, 1e-6).finished()};
    double t_control{0.002};
    double lead_window{0.1};

    /** @brief Throws std::invalid_argument when the control period does not
     * divide the planner period or a member config is invalid. */
    void validate() const;
};

/** @brief Aggregate outcome of one scenario run. Wall-clock solve times stay
 * here and never reach the trace files, which are deterministic. */
struct RunMetrics
{
    int cycles{0};
    int control_ticks{0};
    double max_footstep_adjustment{0.0};
    double cbf_min_margin{std::numeric_limits<double>::infinity()};
    int friction_violations{0};
    bool fell{false};
    double zmp_rmse{0.0};
    std::vector<double> solve_times;
    int deadline_misses{0};
    int unconverged_cycles{0};
    int stale_cycles{0};
    double min_com_z{std::numeric_limits<double>::infinity()};
    double max_com_z{-std::numeric_limits<double>::infinity()};
    bool aborted{false};
    int abort_cycle{-1};
    std::string failure;
};

/** @brief Runs the full stack on a simulated clock: the gait generator
 * produces reference horizons on its synchronization cadence, the adjustment
 * layer solves once per planner period, the 500 Hz control layer tracks the
 * solution through the swing planner, the CoM-ZMP law and the differential IK,
 * and the plant integrates the commanded forces.
 *
 * Mpc mode closes the loop on the measured centroidal state reconstructed
 * from noisy, per-joint Kalman-filtered joint positions anchored to the
 * plant; pushes stay unannounced. Rhp mode feeds the layer's own integrated
 * state and passes the scripted push as the measured disturbance.
 *
 * When out_dir is non-empty, writes state.csv, footsteps.csv, forces.csv,
 * zmp.csv and summary.txt into it; identical scenarios and seeds produce
 * bit-identical files. A layer exception aborts the run and is reported in
 * the metrics together with the failing cycle.
 */
RunMetrics run_scenario(const ChainModel& model, const RobotParams& params,
                        const SimConfig& cfg, const Scenario& scenario, OcpMode mode,
                        const std::string& out_dir = "");

} // namespace loco
