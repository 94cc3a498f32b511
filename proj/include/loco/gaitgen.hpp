#pragma once

#include <loco/kinematics.hpp>
#include <loco/model.hpp>

#include <array>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace loco
{

/** @brief Time-hysteresis contact trigger parameters. */
struct SchmittParams
{
    double height_threshold{0.01};
    double dwell_time{0.04};
};

/** @brief Streaming trigger state: current contact flag plus the length of the
 * run of samples contradicting it. */
struct SchmittState
{
    bool active{false};
    int run{0};
};

/** @brief Feeds one sample (engaged = any corner below the height threshold)
 * and returns the updated contact flag. The flag flips only once the
 * contradicting condition has persisted for dwell_time. */
bool schmitt_step(SchmittState& state, bool engaged, const SchmittParams& params,
                  double sample_period);

/** @brief Batch contact detection over uniformly sampled corner heights.
 *
 * Returns one flag per sample. Throws std::invalid_argument when the time grid
 * is not uniform or sizes disagree.
 */
std::vector<std::uint8_t> detect_contacts(const std::vector<double>& time,
                                          const std::vector<std::array<double, 4>>& corner_heights,
                                          const SchmittParams& params,
                                          SchmittState initial = {});

/** @brief Procedural gait provider settings.
 *
 * period_dnn is the internal tick; scale_eta stretches emitted timestamps (the
 * higher, the slower the playback); scale_gamma contracts consecutive CoM and
 * footstep displacements.
 */
struct GaitGenConfig
{
    double period_dnn{0.02};
    double scale_gamma{1.0};
    int scale_eta{1};
    double step_length{0.15};
    double step_width{0.12};
    double step_duration{0.6};
    double ds_ratio{0.25};
    SchmittParams schmitt{};
    double swing_apex{0.05};

    void validate() const;
};

/** @brief Full autoregressive generator state; copies of it are the reset
 * samples handed back by generate_horizon.
 *
 * base_pose and q are the last emitted output. The anchors keep the
 * displacement-scaling recursion and the contact trigger consistent across
 * horizon regenerations.
 */
struct GeneratorState
{
    double time{0.0};
    double phase{0.0};
    double activity{0.0};
    Vec3 command{Vec3::Zero()};
    Vec3 path_position{Vec3::Zero()};
    double path_yaw{0.0};
    Pose base_pose{};
    VecX q;
    std::array<Pose, kNumContacts> foot_pose{};
    std::array<bool, kNumContacts> swinging{{false, false}};
    std::array<Pose, kNumContacts> swing_origin{};
    std::array<Pose, kNumContacts> swing_target{};
    std::array<SchmittState, kNumContacts> contact_trigger{};
    std::array<double, kNumContacts> contact_since{{0.0, 0.0}};
    std::array<Pose, kNumContacts> last_footstep{};
    Vec3 com_anchor_raw{Vec3::Zero()};
    Vec3 com_anchor_scaled{Vec3::Zero()};
    std::array<Vec3, kNumContacts> foot_anchor_raw{};
    std::array<Vec3, kNumContacts> foot_anchor_scaled{};
};

struct StepOutput
{
    Pose base_pose;
    VecX q;
};

/** @brief One generated horizon plus the per-sample state snapshots; snapshot
 * k reproduces the generator exactly as it was at sample k, so feeding
 * states[r] back as the next start implements the reset-at-index-r contract. */
struct HorizonResult
{
    ReferenceBundle bundle;
    std::vector<GeneratorState> states;
};

/** @brief Deterministic procedural gait surrogate.
 *
 * Emits a periodic walk driven by a planar velocity command: the base
 * integrates the command, feet alternate swings solved by per-leg inverse
 * kinematics, arms and torso counter-swing sinusoidally. Contacts are inferred
 * from foot corner heights through the Schmitt trigger, never asserted
 * directly.
 */
class GaitGenerator
{
  public:
    GaitGenerator(ChainModel model, GaitGenConfig cfg, double gravity_magnitude = 9.81);

    const GaitGenConfig& config() const { return cfg_; }
    const ChainModel& model() const { return model_; }
    double standing_height() const { return standing_height_; }
    const VecX& stand_posture() const { return q_stand_; }

    /** @brief Fresh standing state at a planar position and yaw; both feet in
     * contact since time zero. */
    GeneratorState initial_state(const Vec3& position = Vec3::Zero(),
                                 double yaw = 0.0) const;

    /** @brief Advances one tick: integrates the command, updates the swing
     * state machine, solves leg IK, feeds the contact trigger. Emitted time
     * advances by scale_eta * period_dnn. */
    StepOutput step(GeneratorState& state, const Vec3& command) const;

    /** @brief Generates a reference bundle spanning [state.time, state.time +
     * horizon], resampled to target_period when positive, with the timeline
     * derived using lead_window. The command is held constant.
     */
    HorizonResult generate_horizon(const GeneratorState& state, const Vec3& command,
                                   double horizon, double target_period,
                                   double lead_window) const;

  private:
    Vec3 clamp_command(const Vec3& command) const;
    void solve_leg(int leg, const Pose& base, const Pose& foot_target, VecX& q) const;

    ChainModel model_;
    GaitGenConfig cfg_;
    double weight_;
    double standing_height_{0.0};
    VecX q_stand_;
    std::array<std::vector<int>, kNumContacts> leg_joints_;
    std::array<int, kNumContacts> foot_frame_{};
    int l_shoulder_{-1};
    int r_shoulder_{-1};
    int l_elbow_{-1};
    int r_elbow_{-1};
    int torso_{-1};
};

/** @brief Scales every consecutive displacement by gamma, keeping the first
 * point: out[i] = out[i-1] + gamma * (in[i] - in[i-1]). Applied to consecutive
 * CoM samples and to consecutive footsteps of one contact. Throws
 * std::invalid_argument on an empty sequence or non-positive gamma. */
std::vector<Vec3> scale_plan(const std::vector<Vec3>& points, double gamma);

/** @brief Least common multiple of the planner period and the stretched
 * generator period, both interpreted as integer milliseconds. */
long long sync_period_ms(long long t_mpc_ms, int eta, long long t_dnn_ms);

/** @brief Same synchronization in seconds; throws std::invalid_argument when
 * an input is not an integer number of milliseconds. */
double sync_period(double t_mpc, int eta, double t_dnn);

/** @brief Index of the generator sample used to reset after one
 * synchronization period: sync / (eta * t_dnn). */
int sync_reset_index(double t_mpc, int eta, double t_dnn);

/** @brief First-order-spline resampling of all sample sequences onto a new
 * grid with the same start; footsteps and timeline pass through unchanged.
 *
 * The new grid never extrapolates: it ends at the last multiple of
 * target_period inside the source span. Throws std::invalid_argument on an
 * empty bundle or a non-positive period, std::out_of_range when even one
 * target sample would fall outside the source span.
 */
ReferenceBundle resample(const ReferenceBundle& bundle, double target_period);

/** @brief Nominal per-contact vertical force at time t: full weight on the
 * single stance foot, linear blend across double support between the
 * neighboring distributions, an even split when standing. Components always
 * sum to weight. */
std::array<double, kNumContacts> nominal_vertical_forces(const GaitTimeline& timeline,
                                                         double weight, double t);

/** @brief Background horizon producer with last-value-wins handoff.
 *
 * The worker owns the generator state: every cadence seconds it generates one
 * horizon, publishes it, and resets itself from the snapshot at index
 * cadence / (eta * period_dnn). The referenced generator must outlive the
 * worker. The simulation harness calls generate_horizon synchronously instead;
 * this class exists for the real-time wiring and its soak test.
 */
class HorizonWorker
{
  public:
    struct Params
    {
        double horizon{1.5};
        double target_period{0.0};
        double lead_window{0.0};
        double cadence{0.06};
    };

    HorizonWorker(const GaitGenerator& generator, GeneratorState initial, Params params);
    ~HorizonWorker();

    HorizonWorker(const HorizonWorker&) = delete;
    HorizonWorker& operator=(const HorizonWorker&) = delete;

    void set_command(const Vec3& command);

    /** @brief Copies the newest unseen horizon into out; false when nothing
     * new was published since the last fetch. */
    bool try_latest(HorizonResult& out);

    /** @brief Stops and joins the worker; idempotent. */
    void stop();

  private:
    void loop();

    const GaitGenerator& generator_;
    GeneratorState state_;
    Params params_;
    int reset_index_{0};

    std::mutex mutex_;
    std::condition_variable cv_;
    Vec3 command_{Vec3::Zero()};
    std::optional<HorizonResult> latest_;
    bool fresh_{false};
    bool stop_{false};
    std::thread thread_;
};

} // namespace loco
