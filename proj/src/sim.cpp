#include <loco/sim.hpp>

#include <loco/csv.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace loco
{

namespace
{

void require(bool ok, const char* msg)
{
    if (!ok)
    {
        throw std::invalid_argument(msg);
    }
}

CentroidalState advanced(const CentroidalState& s, const CentroidalDerivative& d, double a)
{
    CentroidalState out;
    out.p_com = s.p_com + a * d.p_com_dot;
    out.h_lin = s.h_lin + a * d.h_lin_dot;
    out.h_ang = s.h_ang + a * d.h_ang_dot;
    return out;
}

double total_vertical_force(const VertexForces& forces)
{
    double fz = 0.0;
    for (const auto& contact : forces)
    {
        for (const auto& f : contact)
        {
            fz += f.z();
        }
    }
    return fz;
}

} // namespace

CentroidalState plant_step(const CentroidalState& state, const VertexForces& forces,
                           const std::array<ContactPatch, kNumContacts>& patches,
                           const std::array<int, kNumContacts>& gamma,
                           const RobotParams& params,
                           const std::optional<DisturbanceWrench>& disturbance, double dt)
{
    require(dt > 0.0, "plant step size must be positive");
    const auto rhs = [&](const CentroidalState& s) {
        return centroidal_rhs(s, forces, patches, gamma, params, disturbance);
    };
    const CentroidalDerivative k1 = rhs(state);
    const CentroidalDerivative k2 = rhs(advanced(state, k1, dt / 2.0));
    const CentroidalDerivative k3 = rhs(advanced(state, k2, dt / 2.0));
    const CentroidalDerivative k4 = rhs(advanced(state, k3, dt));

    CentroidalState out;
    out.p_com = state.p_com
                + dt / 6.0 * (k1.p_com_dot + 2.0 * k2.p_com_dot + 2.0 * k3.p_com_dot + k4.p_com_dot);
    out.h_lin = state.h_lin
                + dt / 6.0 * (k1.h_lin_dot + 2.0 * k2.h_lin_dot + 2.0 * k3.h_lin_dot + k4.h_lin_dot);
    out.h_ang = state.h_ang
                + dt / 6.0 * (k1.h_ang_dot + 2.0 * k2.h_ang_dot + 2.0 * k3.h_ang_dot + k4.h_ang_dot);
    return out;
}

Vec2 zmp_from_forces(const std::array<ContactPatch, kNumContacts>& patches,
                     const VertexForces& forces)
{
    double fz = 0.0;
    Vec3 weighted = Vec3::Zero();
    for (int i = 0; i < kNumContacts; ++i)
    {
        for (int j = 0; j < kNumVertices; ++j)
        {
            const double w =
                forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].z();
            fz += w;
            weighted += w * patches[static_cast<std::size_t>(i)].vertex_world(j);
        }
    }
    if (!(fz > 1.0))
    {
        std::ostringstream msg;
        msg << "zmp undefined: total vertical force " << fz << " N does not exceed 1 N";
        throw std::domain_error(msg.str());
    }
    return (weighted / fz).head<2>();
}

ReferenceBundle slice_bundle(const ReferenceBundle& bundle, std::size_t first,
                             std::size_t count)
{
    if (count == 0)
    {
        throw std::invalid_argument("bundle window must hold at least one sample");
    }
    if (first + count > bundle.samples())
    {
        std::ostringstream msg;
        msg << "bundle window [" << first << ", " << first + count << ") exceeds "
            << bundle.samples() << " samples";
        throw std::out_of_range(msg.str());
    }
    ReferenceBundle out;
    out.sampling_period = bundle.sampling_period;
    out.start_time = bundle.sample_time(first);
    const auto begin = static_cast<std::ptrdiff_t>(first);
    const auto end = static_cast<std::ptrdiff_t>(first + count);
    out.com_ref.assign(bundle.com_ref.begin() + begin, bundle.com_ref.begin() + end);
    out.h_ang_ref.assign(bundle.h_ang_ref.begin() + begin, bundle.h_ang_ref.begin() + end);
    out.joint_postural.assign(bundle.joint_postural.begin() + begin,
                              bundle.joint_postural.begin() + end);
    out.nominal_force_z.assign(bundle.nominal_force_z.begin() + begin,
                               bundle.nominal_force_z.begin() + end);
    out.footsteps = bundle.footsteps;
    out.timeline = bundle.timeline;
    return out;
}

void Scenario::validate() const
{
    require(duration > 0.0, "scenario duration must be positive");
    require(joint_noise_std >= 0.0, "joint noise std must be non-negative");
    for (std::size_t i = 1; i < commands.size(); ++i)
    {
        require(commands[i].t_start >= commands[i - 1].t_start,
                "command segments must be sorted by start time");
    }
    std::vector<ScheduledPush> sorted = pushes;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScheduledPush& a, const ScheduledPush& b) {
                  return a.t_start < b.t_start;
              });
    double prev_end = 0.0;
    bool first = true;
    for (const ScheduledPush& push : sorted)
    {
        require(push.duration > 0.0, "push duration must be positive");
        require(push.wrench.finite(), "push wrench must be finite");
        require(push.t_start >= 0.0 && push.t_start + push.duration <= duration,
                "push window must lie within the scenario duration");
        require(first || push.t_start >= prev_end, "push windows must not overlap");
        prev_end = push.t_start + push.duration;
        first = false;
    }
}

Vec3 Scenario::command_at(double t) const
{
    Vec3 cmd = Vec3::Zero();
    for (const CommandSegment& seg : commands)
    {
        if (seg.t_start <= t)
        {
            cmd = seg.command;
        }
    }
    return cmd;
}

std::optional<DisturbanceWrench> Scenario::push_at(double t, const Vec3& com) const
{
    for (const ScheduledPush& push : pushes)
    {
        if (t >= push.t_start && t < push.t_start + push.duration)
        {
            DisturbanceWrench w = push.wrench;
            w.application_point = com + push.wrench.application_point;
            return w;
        }
    }
    return std::nullopt;
}

void SimConfig::validate() const
{
    gait.validate();
    mpc.validate();
    zmp_gains.validate();
    ik.validate();
    require(t_control > 0.0, "control period must be positive");
    require(lead_window >= 0.0, "lead window must be non-negative");
    const double ratio = mpc.t_mpc / t_control;
    require(std::abs(ratio - std::round(ratio)) < 1e-9,
            "control period must divide the planner period");
    kf_config_from_genes(kf_genes, t_control).validate();
}

namespace
{

struct TraceFiles
{
    CsvWriter state;
    CsvWriter footsteps;
    CsvWriter forces;
    CsvWriter zmp;

    bool active() const { return state.is_open(); }

    void open(const std::string& dir)
    {
        std::filesystem::create_directories(dir);
        state.open(dir + "/state.csv",
                   {"time", "com_x", "com_y", "com_z", "h_lin_x", "h_lin_y", "h_lin_z",
                    "h_ang_x", "h_ang_y", "h_ang_z", "com_kin_x", "com_kin_y", "com_kin_z",
                    "com_ref_x", "com_ref_y", "com_ref_z"});
        footsteps.open(dir + "/footsteps.csv",
                       {"time", "cycle", "contact", "nominal_x", "nominal_y", "adjusted_x",
                        "adjusted_y", "adjustment", "activation_time", "deactivation_time"});
        std::vector<std::string> force_cols{"time", "cycle", "gamma_l", "gamma_r"};
        for (const std::string& name : contact_names())
        {
            for (int j = 0; j < kNumVertices; ++j)
            {
                for (const char* axis : {"_x", "_y", "_z"})
                {
                    force_cols.push_back("f_" + name + "_v" + std::to_string(j) + axis);
                }
            }
        }
        forces.open(dir + "/forces.csv", force_cols);
        zmp.open(dir + "/zmp.csv", {"time", "ref_x", "ref_y", "meas_x", "meas_y", "error"});
    }
};

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_summary(const std::string& dir, const Scenario& scenario, OcpMode mode,
                   const RunMetrics& m)
{
    std::ofstream out(dir + "/summary.txt");
    if (!out)
    {
        throw std::runtime_error("cannot open " + dir + "/summary.txt for writing");
    }
    out << "mode=" << (mode == OcpMode::Rhp ? "rhp" : "mpc") << "\n";
    out << "plant=" << (scenario.plant == PlantMode::Ideal ? "ideal" : "integrating") << "\n";
    out << "duration=" << format_double(scenario.duration) << "\n";
    out << "seed=" << scenario.seed << "\n";
    out << "cycles=" << m.cycles << "\n";
    out << "control_ticks=" << m.control_ticks << "\n";
    out << "fell=" << (m.fell ? 1 : 0) << "\n";
    out << "aborted=" << (m.aborted ? 1 : 0) << "\n";
    out << "abort_cycle=" << m.abort_cycle << "\n";
    out << "failure=" << m.failure << "\n";
    out << "max_footstep_adjustment=" << format_double(m.max_footstep_adjustment) << "\n";
    out << "cbf_min_margin=" << format_double(m.cbf_min_margin) << "\n";
    out << "friction_violations=" << m.friction_violations << "\n";
    out << "zmp_rmse=" << format_double(m.zmp_rmse) << "\n";
    out << "unconverged_cycles=" << m.unconverged_cycles << "\n";
    out << "stale_cycles=" << m.stale_cycles << "\n";
    out << "min_com_z=" << format_double(m.min_com_z) << "\n";
    out << "max_com_z=" << format_double(m.max_com_z) << "\n";
}

/** Full closed-loop state of one scenario run. */
class Harness
{
  public:
    Harness(const ChainModel& model, const RobotParams& params, const SimConfig& cfg,
            const Scenario& scenario, OcpMode mode)
        : model_(model),
          params_(params),
          cfg_(cfg),
          scenario_(scenario),
          mode_(mode),
          generator_(model, cfg.gait, params.gravity.norm()),
          adjuster_(mode, cfg.mpc, params),
          rng_(scenario.seed),
          kf_cfg_(kf_config_from_genes(cfg.kf_genes, cfg.t_control)),
          cone_(friction_facets(params.friction_mu, cfg.mpc.friction.n_facets)),
          vertex_offsets_(foot_vertex_offsets(params))
    {
        ticks_per_cycle_ = static_cast<int>(std::llround(cfg.mpc.t_mpc / cfg.t_control));
        n_slices_ = static_cast<int>(std::llround(
            sync_period(cfg.mpc.t_mpc, cfg.gait.scale_eta, cfg.gait.period_dnn)
            / cfg.mpc.t_mpc));
        reset_index_ = sync_reset_index(cfg.mpc.t_mpc, cfg.gait.scale_eta,
                                        cfg.gait.period_dnn);
        gen_span_ = (cfg.mpc.horizon_samples + n_slices_ + 1) * cfg.mpc.t_mpc;

        gen_state_ = generator_.initial_state();
        playback_ = RobotState::zero(model);
        playback_.base_pose = gen_state_.base_pose;
        playback_.q = gen_state_.q;
        for (int i = 0; i < kNumContacts; ++i)
        {
            foot_hold_[static_cast<std::size_t>(i)] = forward_kinematics(
                model_, playback_, contact_names()[static_cast<std::size_t>(i)]);
        }
        plant_ = com_and_momentum(model_, playback_);
        plant_.h_lin.setZero();
        plant_.h_ang.setZero();
        flags_.gamma = {1, 1};
        flags_.sigma = {1, 1};
    }

    RunMetrics run(const std::string& out_dir)
    {
        RunMetrics metrics;
        TraceFiles traces;
        if (!out_dir.empty())
        {
            traces.open(out_dir);
        }

        const int total_ticks =
            static_cast<int>(std::llround(scenario_.duration / cfg_.t_control));
        for (int tick = 0; tick < total_ticks; ++tick)
        {
            const double t = tick * cfg_.t_control;
            const int cycle = tick / ticks_per_cycle_;
            try
            {
                if (tick % ticks_per_cycle_ == 0)
                {
                    plan_cycle(t, cycle, metrics, traces);
                }
                control_tick(tick, t);
                log_tick(t, traces);
                advance_plant(t);
            }
            catch (const std::exception& e)
            {
                metrics.aborted = true;
                metrics.abort_cycle = cycle;
                metrics.failure = e.what();
                break;
            }
            ++metrics.control_ticks;
            update_plant_metrics(metrics);
            if (check_fall())
            {
                metrics.fell = true;
                break;
            }
        }

        metrics.deadline_misses = adjuster_.deadline_misses();
        metrics.zmp_rmse =
            zmp_samples_ > 0 ? std::sqrt(zmp_error_sq_ / zmp_samples_) : 0.0;
        if (!std::isfinite(metrics.min_com_z))
        {
            metrics.min_com_z = plant_.p_com.z();
            metrics.max_com_z = plant_.p_com.z();
        }
        if (traces.active())
        {
            write_summary(out_dir, scenario_, mode_, metrics);
        }
        return metrics;
    }

  private:
    void plan_cycle(double t, int cycle, RunMetrics& metrics, TraceFiles& traces)
    {
        if (slice_ == 0)
        {
            const Vec3 cmd = scenario_.command_at(t);
            horizon_ = generator_.generate_horizon(gen_state_, cmd, gen_span_,
                                                   cfg_.mpc.t_mpc, cfg_.lead_window);
            gen_state_ = horizon_.states.at(static_cast<std::size_t>(reset_index_));
        }
        window_ = slice_bundle(horizon_.bundle, static_cast<std::size_t>(slice_),
                               static_cast<std::size_t>(cfg_.mpc.horizon_samples) + 1);
        slice_ = (slice_ + 1) % n_slices_;
        anchor_active_footsteps(t);

        if (scenario_.plant == PlantMode::Ideal && pending_plant_)
        {
            plant_ = *pending_plant_;
            pending_plant_.reset();
        }
        if (scenario_.plant == PlantMode::Ideal && !adjuster_.primed())
        {
            plant_ = reference_start_state();
        }

        std::optional<CentroidalState> measured;
        std::optional<DisturbanceWrench> announced;
        if (mode_ == OcpMode::Rhp)
        {
            announced = scenario_.push_at(t, plant_.p_com);
        }
        else if (scenario_.plant == PlantMode::Ideal)
        {
            measured = plant_;
        }
        else
        {
            measured = reconstruct_measurement();
        }

        const AdvanceOutput out = adjuster_.advance(window_, measured, announced);
        solution_ = out.solution;
        if (scenario_.plant == PlantMode::Ideal)
        {
            pending_plant_ = out.control_state;
        }

        ++metrics.cycles;
        metrics.solve_times.push_back(out.solution.stats.wall_time);
        if (!out.solution.stats.converged)
        {
            ++metrics.unconverged_cycles;
        }
        if (out.stale_feedback)
        {
            ++metrics.stale_cycles;
        }
        record_adjustments(t, cycle, metrics, traces);
        record_forces(t, cycle, metrics, traces);
        retarget_swings(t);
    }

    /** The reference plan places footsteps where the generator imagined them;
     * the stance feet are wherever the swing controller actually landed them.
     * Rewriting the active footsteps keeps the transcription's pinned node-0
     * contacts on the physical poses. */
    void anchor_active_footsteps(double t)
    {
        for (Footstep& fs : window_.footsteps)
        {
            const int i = contact_index(fs.contact_name);
            if (i < 0)
            {
                continue;
            }
            if (fs.activation_time <= t && t < fs.deactivation_time)
            {
                fs.pose = foot_hold_[static_cast<std::size_t>(i)];
            }
        }
    }

    CentroidalState reference_start_state() const
    {
        CentroidalState state;
        state.p_com = window_.com_ref.front();
        if (window_.samples() >= 2)
        {
            state.h_lin = params_.mass * (window_.com_ref[1] - window_.com_ref[0])
                          / window_.sampling_period;
        }
        state.h_ang = window_.h_ang_ref.front();
        return state;
    }

    void ensure_filters()
    {
        if (!filters_.empty())
        {
            return;
        }
        filters_.reserve(static_cast<std::size_t>(model_.n_joints()));
        for (int j = 0; j < model_.n_joints(); ++j)
        {
            const double y = playback_.q[j] + scenario_.joint_noise_std * gauss_(rng_);
            filters_.push_back(kf_init(kf_cfg_, y));
        }
    }

    void step_filters()
    {
        ensure_filters();
        for (int j = 0; j < model_.n_joints(); ++j)
        {
            const double y = playback_.q[j] + scenario_.joint_noise_std * gauss_(rng_);
            filters_[static_cast<std::size_t>(j)] =
                kf_step(filters_[static_cast<std::size_t>(j)], kf_cfg_, y);
        }
    }

    /** Centroidal state as the estimator sees it: filtered joint positions and
     * velocities on a base anchored so the noise-free reconstruction matches
     * the plant; the angular momentum comes from the plant since the playback
     * kinematics carry no momentum feedback. */
    CentroidalState reconstruct_measurement()
    {
        ensure_filters();
        const CentroidalState kin = com_and_momentum(model_, playback_);
        RobotState meas = playback_;
        meas.base_pose.position += plant_.p_com - kin.p_com;
        meas.base_twist.head<3>() += (plant_.h_lin - kin.h_lin) / model_.total_mass();
        for (int j = 0; j < model_.n_joints(); ++j)
        {
            meas.q[j] = filters_[static_cast<std::size_t>(j)].x[0];
            meas.dq[j] = filters_[static_cast<std::size_t>(j)].x[1];
        }
        CentroidalState out = com_and_momentum(model_, meas);
        out.h_ang = plant_.h_ang;
        return out;
    }

    std::optional<Footstep> upcoming_footstep(int contact, double t) const
    {
        std::optional<Footstep> best;
        for (const Footstep& fs : solution_->adjusted_footsteps)
        {
            if (contact_index(fs.contact_name) != contact || fs.activation_time <= t)
            {
                continue;
            }
            if (!best || fs.activation_time < best->activation_time)
            {
                best = fs;
            }
        }
        return best;
    }

    void retarget_swings(double t)
    {
        for (int i = 0; i < kNumContacts; ++i)
        {
            auto& plan = swing_[static_cast<std::size_t>(i)];
            if (!plan || !solution_)
            {
                continue;
            }
            const auto next = upcoming_footstep(i, t);
            if (!next || t <= plan->t0 || t >= plan->t1)
            {
                continue;
            }
            Pose target = plan->target;
            target.position = next->pose.position;
            if ((target.position - plan->target.position).norm() > 1e-9)
            {
                *plan = replan_swing(*plan, t, target);
            }
        }
    }

    void control_tick(int tick, double t)
    {
        if (mode_ == OcpMode::Mpc && scenario_.plant == PlantMode::Integrating)
        {
            if (tick == 0)
            {
                ensure_filters();
            }
            else
            {
                step_filters();
            }
        }

        const ContactFlags flags = contact_flags_at(window_.timeline, t);
        for (int i = 0; i < kNumContacts; ++i)
        {
            const auto idx = static_cast<std::size_t>(i);
            if (flags_.gamma[idx] == 1 && flags.gamma[idx] == 0)
            {
                start_swing(i, t);
            }
            if (flags_.gamma[idx] == 0 && flags.gamma[idx] == 1)
            {
                if (swing_[idx])
                {
                    foot_hold_[idx] = swing_[idx]->target;
                    swing_[idx].reset();
                }
            }
        }
        flags_ = flags;

        IkTargets targets = build_targets(tick, t);
        const IkResult result = ik_step(model_, playback_, cfg_.ik, targets, cfg_.t_control);
        playback_.q = result.q_next;
        playback_.dq = result.dq;
        playback_.base_twist = result.nu.head<6>();
        playback_.base_pose.position += cfg_.t_control * result.nu.head<3>();
        playback_.base_pose.rotation =
            exp_so3(cfg_.t_control * result.nu.segment<3>(3)) * playback_.base_pose.rotation;
    }

    void start_swing(int contact, double t)
    {
        const auto idx = static_cast<std::size_t>(contact);
        Pose target = foot_hold_[idx];
        double t1 = t + cfg_.gait.step_duration * (1.0 - cfg_.gait.ds_ratio);
        std::optional<Footstep> next;
        if (solution_)
        {
            next = upcoming_footstep(contact, t);
        }
        if (!next)
        {
            for (const Footstep& fs : window_.footsteps)
            {
                if (contact_index(fs.contact_name) != contact || fs.activation_time <= t)
                {
                    continue;
                }
                if (!next || fs.activation_time < next->activation_time)
                {
                    next = fs;
                }
            }
        }
        if (next)
        {
            target = next->pose;
            t1 = next->activation_time;
        }
        if (t1 <= t)
        {
            return;
        }
        swing_[idx] = plan_swing(foot_hold_[idx], target, t, t1, cfg_.gait.swing_apex);
    }

    IkTargets build_targets(int tick, double t)
    {
        IkTargets targets;
        for (int i = 0; i < kNumContacts; ++i)
        {
            const auto idx = static_cast<std::size_t>(i);
            if (swing_[idx])
            {
                targets.foot_pose[idx] = swing_pose(*swing_[idx], t);
                targets.foot_velocity[idx] = swing_velocity(*swing_[idx], t);
            }
            else
            {
                targets.foot_pose[idx] = foot_hold_[idx];
            }
        }

        const double s =
            static_cast<double>(tick % ticks_per_cycle_) / ticks_per_cycle_;
        const Vec3& c0 = solution_->predicted_com[0];
        const Vec3& c1 = solution_->predicted_com[1];
        com_target_ = (1.0 - s) * c0 + s * c1;
        const Vec3 v_ff = (c1 - c0) / cfg_.mpc.t_mpc;

        const CentroidalState com_now = current_estimate();
        const Vec2 zmp_ref = desired_zmp();
        const Vec2 zmp_meas = applied_zmp(t, zmp_ref);
        last_zmp_ref_ = zmp_ref;
        last_zmp_meas_ = zmp_meas;
        const Vec2 v_xy = com_zmp_law(com_target_.head<2>(), v_ff.head<2>(),
                                      com_now.p_com.head<2>(), zmp_ref, zmp_meas,
                                      cfg_.zmp_gains);

        targets.com_position = com_target_;
        targets.com_velocity = Vec3(v_xy.x(), v_xy.y(), v_ff.z());

        targets.q_postural =
            (1.0 - s) * window_.joint_postural[0] + s * window_.joint_postural[1];
        targets.chest_orientation = yaw_rotation(yaw_of(playback_.base_pose.rotation));
        return targets;
    }

    CentroidalState current_estimate()
    {
        if (mode_ == OcpMode::Mpc && scenario_.plant == PlantMode::Integrating)
        {
            return reconstruct_measurement();
        }
        return plant_;
    }

    std::array<ContactPatch, kNumContacts> plant_patches(double t) const
    {
        std::array<ContactPatch, kNumContacts> patches;
        for (int i = 0; i < kNumContacts; ++i)
        {
            const auto idx = static_cast<std::size_t>(i);
            patches[idx].name = contact_names()[idx];
            patches[idx].pose =
                swing_[idx] ? swing_pose(*swing_[idx], t) : foot_hold_[idx];
            patches[idx].vertices = vertex_offsets_;
        }
        return patches;
    }

    Vec2 desired_zmp() const
    {
        std::array<ContactPatch, kNumContacts> patches;
        for (int i = 0; i < kNumContacts; ++i)
        {
            const auto idx = static_cast<std::size_t>(i);
            patches[idx].name = contact_names()[idx];
            patches[idx].pose.position = solution_->decision.p_contact[0][idx];
            patches[idx].pose.rotation = foot_hold_[idx].rotation;
            patches[idx].vertices = vertex_offsets_;
        }
        if (total_vertical_force(solution_->decision.forces[0]) <= 1.0)
        {
            return last_zmp_ref_;
        }
        return zmp_from_forces(patches, solution_->decision.forces[0]);
    }

    Vec2 applied_zmp(double t, const Vec2& fallback) const
    {
        if (total_vertical_force(solution_->decision.forces[0]) <= 1.0)
        {
            return fallback;
        }
        return zmp_from_forces(plant_patches(t), solution_->decision.forces[0]);
    }

    void record_adjustments(double t, int cycle, RunMetrics& metrics, TraceFiles& traces)
    {
        for (const Footstep& fs : solution_->adjusted_footsteps)
        {
            const int i = contact_index(fs.contact_name);
            if (i < 0 || fs.activation_time <= t)
            {
                continue;
            }
            const Footstep* nominal = nullptr;
            for (const Footstep& ref : window_.footsteps)
            {
                if (ref.contact_name == fs.contact_name
                    && std::abs(ref.activation_time - fs.activation_time) < 1e-9)
                {
                    nominal = &ref;
                    break;
                }
            }
            if (nominal == nullptr)
            {
                continue;
            }
            const double adjustment =
                (fs.pose.position - nominal->pose.position).head<2>().norm();
            metrics.max_footstep_adjustment =
                std::max(metrics.max_footstep_adjustment, adjustment);
            if (traces.active())
            {
                traces.footsteps.row({t, static_cast<double>(cycle),
                                      static_cast<double>(i),
                                      nominal->pose.position.x(),
                                      nominal->pose.position.y(), fs.pose.position.x(),
                                      fs.pose.position.y(), adjustment,
                                      fs.activation_time, fs.deactivation_time});
            }
        }
    }

    void record_forces(double t, int cycle, RunMetrics& metrics, TraceFiles& traces)
    {
        const ContactFlags flags = contact_flags_at(window_.timeline, t);
        const VertexForces& forces = solution_->decision.forces[0];
        const double tol = 1e-6 * std::max(1.0, params_.weight());
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (flags.gamma[static_cast<std::size_t>(i)] == 0)
            {
                continue;
            }
            for (int j = 0; j < kNumVertices; ++j)
            {
                const Vec3& f =
                    forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                const VecX margin = cone_.A * f - cone_.b;
                if (margin.maxCoeff() > tol)
                {
                    ++metrics.friction_violations;
                }
            }
        }
        if (traces.active())
        {
            std::vector<double> row{t, static_cast<double>(cycle),
                                    static_cast<double>(flags.gamma[0]),
                                    static_cast<double>(flags.gamma[1])};
            for (int i = 0; i < kNumContacts; ++i)
            {
                for (int j = 0; j < kNumVertices; ++j)
                {
                    const Vec3& f =
                        forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                    row.insert(row.end(), {f.x(), f.y(), f.z()});
                }
            }
            traces.forces.row(row);
        }
    }

    void log_tick(double t, TraceFiles& traces)
    {
        const double zmp_err = (last_zmp_ref_ - last_zmp_meas_).norm();
        zmp_error_sq_ += zmp_err * zmp_err;
        ++zmp_samples_;
        if (!traces.active())
        {
            return;
        }
        const Vec3 com_kin = com_and_momentum(model_, playback_).p_com;
        traces.state.row({t, plant_.p_com.x(), plant_.p_com.y(), plant_.p_com.z(),
                          plant_.h_lin.x(), plant_.h_lin.y(), plant_.h_lin.z(),
                          plant_.h_ang.x(), plant_.h_ang.y(), plant_.h_ang.z(),
                          com_kin.x(), com_kin.y(), com_kin.z(), com_target_.x(),
                          com_target_.y(), com_target_.z()});
        traces.zmp.row({t, last_zmp_ref_.x(), last_zmp_ref_.y(), last_zmp_meas_.x(),
                        last_zmp_meas_.y(), zmp_err});
    }

    void advance_plant(double t)
    {
        if (scenario_.plant != PlantMode::Integrating)
        {
            return;
        }
        VertexForces forces = solution_->decision.forces[0];
        std::array<int, kNumContacts> gamma{flags_.gamma[0], flags_.gamma[1]};
        plant_ = plant_step(plant_, forces, plant_patches(t), gamma, params_,
                            scenario_.push_at(t, plant_.p_com), cfg_.t_control);
    }

    void update_plant_metrics(RunMetrics& metrics) const
    {
        metrics.cbf_min_margin =
            std::min(metrics.cbf_min_margin,
                     cbf_value(plant_.p_com.z(), params_, cfg_.mpc.cbf.alpha));
        metrics.min_com_z = std::min(metrics.min_com_z, plant_.p_com.z());
        metrics.max_com_z = std::max(metrics.max_com_z, plant_.p_com.z());
    }

    bool check_fall() const
    {
        if (plant_.p_com.z() < params_.com_z_min - 0.05)
        {
            return true;
        }
        Vec2 centroid = Vec2::Zero();
        std::vector<Vec2> hull;
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (flags_.gamma[static_cast<std::size_t>(i)] == 0)
            {
                continue;
            }
            const Pose& pose = foot_hold_[static_cast<std::size_t>(i)];
            for (int j = 0; j < kNumVertices; ++j)
            {
                const Vec3 v = pose * vertex_offsets_[static_cast<std::size_t>(j)];
                hull.push_back(v.head<2>());
                centroid += v.head<2>();
            }
        }
        if (hull.empty())
        {
            return false;
        }
        centroid /= static_cast<double>(hull.size());
        double radius = 0.0;
        for (const Vec2& v : hull)
        {
            radius = std::max(radius, (v - centroid).norm());
        }
        return (plant_.p_com.head<2>() - centroid).norm() > 1.5 * radius;
    }

    const ChainModel& model_;
    RobotParams params_;
    SimConfig cfg_;
    Scenario scenario_;
    OcpMode mode_;
    GaitGenerator generator_;
    TrajectoryAdjuster adjuster_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> gauss_{0.0, 1.0};
    KfConfig kf_cfg_;
    FrictionCone cone_;
    std::array<Vec3, kNumVertices> vertex_offsets_;

    int ticks_per_cycle_{1};
    int n_slices_{1};
    int reset_index_{1};
    double gen_span_{0.0};

    GeneratorState gen_state_;
    HorizonResult horizon_;
    ReferenceBundle window_;
    int slice_{0};
    std::optional<OcpSolution> solution_;
    std::optional<CentroidalState> pending_plant_;

    RobotState playback_;
    std::array<Pose, kNumContacts> foot_hold_;
    std::array<std::optional<SwingPlan>, kNumContacts> swing_;
    ContactFlags flags_;
    std::vector<KfState> filters_;

    CentroidalState plant_;
    Vec3 com_target_{Vec3::Zero()};
    Vec2 last_zmp_ref_{Vec2::Zero()};
    Vec2 last_zmp_meas_{Vec2::Zero()};
    double zmp_error_sq_{0.0};
    int zmp_samples_{0};
};

} // namespace

RunMetrics run_scenario(const ChainModel& model, const RobotParams& params,
                        const SimConfig& cfg, const Scenario& scenario, OcpMode mode,
                        const std::string& out_dir)
{
    model.validate();
    params.validate();
    cfg.validate();
    scenario.validate();
    Harness harness(model, params, cfg, scenario, mode);
    return harness.run(out_dir);
}

} // namespace loco
