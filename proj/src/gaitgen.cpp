#include <loco/gaitgen.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <numbers>
#include <stdexcept>

namespace loco
{

namespace
{

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a)
{
    while (a > kPi)
    {
        a -= 2.0 * kPi;
    }
    while (a < -kPi)
    {
        a += 2.0 * kPi;
    }
    return a;
}

double smootherstep(double w)
{
    return w * w * w * (10.0 + w * (-15.0 + 6.0 * w));
}

int required_run(const SchmittParams& params, double sample_period)
{
    if (!(sample_period > 0.0))
    {
        throw std::invalid_argument("trigger sample period must be positive");
    }
    return static_cast<int>(std::ceil(params.dwell_time / sample_period - 1e-9)) + 1;
}

} // namespace

bool schmitt_step(SchmittState& state, bool engaged, const SchmittParams& params,
                  double sample_period)
{
    const int need = required_run(params, sample_period);
    if (engaged == state.active)
    {
        state.run = 0;
    }
    else
    {
        ++state.run;
        if (state.run >= need)
        {
            state.active = engaged;
            state.run = 0;
        }
    }
    return state.active;
}

std::vector<std::uint8_t> detect_contacts(const std::vector<double>& time,
                                          const std::vector<std::array<double, 4>>& corner_heights,
                                          const SchmittParams& params,
                                          SchmittState initial)
{
    if (time.size() != corner_heights.size())
    {
        throw std::invalid_argument("time and height sequences must have equal length");
    }
    if (time.size() < 2)
    {
        throw std::invalid_argument("contact detection needs at least two samples");
    }
    const double period = time[1] - time[0];
    if (!(period > 0.0))
    {
        throw std::invalid_argument("sample times must be strictly increasing");
    }
    for (std::size_t i = 1; i < time.size(); ++i)
    {
        if (std::abs(time[i] - time[i - 1] - period) > 1e-9)
        {
            throw std::invalid_argument("contact detection requires uniform sampling");
        }
    }

    std::vector<std::uint8_t> out(time.size());
    SchmittState state = initial;
    for (std::size_t i = 0; i < time.size(); ++i)
    {
        const auto& c = corner_heights[i];
        const double lowest = std::min(std::min(c[0], c[1]), std::min(c[2], c[3]));
        out[i] = schmitt_step(state, lowest < params.height_threshold, params, period)
                     ? 1
                     : 0;
    }
    return out;
}

void GaitGenConfig::validate() const
{
    if (!(period_dnn > 0.0))
    {
        throw std::invalid_argument("generator period must be positive");
    }
    if (!(scale_gamma > 0.0) || scale_gamma > 1.0)
    {
        throw std::invalid_argument("displacement scale must lie in (0, 1]");
    }
    if (scale_eta < 1)
    {
        throw std::invalid_argument("time-scale factor must be a positive integer");
    }
    if (!(step_length > 0.0) || !(step_width > 0.0) || !(swing_apex > 0.0))
    {
        throw std::invalid_argument("step geometry must be positive");
    }
    if (!(step_duration >= 4.0 * period_dnn))
    {
        throw std::invalid_argument("step duration must cover at least four ticks");
    }
    if (ds_ratio < 0.0 || !(ds_ratio < 1.0))
    {
        throw std::invalid_argument("double-support ratio must lie in [0, 1)");
    }
    if (!(schmitt.height_threshold > 0.0) || schmitt.dwell_time < 0.0)
    {
        throw std::invalid_argument("contact trigger parameters out of range");
    }
    if (!(swing_apex > schmitt.height_threshold))
    {
        throw std::invalid_argument("swing apex must clear the contact height threshold");
    }
}

GaitGenerator::GaitGenerator(ChainModel model, GaitGenConfig cfg, double gravity_magnitude)
    : model_(std::move(model)), cfg_(cfg)
{
    model_.validate();
    cfg_.validate();
    if (!(gravity_magnitude > 0.0))
    {
        throw std::invalid_argument("gravity magnitude must be positive");
    }
    weight_ = model_.total_mass() * gravity_magnitude;

    for (int i = 0; i < kNumContacts; ++i)
    {
        const auto fi = static_cast<std::size_t>(i);
        foot_frame_[fi] = model_.frame_index(contact_names()[fi]);
        int idx = foot_frame_[fi];
        while (idx != model_.base)
        {
            const Link& link = model_.links[static_cast<std::size_t>(idx)];
            if (link.joint == JointType::Revolute)
            {
                leg_joints_[fi].push_back(link.q_index);
            }
            idx = link.parent;
        }
        std::reverse(leg_joints_[fi].begin(), leg_joints_[fi].end());
        if (leg_joints_[fi].size() != 6)
        {
            throw std::invalid_argument("each foot chain needs exactly six revolute joints");
        }
    }

    auto joint_of = [&](const char* name) {
        for (const Link& link : model_.links)
        {
            if (link.name == name && link.joint == JointType::Revolute)
            {
                return link.q_index;
            }
        }
        return -1;
    };
    l_shoulder_ = joint_of("l_shoulder_pitch");
    r_shoulder_ = joint_of("r_shoulder_pitch");
    l_elbow_ = joint_of("l_elbow");
    r_elbow_ = joint_of("r_elbow");
    torso_ = joint_of("torso_yaw");

    RobotState zero = RobotState::zero(model_);
    const double sole_z =
        forward_kinematics(model_, zero, contact_names()[0]).position[2];
    if (!(sole_z < 0.0))
    {
        throw std::invalid_argument("feet must hang below the base at zero configuration");
    }
    standing_height_ = 0.86 * (-sole_z);

    q_stand_ = VecX::Zero(model_.n_joints());
    if (l_shoulder_ >= 0)
    {
        q_stand_[l_shoulder_] = 0.15;
    }
    if (r_shoulder_ >= 0)
    {
        q_stand_[r_shoulder_] = 0.15;
    }
    if (l_elbow_ >= 0)
    {
        q_stand_[l_elbow_] = -0.35;
    }
    if (r_elbow_ >= 0)
    {
        q_stand_[r_elbow_] = -0.35;
    }
    for (int leg = 0; leg < kNumContacts; ++leg)
    {
        const auto& joints = leg_joints_[static_cast<std::size_t>(leg)];
        q_stand_[joints[2]] = -0.4;
        q_stand_[joints[3]] = 0.8;
        q_stand_[joints[4]] = -0.4;
    }

    const Pose base{Vec3(0.0, 0.0, standing_height_), Mat3::Identity()};
    for (int leg = 0; leg < kNumContacts; ++leg)
    {
        const double sgn = leg == 0 ? 1.0 : -1.0;
        const Pose target{Vec3(0.0, sgn * 0.5 * cfg_.step_width, 0.0), Mat3::Identity()};
        solve_leg(leg, base, target, q_stand_);
    }
}

Vec3 GaitGenerator::clamp_command(const Vec3& command) const
{
    Vec3 cmd = command;
    const double v_max = cfg_.step_length / cfg_.step_duration;
    const double v = std::hypot(cmd[0], cmd[1]);
    if (v > v_max)
    {
        cmd[0] *= v_max / v;
        cmd[1] *= v_max / v;
    }
    const double w_max = 0.3 / cfg_.step_duration;
    cmd[2] = std::clamp(cmd[2], -w_max, w_max);
    for (int i = 0; i < 3; ++i)
    {
        if (std::abs(cmd[i]) < 1e-9)
        {
            cmd[i] = 0.0;
        }
    }
    return cmd;
}

void GaitGenerator::solve_leg(int leg, const Pose& base, const Pose& foot_target,
                              VecX& q) const
{
    const auto li = static_cast<std::size_t>(leg);
    const std::string& frame = model_.links[static_cast<std::size_t>(foot_frame_[li])].name;

    RobotState rs = RobotState::zero(model_);
    rs.base_pose = base;
    rs.q = q;

    auto pose_error = [&]() {
        const Pose f = forward_kinematics(model_, rs, frame);
        Vec6 e;
        e.head<3>() = foot_target.position - f.position;
        e.tail<3>() = log_so3(foot_target.rotation * f.rotation.transpose());
        return e;
    };

    Vec6 err = pose_error();
    for (int iter = 0; iter < 12 && err.norm() >= 1e-11; ++iter)
    {
        const MatX j_full = jacobian(model_, rs, frame);
        Eigen::Matrix<double, 6, 6> j;
        for (int c = 0; c < 6; ++c)
        {
            j.col(c) = j_full.col(6 + leg_joints_[li][static_cast<std::size_t>(c)]);
        }
        Vec6 dq = j.fullPivLu().solve(err);
        if (!dq.allFinite() || dq.norm() > 1.5)
        {
            dq = (j.transpose() * j + 1e-6 * Eigen::Matrix<double, 6, 6>::Identity())
                     .ldlt()
                     .solve(j.transpose() * err);
        }
        const double n = dq.norm();
        if (n > 0.7)
        {
            dq *= 0.7 / n;
        }
        for (int c = 0; c < 6; ++c)
        {
            rs.q[leg_joints_[li][static_cast<std::size_t>(c)]] += dq[c];
        }
        err = pose_error();
    }
    if (err.norm() > 1e-8)
    {
        throw std::runtime_error("leg inverse kinematics failed to converge");
    }
    q = rs.q;
}

GeneratorState GaitGenerator::initial_state(const Vec3& position, double yaw) const
{
    GeneratorState s;
    s.q = q_stand_;
    s.path_position = Vec3(position[0], position[1], standing_height_);
    s.path_yaw = yaw;
    const Mat3 r = yaw_rotation(yaw);
    s.base_pose = Pose{s.path_position, r};

    for (int f = 0; f < kNumContacts; ++f)
    {
        const auto fi = static_cast<std::size_t>(f);
        const double sgn = f == 0 ? 1.0 : -1.0;
        Vec3 p = Vec3(position[0], position[1], 0.0)
                 + r * Vec3(0.0, sgn * 0.5 * cfg_.step_width, 0.0);
        p[2] = 0.0;
        s.foot_pose[fi] = Pose{p, r};
        s.contact_trigger[fi] = SchmittState{true, 0};
        s.contact_since[fi] = 0.0;
        s.last_footstep[fi] = s.foot_pose[fi];
        s.foot_anchor_raw[fi] = p;
        s.foot_anchor_scaled[fi] = p;
    }

    RobotState rs = RobotState::zero(model_);
    rs.base_pose = s.base_pose;
    rs.q = s.q;
    const Vec3 com = com_and_momentum(model_, rs).p_com;
    s.com_anchor_raw = com;
    s.com_anchor_scaled = com;
    return s;
}

StepOutput GaitGenerator::step(GeneratorState& s, const Vec3& command) const
{
    const double t_gait = cfg_.period_dnn;
    const double h_real = t_gait * cfg_.scale_eta;
    const Vec3 cmd = clamp_command(command);
    s.command = cmd;
    s.time += h_real;
    const bool want_walk = cmd.cwiseAbs().maxCoeff() > 0.0;

    s.path_position += yaw_rotation(s.path_yaw) * Vec3(cmd[0] * t_gait, cmd[1] * t_gait, 0.0);
    s.path_yaw += cmd[2] * t_gait;

    const bool advancing = want_walk || s.swinging[0] || s.swinging[1];
    s.activity += ((advancing ? 1.0 : 0.0) - s.activity) * std::min(1.0, t_gait / 0.3);

    const double dphi = kPi * t_gait / cfg_.step_duration;
    if (advancing)
    {
        const int step_index = s.phase < kPi ? 0 : 1;
        const auto fi = static_cast<std::size_t>(step_index);
        const double boundary = static_cast<double>(step_index + 1) * kPi;
        const double next = s.phase + dphi;
        if (next >= boundary - 1e-12)
        {
            if (s.swinging[fi])
            {
                s.foot_pose[fi] = s.swing_target[fi];
                s.swinging[fi] = false;
            }
            if (want_walk)
            {
                s.phase = next >= 2.0 * kPi ? next - 2.0 * kPi : next;
            }
            else
            {
                s.phase = boundary >= 2.0 * kPi - 1e-12 ? 0.0 : boundary;
            }
        }
        else
        {
            s.phase = next;
        }
    }

    const int step_index = s.phase < kPi ? 0 : 1;
    const auto fi = static_cast<std::size_t>(step_index);
    const double u = (s.phase - static_cast<double>(step_index) * kPi) / kPi;

    if (want_walk && u >= cfg_.ds_ratio && !s.swinging[fi])
    {
        s.swinging[fi] = true;
        s.swing_origin[fi] = s.foot_pose[fi];

        const double swing_time = (1.0 - cfg_.ds_ratio) * cfg_.step_duration;
        const double stance_time = 2.0 * cfg_.step_duration - swing_time;
        const double t_ahead = swing_time + 0.5 * stance_time;
        const double yaw_land = s.path_yaw + cmd[2] * swing_time;
        const double sgn = step_index == 0 ? 1.0 : -1.0;
        Vec3 p = s.path_position
                 + yaw_rotation(s.path_yaw) * Vec3(cmd[0] * t_ahead, cmd[1] * t_ahead, 0.0)
                 + yaw_rotation(yaw_land) * Vec3(0.0, sgn * 0.5 * cfg_.step_width, 0.0);
        p[2] = 0.0;
        s.swing_target[fi] = Pose{p, yaw_rotation(yaw_land)};
    }

    if (s.swinging[fi])
    {
        const double w =
            std::clamp((u - cfg_.ds_ratio) / (1.0 - cfg_.ds_ratio), 0.0, 1.0);
        const double b = smootherstep(w);
        const Pose& o = s.swing_origin[fi];
        const Pose& t = s.swing_target[fi];
        Vec3 p = o.position + b * (t.position - o.position);
        const double lift = std::sin(kPi * w);
        p[2] += cfg_.swing_apex * lift * lift;
        const double yo = yaw_of(o.rotation);
        const double yt = yo + wrap_angle(yaw_of(t.rotation) - yo);
        s.foot_pose[fi] = Pose{p, yaw_rotation(yo + b * (yt - yo))};
    }

    const double sway =
        -0.35 * 0.5 * cfg_.step_width * s.activity * std::sin(s.phase);
    const Mat3 r_base = yaw_rotation(s.path_yaw);
    const Pose base_out{s.path_position + r_base * Vec3(0.0, sway, 0.0), r_base};

    for (int leg = 0; leg < kNumContacts; ++leg)
    {
        solve_leg(leg, base_out, s.foot_pose[static_cast<std::size_t>(leg)], s.q);
    }

    const double swing_wave = s.activity * std::sin(s.phase);
    if (l_shoulder_ >= 0)
    {
        s.q[l_shoulder_] = 0.15 - 0.25 * swing_wave;
    }
    if (r_shoulder_ >= 0)
    {
        s.q[r_shoulder_] = 0.15 + 0.25 * swing_wave;
    }
    if (torso_ >= 0)
    {
        s.q[torso_] = 0.08 * swing_wave;
    }

    for (int f = 0; f < kNumContacts; ++f)
    {
        const auto ci = static_cast<std::size_t>(f);
        const bool was = s.contact_trigger[ci].active;
        const bool engaged =
            s.foot_pose[ci].position[2] < cfg_.schmitt.height_threshold;
        const bool now = schmitt_step(s.contact_trigger[ci], engaged, cfg_.schmitt, h_real);
        if (now && !was)
        {
            s.contact_since[ci] = s.time;
            Vec3 raw = s.foot_pose[ci].position;
            raw[2] = 0.0;
            const Vec3 scaled = s.foot_anchor_scaled[ci]
                                + cfg_.scale_gamma * (raw - s.foot_anchor_raw[ci]);
            s.foot_anchor_raw[ci] = raw;
            s.foot_anchor_scaled[ci] = scaled;
            s.last_footstep[ci] = Pose{scaled, s.foot_pose[ci].rotation};
        }
    }

    RobotState rs = RobotState::zero(model_);
    rs.base_pose = base_out;
    rs.q = s.q;
    const Vec3 com_raw = com_and_momentum(model_, rs).p_com;
    s.com_anchor_scaled += cfg_.scale_gamma * (com_raw - s.com_anchor_raw);
    s.com_anchor_raw = com_raw;

    s.base_pose = base_out;
    return StepOutput{base_out, s.q};
}

HorizonResult GaitGenerator::generate_horizon(const GeneratorState& state,
                                              const Vec3& command, double horizon,
                                              double target_period,
                                              double lead_window) const
{
    if (!(horizon > 0.0))
    {
        throw std::invalid_argument("horizon must be positive");
    }
    if (lead_window < 0.0)
    {
        throw std::invalid_argument("lead window must be non-negative");
    }
    const double h_real = cfg_.period_dnn * cfg_.scale_eta;
    const int ticks = static_cast<int>(std::ceil(horizon / h_real - 1e-9)) + 1;
    const auto n = static_cast<std::size_t>(ticks) + 1;

    HorizonResult result;
    result.states.reserve(n);

    std::vector<double> times(n);
    std::vector<Pose> base(n);
    std::vector<VecX> q(n);
    std::vector<Vec3> com_scaled(n);
    std::vector<double> yaw(n);
    std::array<std::vector<std::uint8_t>, kNumContacts> active;
    struct Landing
    {
        int foot;
        std::size_t sample;
        Pose pose;
    };
    std::vector<Landing> landings;

    GeneratorState s = state;
    for (std::size_t k = 0; k < n; ++k)
    {
        if (k > 0)
        {
            const std::array<bool, kNumContacts> was{s.contact_trigger[0].active,
                                                     s.contact_trigger[1].active};
            step(s, command);
            for (int f = 0; f < kNumContacts; ++f)
            {
                const auto ci = static_cast<std::size_t>(f);
                if (s.contact_trigger[ci].active && !was[ci])
                {
                    landings.push_back(Landing{f, k, s.last_footstep[ci]});
                }
            }
        }
        times[k] = s.time;
        base[k] = s.base_pose;
        q[k] = s.q;
        com_scaled[k] = s.com_anchor_scaled;
        yaw[k] = s.path_yaw;
        for (int f = 0; f < kNumContacts; ++f)
        {
            const auto ci = static_cast<std::size_t>(f);
            active[ci].push_back(s.contact_trigger[ci].active ? 1 : 0);
        }
        result.states.push_back(s);
    }

    std::vector<Footstep> footsteps;
    for (int f = 0; f < kNumContacts; ++f)
    {
        const auto ci = static_cast<std::size_t>(f);
        std::size_t k = 0;
        while (k < n)
        {
            if (!active[ci][k])
            {
                ++k;
                continue;
            }
            const std::size_t k0 = k;
            while (k < n && active[ci][k])
            {
                ++k;
            }
            Footstep fs;
            fs.contact_name = contact_names()[ci];
            if (k0 == 0)
            {
                fs.activation_time = state.contact_since[ci];
                fs.pose = state.last_footstep[ci];
            }
            else
            {
                fs.activation_time = times[k0];
                const auto it = std::find_if(landings.begin(), landings.end(),
                                             [&](const Landing& l) {
                                                 return l.foot == f && l.sample == k0;
                                             });
                fs.pose = it != landings.end() ? it->pose : state.last_footstep[ci];
            }
            fs.deactivation_time = k < n ? times[k] : times[n - 1] + h_real;
            footsteps.push_back(fs);
        }
    }

    const double span_end = times[n - 1] + h_real;
    GaitTimeline timeline = derive_timeline(footsteps, lead_window, span_end);

    std::vector<Vec3> h_ang(n, Vec3::Zero());
    for (std::size_t k = 1; k < n; ++k)
    {
        RobotState rs = RobotState::zero(model_);
        rs.base_pose = base[k];
        rs.q = q[k];
        rs.base_twist.head<3>() = (base[k].position - base[k - 1].position) / h_real;
        rs.base_twist[5] = (yaw[k] - yaw[k - 1]) / h_real;
        rs.dq = (q[k] - q[k - 1]) / h_real;
        h_ang[k] = com_and_momentum(model_, rs).h_ang;
    }
    if (n > 1)
    {
        h_ang[0] = h_ang[1];
    }

    ReferenceBundle bundle;
    bundle.sampling_period = h_real;
    bundle.start_time = times[0];
    bundle.com_ref = com_scaled;
    bundle.h_ang_ref = h_ang;
    bundle.joint_postural = q;
    bundle.footsteps = footsteps;
    bundle.timeline = timeline;
    bundle.nominal_force_z.resize(n);
    for (std::size_t k = 0; k < n; ++k)
    {
        bundle.nominal_force_z[k] = nominal_vertical_forces(timeline, weight_, times[k]);
    }
    bundle.validate();

    if (target_period > 0.0 && std::abs(target_period - h_real) > 1e-12)
    {
        bundle = resample(bundle, target_period);
        for (std::size_t k = 0; k < bundle.samples(); ++k)
        {
            bundle.nominal_force_z[k] =
                nominal_vertical_forces(timeline, weight_, bundle.sample_time(k));
        }
    }

    result.bundle = std::move(bundle);
    return result;
}

std::vector<Vec3> scale_plan(const std::vector<Vec3>& points, double gamma)
{
    if (points.empty())
    {
        throw std::invalid_argument("cannot scale an empty plan");
    }
    if (!(gamma > 0.0))
    {
        throw std::invalid_argument("displacement scale must be positive");
    }
    std::vector<Vec3> out(points.size());
    out[0] = points[0];
    for (std::size_t i = 1; i < points.size(); ++i)
    {
        out[i] = out[i - 1] + gamma * (points[i] - points[i - 1]);
    }
    return out;
}

long long sync_period_ms(long long t_mpc_ms, int eta, long long t_dnn_ms)
{
    if (t_mpc_ms < 1 || t_dnn_ms < 1 || eta < 1)
    {
        throw std::invalid_argument("synchronization inputs must be positive");
    }
    return std::lcm(t_mpc_ms, static_cast<long long>(eta) * t_dnn_ms);
}

namespace
{

long long to_exact_ms(double seconds, const char* what)
{
    const double ms = seconds * 1000.0;
    const double rounded = std::round(ms);
    if (std::abs(ms - rounded) > 1e-6 || rounded < 1.0)
    {
        throw std::invalid_argument(std::string(what)
                                    + " must be a positive integer number of milliseconds");
    }
    return static_cast<long long>(rounded);
}

} // namespace

double sync_period(double t_mpc, int eta, double t_dnn)
{
    const long long ms = sync_period_ms(to_exact_ms(t_mpc, "planner period"), eta,
                                        to_exact_ms(t_dnn, "generator period"));
    return static_cast<double>(ms) / 1000.0;
}

int sync_reset_index(double t_mpc, int eta, double t_dnn)
{
    const long long dnn_ms = to_exact_ms(t_dnn, "generator period");
    const long long sync = sync_period_ms(to_exact_ms(t_mpc, "planner period"), eta, dnn_ms);
    return static_cast<int>(sync / (static_cast<long long>(eta) * dnn_ms));
}

ReferenceBundle resample(const ReferenceBundle& bundle, double target_period)
{
    if (!(target_period > 0.0))
    {
        throw std::invalid_argument("resampling period must be positive");
    }
    bundle.validate();
    const std::size_t n = bundle.samples();
    if (n < 2)
    {
        throw std::invalid_argument("resampling needs at least two source samples");
    }
    const double span = static_cast<double>(n - 1) * bundle.sampling_period;
    const auto m = static_cast<std::size_t>(std::floor(span / target_period + 1e-9));
    if (m < 1)
    {
        throw std::out_of_range("target period exceeds the source span");
    }

    ReferenceBundle out;
    out.sampling_period = target_period;
    out.start_time = bundle.start_time;
    out.footsteps = bundle.footsteps;
    out.timeline = bundle.timeline;
    out.com_ref.resize(m + 1);
    out.h_ang_ref.resize(m + 1);
    out.joint_postural.resize(m + 1);
    out.nominal_force_z.resize(m + 1);

    for (std::size_t j = 0; j <= m; ++j)
    {
        const double tau = static_cast<double>(j) * target_period;
        double pos = tau / bundle.sampling_period;
        auto i = static_cast<std::size_t>(std::floor(pos + 1e-9));
        double w = pos - static_cast<double>(i);
        if (w < 1e-9)
        {
            w = 0.0;
        }
        else if (w > 1.0 - 1e-9)
        {
            ++i;
            w = 0.0;
        }
        if (i >= n - 1)
        {
            i = n - 1;
            w = 0.0;
        }
        if (w == 0.0)
        {
            out.com_ref[j] = bundle.com_ref[i];
            out.h_ang_ref[j] = bundle.h_ang_ref[i];
            out.joint_postural[j] = bundle.joint_postural[i];
            out.nominal_force_z[j] = bundle.nominal_force_z[i];
        }
        else
        {
            out.com_ref[j] = (1.0 - w) * bundle.com_ref[i] + w * bundle.com_ref[i + 1];
            out.h_ang_ref[j] =
                (1.0 - w) * bundle.h_ang_ref[i] + w * bundle.h_ang_ref[i + 1];
            out.joint_postural[j] = (1.0 - w) * bundle.joint_postural[i]
                                    + w * bundle.joint_postural[i + 1];
            for (int c = 0; c < kNumContacts; ++c)
            {
                const auto ci = static_cast<std::size_t>(c);
                out.nominal_force_z[j][ci] = (1.0 - w) * bundle.nominal_force_z[i][ci]
                                             + w * bundle.nominal_force_z[i + 1][ci];
            }
        }
    }
    out.validate();
    return out;
}

std::array<double, kNumContacts> nominal_vertical_forces(const GaitTimeline& timeline,
                                                         double weight, double t)
{
    const ContactFlags flags = contact_flags_at(timeline, t);
    const double even = 0.5 * weight;
    const bool left = flags.gamma[0] != 0;
    const bool right = flags.gamma[1] != 0;
    if (left && !right)
    {
        return {weight, 0.0};
    }
    if (right && !left)
    {
        return {0.0, weight};
    }
    if (!left && !right)
    {
        return {even, even};
    }

    const auto& phases = timeline.phases;
    auto both_active = [&](std::size_t idx) {
        return phases[idx].flags.gamma[0] != 0 && phases[idx].flags.gamma[1] != 0;
    };
    std::size_t i = 0;
    while (i + 1 < phases.size() && t >= phases[i].t1)
    {
        ++i;
    }
    std::size_t lo = i;
    while (lo > 0 && both_active(lo - 1))
    {
        --lo;
    }
    std::size_t hi = i;
    while (hi + 1 < phases.size() && both_active(hi + 1))
    {
        ++hi;
    }

    auto single_side = [&](const ContactFlags& f) -> std::array<double, kNumContacts> {
        if (f.gamma[0] != 0 && f.gamma[1] == 0)
        {
            return {weight, 0.0};
        }
        if (f.gamma[1] != 0 && f.gamma[0] == 0)
        {
            return {0.0, weight};
        }
        return {even, even};
    };

    const std::array<double, kNumContacts> prev =
        lo == 0 ? std::array<double, kNumContacts>{even, even}
                : single_side(phases[lo - 1].flags);
    const std::array<double, kNumContacts> next =
        hi + 1 == phases.size() ? std::array<double, kNumContacts>{even, even}
                                : single_side(phases[hi + 1].flags);

    const double d0 = phases[lo].t0;
    const double d1 = phases[hi].t1;
    const double tau = d1 > d0 ? std::clamp((t - d0) / (d1 - d0), 0.0, 1.0) : 0.0;
    return {(1.0 - tau) * prev[0] + tau * next[0], (1.0 - tau) * prev[1] + tau * next[1]};
}

HorizonWorker::HorizonWorker(const GaitGenerator& generator, GeneratorState initial,
                             Params params)
    : generator_(generator), state_(std::move(initial)), params_(params)
{
    const double h_real =
        generator_.config().period_dnn * generator_.config().scale_eta;
    if (!(params_.cadence > 0.0) || !(params_.horizon > 0.0))
    {
        throw std::invalid_argument("worker cadence and horizon must be positive");
    }
    const double ratio = params_.cadence / h_real;
    reset_index_ = static_cast<int>(std::round(ratio));
    if (std::abs(ratio - static_cast<double>(reset_index_)) > 1e-6 || reset_index_ < 1)
    {
        throw std::invalid_argument(
            "worker cadence must be a positive multiple of the emitted sample period");
    }
    if (params_.cadence > params_.horizon)
    {
        throw std::invalid_argument("worker cadence cannot exceed the horizon");
    }
    thread_ = std::thread([this] { loop(); });
}

HorizonWorker::~HorizonWorker()
{
    stop();
}

void HorizonWorker::set_command(const Vec3& command)
{
    std::lock_guard<std::mutex> lock(mutex_);
    command_ = command;
}

bool HorizonWorker::try_latest(HorizonResult& out)
{
    std::lock_guard<std::mutex> lock(mutex_);
    if (!fresh_ || !latest_)
    {
        return false;
    }
    out = *latest_;
    fresh_ = false;
    return true;
}

void HorizonWorker::stop()
{
    {
        std::lock_guard<std::mutex> lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable())
    {
        thread_.join();
    }
}

void HorizonWorker::loop()
{
    std::unique_lock<std::mutex> lock(mutex_);
    while (!stop_)
    {
        const Vec3 cmd = command_;
        lock.unlock();
        HorizonResult res = generator_.generate_horizon(
            state_, cmd, params_.horizon, params_.target_period, params_.lead_window);
        GeneratorState next = res.states.at(static_cast<std::size_t>(reset_index_));
        lock.lock();
        latest_ = std::move(res);
        fresh_ = true;
        state_ = std::move(next);
        cv_.wait_for(lock, std::chrono::duration<double>(params_.cadence),
                     [this] { return stop_; });
    }
}

} // namespace loco
