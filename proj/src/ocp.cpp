#include <loco/ocp.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace loco
{

namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCbfSlackPenalty = 1e6;
constexpr double kRelaxPenalty = 1e6;
constexpr double kMeritPenaltyCap = 1e7;
constexpr double kTimeTol = 1e-9;

void require(bool ok, const std::string& msg)
{
    if (!ok)
    {
        throw std::invalid_argument(msg);
    }
}

void check_weight(const Vec3& w, const char* name)
{
    require(w.allFinite() && w.minCoeff() >= 0.0,
            std::string(name) + " weights must be finite and non-negative");
}

double clock_seconds()
{
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

} // namespace

void MpcConfig::validate() const
{
    require(t_mpc > 0.0 && std::isfinite(t_mpc), "mpc sampling period must be positive");
    require(horizon_samples >= 1, "mpc horizon needs at least one interval");
    check_weight(w_h_ang, "angular momentum");
    check_weight(w_com, "CoM tracking");
    check_weight(w_contact, "contact regularization");
    check_weight(w_force_share, "force sharing");
    check_weight(w_force_rate, "force rate");
    require(std::isfinite(w_force_z) && w_force_z >= 0.0,
            "vertical force weight must be finite and non-negative");
    require(cbf.alpha > 0.0, "barrier scale must be positive");
    require(cbf.gamma > 0.0 && cbf.gamma <= 1.0, "barrier decay must lie in (0, 1]");
    for (int a = 0; a < 2; ++a)
    {
        require(step_box_lower[a] <= 0.0 && step_box_upper[a] >= 0.0,
                "step box must bracket the nominal footstep");
    }
    require(friction.mu > 0.0, "friction coefficient must be positive");
    require(friction.n_facets >= 4, "friction cone needs at least four facets");
    require(sqp.max_iter >= 1, "sqp iteration budget must be positive");
    require(sqp.tol > 0.0, "sqp tolerance must be positive");
    require(sqp.armijo > 0.0 && sqp.armijo < 1.0, "armijo constant must lie in (0, 1)");
    require(sqp.backtrack > 0.0 && sqp.backtrack < 1.0, "backtracking ratio must lie in (0, 1)");
    require(sqp.max_line_search >= 1, "line search budget must be positive");
    require(sqp.penalty > 0.0, "merit penalty must be positive");
}

MpcConfig default_mpc_config(OcpMode mode)
{
    MpcConfig cfg;
    cfg.t_mpc = mode == OcpMode::Rhp ? 0.06 : 0.05;
    cfg.horizon_samples = static_cast<int>(std::lround(1.2 / cfg.t_mpc));
    return cfg;
}

OcpDecision OcpDecision::zero(int horizon_samples)
{
    OcpDecision d;
    const std::size_t n = static_cast<std::size_t>(horizon_samples);
    d.p_com.assign(n + 1, Vec3::Zero());
    d.h_lin.assign(n + 1, Vec3::Zero());
    d.h_ang.assign(n + 1, Vec3::Zero());
    d.p_contact.assign(n + 1, {Vec3::Zero(), Vec3::Zero()});
    VertexForces none;
    for (auto& contact : none)
    {
        contact.fill(Vec3::Zero());
    }
    d.forces.assign(n, none);
    d.v_contact.assign(n, {Vec3::Zero(), Vec3::Zero()});
    return d;
}

void OcpDecision::validate(int horizon_samples) const
{
    const std::size_t n = static_cast<std::size_t>(horizon_samples);
    if (p_com.size() != n + 1 || h_lin.size() != n + 1 || h_ang.size() != n + 1
        || p_contact.size() != n + 1 || forces.size() != n || v_contact.size() != n)
    {
        throw std::invalid_argument("decision sequences disagree with the horizon length");
    }
}

CentroidalDerivative centroidal_rhs(const CentroidalState& state, const VertexForces& forces,
                                    const std::array<ContactPatch, kNumContacts>& patches,
                                    const std::array<int, kNumContacts>& gamma,
                                    const RobotParams& params,
                                    const std::optional<DisturbanceWrench>& disturbance)
{
    require(state.finite(), "centroidal state must be finite");
    require(params.mass > 0.0, "robot mass must be positive");
    if (disturbance)
    {
        require(disturbance->finite(), "disturbance wrench must be finite");
    }
    CentroidalDerivative d;
    d.h_lin_dot = params.mass * params.gravity;
    for (int i = 0; i < kNumContacts; ++i)
    {
        const int g = gamma[static_cast<std::size_t>(i)];
        require(g == 0 || g == 1, "contact activation flag must be 0 or 1");
        if (g == 0)
        {
            continue;
        }
        for (int j = 0; j < kNumVertices; ++j)
        {
            const Vec3& f = forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            require(f.allFinite(), "contact force must be finite");
            d.h_lin_dot += f;
            d.h_ang_dot +=
                (patches[static_cast<std::size_t>(i)].vertex_world(j) - state.p_com).cross(f);
        }
    }
    if (disturbance)
    {
        d.h_lin_dot += disturbance->force;
        d.h_ang_dot += (disturbance->application_point - state.p_com).cross(disturbance->force);
    }
    d.p_com_dot = state.h_lin / params.mass;
    return d;
}

Vec3 contact_rhs(int sigma, const Vec3& v_contact)
{
    require(sigma == 0 || sigma == 1, "contact freeze flag must be 0 or 1");
    return (1.0 - sigma) * v_contact;
}

double cbf_value(double com_z, const RobotParams& params, double alpha)
{
    require(alpha > 0.0, "barrier scale must be positive");
    return -alpha * (params.com_z_min - com_z) * (params.com_z_max - com_z);
}

FrictionCone friction_facets(double mu, int n_facets)
{
    require(mu > 0.0, "friction coefficient must be positive");
    require(n_facets >= 4, "friction cone needs at least four facets");
    FrictionCone cone;
    cone.A = MatX::Zero(n_facets + 1, 3);
    cone.b = VecX::Zero(n_facets + 1);
    for (int k = 0; k < n_facets; ++k)
    {
        const double phi = 2.0 * std::numbers::pi * k / n_facets;
        cone.A(k, 0) = std::cos(phi);
        cone.A(k, 1) = std::sin(phi);
        cone.A(k, 2) = -mu;
    }
    cone.A(n_facets, 2) = -1.0;
    return cone;
}

std::array<Vec3, kNumVertices> foot_vertex_offsets(const RobotParams& params)
{
    const double hl = 0.5 * params.foot_length;
    const double hw = 0.5 * params.foot_width;
    return {Vec3(hl, hw, 0.0), Vec3(hl, -hw, 0.0), Vec3(-hl, -hw, 0.0), Vec3(-hl, hw, 0.0)};
}

OcpNlp::OcpNlp(const ReferenceBundle& refs, const GaitTimeline& timeline,
               const CentroidalState& feedback, const MpcConfig& cfg, const RobotParams& params,
               const std::optional<DisturbanceWrench>& disturbance)
    : cfg_(cfg), params_(params), feedback_(feedback), disturbance_(disturbance)
{
    cfg_.validate();
    params_.validate();
    refs.validate();
    timeline.validate();
    require(feedback.finite(), "feedback state must be finite");
    if (disturbance_)
    {
        require(disturbance_->finite(), "disturbance wrench must be finite");
    }
    const int n = cfg_.horizon_samples;
    const double t = cfg_.t_mpc;
    require(std::abs(refs.sampling_period - t) <= kTimeTol,
            "references are not sampled at the mpc period");
    require(static_cast<int>(refs.samples()) >= n + 1,
            "reference window is shorter than the horizon");
    start_time_ = refs.start_time;
    const double last_flag_time = start_time_ + t * (n - 1);
    require(!timeline.phases.empty() && timeline.span_begin() <= start_time_ + kTimeTol
                && timeline.span_end() >= last_flag_time - kTimeTol,
            "timeline does not cover the horizon");
    footsteps_ = refs.footsteps;
    vertex_offsets_ = foot_vertex_offsets(params_);
    cone_ = friction_facets(cfg_.friction.mu, cfg_.friction.n_facets);

    std::array<std::vector<const Footstep*>, kNumContacts> plan;
    for (const Footstep& fs : footsteps_)
    {
        const int i = contact_index(fs.contact_name);
        require(i >= 0, "footstep references unknown contact '" + fs.contact_name + "'");
        plan[static_cast<std::size_t>(i)].push_back(&fs);
    }
    for (int i = 0; i < kNumContacts; ++i)
    {
        auto& list = plan[static_cast<std::size_t>(i)];
        require(!list.empty(), "no footstep planned for contact '" + contact_names()[static_cast<std::size_t>(i)] + "'");
        std::sort(list.begin(), list.end(), [](const Footstep* a, const Footstep* b) {
            return a->activation_time < b->activation_time;
        });
    }
    const auto pick = [](const std::vector<const Footstep*>& list, double tk) -> const Footstep* {
        const Footstep* upcoming = nullptr;
        for (const Footstep* fs : list)
        {
            if (tk >= fs->activation_time - kTimeTol && tk < fs->deactivation_time - kTimeTol)
            {
                return fs;
            }
            if (fs->activation_time > tk
                && (upcoming == nullptr || fs->activation_time < upcoming->activation_time))
            {
                upcoming = fs;
            }
        }
        return upcoming != nullptr ? upcoming : list.back();
    };

    nodes_.resize(static_cast<std::size_t>(n) + 1);
    const double flag_end = std::nextafter(timeline.span_end(), timeline.span_begin());
    for (int k = 0; k <= n; ++k)
    {
        Node& node = nodes_[static_cast<std::size_t>(k)];
        const double tk = start_time_ + k * t;
        node.com_ref = refs.com_ref[static_cast<std::size_t>(k)];
        node.h_ang_ref = refs.h_ang_ref[static_cast<std::size_t>(k)];
        node.fz_nom = refs.nominal_force_z[static_cast<std::size_t>(k)];
        if (k < n)
        {
            const double tq = std::clamp(tk, timeline.span_begin(), flag_end);
            node.flags = contact_flags_at(timeline, tq);
        }
        for (int i = 0; i < kNumContacts; ++i)
        {
            const Footstep* fs = pick(plan[static_cast<std::size_t>(i)], tk);
            node.p_nom[static_cast<std::size_t>(i)] = fs->pose.position;
            node.r_nom[static_cast<std::size_t>(i)] = fs->pose.rotation;
        }
    }

    for (int k = 0; k <= n; ++k)
    {
        const ContactFlags& flags = nodes_[static_cast<std::size_t>(std::min(k, n - 1))].flags;
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (flags.sigma[static_cast<std::size_t>(i)] == 1)
            {
                box_entries_.emplace_back(k, i);
            }
        }
    }

    const double m = params_.mass;
    const double z0 = feedback_.p_com.z();
    const double z1 = z0 + t * feedback_.h_lin.z() / m;
    const double g0 = cbf_value(z0, params_, cfg_.cbf.alpha);
    const double g1 = cbf_value(z1, params_, cfg_.cbf.alpha);
    cbf_slack_ = g1 - (1.0 - cfg_.cbf.gamma) * g0 < 0.0;

    n_vars_ = 45 * n + 15 + (cbf_slack_ ? 1 : 0);

    int eq = 15;
    int ineq = n + (cbf_slack_ ? 1 : 0);
    for (int k = 0; k < n; ++k)
    {
        const ContactFlags& flags = nodes_[static_cast<std::size_t>(k)].flags;
        eq += 15;
        for (int i = 0; i < kNumContacts; ++i)
        {
            eq += flags.sigma[static_cast<std::size_t>(i)] == 1 ? 3 : 1;
            if (flags.gamma[static_cast<std::size_t>(i)] == 0)
            {
                eq += 12;
            }
            else
            {
                ineq += kNumVertices * (cfg_.friction.n_facets + 1);
            }
        }
    }
    ineq += 2 * static_cast<int>(box_entries_.size());
    n_eq_ = eq;
    n_ineq_ = ineq;

    ineq_lower_ = VecX::Constant(n_ineq_, -kInf);
    ineq_upper_ = VecX::Constant(n_ineq_, kInf);
    int row = 0;
    for (int k = 0; k < n; ++k)
    {
        ineq_lower_(row) = 0.0;
        ++row;
    }
    for (int k = 0; k < n; ++k)
    {
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (nodes_[static_cast<std::size_t>(k)].flags.gamma[static_cast<std::size_t>(i)] == 1)
            {
                for (int j = 0; j < kNumVertices; ++j)
                {
                    ineq_upper_.segment(row, cfg_.friction.n_facets + 1).setZero();
                    row += cfg_.friction.n_facets + 1;
                }
            }
        }
    }
    box_row_begin_ = row;
    for (std::size_t e = 0; e < box_entries_.size(); ++e)
    {
        for (int a = 0; a < 2; ++a)
        {
            ineq_lower_(row) = cfg_.step_box_lower[a];
            ineq_upper_(row) = cfg_.step_box_upper[a];
            ++row;
        }
    }
    if (cbf_slack_)
    {
        ineq_lower_(row) = 0.0;
        ++row;
    }

    build_cost();
}

void OcpNlp::build_cost()
{
    const int n = cfg_.horizon_samples;
    const double t = cfg_.t_mpc;
    cost_h_ = MatX::Zero(n_vars_, n_vars_);
    cost_c_ = VecX::Zero(n_vars_);

    const auto add_tracking = [&](int base, const Vec3& w, const Vec3& ref) {
        for (int a = 0; a < 3; ++a)
        {
            cost_h_(base + a, base + a) += 2.0 * w[a];
            cost_c_(base + a) -= 2.0 * w[a] * ref[a];
        }
    };

    for (int k = 1; k <= n; ++k)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        add_tracking(idx_com(k), cfg_.w_com, node.com_ref);
        add_tracking(idx_h_ang(k), cfg_.w_h_ang, node.h_ang_ref);
        for (int i = 0; i < kNumContacts; ++i)
        {
            add_tracking(idx_contact(k, i), cfg_.w_contact,
                         node.p_nom[static_cast<std::size_t>(i)]);
        }
    }

    for (int k = 0; k < n; ++k)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        for (int i = 0; i < kNumContacts; ++i)
        {
            for (int j = 0; j < kNumVertices; ++j)
            {
                for (int jj = 0; jj < kNumVertices; ++jj)
                {
                    const double p = (j == jj ? 1.0 : 0.0) - 0.25;
                    for (int a = 0; a < 3; ++a)
                    {
                        cost_h_(idx_force(k, i, j) + a, idx_force(k, i, jj) + a) +=
                            2.0 * p * cfg_.w_force_share[a];
                    }
                }
            }
            const double fz = node.fz_nom[static_cast<std::size_t>(i)];
            for (int j = 0; j < kNumVertices; ++j)
            {
                for (int jj = 0; jj < kNumVertices; ++jj)
                {
                    cost_h_(idx_force(k, i, j) + 2, idx_force(k, i, jj) + 2) +=
                        2.0 * cfg_.w_force_z;
                }
                cost_c_(idx_force(k, i, j) + 2) -= 2.0 * cfg_.w_force_z * fz;
            }
        }
    }

    for (int k = 0; k + 1 < n; ++k)
    {
        for (int i = 0; i < kNumContacts; ++i)
        {
            for (int j = 0; j < kNumVertices; ++j)
            {
                for (int a = 0; a < 3; ++a)
                {
                    const double w = 2.0 * cfg_.w_force_rate[a] / (t * t);
                    const int lo = idx_force(k, i, j) + a;
                    const int hi = idx_force(k + 1, i, j) + a;
                    cost_h_(lo, lo) += w;
                    cost_h_(hi, hi) += w;
                    cost_h_(lo, hi) -= w;
                    cost_h_(hi, lo) -= w;
                }
            }
        }
    }

    if (cbf_slack_)
    {
        cost_h_(idx_cbf_slack(), idx_cbf_slack()) += 2.0 * kCbfSlackPenalty;
    }
}

VecX OcpNlp::pack(const OcpDecision& decision) const
{
    decision.validate(cfg_.horizon_samples);
    VecX x = VecX::Zero(n_vars_);
    const int n = cfg_.horizon_samples;
    for (int k = 0; k <= n; ++k)
    {
        x.segment<3>(idx_com(k)) = decision.p_com[static_cast<std::size_t>(k)];
        x.segment<3>(idx_h_lin(k)) = decision.h_lin[static_cast<std::size_t>(k)];
        x.segment<3>(idx_h_ang(k)) = decision.h_ang[static_cast<std::size_t>(k)];
        for (int i = 0; i < kNumContacts; ++i)
        {
            x.segment<3>(idx_contact(k, i)) =
                decision.p_contact[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        }
        if (k < n)
        {
            for (int i = 0; i < kNumContacts; ++i)
            {
                for (int j = 0; j < kNumVertices; ++j)
                {
                    x.segment<3>(idx_force(k, i, j)) =
                        decision.forces[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]
                                       [static_cast<std::size_t>(j)];
                }
                x.segment<3>(idx_v_contact(k, i)) =
                    decision.v_contact[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
            }
        }
    }
    if (cbf_slack_)
    {
        const double g0 = cbf_value(x(idx_com(0) + 2), params_, cfg_.cbf.alpha);
        const double g1 = cbf_value(x(idx_com(1) + 2), params_, cfg_.cbf.alpha);
        x(idx_cbf_slack()) = std::max(0.0, -(g1 - (1.0 - cfg_.cbf.gamma) * g0));
    }
    return x;
}

OcpDecision OcpNlp::unpack(const VecX& x) const
{
    require(static_cast<int>(x.size()) == n_vars_, "variable vector has the wrong size");
    const int n = cfg_.horizon_samples;
    OcpDecision d = OcpDecision::zero(n);
    for (int k = 0; k <= n; ++k)
    {
        d.p_com[static_cast<std::size_t>(k)] = x.segment<3>(idx_com(k));
        d.h_lin[static_cast<std::size_t>(k)] = x.segment<3>(idx_h_lin(k));
        d.h_ang[static_cast<std::size_t>(k)] = x.segment<3>(idx_h_ang(k));
        for (int i = 0; i < kNumContacts; ++i)
        {
            d.p_contact[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                x.segment<3>(idx_contact(k, i));
        }
        if (k < n)
        {
            for (int i = 0; i < kNumContacts; ++i)
            {
                for (int j = 0; j < kNumVertices; ++j)
                {
                    d.forces[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]
                            [static_cast<std::size_t>(j)] = x.segment<3>(idx_force(k, i, j));
                }
                d.v_contact[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                    x.segment<3>(idx_v_contact(k, i));
            }
        }
    }
    return d;
}

OcpDecision OcpNlp::reference_decision() const
{
    const int n = cfg_.horizon_samples;
    const double t = cfg_.t_mpc;
    OcpDecision d = OcpDecision::zero(n);
    for (int k = 0; k <= n; ++k)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        d.p_com[static_cast<std::size_t>(k)] = node.com_ref;
        d.h_ang[static_cast<std::size_t>(k)] = node.h_ang_ref;
        for (int i = 0; i < kNumContacts; ++i)
        {
            d.p_contact[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                node.p_nom[static_cast<std::size_t>(i)];
        }
    }
    for (int k = 0; k < n; ++k)
    {
        d.h_lin[static_cast<std::size_t>(k)] =
            params_.mass
            * (d.p_com[static_cast<std::size_t>(k) + 1] - d.p_com[static_cast<std::size_t>(k)])
            / t;
    }
    if (n >= 1)
    {
        d.h_lin[static_cast<std::size_t>(n)] = d.h_lin[static_cast<std::size_t>(n) - 1];
    }
    for (int k = 0; k < n; ++k)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (node.flags.gamma[static_cast<std::size_t>(i)] == 1)
            {
                const double fz = node.fz_nom[static_cast<std::size_t>(i)] / kNumVertices;
                for (int j = 0; j < kNumVertices; ++j)
                {
                    d.forces[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]
                            [static_cast<std::size_t>(j)] = Vec3(0.0, 0.0, fz);
                }
            }
            if (node.flags.sigma[static_cast<std::size_t>(i)] == 0)
            {
                d.v_contact[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                    (nodes_[static_cast<std::size_t>(k) + 1].p_nom[static_cast<std::size_t>(i)]
                     - node.p_nom[static_cast<std::size_t>(i)])
                    / t;
            }
        }
    }
    return d;
}

ContactPatch OcpNlp::patch_at(const VecX& x, int k, int i) const
{
    ContactPatch patch;
    patch.name = contact_names()[static_cast<std::size_t>(i)];
    patch.pose.rotation = nodes_[static_cast<std::size_t>(k)].r_nom[static_cast<std::size_t>(i)];
    patch.pose.position = x.segment<3>(idx_contact(k, i));
    patch.vertices = vertex_offsets_;
    return patch;
}

CentroidalDerivative OcpNlp::node_rhs(const VecX& x, int k) const
{
    CentroidalState state;
    state.p_com = x.segment<3>(idx_com(k));
    state.h_lin = x.segment<3>(idx_h_lin(k));
    state.h_ang = x.segment<3>(idx_h_ang(k));
    VertexForces forces;
    for (int i = 0; i < kNumContacts; ++i)
    {
        for (int j = 0; j < kNumVertices; ++j)
        {
            forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                x.segment<3>(idx_force(k, i, j));
        }
    }
    const std::array<ContactPatch, kNumContacts> patches{patch_at(x, k, 0), patch_at(x, k, 1)};
    return centroidal_rhs(state, forces, patches, nodes_[static_cast<std::size_t>(k)].flags.gamma,
                          params_, k == 0 ? disturbance_ : std::nullopt);
}

CentroidalDerivative OcpNlp::node_derivative(const OcpDecision& decision, int k) const
{
    decision.validate(cfg_.horizon_samples);
    require(k >= 0 && k < cfg_.horizon_samples, "interval index outside the horizon");
    CentroidalState state;
    state.p_com = decision.p_com[static_cast<std::size_t>(k)];
    state.h_lin = decision.h_lin[static_cast<std::size_t>(k)];
    state.h_ang = decision.h_ang[static_cast<std::size_t>(k)];
    std::array<ContactPatch, kNumContacts> patches;
    for (int i = 0; i < kNumContacts; ++i)
    {
        patches[static_cast<std::size_t>(i)].name = contact_names()[static_cast<std::size_t>(i)];
        patches[static_cast<std::size_t>(i)].pose.rotation =
            nodes_[static_cast<std::size_t>(k)].r_nom[static_cast<std::size_t>(i)];
        patches[static_cast<std::size_t>(i)].pose.position =
            decision.p_contact[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        patches[static_cast<std::size_t>(i)].vertices = vertex_offsets_;
    }
    return centroidal_rhs(state, decision.forces[static_cast<std::size_t>(k)], patches,
                          nodes_[static_cast<std::size_t>(k)].flags.gamma, params_,
                          k == 0 ? disturbance_ : std::nullopt);
}

VecX OcpNlp::equality_residual(const VecX& x) const
{
    require(static_cast<int>(x.size()) == n_vars_, "variable vector has the wrong size");
    const int n = cfg_.horizon_samples;
    const double t = cfg_.t_mpc;
    VecX r(n_eq_);
    int row = 0;
    r.segment<3>(row) = x.segment<3>(idx_com(0)) - feedback_.p_com;
    row += 3;
    r.segment<3>(row) = x.segment<3>(idx_h_lin(0)) - feedback_.h_lin;
    row += 3;
    r.segment<3>(row) = x.segment<3>(idx_h_ang(0)) - feedback_.h_ang;
    row += 3;
    for (int i = 0; i < kNumContacts; ++i)
    {
        r.segment<3>(row) =
            x.segment<3>(idx_contact(0, i)) - nodes_[0].p_nom[static_cast<std::size_t>(i)];
        row += 3;
    }
    for (int k = 0; k < n; ++k)
    {
        const ContactFlags& flags = nodes_[static_cast<std::size_t>(k)].flags;
        const CentroidalDerivative d = node_rhs(x, k);
        r.segment<3>(row) =
            x.segment<3>(idx_com(k + 1)) - x.segment<3>(idx_com(k)) - t * d.p_com_dot;
        row += 3;
        r.segment<3>(row) =
            x.segment<3>(idx_h_lin(k + 1)) - x.segment<3>(idx_h_lin(k)) - t * d.h_lin_dot;
        row += 3;
        r.segment<3>(row) =
            x.segment<3>(idx_h_ang(k + 1)) - x.segment<3>(idx_h_ang(k)) - t * d.h_ang_dot;
        row += 3;
        for (int i = 0; i < kNumContacts; ++i)
        {
            const int sigma = flags.sigma[static_cast<std::size_t>(i)];
            r.segment<3>(row) = x.segment<3>(idx_contact(k + 1, i))
                                - x.segment<3>(idx_contact(k, i))
                                - t * contact_rhs(sigma, x.segment<3>(idx_v_contact(k, i)));
            row += 3;
        }
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (flags.sigma[static_cast<std::size_t>(i)] == 1)
            {
                r.segment<3>(row) = x.segment<3>(idx_v_contact(k, i));
                row += 3;
            }
            else
            {
                r(row) = x(idx_v_contact(k, i) + 2);
                ++row;
            }
        }
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (flags.gamma[static_cast<std::size_t>(i)] == 0)
            {
                for (int j = 0; j < kNumVertices; ++j)
                {
                    r.segment<3>(row) = x.segment<3>(idx_force(k, i, j));
                    row += 3;
                }
            }
        }
    }
    return r;
}

VecX OcpNlp::inequality_value(const VecX& x) const
{
    require(static_cast<int>(x.size()) == n_vars_, "variable vector has the wrong size");
    const int n = cfg_.horizon_samples;
    VecX q(n_ineq_);
    int row = 0;
    for (int k = 0; k < n; ++k)
    {
        const double gk = cbf_value(x(idx_com(k) + 2), params_, cfg_.cbf.alpha);
        const double gk1 = cbf_value(x(idx_com(k + 1) + 2), params_, cfg_.cbf.alpha);
        double val = gk1 - (1.0 - cfg_.cbf.gamma) * gk;
        if (k == 0 && cbf_slack_)
        {
            val += x(idx_cbf_slack());
        }
        q(row) = val;
        ++row;
    }
    const int facet_rows = cfg_.friction.n_facets + 1;
    for (int k = 0; k < n; ++k)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (node.flags.gamma[static_cast<std::size_t>(i)] == 0)
            {
                continue;
            }
            const Mat3 rt = node.r_nom[static_cast<std::size_t>(i)].transpose();
            for (int j = 0; j < kNumVertices; ++j)
            {
                q.segment(row, facet_rows) = cone_.A * (rt * x.segment<3>(idx_force(k, i, j)));
                row += facet_rows;
            }
        }
    }
    for (const auto& [k, i] : box_entries_)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        const Vec3 local = node.r_nom[static_cast<std::size_t>(i)].transpose()
                           * (node.p_nom[static_cast<std::size_t>(i)]
                              - x.segment<3>(idx_contact(k, i)));
        q(row) = local.x();
        q(row + 1) = local.y();
        row += 2;
    }
    if (cbf_slack_)
    {
        q(row) = x(idx_cbf_slack());
        ++row;
    }
    return q;
}

double OcpNlp::cost_value(const VecX& x) const
{
    require(static_cast<int>(x.size()) == n_vars_, "variable vector has the wrong size");
    const int n = cfg_.horizon_samples;
    const double t = cfg_.t_mpc;
    double value = 0.0;
    const auto weighted = [](const Vec3& w, const Vec3& e) {
        return w[0] * e[0] * e[0] + w[1] * e[1] * e[1] + w[2] * e[2] * e[2];
    };
    for (int k = 1; k <= n; ++k)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        value += weighted(cfg_.w_com, x.segment<3>(idx_com(k)) - node.com_ref);
        value += weighted(cfg_.w_h_ang, x.segment<3>(idx_h_ang(k)) - node.h_ang_ref);
        for (int i = 0; i < kNumContacts; ++i)
        {
            value += weighted(cfg_.w_contact, x.segment<3>(idx_contact(k, i))
                                                  - node.p_nom[static_cast<std::size_t>(i)]);
        }
    }
    for (int k = 0; k < n; ++k)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        for (int i = 0; i < kNumContacts; ++i)
        {
            Vec3 sum = Vec3::Zero();
            for (int j = 0; j < kNumVertices; ++j)
            {
                sum += x.segment<3>(idx_force(k, i, j));
            }
            for (int j = 0; j < kNumVertices; ++j)
            {
                value += weighted(cfg_.w_force_share,
                                  sum / kNumVertices - x.segment<3>(idx_force(k, i, j)));
            }
            const double ez = node.fz_nom[static_cast<std::size_t>(i)] - sum.z();
            value += cfg_.w_force_z * ez * ez;
        }
    }
    for (int k = 0; k + 1 < n; ++k)
    {
        for (int i = 0; i < kNumContacts; ++i)
        {
            for (int j = 0; j < kNumVertices; ++j)
            {
                const Vec3 rate =
                    (x.segment<3>(idx_force(k + 1, i, j)) - x.segment<3>(idx_force(k, i, j))) / t;
                value += weighted(cfg_.w_force_rate, rate);
            }
        }
    }
    if (cbf_slack_)
    {
        const double s = x(idx_cbf_slack());
        value += kCbfSlackPenalty * s * s;
    }
    return value;
}

QpProblem OcpNlp::linearize(const VecX& x) const
{
    require(static_cast<int>(x.size()) == n_vars_, "variable vector has the wrong size");
    const int n = cfg_.horizon_samples;
    const double t = cfg_.t_mpc;
    QpProblem qp;
    qp.H = cost_h_;
    qp.c = cost_h_ * x + cost_c_;
    qp.A_eq = MatX::Zero(n_eq_, n_vars_);
    qp.b_eq = -equality_residual(x);
    qp.A_in = MatX::Zero(n_ineq_, n_vars_);
    const VecX qv = inequality_value(x);
    qp.l_in = ineq_lower_ - qv;
    qp.u_in = ineq_upper_ - qv;

    const Mat3 eye = Mat3::Identity();
    int row = 0;
    qp.A_eq.block<3, 3>(row, idx_com(0)) = eye;
    row += 3;
    qp.A_eq.block<3, 3>(row, idx_h_lin(0)) = eye;
    row += 3;
    qp.A_eq.block<3, 3>(row, idx_h_ang(0)) = eye;
    row += 3;
    for (int i = 0; i < kNumContacts; ++i)
    {
        qp.A_eq.block<3, 3>(row, idx_contact(0, i)) = eye;
        row += 3;
    }
    for (int k = 0; k < n; ++k)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        const ContactFlags& flags = node.flags;

        qp.A_eq.block<3, 3>(row, idx_com(k + 1)) = eye;
        qp.A_eq.block<3, 3>(row, idx_com(k)) = -eye;
        qp.A_eq.block<3, 3>(row, idx_h_lin(k)) = -(t / params_.mass) * eye;
        row += 3;

        qp.A_eq.block<3, 3>(row, idx_h_lin(k + 1)) = eye;
        qp.A_eq.block<3, 3>(row, idx_h_lin(k)) = -eye;
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (flags.gamma[static_cast<std::size_t>(i)] == 1)
            {
                for (int j = 0; j < kNumVertices; ++j)
                {
                    qp.A_eq.block<3, 3>(row, idx_force(k, i, j)) = -t * eye;
                }
            }
        }
        row += 3;

        qp.A_eq.block<3, 3>(row, idx_h_ang(k + 1)) = eye;
        qp.A_eq.block<3, 3>(row, idx_h_ang(k)) = -eye;
        {
            Vec3 total = Vec3::Zero();
            const Vec3 p_com = x.segment<3>(idx_com(k));
            for (int i = 0; i < kNumContacts; ++i)
            {
                if (flags.gamma[static_cast<std::size_t>(i)] == 0)
                {
                    continue;
                }
                Vec3 contact_sum = Vec3::Zero();
                const Vec3 p_ci = x.segment<3>(idx_contact(k, i));
                const Mat3& rot = node.r_nom[static_cast<std::size_t>(i)];
                for (int j = 0; j < kNumVertices; ++j)
                {
                    const Vec3 f = x.segment<3>(idx_force(k, i, j));
                    contact_sum += f;
                    const Vec3 arm =
                        p_ci + rot * vertex_offsets_[static_cast<std::size_t>(j)] - p_com;
                    qp.A_eq.block<3, 3>(row, idx_force(k, i, j)) = -t * skew(arm);
                }
                qp.A_eq.block<3, 3>(row, idx_contact(k, i)) = t * skew(contact_sum);
                total += contact_sum;
            }
            if (k == 0 && disturbance_)
            {
                total += disturbance_->force;
            }
            qp.A_eq.block<3, 3>(row, idx_com(k)) = -t * skew(total);
        }
        row += 3;

        for (int i = 0; i < kNumContacts; ++i)
        {
            qp.A_eq.block<3, 3>(row, idx_contact(k + 1, i)) = eye;
            qp.A_eq.block<3, 3>(row, idx_contact(k, i)) = -eye;
            const double open = 1.0 - flags.sigma[static_cast<std::size_t>(i)];
            qp.A_eq.block<3, 3>(row, idx_v_contact(k, i)) = -t * open * eye;
            row += 3;
        }
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (flags.sigma[static_cast<std::size_t>(i)] == 1)
            {
                qp.A_eq.block<3, 3>(row, idx_v_contact(k, i)) = eye;
                row += 3;
            }
            else
            {
                qp.A_eq(row, idx_v_contact(k, i) + 2) = 1.0;
                ++row;
            }
        }
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (flags.gamma[static_cast<std::size_t>(i)] == 0)
            {
                for (int j = 0; j < kNumVertices; ++j)
                {
                    qp.A_eq.block<3, 3>(row, idx_force(k, i, j)) = eye;
                    row += 3;
                }
            }
        }
    }

    row = 0;
    const double band_mid = params_.com_z_min + params_.com_z_max;
    const auto barrier_slope = [&](double z) { return cfg_.cbf.alpha * (band_mid - 2.0 * z); };
    for (int k = 0; k < n; ++k)
    {
        qp.A_in(row, idx_com(k + 1) + 2) = barrier_slope(x(idx_com(k + 1) + 2));
        qp.A_in(row, idx_com(k) + 2) =
            -(1.0 - cfg_.cbf.gamma) * barrier_slope(x(idx_com(k) + 2));
        if (k == 0 && cbf_slack_)
        {
            qp.A_in(row, idx_cbf_slack()) = 1.0;
        }
        ++row;
    }
    const int facet_rows = cfg_.friction.n_facets + 1;
    for (int k = 0; k < n; ++k)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (node.flags.gamma[static_cast<std::size_t>(i)] == 0)
            {
                continue;
            }
            const MatX facet = cone_.A * node.r_nom[static_cast<std::size_t>(i)].transpose();
            for (int j = 0; j < kNumVertices; ++j)
            {
                qp.A_in.block(row, idx_force(k, i, j), facet_rows, 3) = facet;
                row += facet_rows;
            }
        }
    }
    for (const auto& [k, i] : box_entries_)
    {
        const Node& node = nodes_[static_cast<std::size_t>(k)];
        const Mat3 rt = node.r_nom[static_cast<std::size_t>(i)].transpose();
        qp.A_in.block<1, 3>(row, idx_contact(k, i)) = -rt.row(0);
        qp.A_in.block<1, 3>(row + 1, idx_contact(k, i)) = -rt.row(1);
        row += 2;
    }
    if (cbf_slack_)
    {
        qp.A_in(row, idx_cbf_slack()) = 1.0;
        ++row;
    }
    return qp;
}

double OcpNlp::primal_violation(const VecX& x) const
{
    const VecX r = equality_residual(x);
    double viol = r.size() > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
    const VecX q = inequality_value(x);
    for (int i = 0; i < q.size(); ++i)
    {
        viol = std::max(viol, ineq_lower_(i) - q(i));
        viol = std::max(viol, q(i) - ineq_upper_(i));
    }
    return viol;
}

double OcpNlp::violation_l1(const VecX& x) const
{
    const VecX r = equality_residual(x);
    double viol = r.cwiseAbs().sum();
    const VecX q = inequality_value(x);
    for (int i = 0; i < q.size(); ++i)
    {
        viol += std::max(0.0, ineq_lower_(i) - q(i));
        viol += std::max(0.0, q(i) - ineq_upper_(i));
    }
    return viol;
}

std::vector<Footstep> OcpNlp::adjusted_footsteps(const OcpDecision& decision) const
{
    decision.validate(cfg_.horizon_samples);
    const int n = cfg_.horizon_samples;
    const double t = cfg_.t_mpc;
    const double horizon_end = start_time_ + n * t;
    std::vector<Footstep> out;
    for (const Footstep& fs : footsteps_)
    {
        if (fs.deactivation_time <= start_time_ + kTimeTol
            || fs.activation_time >= horizon_end - kTimeTol)
        {
            continue;
        }
        const int i = contact_index(fs.contact_name);
        const int touchdown = std::clamp(
            static_cast<int>(std::lround((fs.activation_time - start_time_) / t)), 0, n);
        Footstep adjusted = fs;
        adjusted.pose.position =
            decision.p_contact[static_cast<std::size_t>(touchdown)][static_cast<std::size_t>(i)];
        out.push_back(adjusted);
    }
    return out;
}

int OcpNlp::saturated_box_rows(const VecX& x, double tol) const
{
    const VecX q = inequality_value(x);
    const int n_box = 2 * static_cast<int>(box_entries_.size());
    int count = 0;
    for (int r = box_row_begin_; r < box_row_begin_ + n_box; ++r)
    {
        if (std::abs(q(r) - ineq_lower_(r)) <= tol || std::abs(ineq_upper_(r) - q(r)) <= tol)
        {
            ++count;
        }
    }
    return count;
}

const Vec3& OcpNlp::nominal_contact(int k, int i) const
{
    return nodes_.at(static_cast<std::size_t>(k)).p_nom.at(static_cast<std::size_t>(i));
}

const ContactFlags& OcpNlp::flags(int k) const
{
    require(k >= 0 && k < cfg_.horizon_samples, "interval index outside the horizon");
    return nodes_[static_cast<std::size_t>(k)].flags;
}

OcpNlp transcribe(const ReferenceBundle& refs, const GaitTimeline& timeline,
                  const CentroidalState& feedback, const MpcConfig& cfg,
                  const RobotParams& params,
                  const std::optional<DisturbanceWrench>& disturbance)
{
    return OcpNlp(refs, timeline, feedback, cfg, params, disturbance);
}

namespace
{

QpSolution solve_relaxed(const QpProblem& qp, const QpSettings& settings)
{
    const int n = qp.n();
    const int mi = qp.m_in();
    QpProblem relaxed;
    relaxed.H = MatX::Zero(n + mi, n + mi);
    relaxed.H.topLeftCorner(n, n) = qp.H;
    relaxed.H.bottomRightCorner(mi, mi) =
        2.0 * kRelaxPenalty * MatX::Identity(mi, mi);
    relaxed.c = VecX::Zero(n + mi);
    relaxed.c.head(n) = qp.c;
    relaxed.A_eq = MatX::Zero(qp.m_eq(), n + mi);
    relaxed.A_eq.leftCols(n) = qp.A_eq;
    relaxed.b_eq = qp.b_eq;
    relaxed.A_in = MatX::Zero(3 * mi, n + mi);
    relaxed.l_in = VecX::Constant(3 * mi, -kInf);
    relaxed.u_in = VecX::Constant(3 * mi, kInf);
    relaxed.A_in.block(0, 0, mi, n) = qp.A_in;
    relaxed.A_in.block(0, n, mi, mi) = MatX::Identity(mi, mi);
    relaxed.l_in.head(mi) = qp.l_in;
    relaxed.A_in.block(mi, 0, mi, n) = qp.A_in;
    relaxed.A_in.block(mi, n, mi, mi) = -MatX::Identity(mi, mi);
    relaxed.u_in.segment(mi, mi) = qp.u_in;
    relaxed.A_in.block(2 * mi, n, mi, mi) = MatX::Identity(mi, mi);
    relaxed.l_in.tail(mi).setZero();
    return solve_qp(relaxed, settings);
}

} // namespace

OcpSolution solve_sqp(const OcpNlp& nlp, const OcpDecision& warm_start)
{
    const double t_begin = clock_seconds();
    const SqpConfig& sq = nlp.config().sqp;
    VecX x = nlp.pack(warm_start);

    SolveStats stats;
    stats.cbf_slack_active = nlp.cbf_slack_armed();
    double nu = sq.penalty;
    stats.merit_history.push_back(nlp.cost_value(x) + nu * nlp.violation_l1(x));

    QpWarmStart qp_warm;
    double kkt = kInf;
    bool line_search_failed = false;

    for (int it = 1; it <= sq.max_iter; ++it)
    {
        stats.sqp_iterations = it;
        const QpProblem qp = nlp.linearize(x);
        QpSolution sol = solve_qp(qp, sq.qp, qp_warm);
        bool relaxed = false;
        if (sol.status == QpStatus::Infeasible || sol.status == QpStatus::Unbounded)
        {
            relaxed = true;
            stats.relaxed_qp_used = true;
            sol = solve_relaxed(qp, sq.qp);
            if (sol.status == QpStatus::Infeasible || sol.status == QpStatus::Unbounded)
            {
                line_search_failed = true;
                break;
            }
        }
        else
        {
            qp_warm.x = sol.x;
            qp_warm.y_eq = sol.y_eq;
            qp_warm.y_in = sol.y_in;
        }
        const VecX delta = sol.x.head(nlp.n_vars());
        const VecX grad = nlp.cost_gradient(x);

        double stationarity = kInf;
        double dual_inf = 0.0;
        if (!relaxed && sol.status == QpStatus::Solved)
        {
            VecX stat = grad;
            if (qp.m_eq() > 0)
            {
                stat += qp.A_eq.transpose() * sol.y_eq;
                dual_inf = std::max(dual_inf, sol.y_eq.cwiseAbs().maxCoeff());
            }
            if (qp.m_in() > 0)
            {
                stat += qp.A_in.transpose() * sol.y_in;
                dual_inf = std::max(dual_inf, sol.y_in.cwiseAbs().maxCoeff());
            }
            stationarity = stat.cwiseAbs().maxCoeff();
        }
        const double viol_now = nlp.primal_violation(x);
        kkt = std::max(viol_now, stationarity);
        stats.kkt_residual = kkt;
        if (kkt <= sq.tol)
        {
            stats.converged = true;
            break;
        }
        const double predicted =
            grad.dot(delta) + 0.5 * delta.dot(nlp.cost_hessian() * delta);
        if (viol_now <= sq.tol
            && std::abs(predicted) <= sq.tol * (1.0 + std::abs(nlp.cost_value(x))))
        {
            stats.converged = true;
            kkt = viol_now;
            stats.kkt_residual = kkt;
            break;
        }

        if (nu < 2.0 * dual_inf)
        {
            nu = std::min(2.0 * dual_inf + 1.0, kMeritPenaltyCap);
            stats.merit_history.clear();
            stats.merit_history.push_back(nlp.cost_value(x) + nu * nlp.violation_l1(x));
            log::debug("sqp merit penalty raised");
        }

        const double cost0 = nlp.cost_value(x);
        const double viol0 = nlp.violation_l1(x);
        const double phi0 = cost0 + nu * viol0;
        const double descent = std::min(grad.dot(delta) - nu * viol0, 0.0);

        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < sq.max_line_search; ++ls)
        {
            const VecX trial = x + alpha * delta;
            const double phi = nlp.cost_value(trial) + nu * nlp.violation_l1(trial);
            if (phi <= phi0 + sq.armijo * alpha * descent + 1e-12 * (1.0 + std::abs(phi0)))
            {
                x = trial;
                stats.merit_history.push_back(phi);
                accepted = true;
                break;
            }
            alpha *= sq.backtrack;
        }
        if (!accepted)
        {
            line_search_failed = true;
            break;
        }
        if (alpha * delta.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + x.lpNorm<Eigen::Infinity>()))
        {
            kkt = nlp.primal_violation(x);
            stats.kkt_residual = kkt;
            stats.converged = kkt <= sq.tol;
            break;
        }
    }

    if (!stats.converged)
    {
        stats.kkt_residual = std::max(nlp.primal_violation(x), kkt == kInf ? 0.0 : kkt);
        if (line_search_failed)
        {
            log::warn("sqp terminated without convergence, returning last iterate");
        }
    }

    OcpSolution solution;
    solution.decision = nlp.unpack(x);
    solution.adjusted_footsteps = nlp.adjusted_footsteps(solution.decision);
    solution.predicted_com = solution.decision.p_com;
    solution.predicted_h_lin = solution.decision.h_lin;
    solution.predicted_h_ang = solution.decision.h_ang;
    stats.saturated_box_rows = nlp.saturated_box_rows(x, 1e-6);
    stats.wall_time = clock_seconds() - t_begin;
    solution.stats = stats;
    return solution;
}

TrajectoryAdjuster::TrajectoryAdjuster(OcpMode mode, const MpcConfig& cfg,
                                       const RobotParams& params)
    : mode_(mode), cfg_(cfg), params_(params)
{
    cfg_.validate();
    params_.validate();
}

void TrajectoryAdjuster::reset()
{
    primed_ = false;
    internal_ = CentroidalState{};
    last_decision_ = OcpDecision{};
    last_output_ = AdvanceOutput{};
    expected_start_ = 0.0;
    deadline_misses_ = 0;
}

CentroidalState TrajectoryAdjuster::state_from_references(const ReferenceBundle& refs) const
{
    CentroidalState state;
    state.p_com = refs.com_ref.front();
    if (refs.samples() >= 2)
    {
        state.h_lin = params_.mass * (refs.com_ref[1] - refs.com_ref[0]) / refs.sampling_period;
    }
    state.h_ang = refs.h_ang_ref.front();
    return state;
}

OcpDecision TrajectoryAdjuster::shifted_warm_start() const
{
    OcpDecision d = last_decision_;
    const auto shift = [](auto& seq) {
        if (seq.size() >= 2)
        {
            seq.erase(seq.begin());
            seq.push_back(seq.back());
        }
    };
    shift(d.p_com);
    shift(d.h_lin);
    shift(d.h_ang);
    shift(d.p_contact);
    shift(d.forces);
    shift(d.v_contact);
    return d;
}

AdvanceOutput TrajectoryAdjuster::advance(const ReferenceBundle& refs,
                                          const std::optional<CentroidalState>& measured,
                                          const std::optional<DisturbanceWrench>& disturbance)
{
    refs.validate();
    if (mode_ == OcpMode::Mpc && !measured && primed_)
    {
        log::warn("mpc feedback sample missing, holding previous output");
        AdvanceOutput out = last_output_;
        out.stale_feedback = true;
        last_decision_ = shifted_warm_start();
        expected_start_ += cfg_.t_mpc;
        last_output_ = out;
        return out;
    }

    CentroidalState feedback;
    bool stale = false;
    if (mode_ == OcpMode::Rhp)
    {
        feedback = primed_ ? internal_ : state_from_references(refs);
    }
    else if (measured)
    {
        feedback = *measured;
    }
    else
    {
        feedback = state_from_references(refs);
        stale = true;
        log::warn("mpc started without a feedback sample, seeding from the references");
    }

    const OcpNlp nlp(refs, refs.timeline, feedback, cfg_, params_, disturbance);
    const bool aligned = primed_ && std::abs(refs.start_time - expected_start_) <= kTimeTol;
    const OcpDecision warm = aligned ? shifted_warm_start() : nlp.reference_decision();
    OcpSolution solution = solve_sqp(nlp, warm);

    const bool missed = solution.stats.wall_time > cfg_.t_mpc;
    if (missed)
    {
        ++deadline_misses_;
        std::ostringstream msg;
        msg << "ocp solve took " << solution.stats.wall_time << " s, budget " << cfg_.t_mpc
            << " s";
        log::warn(msg.str());
    }

    const CentroidalDerivative d0 = nlp.node_derivative(solution.decision, 0);
    CentroidalState integrated;
    integrated.p_com = feedback.p_com + cfg_.t_mpc * d0.p_com_dot;
    integrated.h_lin = feedback.h_lin + cfg_.t_mpc * d0.h_lin_dot;
    integrated.h_ang = feedback.h_ang + cfg_.t_mpc * d0.h_ang_dot;

    CentroidalState control;
    if (mode_ == OcpMode::Rhp)
    {
        internal_ = integrated;
        control = integrated;
    }
    else
    {
        control.p_com = solution.decision.p_com[1];
        control.h_lin = solution.decision.h_lin[1];
        control.h_ang = solution.decision.h_ang[1];
    }

    primed_ = true;
    expected_start_ = refs.start_time + cfg_.t_mpc;
    last_decision_ = solution.decision;

    AdvanceOutput out;
    out.solution = std::move(solution);
    out.control_state = control;
    out.stale_feedback = stale;
    out.deadline_missed = missed;
    last_output_ = out;
    return out;
}

std::vector<std::string> TrajectoryAdjuster::telemetry_columns()
{
    std::vector<std::string> cols{"time", "solve_time", "sqp_iterations", "kkt_residual",
                                  "deadline_missed"};
    for (const std::string& name : contact_names())
    {
        for (const char* axis : {"_x", "_y", "_z"})
        {
            cols.push_back("adjusted_" + name + axis);
        }
    }
    for (const char* axis : {"_x", "_y", "_z"})
    {
        cols.push_back(std::string("predicted_com") + axis);
    }
    for (const std::string& name : contact_names())
    {
        for (const char* axis : {"_x", "_y", "_z"})
        {
            cols.push_back("force_" + name + axis);
        }
    }
    return cols;
}

std::vector<double> TrajectoryAdjuster::telemetry_row(double timestamp) const
{
    if (!primed_)
    {
        throw std::logic_error("telemetry requested before the first advance");
    }
    const OcpSolution& sol = last_output_.solution;
    std::vector<double> row{timestamp, sol.stats.wall_time,
                            static_cast<double>(sol.stats.sqp_iterations),
                            sol.stats.kkt_residual,
                            last_output_.deadline_missed ? 1.0 : 0.0};
    for (int i = 0; i < kNumContacts; ++i)
    {
        const std::string& name = contact_names()[static_cast<std::size_t>(i)];
        Vec3 p = sol.decision.p_contact.back()[static_cast<std::size_t>(i)];
        for (const Footstep& fs : sol.adjusted_footsteps)
        {
            if (fs.contact_name == name)
            {
                p = fs.pose.position;
                break;
            }
        }
        row.insert(row.end(), {p.x(), p.y(), p.z()});
    }
    const Vec3& com = sol.decision.p_com[1];
    row.insert(row.end(), {com.x(), com.y(), com.z()});
    for (int i = 0; i < kNumContacts; ++i)
    {
        Vec3 sum = Vec3::Zero();
        for (int j = 0; j < kNumVertices; ++j)
        {
            sum += sol.decision.forces[0][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        row.insert(row.end(), {sum.x(), sum.y(), sum.z()});
    }
    return row;
}

} // namespace loco
