#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <loco/gaitgen.hpp>
#include <loco/kinematics.hpp>
#include <loco/ocp.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

using namespace loco;

namespace
{

const std::string kBipedPath = std::string(LOCO_REPO_DIR) + "/data/biped.json";

RobotParams make_params()
{
    RobotParams p;
    p.mass = 56.0;
    p.foot_length = 0.2;
    p.foot_width = 0.1;
    p.com_z_min = 0.45;
    p.com_z_max = 0.75;
    return p;
}

Footstep make_step(const std::string& name, const Vec3& position, double t0, double t1)
{
    Footstep fs;
    fs.contact_name = name;
    fs.pose.position = position;
    fs.activation_time = t0;
    fs.deactivation_time = t1;
    return fs;
}

ReferenceBundle standing_bundle(const RobotParams& params, double start, int samples,
                                double period, double com_z = 0.60)
{
    ReferenceBundle b;
    b.sampling_period = period;
    b.start_time = start;
    const std::size_t n = static_cast<std::size_t>(samples);
    b.com_ref.assign(n, Vec3(0.0, 0.0, com_z));
    b.h_ang_ref.assign(n, Vec3::Zero());
    b.joint_postural.assign(n, VecX::Zero(1));
    const double half_weight = 0.5 * params.weight();
    b.nominal_force_z.assign(n, {half_weight, half_weight});
    const double end = start + samples * period + 1.0;
    b.footsteps.push_back(make_step("left_foot", Vec3(0.0, 0.10, 0.0), 0.0, end));
    b.footsteps.push_back(make_step("right_foot", Vec3(0.0, -0.10, 0.0), 0.0, end));
    b.timeline = derive_timeline(b.footsteps, 0.1, end);
    return b;
}

ReferenceBundle stepping_bundle(const RobotParams& params, double start, int samples,
                                double period)
{
    ReferenceBundle b;
    b.sampling_period = period;
    b.start_time = start;
    const std::size_t n = static_cast<std::size_t>(samples);
    b.com_ref.assign(n, Vec3(0.0, 0.10, 0.60));
    b.h_ang_ref.assign(n, Vec3::Zero());
    b.joint_postural.assign(n, VecX::Zero(1));
    b.footsteps.push_back(make_step("left_foot", Vec3(0.0, 0.10, 0.0), 0.0, 20.0));
    b.footsteps.push_back(make_step("right_foot", Vec3(0.0, -0.10, 0.0), 0.0, 0.18));
    b.footsteps.push_back(make_step("right_foot", Vec3(0.12, -0.10, 0.0), 0.60, 20.0));
    b.timeline = derive_timeline(b.footsteps, 0.10, 20.0);
    const double weight = params.weight();
    b.nominal_force_z.resize(n);
    for (std::size_t k = 0; k < n; ++k)
    {
        const double tk = std::min(start + static_cast<double>(k) * period, 19.99);
        const ContactFlags flags = contact_flags_at(b.timeline, tk);
        const bool left = flags.gamma[0] == 1;
        const bool right = flags.gamma[1] == 1;
        if (left && right)
        {
            b.nominal_force_z[k] = {0.5 * weight, 0.5 * weight};
        }
        else
        {
            b.nominal_force_z[k] = {left ? weight : 0.0, right ? weight : 0.0};
        }
    }
    return b;
}

std::array<ContactPatch, kNumContacts> flat_patches(const RobotParams& params, const Vec3& left,
                                                    const Vec3& right)
{
    std::array<ContactPatch, kNumContacts> patches;
    patches[0].name = "left_foot";
    patches[0].pose.position = left;
    patches[0].vertices = foot_vertex_offsets(params);
    patches[1].name = "right_foot";
    patches[1].pose.position = right;
    patches[1].vertices = foot_vertex_offsets(params);
    return patches;
}

VertexForces no_forces()
{
    VertexForces f;
    for (auto& contact : f)
    {
        contact.fill(Vec3::Zero());
    }
    return f;
}

CentroidalState plant_step(const OcpNlp& nlp, const CentroidalState& state,
                           const OcpSolution& solution, const RobotParams& params)
{
    const CentroidalDerivative d = nlp.node_derivative(solution.decision, 0);
    CentroidalState next;
    next.p_com = state.p_com + nlp.config().t_mpc * d.p_com_dot;
    next.h_lin = state.h_lin + nlp.config().t_mpc * d.h_lin_dot;
    next.h_ang = state.h_ang + nlp.config().t_mpc * d.h_ang_dot;
    (void)params;
    return next;
}

} // namespace

TEST_CASE("centroidal derivative in free fall")
{
    const RobotParams params = make_params();
    CentroidalState state;
    state.p_com = Vec3(0.2, -0.1, 0.6);
    state.h_lin = Vec3(1.0, 2.0, 3.0);
    const auto patches = flat_patches(params, Vec3(0, 0.1, 0), Vec3(0, -0.1, 0));
    VertexForces forces = no_forces();
    forces[0][0] = Vec3(50.0, 0.0, 200.0);

    const auto d = centroidal_rhs(state, forces, patches, {0, 0}, params);
    CHECK((d.h_lin_dot - params.mass * params.gravity).norm() == doctest::Approx(0.0));
    CHECK(d.h_ang_dot.norm() == doctest::Approx(0.0));
    CHECK((d.p_com_dot - state.h_lin / params.mass).norm() == doctest::Approx(0.0));
}

TEST_CASE("centroidal derivative balances a symmetric stance")
{
    const RobotParams params = make_params();
    CentroidalState state;
    state.p_com = Vec3(0.0, 0.0, 0.62);
    const auto patches = flat_patches(params, Vec3(0.0, 0.11, 0.0), Vec3(0.0, -0.11, 0.0));
    const double fz = params.weight() / 8.0;
    VertexForces forces;
    for (auto& contact : forces)
    {
        contact.fill(Vec3(0.0, 0.0, fz));
    }

    Vec3 torque = Vec3::Zero();
    Vec3 total = params.mass * params.gravity;
    for (int i = 0; i < kNumContacts; ++i)
    {
        for (int j = 0; j < kNumVertices; ++j)
        {
            const Vec3 pv = patches[static_cast<std::size_t>(i)].vertex_world(j);
            torque += (pv - state.p_com).cross(forces[static_cast<std::size_t>(i)]
                                                     [static_cast<std::size_t>(j)]);
            total += forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    REQUIRE(torque.norm() < 1e-10);
    REQUIRE(total.norm() < 1e-9);

    const auto d = centroidal_rhs(state, forces, patches, {1, 1}, params);
    CHECK(d.h_lin_dot.norm() < 1e-9);
    CHECK(d.h_ang_dot.norm() < 1e-10);
}

TEST_CASE("centroidal derivative with a single support force under the CoM")
{
    RobotParams params = make_params();
    params.mass = 56.0;
    CentroidalState state;
    state.p_com = Vec3(0.03, -0.02, 0.55);

    std::array<ContactPatch, kNumContacts> patches;
    patches[0].name = "left_foot";
    patches[0].pose.position = Vec3(0.03, -0.02, 0.0);
    patches[0].vertices = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    patches[1] = patches[0];
    patches[1].name = "right_foot";

    VertexForces forces = no_forces();
    forces[0][0] = Vec3(0.0, 0.0, 56.0 * 9.81);

    const auto d = centroidal_rhs(state, forces, patches, {1, 0}, params);
    CHECK(d.h_lin_dot.norm() < 1e-9);
    CHECK(d.h_ang_dot.norm() < 1e-12);
}

TEST_CASE("centroidal derivative matches a brute-force torque sum")
{
    const RobotParams params = make_params();
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    for (int trial = 0; trial < 20; ++trial)
    {
        CentroidalState state;
        state.p_com = Vec3(uni(rng), uni(rng), 0.5 + 0.2 * uni(rng));
        state.h_lin = 10.0 * Vec3(uni(rng), uni(rng), uni(rng));
        auto patches = flat_patches(params, Vec3(0.1 * uni(rng), 0.1 + 0.05 * uni(rng), 0.0),
                                    Vec3(0.1 * uni(rng), -0.1 + 0.05 * uni(rng), 0.0));
        patches[0].pose.rotation = yaw_rotation(0.4 * uni(rng));
        patches[1].pose.rotation = yaw_rotation(0.4 * uni(rng));
        const std::array<int, kNumContacts> gamma{trial % 2, 1};
        VertexForces forces;
        for (auto& contact : forces)
        {
            for (auto& f : contact)
            {
                f = 80.0 * Vec3(uni(rng), uni(rng), uni(rng) + 1.0);
            }
        }
        DisturbanceWrench dist;
        dist.force = 30.0 * Vec3(uni(rng), uni(rng), uni(rng));
        dist.application_point = state.p_com + Vec3(uni(rng), uni(rng), uni(rng));

        Vec3 expected_force = params.mass * params.gravity + dist.force;
        Vec3 expected_torque = (dist.application_point - state.p_com).cross(dist.force);
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (gamma[static_cast<std::size_t>(i)] == 0)
            {
                continue;
            }
            for (int j = 0; j < kNumVertices; ++j)
            {
                const Vec3& f = forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                const Vec3 pv = patches[static_cast<std::size_t>(i)].pose
                                * patches[static_cast<std::size_t>(i)]
                                      .vertices[static_cast<std::size_t>(j)];
                expected_force += f;
                expected_torque += (pv - state.p_com).cross(f);
            }
        }

        const auto d = centroidal_rhs(state, forces, patches, gamma, params, dist);
        CHECK((d.h_lin_dot - expected_force).norm() < 1e-10);
        CHECK((d.h_ang_dot - expected_torque).norm() < 1e-10);
        CHECK((d.p_com_dot - state.h_lin / params.mass).norm() < 1e-12);
    }
}

TEST_CASE("contact dynamics freeze and release")
{
    const Vec3 v(0.1, -0.3, 0.2);
    CHECK(contact_rhs(1, v).norm() == doctest::Approx(0.0));
    CHECK((contact_rhs(0, v) - v).norm() == doctest::Approx(0.0));
    CHECK_THROWS_AS(contact_rhs(2, v), std::invalid_argument);

    const Vec3 p(1.0, 2.0, 3.0);
    const double t = 0.1;
    const Vec3 vc(0.5, 0.0, -0.2);
    const Vec3 stepped = p + t * contact_rhs(0, vc);
    CHECK(stepped.x() == doctest::Approx(1.05));
    CHECK(stepped.y() == doctest::Approx(2.0));
    CHECK(stepped.z() == doctest::Approx(2.98));
    CHECK((p + t * contact_rhs(1, vc) - p).norm() == doctest::Approx(0.0));
}

TEST_CASE("barrier values across the height band")
{
    const RobotParams params = make_params();
    const double width = params.com_z_max - params.com_z_min;
    const double mid = 0.5 * (params.com_z_min + params.com_z_max);

    CHECK(cbf_value(mid, params, 1.0) == doctest::Approx(width * width / 4.0));
    CHECK(cbf_value(mid, params, 2.5) == doctest::Approx(2.5 * width * width / 4.0));
    CHECK(cbf_value(params.com_z_min, params, 1.0) == doctest::Approx(0.0));
    CHECK(cbf_value(params.com_z_max, params, 1.0) == doctest::Approx(0.0));
    CHECK(cbf_value(params.com_z_min - 0.05, params, 1.0) < 0.0);
    CHECK(cbf_value(params.com_z_max + 0.05, params, 1.0) < 0.0);
    CHECK(cbf_value(0.40, params, 1.0) == doctest::Approx(-1.0 * 0.05 * 0.35));
    CHECK_THROWS_AS(cbf_value(0.5, params, 0.0), std::invalid_argument);
}

TEST_CASE("friction facets bound the cone")
{
    const double mu = 0.5;
    const int n = 8;
    const auto cone = friction_facets(mu, n);
    REQUIRE(cone.A.rows() == n + 1);
    REQUIRE(cone.A.cols() == 3);
    CHECK(cone.b.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

    const Vec3 vertical(0.0, 0.0, 100.0);
    CHECK((cone.A * vertical).maxCoeff() < 0.0);

    for (int k = 0; k < n; ++k)
    {
        const double phi = 2.0 * std::numbers::pi * k / n;
        const double fz = 100.0;
        const Vec3 boundary(mu * fz * std::cos(phi), mu * fz * std::sin(phi), fz);
        const VecX rows = cone.A * boundary;
        CHECK(std::abs(rows(k)) < 1e-10);
        CHECK(rows.maxCoeff() < 1e-10);
    }

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
    for (int trial = 0; trial < 40; ++trial)
    {
        const double psi = uni(rng);
        const double fz = 50.0 + 10.0 * std::cos(psi);
        const Vec3 inside(mu * fz * 0.999 * std::cos(psi), mu * fz * 0.999 * std::sin(psi), fz);
        CHECK((cone.A * inside).maxCoeff() <= 1e-12);
    }
    const double mid_angle = std::numbers::pi / n;
    const double blowup = 1.0 / std::cos(std::numbers::pi / n);
    const Vec3 outside(mu * 100.0 * blowup * 1.001 * std::cos(mid_angle),
                       mu * 100.0 * blowup * 1.001 * std::sin(mid_angle), 100.0);
    CHECK((cone.A * outside).maxCoeff() > 0.0);

    const Vec3 pulling(0.0, 0.0, -1.0);
    CHECK((cone.A * pulling)(n) > 0.0);

    CHECK_THROWS_AS(friction_facets(0.5, 3), std::invalid_argument);
    CHECK_THROWS_AS(friction_facets(0.0, 8), std::invalid_argument);
}

TEST_CASE("transcription dimensions follow the horizon")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.t_mpc = 0.06;
    cfg.horizon_samples = 2;
    const auto refs = standing_bundle(params, 0.0, 5, cfg.t_mpc);
    CentroidalState feedback;
    feedback.p_com = Vec3(0.0, 0.0, 0.60);

    const OcpNlp nlp = transcribe(refs, refs.timeline, feedback, cfg, params);
    const int n = cfg.horizon_samples;
    CHECK(nlp.n_vars() == 9 * (n + 1) + 6 * (n + 1) + 24 * n + 6 * n);
    CHECK(nlp.n_vars() == 105);
    CHECK(nlp.shooting_state_rows() == 18);
    CHECK(nlp.shooting_contact_rows() == 12);
    CHECK(nlp.n_eq() == 15 + 18 + 12 + 12);
    CHECK(nlp.n_ineq() == 2 + 2 * 2 * 4 * (cfg.friction.n_facets + 1) + 12);
    CHECK_FALSE(nlp.cbf_slack_armed());

    OcpDecision d = nlp.reference_decision();
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (auto& v : d.p_com)
    {
        v += 0.01 * Vec3(uni(rng), uni(rng), uni(rng));
    }
    for (auto& node : d.forces)
    {
        for (auto& contact : node)
        {
            for (auto& f : contact)
            {
                f += Vec3(uni(rng), uni(rng), uni(rng));
            }
        }
    }
    const VecX x = nlp.pack(d);
    const OcpDecision back = nlp.unpack(x);
    for (int k = 0; k <= n; ++k)
    {
        CHECK((back.p_com[static_cast<std::size_t>(k)] - d.p_com[static_cast<std::size_t>(k)])
                  .norm()
              == doctest::Approx(0.0));
    }
    for (int k = 0; k < n; ++k)
    {
        for (int i = 0; i < kNumContacts; ++i)
        {
            for (int j = 0; j < kNumVertices; ++j)
            {
                CHECK((back.forces[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]
                                  [static_cast<std::size_t>(j)]
                       - d.forces[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]
                                 [static_cast<std::size_t>(j)])
                          .norm()
                      == doctest::Approx(0.0));
            }
        }
    }
}

TEST_CASE("transcription validates its inputs")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.horizon_samples = 4;
    CentroidalState feedback;
    feedback.p_com = Vec3(0.0, 0.0, 0.60);

    auto refs = standing_bundle(params, 0.0, 8, cfg.t_mpc);
    CHECK_NOTHROW(transcribe(refs, refs.timeline, feedback, cfg, params));

    auto wrong_period = refs;
    wrong_period.sampling_period = 0.05;
    CHECK_THROWS_AS(transcribe(wrong_period, wrong_period.timeline, feedback, cfg, params),
                    std::invalid_argument);

    auto short_refs = standing_bundle(params, 0.0, 4, cfg.t_mpc);
    CHECK_THROWS_AS(transcribe(short_refs, short_refs.timeline, feedback, cfg, params),
                    std::invalid_argument);

    auto gap = refs;
    for (auto& fs : gap.footsteps)
    {
        fs.deactivation_time = 0.10;
    }
    gap.timeline = derive_timeline(gap.footsteps, 0.1, 0.10);
    CHECK_THROWS_AS(transcribe(gap, gap.timeline, feedback, cfg, params),
                    std::invalid_argument);

    auto orphan = refs;
    orphan.footsteps.erase(
        std::remove_if(orphan.footsteps.begin(), orphan.footsteps.end(),
                       [](const Footstep& fs) { return fs.contact_name == "right_foot"; }),
        orphan.footsteps.end());
    CHECK_THROWS_AS(transcribe(orphan, orphan.timeline, feedback, cfg, params),
                    std::invalid_argument);

    auto unknown = refs;
    unknown.footsteps.push_back(make_step("hand", Vec3::Zero(), 0.0, 1.0));
    CHECK_THROWS_AS(transcribe(unknown, unknown.timeline, feedback, cfg, params),
                    std::invalid_argument);

    CentroidalState bad = feedback;
    bad.p_com.x() = std::nan("");
    CHECK_THROWS_AS(transcribe(refs, refs.timeline, bad, cfg, params), std::invalid_argument);
}

TEST_CASE("standing optimum is stationary and converges immediately")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.t_mpc = 0.06;
    cfg.horizon_samples = 4;
    const auto refs = standing_bundle(params, 0.0, 7, cfg.t_mpc);
    CentroidalState feedback;
    feedback.p_com = Vec3(0.0, 0.0, 0.60);

    const OcpNlp nlp = transcribe(refs, refs.timeline, feedback, cfg, params);
    const OcpDecision nominal = nlp.reference_decision();
    const VecX x = nlp.pack(nominal);

    CHECK(nlp.equality_residual(x).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(nlp.primal_violation(x) < 1e-10);
    CHECK(nlp.cost_gradient(x).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(nlp.cost_value(x) < 1e-12);

    const OcpSolution sol = solve_sqp(nlp, nominal);
    CHECK(sol.stats.converged);
    CHECK(sol.stats.sqp_iterations <= 2);
    CHECK(sol.stats.kkt_residual <= cfg.sqp.tol);
    const double fz = params.weight() / 8.0;
    for (int i = 0; i < kNumContacts; ++i)
    {
        for (int j = 0; j < kNumVertices; ++j)
        {
            const Vec3& f = sol.decision.forces[0][static_cast<std::size_t>(i)]
                                                [static_cast<std::size_t>(j)];
            CHECK(std::abs(f.z() - fz) < 1e-6);
            CHECK(std::abs(f.x()) < 1e-6);
        }
    }
    for (std::size_t m = 1; m < sol.stats.merit_history.size(); ++m)
    {
        CHECK(sol.stats.merit_history[m]
              <= sol.stats.merit_history[m - 1] + 1e-9 * (1.0 + sol.stats.merit_history[m - 1]));
    }
    REQUIRE(sol.adjusted_footsteps.size() == 2);
    for (const Footstep& fs : sol.adjusted_footsteps)
    {
        const Vec3 nominal_pos = fs.contact_name == "left_foot" ? Vec3(0.0, 0.10, 0.0)
                                                                : Vec3(0.0, -0.10, 0.0);
        CHECK((fs.pose.position - nominal_pos).norm() < 1e-7);
    }
}

TEST_CASE("frozen contacts stay immobile across the horizon")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.horizon_samples = 6;
    const auto refs = standing_bundle(params, 0.0, 9, cfg.t_mpc);
    CentroidalState feedback;
    feedback.p_com = Vec3(0.01, -0.005, 0.59);
    feedback.h_lin = Vec3(0.5, 0.2, 0.0);

    const OcpNlp nlp = transcribe(refs, refs.timeline, feedback, cfg, params);
    for (int k = 0; k < cfg.horizon_samples; ++k)
    {
        CHECK(nlp.flags(k).gamma == std::array<int, 2>{1, 1});
        CHECK(nlp.flags(k).sigma == std::array<int, 2>{1, 1});
    }
    const OcpSolution sol = solve_sqp(nlp, nlp.reference_decision());
    CHECK(sol.stats.converged);
    for (int k = 0; k < cfg.horizon_samples; ++k)
    {
        for (int i = 0; i < kNumContacts; ++i)
        {
            CHECK(sol.decision.v_contact[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]
                      .norm()
                  < 1e-8);
            CHECK((sol.decision.p_contact[static_cast<std::size_t>(k) + 1]
                                         [static_cast<std::size_t>(i)]
                   - sol.decision.p_contact[static_cast<std::size_t>(k)]
                                           [static_cast<std::size_t>(i)])
                      .norm()
                  < 1e-8);
        }
    }
}

TEST_CASE("cost gradient matches finite differences")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.horizon_samples = 2;
    const auto refs = standing_bundle(params, 0.0, 5, cfg.t_mpc);
    CentroidalState feedback;
    feedback.p_com = Vec3(0.0, 0.0, 0.60);
    const OcpNlp nlp = transcribe(refs, refs.timeline, feedback, cfg, params);

    std::mt19937 rng(17);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    VecX x = nlp.pack(nlp.reference_decision());
    for (int c = 0; c < x.size(); ++c)
    {
        x(c) += 0.05 * uni(rng);
    }

    const VecX grad = nlp.cost_gradient(x);
    const double h = 1e-6;
    for (int c = 0; c < x.size(); ++c)
    {
        VecX xp = x;
        VecX xm = x;
        xp(c) += h;
        xm(c) -= h;
        const double fd = (nlp.cost_value(xp) - nlp.cost_value(xm)) / (2.0 * h);
        CHECK(std::abs(grad(c) - fd) <= std::max(1e-5, 1e-4 * std::abs(fd)));
    }
}

TEST_CASE("constraint jacobians match finite differences")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.horizon_samples = 2;
    auto refs = standing_bundle(params, 0.0, 5, cfg.t_mpc);
    refs.footsteps[0].pose.rotation = yaw_rotation(0.3);
    refs.timeline = derive_timeline(refs.footsteps, 0.1, refs.start_time + 2.0);
    CentroidalState feedback;
    feedback.p_com = Vec3(0.0, 0.0, 0.60);
    DisturbanceWrench dist;
    dist.force = Vec3(12.0, -8.0, 4.0);
    dist.application_point = Vec3(0.05, 0.0, 0.60);
    const OcpNlp nlp = transcribe(refs, refs.timeline, feedback, cfg, params, dist);

    std::mt19937 rng(23);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    VecX x = nlp.pack(nlp.reference_decision());
    for (int c = 0; c < x.size(); ++c)
    {
        x(c) += 0.05 * uni(rng);
    }

    const QpProblem qp = nlp.linearize(x);
    const double h = 1e-6;
    for (int c = 0; c < x.size(); ++c)
    {
        VecX xp = x;
        VecX xm = x;
        xp(c) += h;
        xm(c) -= h;
        const VecX er = (nlp.equality_residual(xp) - nlp.equality_residual(xm)) / (2.0 * h);
        const VecX iq = (nlp.inequality_value(xp) - nlp.inequality_value(xm)) / (2.0 * h);
        for (int r = 0; r < nlp.n_eq(); ++r)
        {
            CHECK(std::abs(qp.A_eq(r, c) - er(r)) <= std::max(1e-5, 1e-4 * std::abs(er(r))));
        }
        for (int r = 0; r < nlp.n_ineq(); ++r)
        {
            CHECK(std::abs(qp.A_in(r, c) - iq(r)) <= std::max(1e-5, 1e-4 * std::abs(iq(r))));
        }
    }
}

TEST_CASE("unconstrained reduction matches a normal equations solve")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.horizon_samples = 2;
    const auto refs = standing_bundle(params, 0.0, 5, cfg.t_mpc);
    CentroidalState feedback;
    feedback.p_com = Vec3(0.01, 0.02, 0.58);
    const OcpNlp nlp = transcribe(refs, refs.timeline, feedback, cfg, params);

    const double ridge = 1e-4;
    QpProblem qp;
    qp.H = nlp.cost_hessian()
           + ridge * MatX::Identity(nlp.n_vars(), nlp.n_vars());
    qp.c = nlp.cost_linear();

    QpSettings settings;
    settings.tol = 1e-10;
    settings.max_iter = 100000;
    const QpSolution sol = solve_qp(qp, settings);
    REQUIRE(sol.status == QpStatus::Solved);

    const VecX oracle = -qp.H.ldlt().solve(qp.c);
    CHECK((sol.x - oracle).lpNorm<Eigen::Infinity>()
          <= 1e-8 * (1.0 + oracle.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("barrier slack arms outside the safe band")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.horizon_samples = 4;
    const auto refs = standing_bundle(params, 0.0, 7, cfg.t_mpc);
    CentroidalState feedback;
    feedback.p_com = Vec3(0.0, 0.0, 0.40);

    const OcpNlp nlp = transcribe(refs, refs.timeline, feedback, cfg, params);
    CHECK(nlp.cbf_slack_armed());
    CHECK(nlp.idx_cbf_slack() == nlp.n_vars() - 1);
    CHECK(nlp.n_vars() == 45 * 4 + 15 + 1);

    const OcpSolution sol = solve_sqp(nlp, nlp.reference_decision());
    CHECK(sol.stats.cbf_slack_active);
    CHECK(sol.stats.converged);
    CHECK(std::abs(sol.decision.p_com[0].z() - 0.40) < 1e-7);
    const VecX x = nlp.pack(sol.decision);
    CHECK(nlp.equality_residual(x).cwiseAbs().maxCoeff() < 1e-5);

    CentroidalState inside;
    inside.p_com = Vec3(0.0, 0.0, 0.60);
    const OcpNlp plain = transcribe(refs, refs.timeline, inside, cfg, params);
    CHECK_FALSE(plain.cbf_slack_armed());
    CHECK(plain.n_vars() == 45 * 4 + 15);
}

TEST_CASE("step box saturates under a large push")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.t_mpc = 0.06;
    cfg.horizon_samples = 12;
    cfg.friction.n_facets = 4;
    cfg.step_box_lower = Vec2(-0.03, -0.02);
    cfg.step_box_upper = Vec2(0.03, 0.02);
    const auto refs = stepping_bundle(params, 0.0, cfg.horizon_samples + 2, cfg.t_mpc);
    CentroidalState feedback;
    feedback.p_com = refs.com_ref.front();
    DisturbanceWrench push;
    push.force = Vec3(0.0, 320.0, 0.0);
    push.application_point = feedback.p_com;

    const OcpNlp nlp = transcribe(refs, refs.timeline, feedback, cfg, params, push);
    const OcpSolution sol = solve_sqp(nlp, nlp.reference_decision());
    CHECK(sol.stats.saturated_box_rows > 0);
    for (const Footstep& fs : sol.adjusted_footsteps)
    {
        const int i = contact_index(fs.contact_name);
        REQUIRE(i >= 0);
        Vec3 nominal = Vec3::Zero();
        for (const Footstep& ref : refs.footsteps)
        {
            if (ref.contact_name == fs.contact_name
                && std::abs(ref.activation_time - fs.activation_time) < 1e-9)
            {
                nominal = ref.pose.position;
            }
        }
        const Vec3 offset = nominal - fs.pose.position;
        CHECK(offset.x() >= cfg.step_box_lower.x() - 1e-6);
        CHECK(offset.x() <= cfg.step_box_upper.x() + 1e-6);
        CHECK(offset.y() >= cfg.step_box_lower.y() - 1e-6);
        CHECK(offset.y() <= cfg.step_box_upper.y() + 1e-6);
    }
}

TEST_CASE("planner and closed loop modes agree on an ideal plant")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.t_mpc = 0.06;
    cfg.horizon_samples = 10;
    cfg.friction.n_facets = 4;

    TrajectoryAdjuster planner(OcpMode::Rhp, cfg, params);
    TrajectoryAdjuster closed(OcpMode::Mpc, cfg, params);
    CHECK(planner.mode() == OcpMode::Rhp);

    CentroidalState plant;
    plant.p_com = Vec3(0.0, 0.0, 0.60);

    for (int cycle = 0; cycle < 50; ++cycle)
    {
        const double start = cycle * cfg.t_mpc;
        const auto refs = standing_bundle(params, start, cfg.horizon_samples + 2, cfg.t_mpc);
        const auto out_planner = planner.advance(refs);
        const auto out_closed = closed.advance(refs, plant);
        CHECK_FALSE(out_closed.stale_feedback);

        CHECK((out_planner.control_state.p_com - out_closed.control_state.p_com).norm() < 1e-6);
        CHECK((out_planner.control_state.h_lin - out_closed.control_state.h_lin).norm() < 1e-6);
        CHECK((out_planner.control_state.h_ang - out_closed.control_state.h_ang).norm() < 1e-6);
        REQUIRE(out_planner.solution.adjusted_footsteps.size()
                == out_closed.solution.adjusted_footsteps.size());
        for (std::size_t s = 0; s < out_planner.solution.adjusted_footsteps.size(); ++s)
        {
            CHECK((out_planner.solution.adjusted_footsteps[s].pose.position
                   - out_closed.solution.adjusted_footsteps[s].pose.position)
                      .norm()
                  < 1e-6);
        }

        const OcpNlp nlp = transcribe(refs, refs.timeline, plant, cfg, params);
        plant = plant_step(nlp, plant, out_closed.solution, params);
    }
    CHECK((planner.internal_state().p_com - plant.p_com).norm() < 1e-6);
}

TEST_CASE("lateral impulse shifts the upcoming footstep inside the box")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.t_mpc = 0.06;
    cfg.horizon_samples = 12;
    cfg.friction.n_facets = 4;

    const auto run = [&](bool push) {
        TrajectoryAdjuster planner(OcpMode::Rhp, cfg, params);
        std::vector<double> adjusted_y;
        for (int cycle = 0; cycle < 7; ++cycle)
        {
            const double start = cycle * cfg.t_mpc;
            const auto refs = stepping_bundle(params, start, cfg.horizon_samples + 2, cfg.t_mpc);
            std::optional<DisturbanceWrench> dist;
            if (push && cycle == 1)
            {
                DisturbanceWrench w;
                w.force = Vec3(0.0, 63.0, 0.0);
                w.application_point = planner.internal_state().p_com;
                dist = w;
            }
            const auto out = planner.advance(refs, {}, dist);
            double y = std::nan("");
            for (const Footstep& fs : out.solution.adjusted_footsteps)
            {
                if (fs.contact_name == "right_foot"
                    && std::abs(fs.activation_time - 0.60) < 1e-9)
                {
                    y = fs.pose.position.y();
                }
            }
            adjusted_y.push_back(y);
        }
        return adjusted_y;
    };

    const auto baseline = run(false);
    const auto pushed = run(true);
    REQUIRE(baseline.size() == pushed.size());

    double best_shift = 0.0;
    for (std::size_t c = 1; c < baseline.size(); ++c)
    {
        if (std::isnan(baseline[c]) || std::isnan(pushed[c]))
        {
            continue;
        }
        best_shift = std::max(best_shift, pushed[c] - baseline[c]);
        const double offset = -0.10 - pushed[c];
        CHECK(offset >= cfg.step_box_lower.y() - 1e-6);
        CHECK(offset <= cfg.step_box_upper.y() + 1e-6);
    }
    CHECK(best_shift > 0.01);
}

TEST_CASE("barrier keeps the plant inside the height band")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.t_mpc = 0.06;
    cfg.horizon_samples = 10;
    cfg.friction.n_facets = 4;

    TrajectoryAdjuster planner(OcpMode::Rhp, cfg, params);
    const int cycles = 40;
    double min_z = 1.0;
    for (int cycle = 0; cycle < cycles; ++cycle)
    {
        const double start = cycle * cfg.t_mpc;
        auto refs = standing_bundle(params, start, cfg.horizon_samples + 2, cfg.t_mpc);
        for (std::size_t k = 0; k < refs.com_ref.size(); ++k)
        {
            const double tk = start + static_cast<double>(k) * cfg.t_mpc;
            refs.com_ref[k].z() = std::max(0.60 - 0.15 * tk, 0.30);
        }
        const auto out = planner.advance(refs);
        min_z = std::min(min_z, planner.internal_state().p_com.z());
        CHECK(out.solution.stats.converged);
    }
    CHECK(min_z >= params.com_z_min - 1e-5);
    CHECK(min_z < 0.50);
}

TEST_CASE("missing feedback holds the previous output")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.t_mpc = 0.06;
    cfg.horizon_samples = 4;
    cfg.friction.n_facets = 4;
    TrajectoryAdjuster controller(OcpMode::Mpc, cfg, params);

    CentroidalState state;
    state.p_com = Vec3(0.0, 0.0, 0.60);
    const auto refs0 = standing_bundle(params, 0.0, cfg.horizon_samples + 2, cfg.t_mpc);
    const auto first = controller.advance(refs0, state);
    CHECK_FALSE(first.stale_feedback);

    const auto refs1 = standing_bundle(params, cfg.t_mpc, cfg.horizon_samples + 2, cfg.t_mpc);
    const auto held = controller.advance(refs1, std::nullopt);
    CHECK(held.stale_feedback);
    CHECK((held.control_state.p_com - first.control_state.p_com).norm()
          == doctest::Approx(0.0));
    CHECK((held.control_state.h_lin - first.control_state.h_lin).norm()
          == doctest::Approx(0.0));

    const auto refs2 = standing_bundle(params, 2 * cfg.t_mpc, cfg.horizon_samples + 2, cfg.t_mpc);
    const auto resumed = controller.advance(refs2, state);
    CHECK_FALSE(resumed.stale_feedback);
}

TEST_CASE("deadline watchdog counts slow solves")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.t_mpc = 1e-4;
    cfg.horizon_samples = 3;
    cfg.friction.n_facets = 4;
    TrajectoryAdjuster controller(OcpMode::Rhp, cfg, params);
    const auto refs = standing_bundle(params, 0.0, cfg.horizon_samples + 2, cfg.t_mpc);
    const auto out = controller.advance(refs);
    CHECK(out.deadline_missed);
    CHECK(controller.deadline_misses() >= 1);
}

TEST_CASE("telemetry rows mirror the last advance")
{
    const RobotParams params = make_params();
    MpcConfig cfg;
    cfg.horizon_samples = 4;
    cfg.friction.n_facets = 4;
    TrajectoryAdjuster controller(OcpMode::Rhp, cfg, params);
    CHECK_THROWS_AS(controller.telemetry_row(0.0), std::logic_error);

    const auto refs = standing_bundle(params, 0.0, cfg.horizon_samples + 2, cfg.t_mpc);
    const auto out = controller.advance(refs);
    const auto cols = TrajectoryAdjuster::telemetry_columns();
    const auto row = controller.telemetry_row(1.5);
    REQUIRE(cols.size() == row.size());
    CHECK(row[0] == doctest::Approx(1.5));
    CHECK(row[1] == doctest::Approx(out.solution.stats.wall_time));
    CHECK(row[2] == doctest::Approx(out.solution.stats.sqp_iterations));
}

TEST_CASE("walking references transcribe into a feasible solution")
{
    GaitGenConfig gcfg;
    GaitGenerator gen(load_chain_model(kBipedPath), gcfg);
    auto state = gen.initial_state();
    const Vec3 command(0.18, 0.0, 0.08);
    for (int i = 0; i < 150; ++i)
    {
        gen.step(state, command);
    }
    MpcConfig cfg;
    cfg.t_mpc = 0.06;
    cfg.horizon_samples = 20;
    const auto horizon = gen.generate_horizon(state, command, 1.26, cfg.t_mpc, 0.1);
    const ReferenceBundle& refs = horizon.bundle;
    REQUIRE(static_cast<int>(refs.samples()) >= cfg.horizon_samples + 1);

    RobotParams params;
    params.mass = gen.model().total_mass();
    params.foot_length = 0.2;
    params.foot_width = 0.1;
    params.com_z_min = 0.20;
    params.com_z_max = 0.90;

    CentroidalState feedback;
    feedback.p_com = refs.com_ref[0];
    feedback.h_lin = params.mass * (refs.com_ref[1] - refs.com_ref[0]) / cfg.t_mpc;
    feedback.h_ang = refs.h_ang_ref[0];

    const OcpNlp nlp = transcribe(refs, refs.timeline, feedback, cfg, params);
    const OcpSolution sol = solve_sqp(nlp, nlp.reference_decision());
    CHECK(sol.stats.converged);

    const VecX x = nlp.pack(sol.decision);
    CHECK(nlp.primal_violation(x) < 5e-6);
    for (std::size_t m = 1; m < sol.stats.merit_history.size(); ++m)
    {
        CHECK(sol.stats.merit_history[m]
              <= sol.stats.merit_history[m - 1]
                     + 1e-9 * (1.0 + std::abs(sol.stats.merit_history[m - 1])));
    }
    for (int k = 0; k < cfg.horizon_samples; ++k)
    {
        const ContactFlags& flags = nlp.flags(k);
        for (int i = 0; i < kNumContacts; ++i)
        {
            if (flags.sigma[static_cast<std::size_t>(i)] == 1)
            {
                CHECK((sol.decision.p_contact[static_cast<std::size_t>(k) + 1]
                                             [static_cast<std::size_t>(i)]
                       - sol.decision.p_contact[static_cast<std::size_t>(k)]
                                               [static_cast<std::size_t>(i)])
                          .norm()
                      < 5e-6);
            }
            if (flags.gamma[static_cast<std::size_t>(i)] == 0)
            {
                for (int j = 0; j < kNumVertices; ++j)
                {
                    CHECK(sol.decision.forces[static_cast<std::size_t>(k)]
                                             [static_cast<std::size_t>(i)]
                                             [static_cast<std::size_t>(j)]
                              .norm()
                          < 5e-6);
                }
            }
        }
        CHECK(std::abs(sol.decision.p_contact[static_cast<std::size_t>(k)][0].z()) < 5e-6);
        CHECK(std::abs(sol.decision.p_contact[static_cast<std::size_t>(k)][1].z()) < 5e-6);
    }
}

TEST_CASE("configuration validation rejects bad values")
{
    MpcConfig cfg;
    CHECK_NOTHROW(cfg.validate());

    MpcConfig bad = cfg;
    bad.t_mpc = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.horizon_samples = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.w_com.y() = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.cbf.alpha = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.cbf.gamma = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.cbf.gamma = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.step_box_lower.x() = 0.01;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.friction.n_facets = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.sqp.backtrack = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    const MpcConfig rhp = default_mpc_config(OcpMode::Rhp);
    const MpcConfig mpc = default_mpc_config(OcpMode::Mpc);
    CHECK(rhp.t_mpc == doctest::Approx(0.06));
    CHECK(mpc.t_mpc == doctest::Approx(0.05));
    CHECK(rhp.horizon_samples * rhp.t_mpc == doctest::Approx(1.2));
    CHECK(mpc.horizon_samples * mpc.t_mpc == doctest::Approx(1.2));
}
