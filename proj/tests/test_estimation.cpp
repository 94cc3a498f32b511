#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <loco/estimation.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace loco;

namespace
{

/** Plain-form Kalman update written independently of the library code. */
KfState reference_step(const KfState& state, const KfConfig& cfg, double y)
{
    Mat3 f;
    f << 1, cfg.t, 0, 0, 1, cfg.t, 0, 0, 1;
    Mat3 q = Mat3::Zero();
    q.diagonal() = cfg.q_diag;

    const Vec3 xp = f * state.x;
    const Mat3 pp = f * state.p * f.transpose() + q;

    Eigen::RowVector3d h;
    h << 1, 0, 0;
    const double s = (h * pp * h.transpose())(0, 0) + cfg.r;
    const Vec3 k = pp * h.transpose() / s;

    KfState out;
    out.x = xp + k * (y - (h * xp)(0, 0));
    out.p = (Mat3::Identity() - k * h) * pp;
    out.p = 0.5 * (out.p + out.p.transpose());
    return out;
}

KfConfig small_config()
{
    KfConfig cfg;
    cfg.t = 0.01;
    cfg.lambda0 = 0.5;
    cfg.q_diag = Vec3(0.02, 0.03, 0.04);
    cfg.r = 0.25;
    return cfg;
}

/** Objective recomputed from scratch with explicit loops, no shared helpers. */
double objective_oracle(const Genes& genes, const std::vector<double>& y, double t,
                        double w_a, double w_j)
{
    const KfConfig cfg = kf_config_from_genes(genes, t);
    const std::size_t n = y.size();
    std::vector<Vec3> x(n);
    KfState st = kf_init(cfg, y[0]);
    x[0] = st.x;
    for (std::size_t i = 1; i < n; ++i)
    {
        st = reference_step(st, cfg, y[i]);
        x[i] = st.x;
    }

    std::vector<double> s_v(n), v_a(n), s_a(n);
    s_v[0] = y[0];
    v_a[0] = x[0][1];
    s_a[0] = y[0];
    for (std::size_t i = 1; i < n; ++i)
    {
        s_v[i] = s_v[i - 1] + 0.5 * t * (x[i - 1][1] + x[i][1]);
        v_a[i] = v_a[i - 1] + 0.5 * t * (x[i - 1][2] + x[i][2]);
        s_a[i] = s_a[i - 1] + 0.5 * t * (v_a[i - 1] + v_a[i]);
    }

    double g = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double jerk = i + 1 < n ? (x[i + 1][2] - x[i][2]) / t : 0.0;
        g -= w_j * jerk * jerk;
        g -= w_a * x[i][2] * x[i][2];
        g -= (y[i] - x[i][0]) * (y[i] - x[i][0]);
        g -= (y[i] - s_v[i]) * (y[i] - s_v[i]);
        g -= (y[i] - s_a[i]) * (y[i] - s_a[i]);
    }
    return g;
}

} // namespace

TEST_CASE("filter initialization anchors the first sample")
{
    const KfConfig cfg = small_config();
    const KfState st = kf_init(cfg, 1.75);
    CHECK(st.x[0] == 1.75);
    CHECK(st.x[1] == 0.0);
    CHECK(st.x[2] == 0.0);
    CHECK((st.p - 0.5 * Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("filter step matches a plain-form reference filter")
{
    const KfConfig cfg = small_config();
    const std::vector<double> meas{0.3, 0.32, 0.37, 0.35, 0.41};

    KfState lib = kf_init(cfg, meas[0]);
    KfState ref = lib;
    for (std::size_t i = 1; i < meas.size(); ++i)
    {
        lib = kf_step(lib, cfg, meas[i]);
        ref = reference_step(ref, cfg, meas[i]);
        CHECK((lib.x - ref.x).norm() < 1e-12);
        CHECK((lib.p - ref.p).norm() < 1e-10);
    }
}

TEST_CASE("an uninformative measurement reduces the step to pure prediction")
{
    KfConfig cfg = small_config();
    cfg.q_diag = Vec3(1e-12, 1e-12, 1e-12);
    cfg.r = 1e9;

    KfState st;
    st.x = Vec3(0.0, 1.0, 0.0);
    st.p = 1e-9 * Mat3::Identity();
    st = kf_step(st, cfg, 0.0);

    CHECK(st.x[0] == doctest::Approx(0.01).epsilon(1e-7));
    CHECK(st.x[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(st.x[2]) < 1e-9);
}

TEST_CASE("velocity estimate converges on a clean ramp")
{
    KfConfig cfg;
    cfg.t = 0.001;
    cfg.lambda0 = 1.0;
    cfg.q_diag = Vec3(1e-6, 1e-4, 1e-2);
    cfg.r = 1e-8;

    const double slope = 0.7;
    KfState st = kf_init(cfg, 0.0);
    for (int i = 1; i <= 20000; ++i)
    {
        st = kf_step(st, cfg, slope * cfg.t * i);
    }
    CHECK(st.x[1] == doctest::Approx(slope).epsilon(1e-6));
    CHECK(std::abs(st.x[2]) < 1e-4);
}

TEST_CASE("covariance stays positive definite over a long noisy run")
{
    const KfConfig cfg = small_config();
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 0.05);

    KfState st = kf_init(cfg, 0.0);
    double min_eig = 1e300;
    for (int i = 1; i <= 5000; ++i)
    {
        st = kf_step(st, cfg, std::sin(0.01 * i) + noise(rng));
        const Eigen::SelfAdjointEigenSolver<Mat3> eig(st.p);
        min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
    }
    CHECK(min_eig > 0.0);
}

TEST_CASE("filter configuration validation rejects non-positive entries")
{
    KfConfig cfg = small_config();
    cfg.r = 0.0;
    CHECK_THROWS_AS(kf_init(cfg, 0.0), std::invalid_argument);
    cfg = small_config();
    cfg.q_diag[1] = -1.0;
    CHECK_THROWS_AS(kf_init(cfg, 0.0), std::invalid_argument);
    cfg = small_config();
    cfg.t = 0.0;
    CHECK_THROWS_AS(kf_init(cfg, 0.0), std::invalid_argument);
}

TEST_CASE("tuning objective matches an independently coded oracle")
{
    const auto data = synth_joint_dataset(400, 0.002, 0.01, 3);
    Genes genes;
    genes << 0.5, 1e-4, 1e-2, 1.0, 1e-3;

    const double lib = ga_objective(genes, data.position, 0.002, 1e-3, 1e-5);
    const double ora = objective_oracle(genes, data.position, 0.002, 1e-3, 1e-5);
    CHECK(lib == doctest::Approx(ora).epsilon(1e-9));
    CHECK(lib < 0.0);
}

TEST_CASE("tuning objective is almost zero on a constant signal")
{
    std::vector<double> flat(500, 2.0);
    Genes genes;
    genes << 1e-6, 1e-9, 1e-9, 1e-9, 1.0;
    const double g = ga_objective(genes, flat, 0.001, 1e-3, 1e-5);
    CHECK(g <= 0.0);
    CHECK(g > -1e-6);
}

TEST_CASE("smoother gains produce less estimated jerk on noisy data")
{
    const auto data = synth_joint_dataset(2000, 0.001, 0.02, 11);

    Genes jumpy;
    jumpy << 1.0, 1e-2, 1e0, 1e2, 1e-6;
    Genes smooth;
    smooth << 1.0, 1e-6, 1e-4, 1e-2, 1e-1;

    auto jerk_energy = [&](const Genes& genes) {
        const KfConfig cfg = kf_config_from_genes(genes, 0.001);
        KfState st = kf_init(cfg, data.position[0]);
        double prev_a = st.x[2];
        double total = 0.0;
        for (std::size_t i = 1; i < data.position.size(); ++i)
        {
            st = kf_step(st, cfg, data.position[i]);
            const double j = (st.x[2] - prev_a) / cfg.t;
            total += j * j;
            prev_a = st.x[2];
        }
        return total;
    };

    CHECK(jerk_energy(smooth) < jerk_energy(jumpy));
}

TEST_CASE("parallel population evaluation is bit-identical to serial")
{
    const auto data = synth_joint_dataset(600, 0.001, 0.01, 5);
    GaConfig cfg;

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(std::log(1e-9), std::log(1e2));
    std::vector<Genes> pop(32);
    for (auto& g : pop)
    {
        for (int i = 0; i < 5; ++i)
        {
            g[i] = std::exp(uni(rng));
        }
    }

    std::vector<double> serial, parallel;
    evaluate_population(pop, data.position, 0.001, cfg, serial, false);
    evaluate_population(pop, data.position, 0.001, cfg, parallel, true);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i)
    {
        CHECK(serial[i] == parallel[i]);
    }
}

TEST_CASE("search history is non-decreasing and seed-deterministic")
{
    const auto data = synth_joint_dataset(300, 0.002, 0.01, 21);
    GaConfig cfg;
    cfg.generations = 8;
    cfg.population = 24;
    cfg.parents = 12;

    const auto a = ga_tune(data.position, 0.002, cfg, 99);
    const auto b = ga_tune(data.position, 0.002, cfg, 99);

    REQUIRE(a.history.size() == 8);
    for (std::size_t i = 1; i < a.history.size(); ++i)
    {
        CHECK(a.history[i] >= a.history[i - 1]);
    }
    CHECK(a.best_score >= a.history.front());
    CHECK(a.best_score == b.best_score);
    CHECK((a.best - b.best).norm() == 0.0);

    const double rescore = ga_objective(a.best, data.position, 0.002, cfg.w_a, cfg.w_j);
    CHECK(rescore == doctest::Approx(a.best_score).epsilon(1e-12));
}

TEST_CASE("tuned genes beat unit genes at velocity tracking")
{
    const auto data = synth_joint_dataset(1500, 0.001, 0.01, 31);
    GaConfig cfg;
    cfg.generations = 12;
    cfg.population = 40;
    cfg.parents = 20;

    const auto tuned = ga_tune(data.position, 0.001, cfg, 5);

    Genes naive;
    naive << 1.0, 1.0, 1.0, 1.0, 1.0;

    auto velocity_rmse = [&](const Genes& genes) {
        const KfConfig kf_cfg = kf_config_from_genes(genes, 0.001);
        KfState st = kf_init(kf_cfg, data.position[0]);
        double acc = 0.0;
        for (std::size_t i = 1; i < data.position.size(); ++i)
        {
            st = kf_step(st, kf_cfg, data.position[i]);
            const double e = st.x[1] - data.velocity[i];
            acc += e * e;
        }
        return std::sqrt(acc / static_cast<double>(data.position.size() - 1));
    };

    CHECK(velocity_rmse(tuned.best) < velocity_rmse(naive));
}

TEST_CASE("search configuration validation rejects inconsistent settings")
{
    GaConfig cfg;
    cfg.parents = cfg.population + 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = GaConfig{};
    cfg.mutation_rate = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = GaConfig{};
    cfg.bounds[2] = {1.0, 0.5};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = GaConfig{};
    cfg.generations = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("synthetic dataset velocities agree with position differences")
{
    const auto data = synth_joint_dataset(4000, 0.0005, 0.0, 17);
    REQUIRE(data.time.size() == 4000);
    for (std::size_t i = 1; i + 1 < data.position.size(); i += 97)
    {
        const double fd = (data.position[i + 1] - data.position[i - 1]) / (2.0 * 0.0005);
        CHECK(fd == doctest::Approx(data.velocity[i]).epsilon(2e-2));
    }
    const auto again = synth_joint_dataset(4000, 0.0005, 0.0, 17);
    CHECK(again.position == data.position);
}
