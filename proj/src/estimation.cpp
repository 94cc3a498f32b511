#include <loco/estimation.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace loco
{

namespace
{

Mat3 transition(double t)
{
    Mat3 f;
    f << 1, t, 0, 0, 1, t, 0, 0, 1;
    return f;
}

/** 3x3 Cholesky feasibility probe, cheap enough to run every update. */
bool positive_definite(const Mat3& p)
{
    double l00 = p(0, 0);
    if (l00 <= 0.0)
    {
        return false;
    }
    l00 = std::sqrt(l00);
    const double l10 = p(1, 0) / l00;
    const double l20 = p(2, 0) / l00;
    const double a11 = p(1, 1) - l10 * l10;
    if (a11 <= 0.0)
    {
        return false;
    }
    const double l11 = std::sqrt(a11);
    const double l21 = (p(2, 1) - l20 * l10) / l11;
    return p(2, 2) - l20 * l20 - l21 * l21 > 0.0;
}

} // namespace

void KfConfig::validate() const
{
    if (!(t > 0.0) || !(lambda0 > 0.0) || !(r > 0.0) || !(q_diag.minCoeff() > 0.0))
    {
        throw std::invalid_argument("KF configuration entries must be strictly positive");
    }
}

KfState kf_init(const KfConfig& cfg, double s0)
{
    cfg.validate();
    KfState state;
    state.x = Vec3(s0, 0.0, 0.0);
    state.p = cfg.lambda0 * Mat3::Identity();
    return state;
}

KfState kf_step(const KfState& state, const KfConfig& cfg, double y)
{
    const Mat3 f = transition(cfg.t);

    KfState out;
    const Vec3 x_prior = f * state.x;
    Mat3 p_prior = f * state.p * f.transpose();
    p_prior.diagonal() += cfg.q_diag;

    const double innovation = y - x_prior[0];
    const double s = p_prior(0, 0) + cfg.r;
    const Vec3 gain = p_prior.col(0) / s;

    out.x = x_prior + gain * innovation;

    Mat3 ikh = Mat3::Identity();
    ikh.col(0) -= gain;
    out.p = ikh * p_prior * ikh.transpose() + cfg.r * gain * gain.transpose();
    out.p = 0.5 * (out.p + out.p.transpose());

    if (!positive_definite(out.p))
    {
        throw std::runtime_error("KF covariance lost positive definiteness");
    }
    return out;
}

KfConfig kf_config_from_genes(const Genes& genes, double t)
{
    KfConfig cfg;
    cfg.t = t;
    cfg.lambda0 = genes[0];
    cfg.q_diag = Vec3(genes[1], genes[2], genes[3]);
    cfg.r = genes[4];
    return cfg;
}

void GaConfig::validate() const
{
    if (generations < 1 || population < 2 || parents < 2 || tournament_k < 1)
    {
        throw std::invalid_argument("GA sizes must be positive");
    }
    if (parents > population)
    {
        throw std::invalid_argument("GA parents cannot exceed the population");
    }
    if (mutation_rate < 0.0 || mutation_rate > 1.0 || elite_fraction < 0.0
        || elite_fraction > 1.0)
    {
        throw std::invalid_argument("GA rates must lie in [0, 1]");
    }
    for (const auto& b : bounds)
    {
        if (!(b[0] > 0.0) || !(b[0] < b[1]) || !std::isfinite(b[1]))
        {
            throw std::invalid_argument("GA gene bounds must be finite, positive, ordered");
        }
    }
}

double ga_objective(const Genes& genes, const std::vector<double>& dataset, double t,
                    double w_a, double w_j)
{
    if (dataset.size() < 3)
    {
        throw std::invalid_argument("objective needs at least 3 samples");
    }
    const std::size_t n = dataset.size();
    const KfConfig cfg = kf_config_from_genes(genes, t);

    std::vector<double> s_hat(n);
    std::vector<double> v_hat(n);
    std::vector<double> a_hat(n);

    KfState state = kf_init(cfg, dataset[0]);
    s_hat[0] = state.x[0];
    v_hat[0] = state.x[1];
    a_hat[0] = state.x[2];
    for (std::size_t i = 1; i < n; ++i)
    {
        state = kf_step(state, cfg, dataset[i]);
        s_hat[i] = state.x[0];
        v_hat[i] = state.x[1];
        a_hat[i] = state.x[2];
    }

    // position reconstructions by trapezoidal integration, anchored at s0
    double s_from_v = dataset[0];
    double v_from_a = v_hat[0];
    double s_from_a = dataset[0];

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        if (i > 0)
        {
            s_from_v += 0.5 * t * (v_hat[i - 1] + v_hat[i]);
            const double v_prev = v_from_a;
            v_from_a += 0.5 * t * (a_hat[i - 1] + a_hat[i]);
            s_from_a += 0.5 * t * (v_prev + v_from_a);
        }
        const double jerk = i + 1 < n ? (a_hat[i + 1] - a_hat[i]) / t : 0.0;
        const double e_s = dataset[i] - s_hat[i];
        const double e_v = dataset[i] - s_from_v;
        const double e_a = dataset[i] - s_from_a;
        total -= w_j * jerk * jerk + w_a * a_hat[i] * a_hat[i] + e_s * e_s + e_v * e_v
                 + e_a * e_a;
    }
    return total;
}

void evaluate_population(const std::vector<Genes>& genes,
                         const std::vector<double>& dataset, double t,
                         const GaConfig& cfg, std::vector<double>& scores, bool parallel)
{
    scores.resize(genes.size());
    const int count = static_cast<int>(genes.size());
    if (parallel)
    {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < count; ++i)
        {
            scores[static_cast<std::size_t>(i)] =
                ga_objective(genes[static_cast<std::size_t>(i)], dataset, t, cfg.w_a,
                             cfg.w_j);
        }
    }
    else
    {
        for (int i = 0; i < count; ++i)
        {
            scores[static_cast<std::size_t>(i)] =
                ga_objective(genes[static_cast<std::size_t>(i)], dataset, t, cfg.w_a,
                             cfg.w_j);
        }
    }
}

GaResult ga_tune(const std::vector<double>& dataset, double t, const GaConfig& cfg,
                 std::uint64_t seed)
{
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto log_uniform_gene = [&](int g) {
        const auto gi = static_cast<std::size_t>(g);
        const double lo = std::log(cfg.bounds[gi][0]);
        const double hi = std::log(cfg.bounds[gi][1]);
        return std::exp(lo + (hi - lo) * uni(rng));
    };

    std::vector<Genes> population(static_cast<std::size_t>(cfg.population));
    for (auto& ind : population)
    {
        for (int g = 0; g < 5; ++g)
        {
            ind[g] = log_uniform_gene(g);
        }
    }

    std::vector<double> scores;
    evaluate_population(population, dataset, t, cfg, scores, cfg.parallel);

    GaResult result;
    result.best = population[0];
    result.best_score = scores[0];
    auto absorb = [&]() {
        for (std::size_t i = 0; i < population.size(); ++i)
        {
            if (scores[i] > result.best_score)
            {
                result.best_score = scores[i];
                result.best = population[i];
            }
        }
    };
    absorb();

    const int n_elite =
        std::clamp(static_cast<int>(std::round(cfg.elite_fraction * cfg.population)), 0,
                   cfg.population - 1);

    auto ranked_indices = [&]() {
        std::vector<int> order(population.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const auto sa = scores[static_cast<std::size_t>(a)];
            const auto sb = scores[static_cast<std::size_t>(b)];
            return sa != sb ? sa > sb : a < b;
        });
        return order;
    };

    auto tournament = [&]() {
        int winner = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.population));
        for (int k = 1; k < cfg.tournament_k; ++k)
        {
            const int rival =
                static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.population));
            const auto sw = scores[static_cast<std::size_t>(winner)];
            const auto sr = scores[static_cast<std::size_t>(rival)];
            if (sr > sw || (sr == sw && rival < winner))
            {
                winner = rival;
            }
        }
        return winner;
    };

    for (int gen = 0; gen < cfg.generations; ++gen)
    {
        const std::vector<int> order = ranked_indices();

        std::vector<int> pool(static_cast<std::size_t>(cfg.parents));
        for (auto& p : pool)
        {
            p = tournament();
        }

        std::vector<Genes> next;
        std::vector<double> next_scores;
        next.reserve(population.size());
        for (int e = 0; e < n_elite; ++e)
        {
            const auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(e)]);
            next.push_back(population[idx]);
            next_scores.push_back(scores[idx]);
        }

        std::vector<Genes> children;
        while (static_cast<int>(next.size() + children.size()) < cfg.population)
        {
            const auto pa = static_cast<std::size_t>(
                pool[rng() % static_cast<std::uint64_t>(pool.size())]);
            const auto pb = static_cast<std::size_t>(
                pool[rng() % static_cast<std::uint64_t>(pool.size())]);

            // two-point crossover on the 5-gene vector
            const int c1 = static_cast<int>(rng() % 4);
            const int c2 =
                c1 + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(5 - c1));
            Genes child = population[pa];
            for (int g = c1; g < c2 && g < 5; ++g)
            {
                child[g] = population[pb][g];
            }

            for (int g = 0; g < 5; ++g)
            {
                if (uni(rng) < cfg.mutation_rate)
                {
                    const auto gi = static_cast<std::size_t>(g);
                    if (uni(rng) < 0.5)
                    {
                        child[g] = log_uniform_gene(g);
                    }
                    else
                    {
                        child[g] = std::clamp(child[g] * std::exp(0.5 * gauss(rng)),
                                              cfg.bounds[gi][0], cfg.bounds[gi][1]);
                    }
                }
            }
            children.push_back(child);
        }

        std::vector<double> child_scores;
        evaluate_population(children, dataset, t, cfg, child_scores, cfg.parallel);

        for (std::size_t i = 0; i < children.size(); ++i)
        {
            next.push_back(children[i]);
            next_scores.push_back(child_scores[i]);
        }
        population = std::move(next);
        scores = std::move(next_scores);

        absorb();
        result.history.push_back(*std::max_element(scores.begin(), scores.end()));
    }
    return result;
}

SynthDataset synth_joint_dataset(std::size_t samples, double t, double noise_std,
                                 std::uint64_t seed)
{
    // three incommensurate tones so velocity and acceleration stay busy
    const std::array<double, 3> amp{0.40, 0.15, 0.05};
    const std::array<double, 3> freq{0.8, 2.3, 5.1};
    const std::array<double, 3> phase{0.3, 1.1, 2.0};

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SynthDataset out;
    out.time.resize(samples);
    out.position.resize(samples);
    out.velocity.resize(samples);
    for (std::size_t i = 0; i < samples; ++i)
    {
        const double ti = static_cast<double>(i) * t;
        double pos = 0.0;
        double vel = 0.0;
        for (std::size_t k = 0; k < amp.size(); ++k)
        {
            const double w = 2.0 * std::numbers::pi * freq[k];
            pos += amp[k] * std::sin(w * ti + phase[k]);
            vel += amp[k] * w * std::cos(w * ti + phase[k]);
        }
        out.time[i] = ti;
        out.position[i] = pos + noise_std * gauss(rng);
        out.velocity[i] = vel;
    }
    return out;
}

} // namespace loco
