#pragma once

#include <loco/common.hpp>

#include <array>
#include <cstdint>
#include <vector>

namespace loco
{

/** @brief Constant-acceleration Kalman filter configuration for one joint. */
struct KfConfig
{
    double t{0.001};
    double lambda0{1.0};
    Vec3 q_diag{Vec3::Ones()};
    double r{1.0};

    void validate() const;
};

/** @brief Filter state: estimated (position, velocity, acceleration) and covariance. */
struct KfState
{
    Vec3 x{Vec3::Zero()};
    Mat3 p{Mat3::Identity()};
};

/** @brief Initial state anchored at the first measured position, P0 = lambda I. */
KfState kf_init(const KfConfig& cfg, double s0);

/** @brief One predict/update cycle with measurement y.
 *
 * Prediction uses the constant-acceleration transition; the update is in
 * Joseph form. Throws std::runtime_error if the covariance degenerates.
 */
KfState kf_step(const KfState& state, const KfConfig& cfg, double y);

using Genes = Eigen::Matrix<double, 5, 1>;

/** @brief Maps a gene vector (lambda, Q11, Q22, Q33, R) to a filter configuration. */
KfConfig kf_config_from_genes(const Genes& genes, double t);

/** @brief Genetic-search configuration; defaults follow the tuning campaign
 * quoted in the repo docs (50 generations, 120 individuals, 60 parents,
 * 4-tournament, two-point crossover, 20% per-gene mutation, 10% elitism). */
struct GaConfig
{
    int generations{50};
    int population{120};
    int parents{60};
    int tournament_k{4};
    double mutation_rate{0.2};
    double elite_fraction{0.1};
    std::array<std::array<double, 2>, 5> bounds{
        {{1e-9, 1e2}, {1e-9, 1e2}, {1e-9, 1e2}, {1e-9, 1e2}, {1e-9, 1e2}}};
    double w_a{1e-3};
    double w_j{1e-5};
    bool parallel{true};

    void validate() const;
};

/** @brief Smoothness-and-consistency score of a gene vector over a position
 * dataset sampled at period t; larger is better, 0 is the unreachable ideal.
 *
 * Per sample the score penalizes estimated jerk (forward difference of the
 * estimated acceleration), estimated acceleration, and the distances between
 * the measured position and (a) the estimated position, (b) the trapezoidal
 * integral of the estimated velocity, (c) the double integral of the estimated
 * acceleration, both integrals anchored at the first measurement.
 */
double ga_objective(const Genes& genes, const std::vector<double>& dataset, double t,
                    double w_a, double w_j);

/** @brief Scores a whole population; parallel=true spreads individuals across
 * OpenMP threads with per-slot writes so results match the serial path bit for
 * bit. */
void evaluate_population(const std::vector<Genes>& genes,
                         const std::vector<double>& dataset, double t,
                         const GaConfig& cfg, std::vector<double>& scores, bool parallel);

struct GaResult
{
    Genes best{Genes::Zero()};
    double best_score{0.0};
    /** Best score of the population after each generation, non-decreasing. */
    std::vector<double> history;
};

/** @brief Tunes the five filter genes by tournament GA; deterministic per seed. */
GaResult ga_tune(const std::vector<double>& dataset, double t, const GaConfig& cfg,
                 std::uint64_t seed);

/** @brief Synthetic multi-sine joint trajectory used by tests and the bundled
 * tuning dataset; returns positions and true velocities at period t. */
struct SynthDataset
{
    std::vector<double> time;
    std::vector<double> position;
    std::vector<double> velocity;
};

SynthDataset synth_joint_dataset(std::size_t samples, double t, double noise_std,
                                 std::uint64_t seed);

} // namespace loco
