#include <loco/estimation.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace
{

double run_once(const std::vector<loco::Genes>& pop, const std::vector<double>& data,
                double t, const loco::GaConfig& cfg, bool parallel, int repeats,
                std::vector<double>& scores)
{
    const auto start = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r)
    {
        loco::evaluate_population(pop, data, t, cfg, scores, parallel);
    }
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(stop - start).count() / repeats;
}

} // namespace

int main(int argc, char** argv)
{
    int population = 120;
    int samples = 10000;
    int repeats = 5;
    for (int i = 1; i < argc; ++i)
    {
        const std::string arg = argv[i];
        auto next = [&]() {
            if (i + 1 >= argc)
            {
                std::fprintf(stderr, "missing value for %s\n", arg.c_str());
                std::exit(2);
            }
            return std::atoi(argv[++i]);
        };
        if (arg == "--population")
        {
            population = next();
        }
        else if (arg == "--samples")
        {
            samples = next();
        }
        else if (arg == "--repeats")
        {
            repeats = next();
        }
        else
        {
            std::fprintf(stderr,
                         "usage: bench_ga [--population N] [--samples N] [--repeats N]\n");
            return 2;
        }
    }

    const double t = 0.001;
    const auto data =
        loco::synth_joint_dataset(static_cast<std::size_t>(samples), t, 0.01, 42);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(std::log(1e-9), std::log(1e2));
    std::vector<loco::Genes> pop(static_cast<std::size_t>(population));
    for (auto& g : pop)
    {
        for (int k = 0; k < 5; ++k)
        {
            g[k] = std::exp(uni(rng));
        }
    }

    loco::GaConfig cfg;
    std::vector<double> serial_scores;
    std::vector<double> parallel_scores;

    const double serial =
        run_once(pop, data.position, t, cfg, false, repeats, serial_scores);
    const double parallel =
        run_once(pop, data.position, t, cfg, true, repeats, parallel_scores);

    bool identical = serial_scores.size() == parallel_scores.size();
    for (std::size_t i = 0; identical && i < serial_scores.size(); ++i)
    {
        identical = serial_scores[i] == parallel_scores[i];
    }

    int threads = 1;
#ifdef _OPENMP
    threads = omp_get_max_threads();
#endif

    std::printf("population        %d\n", population);
    std::printf("samples           %d\n", samples);
    std::printf("threads           %d\n", threads);
    std::printf("serial_seconds    %.6f\n", serial);
    std::printf("parallel_seconds  %.6f\n", parallel);
    std::printf("speedup           %.3f\n", serial / parallel);
    std::printf("bit_identical     %s\n", identical ? "yes" : "no");
    return identical ? 0 : 1;
}
