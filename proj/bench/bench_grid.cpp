// Compares the serial reference and the OpenMP path of the small-gain grid
// checker, and verifies they produce identical reports.
//
//   ./etcsim-bench [points-per-swept-axis]
//
// Thread count comes from OMP_NUM_THREADS. The workload is the decoupled
// estimate-feedback loop with decay claims that hold on the sampled box,
// so nearly every grid point runs both directional-derivative estimates.

#include "etcsim/analysis.hpp"
#include "etcsim/scenario.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace etcsim;

namespace {

double seconds_for(const SmallGainProblem& problem, const GridSpec& grid, RunPolicy policy,
                   SmallGainReport& report) {
    const auto start = std::chrono::steady_clock::now();
    report = check_small_gain(problem, grid, policy);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
    const int n = argc > 1 ? std::atoi(argv[1]) : 41;

    auto scenario = builtin_integrator_scenario(0.5, 1.0, 2.0);
    scenario.controller_kind = ControllerKind::Linear;
    scenario.ctrl_a = Eigen::MatrixXd::Constant(1, 1, -1.0);
    scenario.ctrl_b = Eigen::MatrixXd::Constant(1, 1, 1.0);
    scenario.ctrl_c = Eigen::MatrixXd::Zero(1, 1);
    scenario.ctrl_d = Eigen::MatrixXd::Constant(1, 1, -0.5);

    auto map = parse_config(R"(
[small_gain]
chi_p = linear:0.5
chi_c = linear:0.5
alpha_p = power:0.4,2
alpha_c = power:0.05,2
rho = identity
clarke_samples = 60
)");
    auto [problem, grid] = small_gain_from_config(map, scenario);
    grid.axes = {{-10.0, 10.0, n}, {0.0, 0.0, 1}, {0.5, 30.0, 5},
                 {-10.0, 10.0, n}, {0.0, 0.0, 1}, {0.5, 60.0, 5}};

    std::printf("grid points: %ld\n", grid.total_points());
#ifdef _OPENMP
    std::printf("omp threads: %d\n", omp_get_max_threads());
#else
    std::printf("omp threads: 1 (compiled without OpenMP)\n");
#endif

    SmallGainReport serial_report, parallel_report;
    const double t_serial = seconds_for(problem, grid, RunPolicy::Serial, serial_report);
    std::printf("serial:   %8.3f s  (%zu violations)\n", t_serial,
                serial_report.violations.size());
    const double t_parallel = seconds_for(problem, grid, RunPolicy::Parallel, parallel_report);
    std::printf("parallel: %8.3f s  (%zu violations)\n", t_parallel,
                parallel_report.violations.size());
    std::printf("speedup:  %8.2fx\n", t_parallel > 0.0 ? t_serial / t_parallel : 0.0);

    if (serial_report.violations.size() != parallel_report.violations.size()) {
        std::printf("MISMATCH: serial and parallel reports differ\n");
        return 1;
    }
    for (size_t k = 0; k < serial_report.violations.size(); ++k) {
        const auto& a = serial_report.violations[k];
        const auto& b = parallel_report.violations[k];
        if (a.grid_index != b.grid_index || a.item != b.item || a.measured != b.measured) {
            std::printf("MISMATCH at violation %zu\n", k);
            return 1;
        }
    }
    std::printf("serial and parallel reports agree\n");
    return 0;
}
