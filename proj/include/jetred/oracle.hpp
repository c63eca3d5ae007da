#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "jetred/sde.hpp"

namespace jetred {

std::vector<double> uniform_grid(double x0, double x1, double dx);

struct GridSolution {
    std::vector<double> x;
    std::vector<double> times;
    std::vector<std::string> names;
    std::vector<std::vector<std::vector<double>>> values;  // [snapshot][component][grid]
    std::string boundary;
    bool exploded = false;
    double t_explode = 0;
    std::string reason;
};

// Left and right values of every dependent variable at time t.
using BoundaryData = std::function<std::vector<std::array<double, 2>>(double t)>;

struct FdOptions {
    int snapshots = 10;
    double cfl = 0.5;
    double bound = 1e6;
    BoundaryData dirichlet;  // used when the model asks for oracle boundaries
    int substep_count = 0;   // total substeps taken, reported back
};

// Method of lines on the model's outputs; same Stratonovich-Heun scheme and driver increments.
GridSolution fd_solve_spde(const SPDEModel& model, const std::vector<double>& x, const DriverPath& path,
                           FdOptions& opts);

// Closed forms transcribed from the worked examples.
std::vector<double> hjm_closed_form(const std::function<double(double)>& f, const std::function<double(double)>& fp,
                                    const std::array<double, 4>& abcd, const std::vector<double>& x);
// Returns u and v from the implicit system; throws NewtonDiverged.
std::array<std::vector<double>, 2> hunter_saxton_closed_form(const std::function<double(int, double)>& f,
                                                             const std::function<double(int, double)>& g,
                                                             const std::array<double, 3>& abc,
                                                             const std::vector<double>& x);
std::vector<double> filtering_closed_form(double L, double M, double u0, double ux0, const std::vector<double>& x);

struct Metrics {
    double l2 = 0, linf = 0, rel_l2 = 0;
};

// Per snapshot and component; a fraction of the interval at each end is excluded.
std::vector<std::vector<Metrics>> compare(const GridSolution& a, const GridSolution& b, double margin = 0.05);
Metrics worst(const std::vector<std::vector<Metrics>>& m);

struct ValidationOptions {
    double dx = 1.0 / 200;
    double dt = 1e-4;
    double t_final = 0.1;
    std::uint64_t seed = 1;
    std::uint64_t path_index = 0;
    int snapshots = 10;
};

struct ValidationReport {
    GridSolution reduced, fd;
    SamplePath path;
    std::vector<std::vector<Metrics>> metrics;
    Metrics worst;
    double max_newton_residual = 0;
    int substeps = 0;
};

ValidationReport validate_model(const SPDEModel& model, const ValidationOptions& opts);
// Same with a caller-provided driver path (for refinement studies on one Brownian path).
ValidationReport validate_model(const SPDEModel& model, const ValidationOptions& opts, const DriverPath& path);

// Reduced-pipeline snapshots of the outputs along a driver path.
GridSolution reduced_solution(const ReducedSystem& sys, const SamplePath& path, const std::vector<double>& x,
                              int snapshots, double* max_residual = nullptr);

}  // namespace jetred
