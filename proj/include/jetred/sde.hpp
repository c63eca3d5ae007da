#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "jetred/reduction.hpp"

namespace jetred {

struct DriverSpec {
    std::vector<bool> wiener;              // per driver
    std::vector<std::vector<double>> rho;  // over the Wiener drivers
};

struct DriverPath {
    double dt = 0;
    int steps = 0;
    std::uint64_t seed = 0, path_index = 0;
    std::vector<bool> wiener;
    std::vector<std::vector<double>> rho;
    std::vector<std::vector<double>> dS;  // [step][driver]

    double t(int step) const { return dt * step; }
};

// Normal pair from a counter-based stream keyed by (seed, path, step, slot).
double stream_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t slot);

DriverPath make_driver_path(const DriverSpec& spec, double T, double dt, std::uint64_t seed,
                            std::uint64_t path_index);
// Sums consecutive increments; factor must divide the step count.
DriverPath coarsen(const DriverPath& fine, int factor);

// Coefficients b[alpha][i] of dA^i = b_alpha^i(A) o dS^alpha.
struct NumericSystem {
    int dim = 0;
    int drivers = 0;
    std::function<void(const std::vector<double>& a, std::vector<std::vector<double>>& out)> eval;
};

NumericSystem compile_system(const ReducedSystem& sys);
// Linear system dA = M_alpha A o dS^alpha.
NumericSystem linear_system(const std::vector<std::vector<std::vector<double>>>& M);

struct Guards {
    double bound = 1e6;
};

struct SamplePath {
    enum class Status { Completed, Exploded };
    Status status = Status::Completed;
    double t_explode = 0;
    std::string reason;
    std::vector<double> t;
    std::vector<std::vector<double>> state;  // one entry per completed step, starting at t = 0
};

SamplePath integrate_stratonovich(const NumericSystem& sys, const std::vector<double>& a0, const DriverPath& path,
                                  const Guards& guards = {});

DriverSpec driver_spec(const ReducedSystem& sys);

}  // namespace jetred
