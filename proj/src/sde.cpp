#include "jetred/sde.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace jetred {

namespace {

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

double stream_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t slot) {
    std::uint64_t key = splitmix(splitmix(splitmix(seed) ^ path) ^ step);
    std::uint64_t pair = slot / 2;
    double u1 = unit(splitmix(key ^ (2 * pair + 1)));
    double u2 = unit(splitmix(key ^ (2 * pair + 2) ^ 0x632be59bd9b4e019ULL));
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * M_PI * u2;
    return slot % 2 == 0 ? r * std::cos(th) : r * std::sin(th);
}

DriverPath make_driver_path(const DriverSpec& spec, double T, double dt, std::uint64_t seed,
                            std::uint64_t path_index) {
    DriverPath p;
    p.dt = dt;
    p.steps = static_cast<int>(std::llround(T / dt));
    p.seed = seed;
    p.path_index = path_index;
    p.wiener = spec.wiener;
    p.rho = spec.rho;
    int w = 0;
    for (bool b : spec.wiener) w += b ? 1 : 0;
    Eigen::MatrixXd L = Eigen::MatrixXd::Identity(w, w);
    if (w > 0 && !spec.rho.empty()) {
        Eigen::MatrixXd R(w, w);
        for (int i = 0; i < w; ++i)
            for (int j = 0; j < w; ++j) R(i, j) = spec.rho[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        Eigen::LLT<Eigen::MatrixXd> llt(R);
        if (llt.info() != Eigen::Success) throw model_error("BadCorrelation", "correlation matrix is not positive definite");
        L = llt.matrixL();
    }
    double sq = std::sqrt(dt);
    std::vector<double> z(static_cast<std::size_t>(w));
    p.dS.assign(static_cast<std::size_t>(p.steps), std::vector<double>(spec.wiener.size(), 0.0));
    for (int s = 0; s < p.steps; ++s) {
        for (int k = 0; k < w; ++k)
            z[static_cast<std::size_t>(k)] = stream_normal(seed, path_index, static_cast<std::uint64_t>(s),
                                                           static_cast<std::uint64_t>(k));
        int k = 0;
        auto& row = p.dS[static_cast<std::size_t>(s)];
        for (std::size_t d = 0; d < spec.wiener.size(); ++d) {
            if (!spec.wiener[d]) {
                row[d] = dt;
                continue;
            }
            double v = 0;
            for (int q = 0; q <= k; ++q) v += L(k, q) * z[static_cast<std::size_t>(q)];
            row[d] = v * sq;
            ++k;
        }
    }
    return p;
}

DriverPath coarsen(const DriverPath& fine, int factor) {
    if (factor < 1 || fine.steps % factor != 0) throw model_error("BadRefinement", "step count not divisible");
    DriverPath c = fine;
    c.dt = fine.dt * factor;
    c.steps = fine.steps / factor;
    c.dS.assign(static_cast<std::size_t>(c.steps), std::vector<double>(fine.wiener.size(), 0.0));
    for (int s = 0; s < fine.steps; ++s)
        for (std::size_t d = 0; d < fine.wiener.size(); ++d)
            c.dS[static_cast<std::size_t>(s / factor)][d] += fine.dS[static_cast<std::size_t>(s)][d];
    for (auto& row : c.dS)
        for (std::size_t d = 0; d < fine.wiener.size(); ++d)
            if (!fine.wiener[d]) row[d] = c.dt;
    return c;
}

DriverSpec driver_spec(const ReducedSystem& sys) { return {sys.wiener, sys.rho}; }

NumericSystem compile_system(const ReducedSystem& sys) {
    NumericSystem ns;
    ns.dim = static_cast<int>(sys.state.size());
    ns.drivers = static_cast<int>(sys.coeffs.size());
    FunctionTable ft = sys.model.function_table();
    // compiled[alpha][i], skipping identically zero entries
    auto compiled = std::make_shared<std::vector<std::vector<std::pair<int, CompiledExpr>>>>();
    for (const auto& row : sys.coeffs) {
        std::vector<std::pair<int, CompiledExpr>> r;
        for (std::size_t i = 0; i < row.size(); ++i)
            if (!row[i].is_zero()) r.emplace_back(static_cast<int>(i), CompiledExpr(row[i], sys.state, ft));
        compiled->push_back(std::move(r));
    }
    ns.eval = [compiled, dim = ns.dim](const std::vector<double>& a, std::vector<std::vector<double>>& out) {
        out.assign(compiled->size(), std::vector<double>(static_cast<std::size_t>(dim), 0.0));
        for (std::size_t al = 0; al < compiled->size(); ++al)
            for (const auto& [i, e] : (*compiled)[al]) out[al][static_cast<std::size_t>(i)] = e(a);
    };
    return ns;
}

NumericSystem linear_system(const std::vector<std::vector<std::vector<double>>>& M) {
    NumericSystem ns;
    ns.drivers = static_cast<int>(M.size());
    ns.dim = M.empty() ? 0 : static_cast<int>(M[0].size());
    ns.eval = [M](const std::vector<double>& a, std::vector<std::vector<double>>& out) {
        out.assign(M.size(), std::vector<double>(a.size(), 0.0));
        for (std::size_t al = 0; al < M.size(); ++al)
            for (std::size_t i = 0; i < a.size(); ++i)
                for (std::size_t j = 0; j < a.size(); ++j) out[al][i] += M[al][i][j] * a[j];
    };
    return ns;
}

SamplePath integrate_stratonovich(const NumericSystem& sys, const std::vector<double>& a0, const DriverPath& path,
                                  const Guards& guards) {
    SamplePath sp;
    std::vector<double> a = a0, pred(a0.size());
    std::vector<std::vector<double>> b0(static_cast<std::size_t>(sys.drivers), std::vector<double>(a0.size(), 0.0)), b1 = b0;
    sp.t.push_back(0.0);
    sp.state.push_back(a);
    auto bad = [&](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isfinite(x) || std::fabs(x) > guards.bound) return true;
        return false;
    };
    for (int s = 0; s < path.steps; ++s) {
        const auto& dS = path.dS[static_cast<std::size_t>(s)];
        try {
            sys.eval(a, b0);
            for (std::size_t i = 0; i < a.size(); ++i) {
                pred[i] = a[i];
                for (std::size_t al = 0; al < b0.size(); ++al) pred[i] += b0[al][i] * dS[al];
            }
            if (bad(pred)) throw runtime_failure("Exploded", "predictor left the bound");
            sys.eval(pred, b1);
            for (std::size_t i = 0; i < a.size(); ++i)
                for (std::size_t al = 0; al < b0.size(); ++al) a[i] += 0.5 * (b0[al][i] + b1[al][i]) * dS[al];
            if (bad(a)) throw runtime_failure("Exploded", "state left the bound");
        } catch (const Error& e) {
            sp.status = SamplePath::Status::Exploded;
            sp.t_explode = path.t(s + 1);
            sp.reason = e.what();
            return sp;
        }
        sp.t.push_back(path.t(s + 1));
        sp.state.push_back(a);
    }
    return sp;
}

}  // namespace jetred
