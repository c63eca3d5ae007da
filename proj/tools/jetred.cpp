// jetred: finite-dimensional reduction of SPDEs from the command line.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "jetred/oracle.hpp"

using namespace jetred;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct ModelArg {
    std::string text, source;
};

ModelArg read_model(const std::string& arg) {
    if (fs::exists(arg)) {
        std::ifstream in(arg);
        if (!in) throw model_error("IOError", "cannot read " + arg);
        std::stringstream ss;
        ss << in.rdbuf();
        return {ss.str(), arg};
    }
    auto names = bundled_models();
    if (std::find(names.begin(), names.end(), arg) != names.end() || arg == "hunter_saxton")
        return {bundled_model(arg), "bundled:" + arg};
    throw model_error("IOError", "no such model file or bundled example: " + arg);
}

SPDEModel load(const std::string& arg, const std::vector<std::string>& overrides) {
    ModelArg m = read_model(arg);
    SPDEModel model = parse_model(m.text);
    // --set name=value replaces a parameter value
    for (const auto& o : overrides) {
        auto eq = o.find('=');
        if (eq == std::string::npos) throw model_error("BadOverride", "expected name=value, got " + o);
        std::string name = o.substr(0, eq);
        bool found = false;
        for (auto& [p, v] : model.parameters)
            if (p == name) {
                v = parse_rational_literal(o.substr(eq + 1));
                found = true;
            }
        if (!found) throw model_error("BadOverride", "no parameter " + name);
    }
    return model;
}

void write_json(const json& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw runtime_failure("IOError", "cannot write " + path);
    out << j.dump(2) << "\n";
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

std::string num(double v) {
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}

json rational_tensor(const std::vector<std::vector<std::vector<Rational>>>& l) {
    json out = json::array();
    for (const auto& a : l) {
        json row = json::array();
        for (const auto& b : a) {
            json col = json::array();
            for (const auto& c : b) col.push_back(c.get_str());
            row.push_back(col);
        }
        out.push_back(row);
    }
    return out;
}

std::vector<std::string> strs(const std::vector<Expr>& v) {
    std::vector<std::string> out;
    for (const auto& e : v) out.push_back(e.str());
    return out;
}

std::vector<EvolutionField> bound_fields(const SPDEModel& m) {
    std::vector<EvolutionField> out;
    for (const auto& g : m.generators) {
        std::vector<Expr> c;
        for (const auto& e : g.components) c.push_back(m.bind(e));
        out.emplace_back(c);
    }
    return out;
}

std::string combination(const std::vector<Rational>& c, const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (c[k] == 0) continue;
        Rational a = abs(c[k]);
        s += s.empty() ? (c[k] < 0 ? "-" : "") : (c[k] < 0 ? " - " : " + ");
        if (a != 1) s += a.get_str() + "*";
        s += names[k];
    }
    return s.empty() ? "0" : s;
}

std::vector<double> default_samples(const SPDEModel& m) {
    double lo = m.x_min.get_d(), hi = m.x_max.get_d();
    std::vector<double> s;
    for (int k = 1; k <= 5; ++k) s.push_back(lo + (hi - lo) * k / 6.0);
    return s;
}

// check: closure, structure constants, transversality (or tangency in ode mode)
int cmd_check(const std::string& path, const std::vector<std::string>& sets, const std::string& json_out,
              std::vector<double> samples) {
    SPDEModel m = load(path, sets);
    json rep;
    rep["model"] = m.title;
    rep["mode"] = m.mode;
    auto gens = bound_fields(m);
    ClosureResult cl = lie_closure(m.space, gens, m.gen_names);
    rep["closed"] = cl.closed;
    bool ok = true;
    std::cout << "model " << m.title << " (" << m.mode << ")\n";
    if (cl.closed) {
        const LieAlgebra& a = cl.algebra;
        AlgebraCheck ac = verify_algebra(m.space, a);
        rep["dimension"] = a.dim();
        rep["basis"] = json::array();
        for (std::size_t i = 0; i < a.dim(); ++i)
            rep["basis"].push_back({{"name", a.names[i]}, {"field", a.basis[i].str()}, {"provenance", a.provenance[i]}});
        rep["structure_constants"] = rational_tensor(a.lambda);
        rep["brackets"] = json::array();
        std::cout << "closed, dimension " << a.dim() << "\n";
        for (std::size_t i = 0; i < a.dim(); ++i) std::cout << "  " << a.names[i] << " = " << a.basis[i].str() << "\n";
        for (std::size_t i = 0; i < a.dim(); ++i)
            for (std::size_t j = i + 1; j < a.dim(); ++j) {
                std::string rhs = combination(a.lambda[i][j], a.names);
                rep["brackets"].push_back({{"left", a.names[i]}, {"right", a.names[j]}, {"value", rhs}});
                std::cout << "  [" << a.names[i] << ", " << a.names[j] << "] = " << rhs << "\n";
            }
        rep["algebra_check"] = {{"antisymmetric", ac.antisymmetric}, {"jacobi", ac.jacobi}, {"relations", ac.relations}};
        if (!ac.ok()) {
            ok = false;
            std::cout << "algebra check failed: " << ac.detail << "\n";
        }
    } else {
        rep["witness"] = cl.witness;
        rep["reason"] = cl.reason;
        std::cout << "NotClosed: " << cl.reason << (cl.witness.empty() ? "" : " witness " + cl.witness) << "\n";
    }

    if (m.mode == "ode") {
        // the generators need not close; the constraint manifold must be invariant
        json tj;
        try {
            TangencyResult t = ode_constraint_tangency(m.space, gens, m.gen_names, *m.constraint);
            tj["tangent"] = true;
            tj["fields"] = json::array();
            std::cout << "constraint tangency holds\n";
            for (std::size_t g = 0; g < t.generators.size(); ++g) {
                json f = {{"generator", t.generators[g]}, {"coefficients", json::object()}, {"boundary", strs(t.boundary[g])}};
                for (std::size_t k = 0; k < m.constraint->coeffs.size(); ++k) {
                    f["coefficients"][m.constraint->coeffs[k]] = t.mu_field[g][k].str();
                    std::cout << "  V_" << t.generators[g] << "(" << m.constraint->coeffs[k]
                              << ") = " << t.mu_field[g][k].str() << "\n";
                }
                tj["fields"].push_back(f);
            }
        } catch (const Error& e) {
            tj["tangent"] = false;
            tj["detail"] = e.what();
            ok = false;
            std::cout << e.what() << "\n";
        }
        rep["tangency"] = tj;
    } else {
        ok = ok && cl.closed;
        if (cl.closed) {
            if (samples.empty()) samples = default_samples(m);
            TransversalityResult tr = check_transversality(m, cl.algebra.basis, samples);
            json tj = {{"transversal", tr.transversal}, {"detail", tr.detail}, {"samples", json::array()}};
            for (const auto& s : tr.samples) {
                json rows = json::array();
                for (const auto& r : s.rows) rows.push_back({{"order", r.order}, {"component", r.component}});
                tj["samples"].push_back({{"x", s.x}, {"rank", s.rank}, {"rows", rows}});
            }
            rep["transversality"] = tj;
            std::cout << (tr.transversal ? "transversal" : "not transversal");
            if (!tr.samples.empty()) {
                std::cout << " (rank";
                for (const auto& s : tr.samples) std::cout << " " << s.rank;
                std::cout << " of " << cl.algebra.dim() << ")";
            }
            std::cout << "\n";
            ok = ok && tr.transversal;
        }
    }
    rep["ok"] = ok;
    if (!json_out.empty()) write_json(rep, json_out);
    if (!cl.closed && m.mode != "ode") throw math_error("NotClosed", cl.reason);
    return ok ? 0 : 3;
}

json phi_json(const PhiTable& t, const Verdict& v) {
    json j;
    j["params"] = t.params;
    j["generators"] = t.generators;
    j["drift_row"] = t.drift;
    j["phi"] = json::array();
    for (const auto& row : t.phi) j["phi"].push_back(strs(row));
    j["verified"] = v.ok();
    j["verdict"] = to_string(v.kind);
    return j;
}

int cmd_phi(const std::string& path, const std::vector<std::string>& sets, const std::string& out) {
    SPDEModel m = load(path, sets);
    if (m.mode == "ode") throw model_error("UnsupportedMode", "phi tables apply to transported models");
    ReducedSystem s = build_reduced_sde(m);
    Verdict v = verify_phi(s.phi, s.algebra);
    write_json(phi_json(s.phi, v), out);
    return v.ok() ? 0 : 3;
}

json reduced_json(const ReducedSystem& s) {
    json j;
    j["model"] = s.model.title;
    j["mode"] = s.mode;
    j["state"] = s.state_names();
    j["initial_state"] = s.initial_state;
    j["drivers"] = json::array();
    for (std::size_t a = 0; a < s.drivers.size(); ++a) {
        json c = json::object();
        for (std::size_t i = 0; i < s.state.size(); ++i) c[s.state[i].name] = s.coeffs[a][i].str();
        j["drivers"].push_back({{"name", s.drivers[a]}, {"kind", s.wiener[a] ? "wiener" : "time"}, {"coefficients", c}});
    }
    j["correlation"] = s.rho;
    if (s.mode == "transported") {
        j["phi"] = phi_json(s.phi, verify_phi(s.phi, s.algebra));
        j["relations"] = strs(s.relations);
        j["closed_form"] = strs(s.closed_form);
        j["flows"] = json::array();
        for (const auto& f : s.flows) {
            json p = json::object();
            for (const auto& [c, e] : f.pullbacks)
                if (c.order() == 0) p[c.name] = e.str();
            j["flows"].push_back({{"param", f.param}, {"source", f.source}, {"pullbacks", p}});
        }
    }
    j["outputs"] = json::object();
    for (const auto& [name, e] : s.outputs) j["outputs"][name] = e.str();
    return j;
}

int cmd_reduce(const std::string& path, const std::vector<std::string>& sets, const std::string& out) {
    ReducedSystem s = build_reduced_sde(load(path, sets));
    write_json(reduced_json(s), out);
    return 0;
}

int cmd_simulate(const std::string& path, const std::vector<std::string>& sets, double t_final, double dt,
                 std::uint64_t seed, int paths, const std::string& out_dir, int threads) {
    SPDEModel m = load(path, sets);
    ReducedSystem s = build_reduced_sde(m);
    NumericSystem ns = compile_system(s);
    DriverSpec spec = driver_spec(s);
    fs::create_directories(out_dir);
    std::vector<SamplePath> results(static_cast<std::size_t>(paths));
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::vector<std::future<void>> jobs;
    for (int w = 0; w < threads; ++w)
        jobs.push_back(std::async(std::launch::async, [&, w] {
            for (int p = w; p < paths; p += threads) {
                DriverPath dp = make_driver_path(spec, t_final, dt, seed, static_cast<std::uint64_t>(p));
                results[static_cast<std::size_t>(p)] = integrate_stratonovich(ns, s.initial_state, dp);
            }
        }));
    for (auto& j : jobs) j.get();

    auto names = s.state_names();
    json manifest;
    manifest["model"] = m.title;
    manifest["seed"] = seed;
    manifest["dt"] = dt;
    manifest["t_final"] = t_final;
    manifest["scheme"] = "stratonovich-heun";
    manifest["rng"] = "splitmix64 counter stream (seed, path, step, slot), Box-Muller";
    manifest["state"] = names;
    manifest["paths"] = json::array();
    int exploded = 0;
    for (int p = 0; p < paths; ++p) {
        const SamplePath& sp = results[static_cast<std::size_t>(p)];
        std::string file = "path_" + std::to_string(p) + ".csv";
        std::ofstream csv(fs::path(out_dir) / file);
        csv << "t";
        for (const auto& n : names) csv << "," << csv_field(n);
        csv << "\n";
        for (std::size_t k = 0; k < sp.t.size(); ++k) {
            csv << num(sp.t[k]);
            for (double v : sp.state[k]) csv << "," << num(v);
            csv << "\n";
        }
        json pj = {{"index", p}, {"file", file}, {"status", sp.status == SamplePath::Status::Completed ? "completed" : "exploded"}};
        if (sp.status == SamplePath::Status::Exploded) {
            ++exploded;
            pj["t_explode"] = sp.t_explode;
            pj["reason"] = sp.reason;
        }
        pj["final_state"] = sp.state.back();
        manifest["paths"].push_back(pj);
    }
    manifest["exploded"] = exploded;
    write_json(manifest, (fs::path(out_dir) / "manifest.json").string());
    std::cout << paths << " paths, " << exploded << " exploded; written to " << out_dir << "\n";
    return 0;
}

int cmd_validate(const std::string& path, const std::vector<std::string>& sets, const ValidationOptions& o,
                 double tol, const std::string& out_dir) {
    SPDEModel m = load(path, sets);
    ValidationReport r = validate_model(m, o);
    json j;
    j["model"] = m.title;
    j["dx"] = o.dx;
    j["dt"] = o.dt;
    j["t_final"] = o.t_final;
    j["seed"] = o.seed;
    j["path_index"] = o.path_index;
    j["boundary"] = r.fd.boundary;
    j["margin"] = 0.05;
    j["substeps"] = r.substeps;
    j["max_newton_residual"] = r.max_newton_residual;
    j["snapshots"] = json::array();
    for (std::size_t s = 0; s < r.metrics.size(); ++s) {
        json comps = json::array();
        for (std::size_t k = 0; k < r.metrics[s].size(); ++k)
            comps.push_back({{"name", r.reduced.names[k]},
                             {"l2", r.metrics[s][k].l2},
                             {"linf", r.metrics[s][k].linf},
                             {"rel_l2", r.metrics[s][k].rel_l2}});
        j["snapshots"].push_back({{"t", r.reduced.times[s]}, {"components", comps}});
    }
    j["worst"] = {{"l2", r.worst.l2}, {"linf", r.worst.linf}, {"rel_l2", r.worst.rel_l2}};
    j["tolerance"] = tol;
    j["within_tolerance"] = r.worst.rel_l2 <= tol;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_json(j, (fs::path(out_dir) / "metrics.json").string());
        std::ofstream csv(fs::path(out_dir) / "snapshots.csv");
        csv << "t,x";
        for (const auto& n : r.reduced.names) csv << "," << csv_field(n + "_reduced") << "," << csv_field(n + "_fd");
        csv << "\n";
        for (std::size_t s = 0; s < r.reduced.times.size(); ++s)
            for (std::size_t i = 0; i < r.reduced.x.size(); ++i) {
                csv << num(r.reduced.times[s]) << "," << num(r.reduced.x[i]);
                for (std::size_t k = 0; k < r.reduced.names.size(); ++k)
                    csv << "," << num(r.reduced.values[s][k][i]) << "," << num(r.fd.values[s][k][i]);
                csv << "\n";
            }
    } else {
        write_json(j, "-");
    }
    std::cout << "worst relative L2 " << r.worst.rel_l2 << (r.worst.rel_l2 <= tol ? " (within " : " (exceeds ") << tol
              << ")\n";
    return 0;
}

int cmd_example(const std::string& name, const std::string& out) {
    std::string text = bundled_model(name);
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        std::ofstream f(out);
        if (!f) throw runtime_failure("IOError", "cannot write " + out);
        f << text;
    }
    return 0;
}

int exit_code(const Error& e) {
    switch (e.family()) {
        case ErrorFamily::Model: return 2;
        case ErrorFamily::Math: return 3;
        case ErrorFamily::Runtime: return 4;
    }
    return 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-dimensional solutions of SPDEs via Lie algebras of evolution fields"};
    app.require_subcommand(1);
    std::string model, out, json_out;
    std::vector<std::string> sets;
    std::vector<double> samples;
    int code = 0;

    auto add_model = [&](CLI::App* c) {
        c->add_option("model", model, "model file or bundled example name")->required();
        c->add_option("--set", sets, "override a parameter, name=value");
    };

    auto* check = app.add_subcommand("check", "closure, structure constants and transversality");
    add_model(check);
    check->add_option("--json", json_out, "write the report as JSON");
    check->add_option("--samples", samples, "sample points for the transversality rank")->delimiter(',');

    auto* phi = app.add_subcommand("phi", "phi table as JSON");
    add_model(phi);
    phi->add_option("-o,--out", out, "output file (default stdout)");

    auto* reduce = app.add_subcommand("reduce", "reduced SDE and reconstruction data as JSON");
    add_model(reduce);
    reduce->add_option("-o,--out", out, "output file (default stdout)");

    double t_final = 1.0, dt = 1e-3;
    std::uint64_t seed = 1;
    int paths = 1, threads = 0;
    std::string out_dir = "out";
    auto* sim = app.add_subcommand("simulate", "simulate the reduced SDE");
    add_model(sim);
    sim->add_option("--t-final", t_final)->check(CLI::PositiveNumber);
    sim->add_option("--dt", dt)->check(CLI::PositiveNumber);
    sim->add_option("--seed", seed);
    sim->add_option("--paths", paths)->check(CLI::PositiveNumber);
    sim->add_option("--threads", threads, "worker threads (default: hardware)");
    sim->add_option("--out", out_dir, "output directory");

    ValidationOptions vo;
    double tol = 5e-2;
    std::string vout;
    auto* val = app.add_subcommand("validate", "reduced pipeline against finite differences on one path");
    add_model(val);
    val->add_option("--dx", vo.dx)->check(CLI::PositiveNumber);
    val->add_option("--dt", vo.dt)->check(CLI::PositiveNumber);
    val->add_option("--t-final", vo.t_final)->check(CLI::PositiveNumber);
    val->add_option("--seed", vo.seed);
    val->add_option("--path", vo.path_index);
    val->add_option("--tol", tol, "relative L2 tolerance reported in the metrics");
    val->add_option("--out", vout, "output directory for metrics.json and snapshots.csv");

    std::string example;
    auto* ex = app.add_subcommand("example", "write a bundled model file");
    ex->add_option("name", example, "hjm | hunter-saxton | filtering | heat")->required();
    ex->add_option("-o,--out", out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int c = app.exit(e);
        return c == 0 ? 0 : 2;
    }

    try {
        if (*check) code = cmd_check(model, sets, json_out, samples);
        else if (*phi) code = cmd_phi(model, sets, out);
        else if (*reduce) code = cmd_reduce(model, sets, out);
        else if (*sim) code = cmd_simulate(model, sets, t_final, dt, seed, paths, out_dir, threads);
        else if (*val) code = cmd_validate(model, sets, vo, tol, vout);
        else if (*ex) code = cmd_example(example, out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return code;
}
