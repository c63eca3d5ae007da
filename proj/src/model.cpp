#include "jetred/model.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

namespace jetred {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Splits on sep at parenthesis depth zero.
std::vector<std::string> split_top(const std::string& s, char sep) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char c : s) {
        if (c == '(' || c == '{') ++depth;
        if (c == ')' || c == '}') --depth;
        if (c == sep && depth == 0) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
}

struct Entry {
    std::string key, value;
    int line;
};

struct Section {
    std::string name;
    std::vector<Entry> entries;
    int line;
};

[[noreturn]] void fail_at(int line, const std::string& what) {
    throw model_error("ModelSyntax", "line " + std::to_string(line) + ": " + what);
}

Rational rational_value(const std::string& text, int line) {
    try {
        Expr e = parse_expr(text, ParseContext{});
        if (auto c = e.constant_value()) return *c;
    } catch (const Error&) {
    }
    fail_at(line, "expected a rational constant, got '" + text + "'");
}

std::string rational_str(const Rational& r) {
    Rational c = r;
    c.canonicalize();
    return c.get_str();
}

std::string join(const std::vector<std::string>& v, const std::string& sep = ", ") {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
    return s;
}

// Normalized C-infinity bump psi(y) = exp(-1/(1-y^2)) on (-1, 1) and its derivatives.
double bump_derivative(int k, double y) {
    if (y <= -1.0 || y >= 1.0) return 0.0;
    double w = 1.0 - y * y;
    double psi = std::exp(-1.0 / w);
    double p1 = -2.0 * y / (w * w);
    if (k == 0) return psi;
    if (k == 1) return p1 * psi;
    double p2 = -2.0 / (w * w) - 8.0 * y * y / (w * w * w);
    if (k == 2) return (p2 + p1 * p1) * psi;
    double p3 = -24.0 * y / (w * w * w) - 48.0 * y * y * y / (w * w * w * w);
    if (k == 3) return (p3 + 3.0 * p1 * p2 + p1 * p1 * p1) * psi;
    throw math_error("UnsupportedDerivative", "bump derivative of order " + std::to_string(k));
}

double integrate(const std::function<double(double)>& f, double lo, double hi) {
    if (hi <= lo) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 15, 1e-14);
}

double bump_mass() {
    static const double z = integrate([](double y) { return bump_derivative(0, y); }, -1.0, 1.0);
    return z;
}

// Integral of f from -1 to x, from cumulative values at uniform knots.
class KnotIntegral {
public:
    explicit KnotIntegral(std::function<double(double)> f) : f_(std::move(f)), cum_(kKnots + 1, 0.0) {
        for (int k = 0; k < kKnots; ++k) cum_[k + 1] = cum_[k] + piece(knot(k), knot(k + 1));
    }
    double operator()(double x) const {
        if (x <= -1.0) return 0.0;
        if (x >= 1.0) return cum_.back();
        int k = std::min(kKnots - 1, static_cast<int>((x + 1.0) / 2.0 * kKnots));
        return cum_[static_cast<std::size_t>(k)] + piece(knot(k), x);
    }

private:
    static constexpr int kKnots = 256;
    static double knot(int k) { return -1.0 + 2.0 * k / kKnots; }
    double piece(double lo, double hi) const {
        if (hi <= lo) return 0.0;
        return boost::math::quadrature::gauss<double, 20>::integrate(f_, lo, hi);
    }
    std::function<double(double)> f_;
    std::vector<double> cum_;
};

}  // namespace

bool is_builtin(const std::string& b) { return b == "smooth_step" || b == "smooth_step_energy"; }

double builtin_value(const std::string& b, const std::vector<int>& dorders, double x) {
    int k = dorders.empty() ? 0 : dorders[0];
    double z = bump_mass();
    if (b == "smooth_step") {
        if (k == 0) {
            static const KnotIntegral step([](double y) { return bump_derivative(0, y); });
            return step(x) / z;
        }
        return bump_derivative(k - 1, x) / z;
    }
    if (b == "smooth_step_energy") {
        if (k == 0) {
            static const KnotIntegral energy([z](double y) {
                double p = bump_derivative(0, y) / z;
                return p * p;
            });
            return energy(x);
        }
        double p0 = bump_derivative(0, x) / z, p1 = bump_derivative(1, x) / z;
        if (k == 1) return p0 * p0;
        if (k == 2) return 2.0 * p0 * p1;
        if (k == 3) return 2.0 * (p1 * p1 + p0 * bump_derivative(2, x) / z);
        throw math_error("UnsupportedDerivative", b + " derivative of order " + std::to_string(k));
    }
    throw model_error("UnknownBuiltin", b);
}

ParseContext SPDEModel::context(bool with_generators) const {
    ParseContext ctx;
    ctx.space = space;
    for (const auto& [p, v] : parameters) ctx.parameters.insert(p);
    for (const auto& f : functionals) ctx.parameters.insert(f.name);
    for (const auto& p : reduction_params) ctx.parameters.insert(p);
    if (constraint)
        for (const auto& c : constraint->coeffs) ctx.parameters.insert(c);
    for (const auto& [f, b] : functions) ctx.functions[f] = 1;
    if (with_generators)
        for (const auto& g : gen_names) ctx.parameters.insert(g);
    return ctx;
}

int SPDEModel::generator_index(const std::string& name) const {
    auto it = std::find(gen_names.begin(), gen_names.end(), name);
    return it == gen_names.end() ? -1 : static_cast<int>(it - gen_names.begin());
}

int SPDEModel::wiener_count() const {
    return static_cast<int>(std::count_if(drivers.begin(), drivers.end(), [](const Driver& d) { return d.wiener; }));
}

Bindings SPDEModel::parameter_bindings() const {
    Bindings b;
    for (const auto& [p, v] : parameters) b[JetCoord::parameter(p)] = Expr(v);
    return b;
}

Expr SPDEModel::bind(const Expr& e) const { return substitute(e, parameter_bindings()); }

FunctionTable SPDEModel::function_table() const {
    std::map<std::string, std::string> table(functions.begin(), functions.end());
    return [table](const std::string& name, const std::vector<int>& dorders, const std::vector<double>& args) {
        auto it = table.find(name);
        if (it == table.end()) throw model_error("UnknownFunction", name);
        return builtin_value(it->second, dorders, args.at(0));
    };
}

std::vector<std::vector<double>> SPDEModel::correlation_matrix() const {
    int w = wiener_count();
    std::vector<std::vector<double>> r(static_cast<std::size_t>(w), std::vector<double>(static_cast<std::size_t>(w), 0.0));
    for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) {
            auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
            r[ui][uj] = correlation.empty() ? (i == j ? 1.0 : 0.0) : correlation[ui][uj].get_d();
        }
    }
    return r;
}

SPDEModel parse_model(const std::string& text) {
    std::vector<Section> sections;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw.substr(0, raw.find('#')));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail_at(line, "unterminated section header");
            sections.push_back({trim(s.substr(1, s.size() - 2)), {}, line});
            continue;
        }
        if (sections.empty()) fail_at(line, "entry outside of a section");
        auto eq = s.find('=');
        if (eq == std::string::npos) fail_at(line, "expected key = value");
        sections.back().entries.push_back({trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line});
    }

    static const std::vector<std::string> known = {"model",  "variables", "parameters", "functions", "reduction",
                                                   "constraint", "functionals", "generators", "drivers",
                                                   "correlation", "drift", "flows", "initial", "state",
                                                   "outputs", "domain"};
    std::map<std::string, const Section*> by_name;
    for (const auto& sec : sections) {
        if (std::find(known.begin(), known.end(), sec.name) == known.end())
            fail_at(sec.line, "unknown section [" + sec.name + "]");
        if (by_name.count(sec.name)) fail_at(sec.line, "duplicate section [" + sec.name + "]");
        by_name[sec.name] = &sec;
    }
    auto entries = [&](const std::string& name) -> const std::vector<Entry>& {
        static const std::vector<Entry> none;
        auto it = by_name.find(name);
        return it == by_name.end() ? none : it->second->entries;
    };
    auto parse_at = [](const std::string& t, const ParseContext& ctx, int l) {
        try {
            return parse_expr(t, ctx);
        } catch (const Error& e) {
            fail_at(l, e.what());
        }
    };

    SPDEModel m;
    for (const auto& e : entries("model")) {
        if (e.key == "name") m.title = e.value;
        else fail_at(e.line, "unknown key '" + e.key + "' in [model]");
    }

    std::vector<std::string> indep, dep;
    for (const auto& e : entries("variables")) {
        if (e.key == "independent") indep = split_top(e.value, ',');
        else if (e.key == "dependent") dep = split_top(e.value, ',');
        else fail_at(e.line, "unknown key '" + e.key + "' in [variables]");
    }
    if (!by_name.count("variables")) throw model_error("ModelSyntax", "missing [variables] section");
    if (indep.size() != 1) fail_at(by_name["variables"]->line, "exactly one independent variable is supported");
    if (dep.empty()) fail_at(by_name["variables"]->line, "no dependent variables declared");
    m.space = JetSpace(indep, dep);

    for (const auto& e : entries("parameters")) m.parameters.emplace_back(e.key, rational_value(e.value, e.line));
    for (const auto& e : entries("functions")) {
        if (!is_builtin(e.value)) fail_at(e.line, "unknown builtin '" + e.value + "'");
        m.functions.emplace_back(e.key, e.value);
    }

    bool have_mode = false;
    for (const auto& e : entries("reduction")) {
        if (e.key == "mode") {
            if (e.value != "transported" && e.value != "ode") fail_at(e.line, "mode must be transported or ode");
            m.mode = e.value;
            have_mode = true;
        } else if (e.key == "form") {
            if (e.value != "stratonovich" && e.value != "ito") fail_at(e.line, "form must be stratonovich or ito");
            m.form = e.value;
        } else if (e.key == "order") {
            m.order = split_top(e.value, ',');
        } else if (e.key == "params") {
            m.reduction_params = split_top(e.value, ',');
        } else {
            fail_at(e.line, "unknown key '" + e.key + "' in [reduction]");
        }
    }
    if (!have_mode) m.mode = by_name.count("constraint") ? "ode" : "transported";

    if (by_name.count("constraint")) {
        OdeConstraintSpec c;
        for (const auto& e : entries("constraint")) {
            if (e.key == "order") c.order = static_cast<int>(rational_value(e.value, e.line).get_num().get_si());
            else if (e.key == "coefficients") c.coeffs = split_top(e.value, ',');
            else fail_at(e.line, "unknown key '" + e.key + "' in [constraint]");
        }
        if (c.order < 1 || static_cast<int>(c.coeffs.size()) != c.order)
            fail_at(by_name["constraint"]->line, "constraint needs order >= 1 and one coefficient per lower order");
        m.constraint = c;
    }
    if ((m.mode == "ode") != m.constraint.has_value())
        throw model_error("ModelSyntax", "mode ode requires a [constraint] section and transported forbids it");

    for (const auto& e : entries("functionals")) m.functionals.push_back({e.key, Expr(), 0});
    {
        ParseContext ctx = m.context();
        for (std::size_t i = 0; i < m.functionals.size(); ++i) {
            const Entry& e = entries("functionals")[i];
            std::string v = e.value;
            if (v.rfind("at(", 0) != 0 || v.back() != ')') fail_at(e.line, "functional must read at(expr, x0)");
            auto parts = split_top(v.substr(3, v.size() - 4), ',');
            if (parts.size() != 2) fail_at(e.line, "functional must read at(expr, x0)");
            m.functionals[i].expr = parse_at(parts[0], ctx, e.line);
            m.functionals[i].x0 = rational_value(parts[1], e.line);
        }
    }

    ParseContext ctx = m.context();
    std::size_t n = m.space.dependents().size();
    for (const auto& e : entries("generators")) {
        std::vector<Expr> comps;
        std::string v = e.value;
        if (n > 1) {
            if (v.front() != '(' || v.back() != ')')
                fail_at(e.line, "generator needs a tuple (F1, ..., Fn) for several dependent variables");
            for (const auto& p : split_top(v.substr(1, v.size() - 2), ',')) comps.push_back(parse_at(p, ctx, e.line));
        } else {
            comps.push_back(parse_at(v, ctx, e.line));
        }
        if (comps.size() != n) fail_at(e.line, "generator " + e.key + " has the wrong number of components");
        if (m.generator_index(e.key) >= 0) fail_at(e.line, "duplicate generator " + e.key);
        m.gen_names.push_back(e.key);
        m.generators.emplace_back(comps);
    }
    if (m.generators.empty()) throw model_error("ModelSyntax", "no generators declared");

    ParseContext gctx = m.context(true);
    int time_drivers = 0;
    for (const auto& e : entries("drivers")) {
        auto colon = e.value.find(':');
        if (colon == std::string::npos) fail_at(e.line, "driver must read time: combination or wiener: combination");
        std::string kind = trim(e.value.substr(0, colon));
        if (kind != "time" && kind != "wiener") fail_at(e.line, "driver kind must be time or wiener");
        Driver d;
        d.name = e.key;
        d.wiener = kind == "wiener";
        time_drivers += d.wiener ? 0 : 1;
        Expr combo = parse_at(e.value.substr(colon + 1), gctx, e.line);
        Bindings zero;
        for (const auto& g : m.gen_names) zero[JetCoord::parameter(g)] = Expr();
        if (!substitute(combo, zero).is_zero()) fail_at(e.line, "driver combination has a term without generator");
        for (const auto& g : m.gen_names) {
            Expr c = diff(combo, JetCoord::parameter(g));
            for (const auto& k : free_coords(c))
                if (!k.is_parameter() || m.generator_index(k.name) >= 0)
                    fail_at(e.line, "driver combination must be linear in the generators with constant weights");
            d.coeffs.push_back(c);
        }
        m.drivers.push_back(d);
    }
    if (time_drivers != 1) throw model_error("ModelSyntax", "exactly one time driver is required");

    for (const auto& e : entries("correlation")) {
        auto row = split_top(e.value, ',');
        std::vector<Rational> r;
        for (const auto& v : row) r.push_back(rational_value(v, e.line));
        if (static_cast<int>(r.size()) != m.wiener_count()) fail_at(e.line, "correlation row has the wrong length");
        m.correlation.push_back(r);
    }
    if (!m.correlation.empty() && static_cast<int>(m.correlation.size()) != m.wiener_count())
        throw model_error("ModelSyntax", "correlation matrix must have one row per Wiener driver");

    for (const auto& e : entries("drift")) {
        if (e.key != "generator") fail_at(e.line, "unknown key '" + e.key + "' in [drift]");
        if (m.generator_index(e.value) < 0) fail_at(e.line, "unknown generator " + e.value);
        m.drift = e.value;
    }
    for (const auto& o : m.order)
        if (m.generator_index(o) < 0) throw model_error("ModelSyntax", "unknown generator " + o + " in order");

    for (const auto& e : entries("flows")) {
        auto lp = e.key.find('('), rp = e.key.find(')');
        if (lp == std::string::npos || rp == std::string::npos) fail_at(e.line, "flow key must read G(s)");
        UserFlow f;
        f.generator = trim(e.key.substr(0, lp));
        std::string s = trim(e.key.substr(lp + 1, rp - lp - 1));
        if (m.generator_index(f.generator) < 0) fail_at(e.line, "unknown generator " + f.generator);
        ParseContext fctx = ctx;
        fctx.symbols[s] = Expr::coord(JetCoord::parameter("__flow"));
        for (const auto& part : split_top(e.value, ';')) {
            auto arrow = part.find("->");
            if (arrow == std::string::npos) fail_at(e.line, "flow map must read coord -> expr");
            std::string coord = trim(part.substr(0, arrow));
            Expr c = parse_at(coord, ctx, e.line);
            auto fc = free_coords(c);
            if (fc.size() != 1 || !(c == Expr::coord(*fc.begin())) || fc.begin()->is_parameter())
                fail_at(e.line, "'" + coord + "' is not a jet coordinate");
            f.maps.emplace_back(fc.begin()->name, parse_at(part.substr(arrow + 2), fctx, e.line));
        }
        m.flows.push_back(f);
    }

    for (const auto& e : entries("initial")) {
        if (!m.space.dependent_index(e.key)) fail_at(e.line, "unknown dependent variable " + e.key);
        m.initial.emplace_back(e.key, parse_at(e.value, ctx, e.line));
    }
    if (m.mode == "transported" && m.initial.size() != n)
        throw model_error("ModelSyntax", "[initial] needs one expression per dependent variable");

    for (const auto& e : entries("state")) m.state0.emplace_back(e.key, rational_value(e.value, e.line));
    for (const auto& e : entries("outputs")) m.outputs.emplace_back(e.key, parse_at(e.value, ctx, e.line));

    for (const auto& e : entries("domain")) {
        if (e.key == "boundary") {
            if (e.value != "oracle" && e.value != "extrapolate") fail_at(e.line, "boundary must be oracle or extrapolate");
            m.boundary = e.value;
            continue;
        }
        if (e.key != indep[0]) fail_at(e.line, "domain key must be the independent variable");
        auto lim = split_top(e.value, ',');
        if (lim.size() != 2) fail_at(e.line, "domain must read lo, hi");
        m.x_min = rational_value(lim[0], e.line);
        m.x_max = rational_value(lim[1], e.line);
        if (m.x_max <= m.x_min) fail_at(e.line, "empty domain");
    }
    return m;
}

SPDEModel load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw model_error("ModelNotFound", path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_model(ss.str());
}

std::string print_model(const SPDEModel& m) {
    std::ostringstream o;
    if (!m.title.empty()) o << "[model]\nname = " << m.title << "\n\n";
    o << "[variables]\nindependent = " << join(m.space.independents())
      << "\ndependent = " << join(m.space.dependents()) << "\n";
    if (!m.parameters.empty()) {
        o << "\n[parameters]\n";
        for (const auto& [p, v] : m.parameters) o << p << " = " << rational_str(v) << "\n";
    }
    if (!m.functions.empty()) {
        o << "\n[functions]\n";
        for (const auto& [f, b] : m.functions) o << f << " = " << b << "\n";
    }
    o << "\n[reduction]\nmode = " << m.mode << "\nform = " << m.form << "\n";
    if (!m.order.empty()) o << "order = " << join(m.order) << "\n";
    if (!m.reduction_params.empty()) o << "params = " << join(m.reduction_params) << "\n";
    if (m.constraint)
        o << "\n[constraint]\norder = " << m.constraint->order << "\ncoefficients = " << join(m.constraint->coeffs)
          << "\n";
    if (!m.functionals.empty()) {
        o << "\n[functionals]\n";
        for (const auto& f : m.functionals)
            o << f.name << " = at(" << f.expr.str() << ", " << rational_str(f.x0) << ")\n";
    }
    o << "\n[generators]\n";
    for (std::size_t i = 0; i < m.generators.size(); ++i) {
        o << m.gen_names[i] << " = ";
        const auto& g = m.generators[i];
        if (g.size() == 1) {
            o << g[0].str();
        } else {
            o << "(";
            for (std::size_t j = 0; j < g.size(); ++j) o << (j ? ", " : "") << g[j].str();
            o << ")";
        }
        o << "\n";
    }
    o << "\n[drivers]\n";
    for (const auto& d : m.drivers) {
        o << d.name << " = " << (d.wiener ? "wiener" : "time") << ":";
        bool first = true;
        for (std::size_t k = 0; k < d.coeffs.size(); ++k) {
            if (d.coeffs[k].is_zero()) continue;
            o << (first ? " " : " + ") << "(" << d.coeffs[k].str() << ")*" << m.gen_names[k];
            first = false;
        }
        if (first) o << " 0*" << m.gen_names[0];
        o << "\n";
    }
    if (!m.correlation.empty()) {
        o << "\n[correlation]\n";
        std::size_t w = 0;
        for (const auto& d : m.drivers) {
            if (!d.wiener) continue;
            std::vector<std::string> row;
            for (const auto& r : m.correlation[w]) row.push_back(rational_str(r));
            o << d.name << " = " << join(row) << "\n";
            ++w;
        }
    }
    if (!m.drift.empty()) o << "\n[drift]\ngenerator = " << m.drift << "\n";
    if (!m.flows.empty()) {
        o << "\n[flows]\n";
        for (const auto& f : m.flows) {
            o << f.generator << "(s) = ";
            Bindings ren = {{JetCoord::parameter("__flow"), Expr::coord(JetCoord::parameter("s"))}};
            for (std::size_t i = 0; i < f.maps.size(); ++i)
                o << (i ? "; " : "") << f.maps[i].first << " -> " << substitute(f.maps[i].second, ren).str();
            o << "\n";
        }
    }
    if (!m.initial.empty()) {
        o << "\n[initial]\n";
        for (const auto& [d, e] : m.initial) o << d << " = " << e.str() << "\n";
    }
    if (!m.state0.empty()) {
        o << "\n[state]\n";
        for (const auto& [k, v] : m.state0) o << k << " = " << rational_str(v) << "\n";
    }
    if (!m.outputs.empty()) {
        o << "\n[outputs]\n";
        for (const auto& [k, e] : m.outputs) o << k << " = " << e.str() << "\n";
    }
    o << "\n[domain]\n" << m.space.independents()[0] << " = " << rational_str(m.x_min) << ", " << rational_str(m.x_max)
      << "\nboundary = " << m.boundary << "\n";
    return o.str();
}

}  // namespace jetred
