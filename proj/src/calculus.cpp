#include "jetred/calculus.hpp"

namespace jetred {

bool EvolutionField::is_zero() const {
    for (const auto& c : components)
        if (!c.is_zero()) return false;
    return true;
}

int EvolutionField::order() const {
    int k = 0;
    for (const auto& c : components) k = std::max(k, analyze(c).max_order);
    return k;
}

std::string EvolutionField::str() const {
    if (components.size() == 1) return components[0].str();
    std::string s = "(";
    for (std::size_t j = 0; j < components.size(); ++j) s += (j ? ", " : "") + components[j].str();
    return s + ")";
}

EvolutionField operator+(const EvolutionField& a, const EvolutionField& b) {
    EvolutionField r = a;
    for (std::size_t j = 0; j < r.size(); ++j) r.components[j] += b[j];
    return r;
}

EvolutionField operator-(const EvolutionField& a, const EvolutionField& b) {
    EvolutionField r = a;
    for (std::size_t j = 0; j < r.size(); ++j) r.components[j] -= b[j];
    return r;
}

EvolutionField operator*(const Expr& c, const EvolutionField& f) {
    EvolutionField r = f;
    for (auto& x : r.components) x = c * x;
    return r;
}

Expr total_derivative(const JetSpace& space, const Expr& e, int i) {
    Expr out = diff(e, space.x(i));
    for (const auto& c : free_coords(e)) {
        if (c.kind != JetCoord::Kind::Dependent) continue;
        out += Expr::coord(space.shifted(c, i)) * diff(e, c);
    }
    return out;
}

Expr total_derivative_multi(const JetSpace& space, const Expr& e, const std::vector<int>& sigma) {
    Expr out = e;
    for (std::size_t i = 0; i < sigma.size(); ++i)
        for (int k = 0; k < sigma[i]; ++k) out = total_derivative(space, out, static_cast<int>(i));
    return out;
}

EvolutionOperator::EvolutionOperator(const JetSpace& space, EvolutionField f) : space_(space), f_(std::move(f)) {}

const Expr& EvolutionOperator::prolonged(int j, const std::vector<int>& sigma_in) {
    std::vector<int> sigma = sigma_in;
    sigma.resize(static_cast<std::size_t>(space_.m()), 0);
    auto key = std::make_pair(j, sigma);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Expr v;
    int total = 0;
    for (int s : sigma) total += s;
    if (total == 0) {
        v = f_[static_cast<std::size_t>(j)];
    } else {
        // peel one derivative off the last nonzero direction and reuse the cache
        std::vector<int> lower = sigma;
        int i = static_cast<int>(lower.size()) - 1;
        while (lower[static_cast<std::size_t>(i)] == 0) --i;
        lower[static_cast<std::size_t>(i)] -= 1;
        v = total_derivative(space_, prolonged(j, lower), i);
    }
    return cache_.emplace(key, std::move(v)).first->second;
}

Expr EvolutionOperator::apply(const Expr& g) {
    Expr out;
    for (const auto& c : free_coords(g)) {
        if (c.kind != JetCoord::Kind::Dependent) continue;
        const Expr& dc = prolonged(c.index, c.sigma);
        if (dc.is_zero()) continue;
        out += dc * diff(g, c);
    }
    return out;
}

Expr evolution_apply(const JetSpace& space, const EvolutionField& f, const Expr& g) {
    EvolutionOperator op(space, f);
    return op.apply(g);
}

EvolutionField evolution_bracket(const JetSpace& space, const EvolutionField& f, const EvolutionField& g) {
    EvolutionOperator vf(space, f), vg(space, g);
    EvolutionField h;
    for (std::size_t j = 0; j < f.size(); ++j) h.components.push_back(vf.apply(g[j]) - vg.apply(f[j]));
    return h;
}

namespace {

Poly lcm(const Poly& a, const Poly& b) {
    Poly g = gcd(a, b);
    return monic(*divide_exact(a * b, g));
}

struct MonomialLess {
    bool operator()(const Monomial& a, const Monomial& b) const { return compare_monomials(a, b) < 0; }
};

}  // namespace

std::optional<std::vector<Rational>> decompose_in_basis(const EvolutionField& h,
                                                        const std::vector<EvolutionField>& basis) {
    std::size_t nb = basis.size();
    RationalMatrix rows;
    std::vector<Rational> rhs;
    for (std::size_t j = 0; j < h.size(); ++j) {
        Poly l = h[j].den();
        for (const auto& b : basis) l = lcm(l, b[j].den());
        std::map<Monomial, std::size_t, MonomialLess> index;
        auto row_of = [&](const Monomial& m) {
            auto it = index.find(m);
            if (it != index.end()) return it->second;
            rows.emplace_back(nb, Rational(0));
            rhs.emplace_back(0);
            index.emplace(m, rows.size() - 1);
            return rows.size() - 1;
        };
        for (std::size_t k = 0; k < nb; ++k) {
            Poly p = basis[k][j].num() * *divide_exact(l, basis[k][j].den());
            for (const auto& t : p.terms()) rows[row_of(t.mono)][k] += t.coef;
        }
        Poly ph = h[j].num() * *divide_exact(l, h[j].den());
        for (const auto& t : ph.terms()) rhs[row_of(t.mono)] += t.coef;
    }
    if (rows.empty()) return std::vector<Rational>(nb, Rational(0));
    return solve_rational(rows, rhs);
}

LieAlgebra LieAlgebra::from_constants(std::vector<std::vector<std::vector<Rational>>> lambda) {
    LieAlgebra a;
    a.lambda = std::move(lambda);
    std::size_t h = a.lambda.size();
    for (std::size_t i = 0; i < h; ++i) {
        a.names.push_back("G" + std::to_string(i + 1));
        a.provenance.push_back("generator");
        a.depth.push_back(0);
    }
    return a;
}

ClosureResult lie_closure(const JetSpace& space, const std::vector<EvolutionField>& generators,
                          const std::vector<std::string>& names_in, int max_depth, int dim_cap) {
    ClosureResult res;
    LieAlgebra& alg = res.algebra;
    std::vector<std::string> names = names_in;
    for (std::size_t i = names.size(); i < generators.size(); ++i) names.push_back("G" + std::to_string(i + 1));

    for (std::size_t i = 0; i < generators.size(); ++i) {
        if (!alg.basis.empty() && decompose_in_basis(generators[i], alg.basis))
            throw model_error("DependentGenerators", names[i] + " lies in the span of the preceding generators");
        alg.basis.push_back(generators[i]);
        alg.names.push_back(names[i]);
        alg.provenance.push_back("generator");
        alg.depth.push_back(0);
    }
    if (static_cast<int>(alg.basis.size()) > dim_cap) {
        res.reason = "generator count exceeds dim_cap";
        return res;
    }

    // lambda grows with the basis; pairs are visited column by column
    std::map<std::pair<std::size_t, std::size_t>, std::vector<Rational>> coeffs;
    for (std::size_t j = 1; j < alg.basis.size(); ++j) {
        for (std::size_t i = 0; i < j; ++i) {
            EvolutionField h;
            try {
                h = evolution_bracket(space, alg.basis[i], alg.basis[j]);
            } catch (const Error& e) {
                res.witness = "[" + alg.names[i] + "," + alg.names[j] + "]";
                res.reason = e.what();
                return res;
            }
            auto c = decompose_in_basis(h, alg.basis);
            std::string chain = "[" + alg.names[i] + "," + alg.names[j] + "]";
            if (c) {
                coeffs[{i, j}] = *c;
                continue;
            }
            int depth = std::max(alg.depth[i], alg.depth[j]) + 1;
            if (depth > max_depth || static_cast<int>(alg.basis.size()) + 1 > dim_cap) {
                res.witness = chain;
                res.witness_field = h;
                res.reason = depth > max_depth ? "bracket depth exceeds max_depth" : "dimension exceeds dim_cap";
                return res;
            }
            std::vector<Rational> e(alg.basis.size() + 1, Rational(0));
            e.back() = 1;
            coeffs[{i, j}] = e;
            alg.basis.push_back(h);
            alg.names.push_back(chain);
            alg.provenance.push_back(chain);
            alg.depth.push_back(depth);
        }
    }

    std::size_t dim = alg.basis.size();
    alg.lambda.assign(dim, std::vector<std::vector<Rational>>(dim, std::vector<Rational>(dim, Rational(0))));
    for (auto& [ij, c] : coeffs) {
        c.resize(dim, Rational(0));
        alg.lambda[ij.first][ij.second] = c;
        for (std::size_t k = 0; k < dim; ++k) alg.lambda[ij.second][ij.first][k] = -c[k];
    }
    res.closed = true;
    return res;
}

bool jacobi_holds(const std::vector<std::vector<std::vector<Rational>>>& lambda) {
    std::size_t h = lambda.size();
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t k = 0; k < h; ++k)
                for (std::size_t p = 0; p < h; ++p) {
                    Rational s = 0;
                    for (std::size_t m = 0; m < h; ++m)
                        s += lambda[i][j][m] * lambda[m][k][p] + lambda[j][k][m] * lambda[m][i][p] +
                             lambda[k][i][m] * lambda[m][j][p];
                    if (s != 0) return false;
                }
    return true;
}

AlgebraCheck verify_algebra(const JetSpace& space, const LieAlgebra& alg) {
    AlgebraCheck chk;
    std::size_t h = alg.dim();
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t k = 0; k < h; ++k)
                if (alg.lambda[i][j][k] != -alg.lambda[j][i][k]) chk.antisymmetric = false;
    chk.jacobi = jacobi_holds(alg.lambda);
    for (std::size_t i = 0; i < h && chk.relations; ++i) {
        for (std::size_t j = i + 1; j < h; ++j) {
            EvolutionField lhs = evolution_bracket(space, alg.basis[i], alg.basis[j]);
            EvolutionField rhs;
            rhs.components.assign(lhs.size(), Expr());
            for (std::size_t k = 0; k < h; ++k)
                if (alg.lambda[i][j][k] != 0) rhs = rhs + Expr(alg.lambda[i][j][k]) * alg.basis[k];
            for (std::size_t c = 0; c < lhs.size(); ++c) {
                if (!equal(lhs[c], rhs[c]).ok()) {
                    chk.relations = false;
                    chk.detail = "relation [" + alg.names[i] + "," + alg.names[j] + "] fails";
                    break;
                }
            }
            if (!chk.relations) break;
        }
    }
    return chk;
}

}  // namespace jetred
