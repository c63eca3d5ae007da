#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jetred/expr.hpp"
#include "jetred/linalg.hpp"

namespace jetred {

struct EvolutionField {
    std::vector<Expr> components;  // F^1 ... F^n

    EvolutionField() = default;
    explicit EvolutionField(std::vector<Expr> c) : components(std::move(c)) {}
    static EvolutionField scalar(const Expr& e) { return EvolutionField({e}); }

    std::size_t size() const { return components.size(); }
    const Expr& operator[](std::size_t j) const { return components[j]; }
    bool is_zero() const;
    int order() const;
    std::string str() const;

    friend bool operator==(const EvolutionField& a, const EvolutionField& b) { return a.components == b.components; }
    friend EvolutionField operator+(const EvolutionField& a, const EvolutionField& b);
    friend EvolutionField operator-(const EvolutionField& a, const EvolutionField& b);
    friend EvolutionField operator*(const Expr& c, const EvolutionField& f);
};

Expr total_derivative(const JetSpace& space, const Expr& e, int i);
Expr total_derivative_multi(const JetSpace& space, const Expr& e, const std::vector<int>& sigma);

// V_F with a cache of the prolonged components D^sigma(F^j).
class EvolutionOperator {
public:
    EvolutionOperator(const JetSpace& space, EvolutionField f);
    Expr apply(const Expr& g);
    const Expr& prolonged(int j, const std::vector<int>& sigma);
    const EvolutionField& field() const { return f_; }

private:
    const JetSpace& space_;
    EvolutionField f_;
    std::map<std::pair<int, std::vector<int>>, Expr> cache_;
};

Expr evolution_apply(const JetSpace& space, const EvolutionField& f, const Expr& g);
EvolutionField evolution_bracket(const JetSpace& space, const EvolutionField& f, const EvolutionField& g);

// Constant coefficients c with h = sum c_k basis_k, or nullopt (NotInSpan).
std::optional<std::vector<Rational>> decompose_in_basis(const EvolutionField& h,
                                                        const std::vector<EvolutionField>& basis);

struct LieAlgebra {
    std::vector<EvolutionField> basis;
    std::vector<std::string> names;
    std::vector<std::string> provenance;  // "generator" or the bracket that produced it
    std::vector<int> depth;
    // lambda[i][j][k]: [G_i, G_j] = sum_k lambda[i][j][k] G_k
    std::vector<std::vector<std::vector<Rational>>> lambda;

    std::size_t dim() const { return basis.size(); }
    static LieAlgebra from_constants(std::vector<std::vector<std::vector<Rational>>> lambda);
};

struct ClosureResult {
    bool closed = false;
    LieAlgebra algebra;
    std::string witness;  // bracket chain of the offending element
    EvolutionField witness_field;
    std::string reason;
};

ClosureResult lie_closure(const JetSpace& space, const std::vector<EvolutionField>& generators,
                          const std::vector<std::string>& names = {}, int max_depth = 3, int dim_cap = 16);

// Checks antisymmetry, the Jacobi identity and the bracket relations.
struct AlgebraCheck {
    bool antisymmetric = true;
    bool jacobi = true;
    bool relations = true;
    std::string detail;
    bool ok() const { return antisymmetric && jacobi && relations; }
};
AlgebraCheck verify_algebra(const JetSpace& space, const LieAlgebra& alg);
bool jacobi_holds(const std::vector<std::vector<std::vector<Rational>>>& lambda);

}  // namespace jetred
