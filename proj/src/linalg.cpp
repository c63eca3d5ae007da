#include "jetred/linalg.hpp"

namespace jetred {

namespace {

// Row-reduces [a | b] in place; returns pivot columns.
std::vector<std::size_t> reduce(RationalMatrix& a, std::vector<Rational>* b) {
    std::vector<std::size_t> pivots;
    if (a.empty()) return pivots;
    std::size_t rows = a.size(), cols = a[0].size(), r = 0;
    for (std::size_t c = 0; c < cols && r < rows; ++c) {
        std::size_t p = r;
        while (p < rows && a[p][c] == 0) ++p;
        if (p == rows) continue;
        std::swap(a[p], a[r]);
        if (b) std::swap((*b)[p], (*b)[r]);
        Rational inv = 1 / a[r][c];
        for (std::size_t k = c; k < cols; ++k) a[r][k] *= inv;
        if (b) (*b)[r] *= inv;
        for (std::size_t i = 0; i < rows; ++i) {
            if (i == r || a[i][c] == 0) continue;
            Rational f = a[i][c];
            for (std::size_t k = c; k < cols; ++k) a[i][k] -= f * a[r][k];
            if (b) (*b)[i] -= f * (*b)[r];
        }
        pivots.push_back(c);
        ++r;
    }
    return pivots;
}

}  // namespace

std::optional<std::vector<Rational>> solve_rational(RationalMatrix a, std::vector<Rational> b) {
    std::size_t cols = a.empty() ? 0 : a[0].size();
    auto pivots = reduce(a, &b);
    for (std::size_t i = pivots.size(); i < b.size(); ++i)
        if (b[i] != 0) return std::nullopt;
    std::vector<Rational> x(cols, Rational(0));
    for (std::size_t r = 0; r < pivots.size(); ++r) x[pivots[r]] = b[r];
    return x;
}

int rank_rational(RationalMatrix a) { return static_cast<int>(reduce(a, nullptr).size()); }

}  // namespace jetred
