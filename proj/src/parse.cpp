#include "jetred/parse.hpp"

#include <cctype>

namespace jetred {

Rational parse_rational_literal(const std::string& text) {
    std::string mant = text;
    long exp10 = 0;
    auto epos = text.find_first_of("eE");
    if (epos != std::string::npos) {
        mant = text.substr(0, epos);
        exp10 = std::stol(text.substr(epos + 1));
    }
    auto dot = mant.find('.');
    std::string digits = mant;
    if (dot != std::string::npos) {
        digits = mant.substr(0, dot) + mant.substr(dot + 1);
        exp10 -= static_cast<long>(mant.size() - dot - 1);
    }
    if (digits.empty()) digits = "0";
    mpz_class n(digits, 10), scale;
    mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(exp10 < 0 ? -exp10 : exp10));
    Rational r = exp10 >= 0 ? Rational(n * scale) : Rational(n, scale);
    r.canonicalize();
    return r;
}

namespace {

class Parser {
public:
    Parser(const std::string& text, const ParseContext& ctx) : s_(text), ctx_(ctx) {}

    Expr parse() {
        Expr e = sum();
        skip();
        if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(msg, pos_); }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    Expr sum() {
        Expr e = product();
        for (;;) {
            if (accept('+'))
                e = e + product();
            else if (accept('-'))
                e = e - product();
            else
                return e;
        }
    }

    Expr product() {
        Expr e = unary();
        for (;;) {
            if (accept('*')) {
                e = e * unary();
            } else if (accept('/')) {
                std::size_t at = pos_;
                Expr d = unary();
                if (d.is_zero()) {
                    pos_ = at;
                    fail("division by zero");
                }
                e = e / d;
            } else {
                return e;
            }
        }
    }

    Expr unary() {
        if (accept('-')) return -unary();
        if (accept('+')) return unary();
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) {
            Expr ex = unary();
            if (auto c = ex.constant_value()) return jetred::pow(base, *c);
            return jetred::exp(ex * jetred::log(base));
        }
        return base;
    }

    std::string identifier() {
        skip();
        std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
            // u_{(3)}: stop before the brace so the caller can read the order
            if (s_[pos_] == '_' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '{') {
                ++pos_;
                break;
            }
            ++pos_;
        }
        return s_.substr(start, pos_ - start);
    }

    Expr number() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        std::string lit = s_.substr(start, pos_ - start);
        if (lit.find('.') != lit.rfind('.')) fail("malformed number");
        return Expr(parse_rational_literal(lit));
    }

    std::vector<Expr> arguments() {
        std::vector<Expr> args;
        if (accept(')')) return args;
        do {
            args.push_back(sum());
        } while (accept(','));
        expect(')');
        return args;
    }

    int integer_literal() {
        skip();
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (start == pos_) fail("expected integer");
        return std::stoi(s_.substr(start, pos_ - start));
    }

    Expr derivative_operator() {
        // d(u, x, 2[, y, 1 ...])
        std::size_t at = pos_;
        std::string dep = identifier();
        auto j = ctx_.space.dependent_index(dep);
        if (!j) {
            pos_ = at;
            throw model_error("UnknownIdentifier", "'" + dep + "' is not a dependent variable");
        }
        std::vector<int> sigma(static_cast<std::size_t>(ctx_.space.m()), 0);
        while (accept(',')) {
            std::string var = identifier();
            auto i = ctx_.space.independent_index(var);
            if (!i) throw model_error("UnknownIdentifier", "'" + var + "' is not an independent variable");
            expect(',');
            sigma[static_cast<std::size_t>(*i)] += integer_literal();
        }
        expect(')');
        return Expr::coord(ctx_.space.derivative(*j, sigma));
    }

    std::optional<Expr> derivative_name(const std::string& id) {
        auto us = id.find('_');
        if (us == std::string::npos) return std::nullopt;
        auto j = ctx_.space.dependent_index(id.substr(0, us));
        if (!j) return std::nullopt;
        std::string rest = id.substr(us + 1);
        if (rest.empty()) {
            // u_{(n)}
            if (!(accept('{') && accept('('))) fail("expected '{(' after '_'");
            int n = integer_literal();
            expect(')');
            expect('}');
            if (ctx_.space.m() != 1) fail("u_{(n)} notation needs exactly one independent variable");
            return Expr::coord(ctx_.space.derivative(*j, n));
        }
        std::vector<int> sigma(static_cast<std::size_t>(ctx_.space.m()), 0);
        for (char c : rest) {
            auto i = ctx_.space.independent_index(std::string(1, c));
            if (!i) return std::nullopt;
            sigma[static_cast<std::size_t>(*i)] += 1;
        }
        return Expr::coord(ctx_.space.derivative(*j, sigma));
    }

    Expr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (accept('(')) {
            Expr e = sum();
            expect(')');
            return e;
        }
        if (!std::isalpha(static_cast<unsigned char>(c))) fail("unexpected character '" + std::string(1, c) + "'");
        std::size_t at = pos_;
        std::string id = identifier();
        skip();
        bool call = pos_ < s_.size() && s_[pos_] == '(';
        if (call) {
            ++pos_;
            if (id == "d") return derivative_operator();
            static const std::set<std::string> unary_kernels = {"exp", "log", "sin", "cos", "sqrt"};
            if (unary_kernels.count(id)) {
                auto args = arguments();
                if (args.size() != 1) {
                    pos_ = at;
                    fail(id + " takes one argument");
                }
                if (id == "exp") return jetred::exp(args[0]);
                if (id == "log") return jetred::log(args[0]);
                if (id == "sin") return jetred::sin(args[0]);
                if (id == "cos") return jetred::cos(args[0]);
                return jetred::sqrt(args[0]);
            }
            auto f = ctx_.functions.find(id);
            if (f != ctx_.functions.end()) {
                auto args = arguments();
                if (static_cast<int>(args.size()) != f->second) {
                    pos_ = at;
                    fail("function " + id + " expects " + std::to_string(f->second) + " arguments");
                }
                return func(id, args);
            }
            pos_ = at;
            throw model_error("UnknownIdentifier", "unknown function '" + id + "' at position " + std::to_string(at));
        }
        if (auto it = ctx_.symbols.find(id); it != ctx_.symbols.end()) return it->second;
        if (auto i = ctx_.space.independent_index(id)) return Expr::coord(ctx_.space.x(*i));
        if (auto j = ctx_.space.dependent_index(id)) return Expr::coord(ctx_.space.u(*j));
        if (ctx_.parameters.count(id)) return Expr::coord(JetCoord::parameter(id));
        if (auto d = derivative_name(id)) return *d;
        throw model_error("UnknownIdentifier", "'" + id + "' at position " + std::to_string(at));
    }

    const std::string& s_;
    const ParseContext& ctx_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(const std::string& text, const ParseContext& ctx) { return Parser(text, ctx).parse(); }

}  // namespace jetred
