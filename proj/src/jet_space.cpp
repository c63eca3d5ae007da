#include <numeric>

#include "jetred/expr.hpp"

namespace jetred {

JetCoord JetCoord::independent(int i, std::string name) {
    JetCoord c;
    c.kind = Kind::Independent;
    c.index = i;
    c.name = std::move(name);
    return c;
}

JetCoord JetCoord::dependent(int j, std::vector<int> sigma, std::string name) {
    JetCoord c;
    c.kind = Kind::Dependent;
    c.index = j;
    c.sigma = std::move(sigma);
    c.name = std::move(name);
    return c;
}

JetCoord JetCoord::parameter(std::string name) {
    JetCoord c;
    c.kind = Kind::Parameter;
    c.name = std::move(name);
    return c;
}

int JetCoord::order() const { return std::accumulate(sigma.begin(), sigma.end(), 0); }

int compare(const JetCoord& a, const JetCoord& b) {
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind) ? -1 : 1;
    switch (a.kind) {
        case JetCoord::Kind::Independent:
            if (a.index != b.index) return a.index < b.index ? -1 : 1;
            return a.name.compare(b.name) < 0 ? -1 : (a.name == b.name ? 0 : 1);
        case JetCoord::Kind::Dependent: {
            if (a.index != b.index) return a.index < b.index ? -1 : 1;
            int oa = a.order(), ob = b.order();
            if (oa != ob) return oa < ob ? -1 : 1;
            std::size_t len = std::max(a.sigma.size(), b.sigma.size());
            for (std::size_t i = 0; i < len; ++i) {
                int sa = i < a.sigma.size() ? a.sigma[i] : 0;
                int sb = i < b.sigma.size() ? b.sigma[i] : 0;
                if (sa != sb) return sa > sb ? -1 : 1;
            }
            // coordinates of different jet spaces stay distinct
            return a.name.compare(b.name) < 0 ? -1 : (a.name == b.name ? 0 : 1);
        }
        case JetCoord::Kind::Parameter:
            return a.name.compare(b.name) < 0 ? -1 : (a.name == b.name ? 0 : 1);
    }
    return 0;
}

JetSpace::JetSpace(std::vector<std::string> independents, std::vector<std::string> dependents, int max_order)
    : independents_(std::move(independents)), dependents_(std::move(dependents)), max_order_(max_order) {}

JetCoord JetSpace::x(int i) const { return JetCoord::independent(i, independents_.at(static_cast<std::size_t>(i))); }

JetCoord JetSpace::u(int j) const { return derivative(j, std::vector<int>(static_cast<std::size_t>(m()), 0)); }

JetCoord JetSpace::derivative(int j, int order) const {
    std::vector<int> sigma(static_cast<std::size_t>(m()), 0);
    if (!sigma.empty()) sigma[0] = order;
    return derivative(j, sigma);
}

JetCoord JetSpace::derivative(int j, const std::vector<int>& sigma_in) const {
    std::vector<int> sigma = sigma_in;
    sigma.resize(static_cast<std::size_t>(m()), 0);
    const std::string& dep = dependents_.at(static_cast<std::size_t>(j));
    int total = std::accumulate(sigma.begin(), sigma.end(), 0);
    if (total > max_order_)
        throw math_error("OrderCapExceeded", "derivative of order " + std::to_string(total) + " exceeds cap " +
                                                 std::to_string(max_order_));
    if (total == 0) return JetCoord::dependent(j, sigma, dep);

    bool short_names = total <= 3;
    for (const auto& name : independents_) short_names = short_names && name.size() == 1;
    std::string name;
    if (short_names) {
        name = dep + "_";
        for (std::size_t i = 0; i < sigma.size(); ++i) name += std::string(static_cast<std::size_t>(sigma[i]), independents_[i][0]);
    } else if (m() == 1) {
        name = dep + "_{(" + std::to_string(total) + ")}";
    } else {
        name = "d(" + dep;
        for (std::size_t i = 0; i < sigma.size(); ++i)
            if (sigma[i] > 0) name += ", " + independents_[i] + ", " + std::to_string(sigma[i]);
        name += ")";
    }
    return JetCoord::dependent(j, sigma, name);
}

JetCoord JetSpace::shifted(const JetCoord& c, int i) const {
    std::vector<int> sigma = c.sigma;
    sigma.resize(static_cast<std::size_t>(m()), 0);
    sigma[static_cast<std::size_t>(i)] += 1;
    return derivative(c.index, sigma);
}

std::optional<int> JetSpace::independent_index(const std::string& name) const {
    for (std::size_t i = 0; i < independents_.size(); ++i)
        if (independents_[i] == name) return static_cast<int>(i);
    return std::nullopt;
}

std::optional<int> JetSpace::dependent_index(const std::string& name) const {
    for (std::size_t i = 0; i < dependents_.size(); ++i)
        if (dependents_[i] == name) return static_cast<int>(i);
    return std::nullopt;
}

}  // namespace jetred
