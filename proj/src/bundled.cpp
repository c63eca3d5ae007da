#include "jetred/model.hpp"

namespace jetred {

namespace {

const char* kHjm = R"(# Forward-rate curve in Musiela parametrization with constant proportional volatility.
# v is the integrated forward curve, the forward rate is U = v_x.
[model]
name = hjm

[variables]
independent = x
dependent = v

[parameters]
psi = 1/5

[reduction]
mode = transported
form = ito
order = G1, G2, G3, G4
params = a, b, c, d

[functionals]
vx0 = at(v_x, 0)

[generators]
G1 = v_x
G2 = 1
G3 = v
G4 = v^2

[drivers]
dt = time: G1 - vx0*G2 + psi^2/2*G4
W = wiener: psi*G3

[initial]
v = (1 - exp(-x))/2 + (1 - (1 + x)*exp(-x))/5

[outputs]
U = v_x

[domain]
x = 0, 2
boundary = extrapolate
)";

const char* kHunterSaxton = R"(# Stochastic Hunter-Saxton system with transport noise (K + H x) u_x.
[model]
name = hunter_saxton

[variables]
independent = x
dependent = u, v

[parameters]
K = 3/10
H = 1/5

[functions]
S = smooth_step
E = smooth_step_energy

[reduction]
mode = transported
form = stratonovich
order = G1, G2, G3, G4, G5
params = a, b, c, d, e

[generators]
G1 = (x*u_x, x*v_x + v)
G2 = (u*u_x - v/2, u*v_x)
G3 = (u_x, v_x)
G4 = (1, 0)
G5 = (0, 1)

[drivers]
dt = time: -G2
W = wiener: -K*G3 - H*G1

[initial]
u = S(x)/2
v = E(x)/4

[domain]
x = -3, 3
)";

const char* kFiltering = R"(# Zakai-type filtering equation on the manifold u_xx + lambda u_x + mu u = 0.
[model]
name = filtering

[variables]
independent = x
dependent = u

[parameters]
sigma = 1
alpha = 1/10
beta = 1/5
gamma = 1/20
delta = 0

[reduction]
mode = ode
form = stratonovich

[constraint]
order = 2
coefficients = mu, lambda

[generators]
F = x*u_xx
G1 = x*u_x
G2 = u
G3 = u_x
G4 = x*u

[drivers]
dt = time: sigma^2/2*F + beta*G3 + alpha*G1 + gamma*G4 + delta*G2
S1 = wiener: G3
S2 = wiener: G1

[state]
lambda = 3
mu = 2
u = 1
u_x = -1

[domain]
x = 0, 5
)";

const char* kHeat = R"(# Heat equation with transport and multiplicative noise; the drift acts through its semigroup.
[model]
name = heat

[variables]
independent = x
dependent = u

[parameters]
r = 1/5

[reduction]
mode = transported
form = stratonovich
order = G1, G2
params = s, a, b

[generators]
F = u_xx/2
G1 = u_x
G2 = u

[drift]
generator = F

[drivers]
dt = time: F
W = wiener: G1 + r*G2

[initial]
u = exp(-x^2/(2*(1 + s)))/sqrt(1 + s)

[domain]
x = -4, 4
)";

}  // namespace

std::vector<std::string> bundled_models() { return {"hjm", "hunter-saxton", "filtering", "heat"}; }

std::string bundled_model(const std::string& name) {
    if (name == "hjm") return kHjm;
    if (name == "hunter-saxton" || name == "hunter_saxton") return kHunterSaxton;
    if (name == "filtering") return kFiltering;
    if (name == "heat") return kHeat;
    throw model_error("UnknownExample", name);
}

}  // namespace jetred
