#include "rflab/checks.hpp"

#include <algorithm>
#include <array>

namespace rflab {

namespace {

constexpr std::array<AnchorInfo, 27> kAnchors{{
    {"flow.metric-drift", "|g(t) - g0| <= 4t while sup|Ric| <= 2"},
    {"flow.ricci-bound", "sup|Ric(g(t))| <= 2 for initial sup|Ric| <= 1"},
    {"flow.curvature-smoothing", "sup|Rm(g(t))| t^{1/2} bounded by 3x its value at the first probe time"},
    {"flow.reached-horizon", "flow reaches the requested horizon without blowup or positivity loss"},
    {"evolution.scalar-identity", "dR/dt = Delta R + 2|Ric|^2 (exact on models, converging under refinement on grids)"},
    {"evolution.rm-inequality", "d|Rm|/dt <= Delta|Rm| + c|Rm|^2 with the measured c matching the model value"},
    {"evolution.ricci-integral", "sup|Ric|(t) <= sup|Ric|(0) exp(c int_0^t sup|Rm|)"},
    {"lemma.pointwise-smoothing", "sup|Rm|(t) <= c K t^{-(n+2)/(2p0)}"},
    {"lemma.lp-propagation", "max_x ||Rm||_{p0, B(r0/4)}(t) <= K / (1 - c t)"},
    {"lemma.ricci-growth", "sup|Ric|(t) <= sup|Ric|(0) exp(c K t^{(2p0-n-2)/(2p0)})"},
    {"lemma.sobolev-growth", "max_x C_S(t) <= chi exp(c K t^{(2p0-n-2)/(2p0)})"},
    {"lemma.fit-bounded", "fitted lemma constant is finite and keeps the form nondegenerate up to the horizon"},
    {"sobolev.quotient-evolution", "C_S(t) <= C_S(0) exp(n int_0^t sup|Ric|)"},
    {"geometry.diameter", "e^{-2t} diam(0) <= diam(t) <= e^{2t} diam(0)"},
    {"geometry.volume", "e^{-4nt} vol(0) <= vol(t) <= e^{4nt} vol(0)"},
    {"geometry.excess", "ex(t) <= e^{2t} ex(0) + (e^{2t} - e^{-2t}) diam(0)"},
    {"geometry.length-rate", "-2 l_c(t) <= d l_c/dt <= 2 l_c(t)"},
    {"geometry.distance", "e^{-2t} d(0) <= d(t) <= e^{2t} d(0)"},
    {"covering.count", "epsilon-net size <= Bishop-Gromov count bound"},
    {"covering.multiplicity", "epsilon-ball cover multiplicity <= Bishop-Gromov multiplicity bound"},
    {"covering.lp-sum", "int_{B(r)} |Rm|^p <= sum over net centers of int_{B(y_i, eps)} |Rm|^p"},
    {"conjugate.radius", "conjugate radius estimate matches the model value"},
    {"moser.sup-bound", "f(x,t) <= weak maximum principle bound"},
    {"moser.epsilon-identity", "(n/q) eps^{(1-n/q)(n-2)/n} beta C_S^2 = 1/p"},
    {"moser.coefficient-monotone", "bound nonincreasing in R, nondecreasing in beta, l and T"},
    {"model.exact-flow", "grid or reduced flow matches the closed-form model flow"},
    {"model.membership", "sup|Ric| <= 1 and conj >= r0 for the initial metric"},
}};

}  // namespace

std::span<const AnchorInfo> anchor_registry() noexcept { return kAnchors; }

bool known_anchor(std::string_view anchor) noexcept {
  return std::any_of(kAnchors.begin(), kAnchors.end(), [&](const AnchorInfo& a) { return a.anchor == anchor; });
}

}  // namespace rflab
