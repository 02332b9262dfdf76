"""Design rules, error-probability bounds and cost formulas.

All logarithms are natural. Probability bounds are evaluated in log space so
values far below the smallest double survive as log-probabilities.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, InvalidRegime

NEG_INF = float("-inf")


def _check_prob(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {x}")


def q_from_qtotal(q_total: float) -> float:
    """Per-step dropout rate whose four-fold survival matches ``1 - q_total``."""
    _check_prob("q_total", q_total)
    return 1.0 - (1.0 - q_total) ** 0.25


def qtotal_from_q(q: float) -> float:
    _check_prob("q", q)
    return 1.0 - (1.0 - q) ** 4


# ---------------------------------------------------------------------------
# Connection-probability thresholds and the threshold rule
# ---------------------------------------------------------------------------


def reliability_threshold_p(n: int, q: float) -> float:
    if n < 2:
        raise DomainError("need n >= 2")
    _check_prob("q", q)
    denom_factor = 2.0 * (1.0 - q) ** 4 - 1.0
    if denom_factor <= 0.0:
        raise InvalidRegime(f"(1-q)^4 = {(1 - q) ** 4:.4f} is not above 1/2")
    k = n - 1
    return (3.0 * math.sqrt(k * math.log(k)) - 1.0) / (k * denom_factor)


def _privacy_size(n: int, q: float) -> int:
    return math.ceil(n * (1.0 - q) ** 3 - math.sqrt(n * math.log(n)))


def privacy_threshold_p(n: int, q: float) -> float:
    if n < 2:
        raise DomainError("need n >= 2")
    _check_prob("q", q)
    s = _privacy_size(n, q)
    if s < 2:
        raise InvalidRegime(f"expected survivor core size {s} is below 2")
    return math.log(s) / s


def p_star(n: int, q: float) -> float:
    """Smallest connection probability covered by both asymptotic guarantees."""
    return max(privacy_threshold_p(n, q), reliability_threshold_p(n, q))


def t_lower_bound(n: int, p: float) -> float:
    if n < 2:
        raise DomainError("need n >= 2")
    _check_prob("p", p)
    k = n - 1
    return (k * p + math.sqrt(k * math.log(k)) + 1.0) / 2.0


def t_rule(n: int, p: float) -> int:
    return math.ceil(t_lower_bound(n, p))


# ---------------------------------------------------------------------------
# Finite-n bounds
# ---------------------------------------------------------------------------


def _xlogy(x: float, y: float) -> float:
    if x == 0.0:
        return 0.0
    return x * math.log(y)


def kl_bernoulli(a: float, b: float) -> float:
    """``D(a || b)`` between Bernoulli laws, with ``0 log 0 = 0``."""
    _check_prob("a", a)
    if not 0.0 < b < 1.0:
        raise DomainError(f"reference probability must lie in (0, 1), got {b}")
    return _xlogy(a, a / b) + _xlogy(1.0 - a, (1.0 - a) / (1.0 - b))


def log_per_bound(n: int, p: float, q: float, t: int) -> float | None:
    """Log of the Chernoff bound on the reliability failure probability.

    Returns ``None`` when ``(t-1)/(n-1)`` lies above the mean share-holder
    fraction ``p(1-q)^4``, where the lower-tail bound does not apply.
    """
    if n < 2:
        raise DomainError("need n >= 2")
    _check_prob("p", p)
    _check_prob("q", q)
    a = (t - 1) / (n - 1)
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"(t-1)/(n-1) = {a} outside [0, 1]")
    b = p * (1.0 - q) ** 4
    if b <= 0.0 or b >= 1.0:
        raise DomainError(f"p(1-q)^4 = {b} must lie strictly between 0 and 1")
    if a > b:
        return None
    return math.log(n) - (n - 1) * kl_bernoulli(a, b)


def per_bound(n: int, p: float, q: float, t: int) -> float | None:
    lg = log_per_bound(n, p, q, t)
    return None if lg is None else math.exp(lg)


def _log_factorials(n: int) -> np.ndarray:
    out = np.zeros(n + 1)
    if n:
        out[1:] = np.cumsum(np.log(np.arange(1, n + 1)))
    return out


def _logsumexp(v: np.ndarray) -> float:
    if v.size == 0:
        return NEG_INF
    top = float(np.max(v))
    if top == NEG_INF:
        return NEG_INF
    return top + math.log(float(np.sum(np.exp(v - top))))


def _log_pow(base: float, exps: np.ndarray) -> np.ndarray:
    """``exps * log(base)`` elementwise, with ``0 ** 0 = 1``."""
    exps = np.asarray(exps, dtype=float)
    if base > 0.0:
        return exps * math.log(base)
    return np.where(exps == 0, 0.0, NEG_INF)


def log_pep_bound(n: int, p: float, q: float) -> float:
    """Log of the union bound on the privacy failure probability.

    Sums, over the size ``m`` of the step-2 survivor set, the chance of that
    size times the chance that some cut of the induced graph is empty.
    """
    if n < 1:
        raise DomainError("need n >= 1")
    _check_prob("p", p)
    _check_prob("q", q)
    lf = _log_factorials(n)
    alive = (1.0 - q) ** 3
    ms = np.arange(n + 1)
    outer = (lf[n] - lf[ms] - lf[n - ms]) + _log_pow(alive, ms) + _log_pow(1.0 - alive, n - ms)
    terms = []
    for m in range(2, n + 1):
        if outer[m] == NEG_INF:
            continue
        k = np.arange(1, m // 2 + 1)
        inner = (lf[m] - lf[k] - lf[m - k]) + _log_pow(1.0 - p, k * (m - k))
        terms.append(outer[m] + _logsumexp(inner))
    return _logsumexp(np.array(terms))


def pep_bound(n: int, p: float, q: float) -> float:
    return math.exp(log_pep_bound(n, p, q))


# ---------------------------------------------------------------------------
# Communication cost
# ---------------------------------------------------------------------------


def bandwidth_ccesa(deg: float, a_K: int, a_S: int) -> float:
    """Per-client key and share traffic with ``deg`` neighbours."""
    return 2 * (deg + 1) * a_K + (5 * deg + 1) * a_S


def bandwidth_sa(n: int, a_K: int, a_S: int) -> int:
    return 2 * n * a_K + (5 * n - 4) * a_S


def comm_total_ccesa(n: int, a_K: int, a_S: int, m: int, R: int) -> float:
    """Leading-order per-client total with about ``sqrt(n ln n)`` neighbours."""
    return math.sqrt(n * math.log(n)) * (2 * a_K + 5 * a_S) + m * R


def comm_total_turbo(n: int, m: int, R: int, L: int) -> float:
    return 4 * m * n * R / L


def turbo_ratio(n: int, a_K: int, a_S: int, m: int, R: int, L: int) -> float:
    return comm_total_ccesa(n, a_K, a_S, m, R) / comm_total_turbo(n, m, R, L)


@dataclass(frozen=True)
class CostSummary:
    n: int
    q_total: float
    m: int
    R: int
    p: float
    mean_degree: float
    client_comm_bits: float
    server_comm_bits: float
    client_comm_bits_sa: float
    server_comm_bits_sa: float
    bandwidth_ratio: float
    client_comp: float
    server_comp: float
    client_comp_sa: float
    server_comp_sa: float

    def to_dict(self) -> dict:
        return asdict(self)


def cost_table(
    n: int, q_total: float, m: int, R: int = 32, a_K: int = 256, a_S: int = 256
) -> CostSummary:
    """Concrete leading-order cost estimates at ``p = p_star``.

    Communication uses the exact per-client formulas at the mean degree;
    computation columns are the order expressions with unit constants.
    """
    q = q_from_qtotal(q_total)
    p = min(1.0, p_star(n, q))
    deg = (n - 1) * p
    client = bandwidth_ccesa(deg, a_K, a_S) + m * R
    client_sa = bandwidth_sa(n, a_K, a_S) + m * R
    ln = math.log(n)
    return CostSummary(
        n=n, q_total=q_total, m=m, R=R, p=p, mean_degree=deg,
        client_comm_bits=client,
        server_comm_bits=n * client,
        client_comm_bits_sa=client_sa,
        server_comm_bits_sa=n * client_sa,
        bandwidth_ratio=bandwidth_ccesa(deg, a_K, a_S) / bandwidth_sa(n, a_K, a_S),
        client_comp=n * ln + m * math.sqrt(n * ln),
        server_comp=m * n * ln + n * n * ln,
        client_comp_sa=n * n + m * n,
        server_comp_sa=m * n * n,
    )


def pstar_grid(ns, q_totals) -> list[list[float]]:
    """Rows indexed by ``q_total``, columns by ``n``."""
    return [[p_star(n, q_from_qtotal(qt)) for n in ns] for qt in q_totals]
