"""Detection metrics, attack-success bounds, and overhead accounting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .basemodel import ConfigError

GRID_STEPS = 7

BOUND_FOOTNOTE = (
    "hashcheck 'printed' = 1 - F(l - T_h; l, 1/2), i.e. P(> l - T_h bits match); "
    "'inclusive' = P(>= l - T_h bits match) = P(distance <= T_h) for uniform guesses. "
    "crosscheck 'printed' = 1 - F(T_c; N_s, 1/N_c), i.e. P(votes > T_c); "
    "'inclusive' = P(votes >= T_c), the verifier's acceptance rule."
)


# ---------------------------------------------------------------------------
# binomial tail primitives


def _log_pmf_terms(ks: np.ndarray, n: int, p: float) -> np.ndarray:
    log_choose = np.array([math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) for k in ks])
    return log_choose + ks * math.log(p) + (n - ks) * math.log1p(-p)


def _log_sum(terms: np.ndarray) -> float:
    top = terms.max()
    return float(top + math.log(np.exp(terms - top).sum()))


def _check_p(n: int, p: float) -> None:
    if n < 0:
        raise ValueError("n must be non-negative")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")


def binomial_cdf(k: int, n: int, p: float) -> float:
    """``P(X <= k)`` for ``X ~ Binomial(n, p)``; 0 for ``k < 0``, 1 for ``k >= n``."""
    _check_p(n, p)
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 0.0
    # sum whichever tail is shorter, so complements stay accurate
    if k < n / 2:
        return min(1.0, math.exp(_log_sum(_log_pmf_terms(np.arange(0, k + 1), n, p))))
    return max(0.0, 1.0 - binomial_sf(k, n, p))


def binomial_sf(k: int, n: int, p: float) -> float:
    """``P(X > k) = 1 - binomial_cdf(k, n, p)``, summed over the upper tail."""
    _check_p(n, p)
    if k < 0:
        return 1.0
    if k >= n:
        return 0.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    if k >= n / 2:
        return min(1.0, math.exp(_log_sum(_log_pmf_terms(np.arange(k + 1, n + 1), n, p))))
    return max(0.0, 1.0 - binomial_cdf(k, n, p))


@dataclass(frozen=True)
class BoundResult:
    kind: str  # "hashcheck" | "crosscheck"
    params: dict
    printed: float
    inclusive: float


def hashcheck_bound(l: int, hash_threshold: int) -> float:
    """Success probability of a uniformly random bithash guess, as printed: ``1 - F(l - T_h; l, 1/2)``."""
    if l < 1 or not 0 <= hash_threshold <= l:
        raise ConfigError(f"need 0 <= T_h <= l, got T_h={hash_threshold}, l={l}")
    return binomial_sf(l - hash_threshold, l, 0.5)


def hashcheck_bound_inclusive(l: int, hash_threshold: int) -> float:
    """``P(distance <= T_h)`` for a uniform guess, i.e. at least ``l - T_h`` matching bits."""
    if l < 1 or not 0 <= hash_threshold <= l:
        raise ConfigError(f"need 0 <= T_h <= l, got T_h={hash_threshold}, l={l}")
    return binomial_sf(l - hash_threshold - 1, l, 0.5)


def crosscheck_bound(n_sets: int, n_classes: int, cross_threshold: int) -> float:
    """Upper bound on CrossCheck subversion, as printed: ``1 - F(T_c; N_s, 1/N_c)``."""
    if n_sets < 1 or n_classes < 2 or not 0 <= cross_threshold <= n_sets:
        raise ConfigError(f"need N_s >= 1, N_c >= 2, 0 <= T_c <= N_s; got {n_sets}, {n_classes}, {cross_threshold}")
    return binomial_sf(cross_threshold, n_sets, 1.0 / n_classes)


def crosscheck_bound_inclusive(n_sets: int, n_classes: int, cross_threshold: int) -> float:
    """Same bound for the ``m >= T_c`` acceptance rule: ``P(votes >= T_c)``."""
    if n_sets < 1 or n_classes < 2 or not 0 <= cross_threshold <= n_sets:
        raise ConfigError(f"need N_s >= 1, N_c >= 2, 0 <= T_c <= N_s; got {n_sets}, {n_classes}, {cross_threshold}")
    return binomial_sf(cross_threshold - 1, n_sets, 1.0 / n_classes)


def bound_table(l: int | None = None, hash_threshold: int | None = None, n_sets: int | None = None,
                n_classes: int | None = None, cross_threshold: int | None = None) -> list[BoundResult]:
    rows = []
    if l is not None:
        ths = range(l + 1) if hash_threshold is None else [hash_threshold]
        for th in ths:
            rows.append(BoundResult("hashcheck", {"l": l, "T_h": th},
                                    hashcheck_bound(l, th), hashcheck_bound_inclusive(l, th)))
    if n_sets is not None and n_classes is not None:
        tcs = range(n_sets + 1) if cross_threshold is None else [cross_threshold]
        for tc in tcs:
            rows.append(BoundResult("crosscheck", {"N_s": n_sets, "N_c": n_classes, "T_c": tc},
                                    crosscheck_bound(n_sets, n_classes, tc),
                                    crosscheck_bound_inclusive(n_sets, n_classes, tc)))
    return rows


# ---------------------------------------------------------------------------
# Monte Carlo attackers


@dataclass(frozen=True)
class SimResult:
    successes: int
    trials: int

    @property
    def estimate(self) -> float:
        return self.successes / self.trials

    @property
    def se(self) -> float:
        p = self.estimate
        return math.sqrt(max(p * (1 - p), 1.0 / self.trials) / self.trials)


def lemma_ordering_sim(n_outputs: int, n_sets: int, n_classes: int, g_nodes: int, cross_threshold: int,
                       knowledge: bool, overlap: bool, trials: int, rng: nx.RngStream,
                       chunk: int = 20_000) -> SimResult:
    """Estimate how often a node-raising attacker flips the CrossCheck vote.

    The honest answer is class 0 in every set and the attacker targets
    class 1.  It raises ``g_nodes`` nodes above every honest value; a set
    holding a raised node votes for the label of that node's position (ties
    between raised nodes in one set are broken uniformly at random), other
    sets keep voting 0.  The attack succeeds when more than ``T_c`` sets
    vote 1.

    ``overlap=False`` draws disjoint sets; ``overlap=True`` draws each set
    independently.  With ``knowledge`` the attacker knows which nodes form
    each set (but not their label positions) and spreads its picks over the
    sets round-robin, one fresh node per set per round; without it the picks
    are uniform over all ``N_o`` nodes.

    The knowledge and overlap orderings concern attackers that reach every
    set (``g_nodes >= N_s``).  With fewer picks, overlap helps the attacker:
    one raised node can flip several sets.
    """
    if n_classes < 2 or n_classes > n_outputs or n_sets < 1:
        raise ConfigError("need 2 <= N_c <= N_o and N_s >= 1")
    if not overlap and n_sets * n_classes > n_outputs:
        raise ConfigError(f"disjoint sets need N_s*N_c <= N_o ({n_sets * n_classes} > {n_outputs})")
    cap = n_sets * n_classes if knowledge else n_outputs
    if not 1 <= g_nodes <= cap:
        raise ConfigError(f"g_nodes must be in [1, {cap}]")
    if trials < 1:
        raise ConfigError("need at least one trial")
    gen = rng.generator()
    per_set = [g_nodes // n_sets + (s < g_nodes % n_sets) for s in range(n_sets)]
    successes = 0
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        rows = np.arange(t)
        if overlap:
            sets = np.argsort(gen.random((t, n_sets, n_outputs)), axis=2)[:, :, :n_classes]
        else:
            perm = np.argsort(gen.random((t, n_outputs)), axis=1)[:, : n_sets * n_classes]
            sets = perm.reshape(t, n_sets, n_classes)
        raised = np.zeros((t, n_outputs), dtype=bool)
        if knowledge:
            positions = np.argsort(gen.random((t, n_sets, n_classes)), axis=2)
            for s, k in enumerate(per_set):
                if k:
                    nodes = np.take_along_axis(sets[:, s, :], positions[:, s, :k], axis=1)
                    raised[rows[:, None], nodes] = True
        else:
            nodes = np.argsort(gen.random((t, n_outputs)), axis=1)[:, :g_nodes]
            raised[rows[:, None], nodes] = True
        hit = raised[rows[:, None, None], sets]
        score = np.where(hit, 1.0 + gen.random(hit.shape), 0.0)
        votes = np.where(hit.any(axis=2), np.argmax(score, axis=2), 0)
        successes += int(np.count_nonzero((votes == 1).sum(axis=1) > cross_threshold))
        done += t
    return SimResult(successes, trials)


def hashcheck_guess_sim(pair, inputs, stats, hash_threshold: int, trials: int, rng: nx.RngStream) -> SimResult:
    """Random-attack success against one hash pair.

    Each trial takes a real input ``x`` and a forged output drawn from the
    fitted per-node Gaussians; success means ``g(y')`` lands within ``T_h``
    bits of ``f(x)``.
    """
    from .hashcheck import bithash_x, bithash_y

    gen = rng.generator()
    idx = gen.integers(0, len(inputs), size=trials)
    forged = stats.mean + stats.std * gen.standard_normal((trials, len(stats.mean)))
    hx = bithash_x(pair.f, np.asarray(inputs)[idx])
    d = np.count_nonzero(hx != bithash_y(pair.G, forged), axis=1)
    return SimResult(int(np.count_nonzero(d <= hash_threshold)), trials)


# ---------------------------------------------------------------------------
# ROC over the threshold grid


@dataclass(frozen=True)
class RocPoint:
    hash_threshold: int
    cross_threshold: int
    tpr: float
    fpr: float


@dataclass
class RocResult:
    points: list  # all evaluated grid points
    frontier: list  # non-dominated points, sorted by FPR
    auc: float


def threshold_grid(bits: int, n_sets: int, steps: int = GRID_STEPS) -> tuple[list[int], list[int]]:
    """``steps`` evenly spaced values over ``[0, l]`` and ``[0, N_s]``, rounded to integers."""
    th = [int(v) for v in np.rint(np.linspace(0, bits, steps))]
    tc = [int(v) for v in np.rint(np.linspace(0, n_sets, steps))]
    return th, tc


@dataclass
class RecordTable:
    """Column view of campaign records; all the ROC code needs."""

    behavior: np.ndarray
    true_label: np.ndarray
    label: np.ndarray
    m: np.ndarray
    distances: np.ndarray

    @classmethod
    def from_records(cls, records) -> "RecordTable":
        if not records:
            raise ConfigError("no campaign records")
        return cls(np.array([r.behavior for r in records]),
                   np.array([r.true_label for r in records], dtype=np.int64),
                   np.array([r.report.label for r in records], dtype=np.int64),
                   np.array([r.report.m for r in records], dtype=np.int64),
                   np.array([r.report.distances for r in records], dtype=np.int64).reshape(len(records), -1))

    def select(self, mask) -> "RecordTable":
        return RecordTable(self.behavior[mask], self.true_label[mask], self.label[mask], self.m[mask],
                           self.distances[mask])

    def only(self, *kinds) -> "RecordTable":
        return self.select(np.isin(self.behavior, kinds))

    def accepted(self, th: int, tc: int) -> np.ndarray:
        return np.all(self.distances <= th, axis=1) & (self.m >= tc)

    @property
    def is_attack(self) -> np.ndarray:
        return self.behavior != "honest"


def _as_table(records) -> RecordTable:
    return records if isinstance(records, RecordTable) else RecordTable.from_records(records)


def pareto_frontier(points) -> list:
    """Drop points with a strictly worse trade-off and duplicates; sort by FPR.

    On the result both FPR and TPR strictly increase.
    """
    keep = []
    for p in points:
        dominated = any(q.fpr <= p.fpr and q.tpr >= p.tpr and (q.fpr < p.fpr or q.tpr > p.tpr) for q in points)
        if not dominated and not any(q.fpr == p.fpr and q.tpr == p.tpr for q in keep):
            keep.append(p)
    return sorted(keep, key=lambda p: p.fpr)


def auc_from_points(points) -> float:
    """Trapezoid area under the frontier of ``points`` plus the (0,0) and (1,1) anchors."""
    front = pareto_frontier(list(points))
    f = np.array([0.0] + [p.fpr for p in front] + [1.0])
    t = np.array([0.0] + [p.tpr for p in front] + [1.0])
    return float(np.sum(np.diff(f) * (t[1:] + t[:-1]) / 2.0))


def roc(records, bits: int, n_sets: int, steps: int = GRID_STEPS, attack: str | None = None) -> RocResult:
    """ROC from stored distances and vote counts, no re-inference.

    Positives are attack records (optionally only ``attack``); a rejection
    counts as a detection.
    """
    table = _as_table(records)
    if attack is not None:
        table = table.only("honest", attack)
    pos = table.is_attack
    if pos.all() or not pos.any():
        raise ConfigError("ROC needs both honest and attack records")
    ths, tcs = threshold_grid(bits, n_sets, steps)
    points = []
    for th in ths:
        for tc in tcs:
            rejected = ~table.accepted(th, tc)
            points.append(RocPoint(th, tc, float(rejected[pos].mean()), float(rejected[~pos].mean())))
    return RocResult(points, pareto_frontier(points), auc_from_points(points))


# ---------------------------------------------------------------------------
# effective accuracy


@dataclass(frozen=True)
class EffectivePoint:
    hash_threshold: int
    cross_threshold: int
    accuracy: float | None  # None when no evaluated sample is accepted
    detected: float | None  # None for honest-only input
    n_evaluated: int
    n_accepted: int


def effective_accuracy(records, bits: int, n_sets: int, steps: int = GRID_STEPS) -> list[EffectivePoint]:
    """Accuracy of the unverified label on accepted attack samples, per grid pair.

    With no attack records the honest records are evaluated instead and the
    detection rate is reported as ``None``.
    """
    table = _as_table(records)
    attacks = table.is_attack
    evaluated = table.select(attacks) if attacks.any() else table
    ths, tcs = threshold_grid(bits, n_sets, steps)
    out = []
    for th in ths:
        for tc in tcs:
            acc = evaluated.accepted(th, tc)
            n_acc = int(acc.sum())
            accuracy = float(np.mean(evaluated.label[acc] == evaluated.true_label[acc])) if n_acc else None
            detected = float(1.0 - acc.mean()) if attacks.any() else None
            out.append(EffectivePoint(th, tc, accuracy, detected, len(evaluated.m), n_acc))
    return out


# ---------------------------------------------------------------------------
# overhead


def overhead_report(bundle, n_classes: int | None = None) -> dict:
    """Multiply-accumulate and byte counts of protected vs unprotected inference."""
    sizes = bundle.public.sizes()
    n_o = bundle.cross.n_outputs
    n_c = n_classes if n_classes is not None else bundle.cross.n_classes
    p = sizes[-2]
    trunk = nx.mlp_macs(sizes[:-1])
    l = bundle.bits
    n_h = len(bundle.bank.pairs)
    g_macs = n_h * l * n_o
    f_macs = sum(nx.mlp_macs([pair.f[0][0].shape[1], pair.f[0][0].shape[0], l]) for pair in bundle.bank.pairs)
    unprotected = trunk + n_c * p
    return {
        "trunk_macs": trunk,
        "unprotected_head_macs": n_c * p,
        "expanded_head_macs": n_o * p,
        "head_mac_ratio": n_o / n_c,
        "unprotected_model_macs": unprotected,
        "protected_model_macs": trunk + n_o * p,
        "hash_g_macs": g_macs,
        "hash_f_macs": f_macs,
        "hash_total_macs": g_macs + f_macs,
        "hash_g_to_model_ratio": g_macs / unprotected,
        "hash_total_to_model_ratio": (g_macs + f_macs) / unprotected,
        "unprotected_output_bytes": n_c * 8,
        "protected_output_bytes": n_o * 8,
        "communication_ratio": n_o / n_c,
        "extra_communication_bytes": (n_o - n_c) * 8,
    }


def to_rows(items) -> list[dict]:
    return [asdict(i) for i in items]
