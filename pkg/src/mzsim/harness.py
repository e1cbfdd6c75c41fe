"""Ensemble statistics, analytic expectations, and replay checks.

Runs are grouped into the four (source, detector) ensembles of the standard
layout, numbered the way the write-ups always list them:

    1: (S1, D1)    2: (S2, D2)    3: (S1, D2)    4: (S2, D1)

For layouts with other boundary names the ensembles are the source/detector
pairs in that same order (diagonal pairs first).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .elements import SplitterMode
from .engines import (
    RunRecord,
    collect_amplitudes,
    emission_packet,
    propagate,
    run_at,
    run_ct,
    run_st,
)
from .packets import ConfigurationError
from .rng import ALGORITHM, DERIVATION, run_stream
from .scenarios import Scenario

# 99th percentile of chi-square with 3 degrees of freedom.
CHI2_CRITICAL = 11.34
CHI2_DOF = 3


def ensemble_pairs(scenario: Scenario) -> tuple[tuple[str, str], ...]:
    """The four (source, detector) pairs in canonical ensemble order."""
    sources = sorted(e.id for e in scenario.sources)
    detectors = sorted(e.id for e in scenario.detectors)
    if len(sources) != 2 or len(detectors) != 2:
        raise ConfigurationError("ensemble bookkeeping expects 2 sources and 2 detectors")
    (s1, s2), (d1, d2) = sources, detectors
    return ((s1, d1), (s2, d2), (s1, d2), (s2, d1))


def ensemble_index(scenario: Scenario, source_id: str, detector_id: str) -> int:
    """1-based ensemble number of a run outcome."""
    pairs = ensemble_pairs(scenario)
    return pairs.index((source_id, detector_id)) + 1


def chi_square(counts, expected) -> float:
    """Pearson statistic; a zero-expectation cell is 0 if empty, inf if hit."""
    stat = 0.0
    for obs, exp in zip(counts, expected):
        if exp == 0.0:
            if obs:
                return math.inf
            continue
        stat += (obs - exp) ** 2 / exp
    return stat


@dataclass(frozen=True)
class EnsembleStats:
    scenario_name: str
    theory: str
    mode: SplitterMode
    seed: int
    n: int
    pairs: tuple[tuple[str, str], ...]
    counts: tuple[int, int, int, int]
    expected_probabilities: tuple[float, float, float, float]
    outcome_sequence: str  # one digit ('1'-'4') per run, in run order
    rng_algorithm: str = ALGORITHM
    rng_derivation: str = DERIVATION

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(c / self.n for c in self.counts)

    @property
    def chi_square(self) -> float:
        expected = [p * self.n for p in self.expected_probabilities]
        return chi_square(self.counts, expected)

    @property
    def consistent(self) -> bool:
        return self.chi_square < CHI2_CRITICAL

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "theory": self.theory,
            "mode": self.mode.value,
            "seed": self.seed,
            "n": self.n,
            "ensembles": [
                {
                    "index": i + 1,
                    "source": s,
                    "detector": d,
                    "count": c,
                    "probability": c / self.n,
                    "expected": p,
                }
                for i, ((s, d), c, p) in enumerate(
                    zip(self.pairs, self.counts, self.expected_probabilities)
                )
            ],
            "chi_square": self.chi_square,
            "chi_square_critical": CHI2_CRITICAL,
            "consistent": self.consistent,
            "outcome_sequence": self.outcome_sequence,
            "rng": {"algorithm": self.rng_algorithm, "derivation": self.rng_derivation},
        }


def amplitude_map(scenario: Scenario, source_id: str) -> dict[str, complex]:
    """Coherent detector amplitudes for a coherent (always-split) run."""
    result = propagate(scenario, emission_packet(scenario, source_id))
    return collect_amplitudes(result)


def _collapse_outcomes(scenario: Scenario, source_id: str) -> dict[str, float]:
    """Exact detector distribution when every splitter collapses (each
    choice has probability 1/2), found by walking the binary choice tree."""
    from .elements import ElementKind, collapse_child, is_present, mirror_child
    from .engines import _next_hit

    out: dict[str, float] = {}
    stack = [(emission_packet(scenario, source_id), 0.0, set(), 1.0)]
    while stack:
        packet, after, skipped, prob = stack.pop()
        hit = _next_hit(scenario, packet, after, skipped)
        if hit is None:
            continue  # flies off; no detection
        t, e = hit
        if not is_present(e, t):
            stack.append((packet, after, skipped | {e.id}, prob))
        elif e.kind is ElementKind.DETECTOR:
            out[e.id] = out.get(e.id, 0.0) + prob
        elif e.kind is ElementKind.MIRROR:
            stack.append((mirror_child(packet, e, t), t, set(skipped), prob))
        else:
            for branch in ("reflect", "transmit"):
                stack.append(
                    (collapse_child(packet, e, t, branch), t, set(skipped), prob / 2.0)
                )
    return out


def analytic_distribution(
    scenario: Scenario, mode: SplitterMode, theory: str = "ct"
) -> tuple[float, float, float, float]:
    """Exact ensemble probabilities for uniformly chosen boundary.

    ct: P(source) = 1/2, detector from the mode's dynamics.
    at: P(detector) = 1/2, source from the reversed dynamics.
    st: the pair is drawn as in ct (two-boundary weights match the forward
        dynamics of the same mode by construction).
    """
    from .scenarios import time_reverse

    pairs = ensemble_pairs(scenario)
    if theory == "at":
        rev = time_reverse(scenario)
        probs = {}
        for emitter in sorted(e.id for e in rev.sources):
            if mode is SplitterMode.ALWAYS_SPLIT:
                amps = amplitude_map(rev, emitter)
                weights = {d: abs(a) ** 2 for d, a in amps.items()}
            else:
                weights = _collapse_outcomes(rev, emitter)
            total = sum(weights.values())
            for src_id, w in weights.items():
                probs[(src_id, emitter)] = 0.5 * w / total
        return tuple(probs.get(pair, 0.0) for pair in pairs)

    if theory == "st":
        return st_distribution(scenario, mode)

    probs = {}
    for src in sorted(e.id for e in scenario.sources):
        if mode is SplitterMode.ALWAYS_SPLIT:
            amps = amplitude_map(scenario, src)
            weights = {d: abs(a) ** 2 for d, a in amps.items()}
        else:
            weights = _collapse_outcomes(scenario, src)
        total = sum(weights.values())
        for det, w in weights.items():
            probs[(src, det)] = 0.5 * w / total
    return tuple(probs.get(pair, 0.0) for pair in pairs)


def st_distribution(
    scenario: Scenario, mode: SplitterMode
) -> tuple[float, float, float, float]:
    """Ensemble probabilities from two-boundary weights.

    For each source the detector weights are normalized; an intermittent
    splitter under collapse gives the forced-path weights, otherwise the
    coherent ones.
    """
    pairs = ensemble_pairs(scenario)
    sources = sorted({s for s, _ in pairs})
    table: dict[tuple[str, str], float] = {}
    for src in sources:
        dets = sorted({d for s, d in pairs if s == src})
        weights = {d: run_st(scenario, src, d, mode).weight for d in dets}
        total = sum(weights.values())
        if total <= 0.0:
            raise ConfigurationError(f"no two-boundary weight out of {src}")
        for d in dets:
            table[(src, d)] = 0.5 * weights[d] / total
    return tuple(table.get(pair, 0.0) for pair in pairs)


def run_ensemble(
    scenario: Scenario,
    theory: str = "ct",
    mode: SplitterMode = SplitterMode.ALWAYS_SPLIT,
    n: int = 1000,
    seed: int = 0,
) -> EnsembleStats:
    """n independent runs, each on its own derived rng stream.

    st runs have no internal randomness, so their stream is spent on the
    boundary pair instead: one uniform draw for the source, one for the
    detector (weighted by the two-boundary weights).
    """
    if n <= 0:
        raise ConfigurationError("n must be positive")
    pairs = ensemble_pairs(scenario)
    counts = [0, 0, 0, 0]
    digits = []

    st_table = None
    if theory == "st":
        sources = sorted({s for s, _ in pairs})
        st_table = {
            src: _normalized_weights(scenario, src, mode, pairs) for src in sources
        }

    for i in range(n):
        rng = run_stream(seed, i)
        if theory == "ct":
            rec = run_ct(scenario, mode, rng)
        elif theory == "at":
            rec = run_at(scenario, mode, rng)
        elif theory == "st":
            sources = sorted(st_table)
            u = float(rng.random())
            src = sources[min(int(u * len(sources)), len(sources) - 1)]
            dets, weights = st_table[src]
            v = float(rng.random())
            acc = 0.0
            det = dets[-1]
            for d, w in zip(dets, weights):
                acc += w
                if v < acc:
                    det = d
                    break
            rec = run_st(scenario, src, det, mode)
        else:
            raise ConfigurationError(f"unknown theory {theory!r}")
        idx = ensemble_index(scenario, rec.source_id, rec.detector_id)
        counts[idx - 1] += 1
        digits.append(str(idx))

    expected = analytic_distribution(scenario, mode, theory)
    return EnsembleStats(
        scenario_name=scenario.name,
        theory=theory,
        mode=mode,
        seed=seed,
        n=n,
        pairs=pairs,
        counts=tuple(counts),
        expected_probabilities=expected,
        outcome_sequence="".join(digits),
    )


def _normalized_weights(scenario, src, mode, pairs):
    dets = sorted({d for s, d in pairs if s == src})
    raw = [run_st(scenario, src, d, mode).weight for d in dets]
    total = sum(raw)
    if total <= 0.0:
        raise ConfigurationError(f"no two-boundary weight out of {src}")
    return dets, [w / total for w in raw]


@dataclass(frozen=True)
class ReplayReport:
    identical: bool
    first_difference: int | None  # 0-based run index
    expected_outcome: str | None
    replayed_outcome: str | None


def replay(stats: EnsembleStats, scenario: Scenario) -> ReplayReport:
    """Re-run the ensemble from its seed and compare run by run."""
    again = run_ensemble(
        scenario, theory=stats.theory, mode=stats.mode, n=stats.n, seed=stats.seed
    )
    if again.outcome_sequence == stats.outcome_sequence:
        return ReplayReport(True, None, None, None)
    for i, (a, b) in enumerate(zip(stats.outcome_sequence, again.outcome_sequence)):
        if a != b:
            return ReplayReport(False, i, a, b)
    n = min(len(stats.outcome_sequence), len(again.outcome_sequence))
    return ReplayReport(False, n, None, None)


@dataclass(frozen=True)
class ModeComparison:
    scenario_name: str
    theory: str
    n: int
    seed: int
    pairs: tuple[tuple[str, str], ...]
    always_split: tuple[float, ...]
    collapse: tuple[float, ...]
    analytic_always_split: tuple[float, ...]
    analytic_collapse: tuple[float, ...]
    max_delta: float
    max_analytic_delta: float
    threshold: float
    verdict: str

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "theory": self.theory,
            "n": self.n,
            "seed": self.seed,
            "ensembles": [
                {
                    "source": s,
                    "detector": d,
                    "always_split": pa,
                    "collapse": pc,
                    "analytic_always_split": aa,
                    "analytic_collapse": ac,
                }
                for (s, d), pa, pc, aa, ac in zip(
                    self.pairs,
                    self.always_split,
                    self.collapse,
                    self.analytic_always_split,
                    self.analytic_collapse,
                )
            ],
            "max_delta": self.max_delta,
            "max_analytic_delta": self.max_analytic_delta,
            "threshold": self.threshold,
            "verdict": self.verdict,
        }


def compare_modes(
    scenario: Scenario, theory: str = "ct", n: int = 4000, seed: int = 0
) -> ModeComparison:
    """Run both splitter models on the same seed and compare ensembles.

    The verdict is "modes agree" when every empirical difference sits within
    3 binomial standard deviations (computed at the pooled analytic rate),
    otherwise "modes diverge".  The baseline layout diverges: splitting at
    every splitter sends everything from S1 to D1, collapsing at splitters
    spreads it 50/50.
    """
    sa = run_ensemble(scenario, theory, SplitterMode.ALWAYS_SPLIT, n, seed)
    sc = run_ensemble(scenario, theory, SplitterMode.COLLAPSE, n, seed)
    deltas = [abs(a - b) for a, b in zip(sa.probabilities, sc.probabilities)]
    adeltas = [
        abs(a - b)
        for a, b in zip(sa.expected_probabilities, sc.expected_probabilities)
    ]
    # 3-sigma band for the difference of two frequencies at the pooled rate,
    # with a floor so exact-zero cells do not trip on a single stray count.
    threshold = 0.0
    agree = True
    for (pa, pc, da) in zip(
        sa.expected_probabilities, sc.expected_probabilities, deltas
    ):
        p = 0.5 * (pa + pc)
        sigma = math.sqrt(max(p * (1.0 - p), 1e-12) * 2.0 / n)
        band = 3.0 * sigma
        threshold = max(threshold, band)
        if da > band:
            agree = False
    return ModeComparison(
        scenario_name=scenario.name,
        theory=theory,
        n=n,
        seed=seed,
        pairs=sa.pairs,
        always_split=sa.probabilities,
        collapse=sc.probabilities,
        analytic_always_split=sa.expected_probabilities,
        analytic_collapse=sc.expected_probabilities,
        max_delta=max(deltas),
        max_analytic_delta=max(adeltas),
        threshold=threshold,
        verdict="modes agree" if agree else "modes diverge",
    )
