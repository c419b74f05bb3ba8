"""
Coupled convergence diagnostics: on each Skorokhod pair the occupation
measure of the embedded walk at scale n is compared with the cut-ball
measure of the Brownian path at scale n/4, blown down to the unit ball.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.brownian_coupling.continuous_cut_balls import DEFAULT_RHO
from src.brownian_coupling.skorokhod import CoupledPair
from src.measures.boxes import NiceBox, TestFunction
from src.measures.grid import cutball_measure
from src.measures.occupation import eta_exponent, occupation_measure


@dataclass(frozen=True)
class CoupledTerms:
    """nu_n and the uncompensated surrogate, evaluated on one pair."""

    nu: float
    nu_tilde_raw: float


@dataclass(frozen=True)
class CoupledGap:
    n: float
    s: float
    mean: float
    stderr: Optional[float]
    compensator: float
    n_pairs: int
    nu_mean: float
    nu_tilde_mean: float
    flag: Optional[str] = None

    def to_record(self) -> dict:
        return asdict(self)


def _check_pair_scale(pair: CoupledPair, n: float) -> None:
    """Reject a pair built at another scale."""
    if not math.isclose(pair.n, n):
        raise ValueError(f"pair built at scale {pair.n} mixed into a scale-{n} diagnostic")


def box_terms(
    pair: CoupledPair, box: NiceBox, n: float, s: Optional[float] = None, rho: float = DEFAULT_RHO, *, xi: Optional[float] = None
) -> CoupledTerms:
    """Walk measure and cut-ball surrogate of ``box`` for one coupled pair."""
    _check_pair_scale(pair, n)
    s = n / 4 if s is None else s
    nu = occupation_measure(pair.walk_until_exit(n), n, xi=xi).mass_in(box)
    bm = pair.bm_until_exit(n).rescaled(-n)
    nu_tilde = cutball_measure(bm, s, rho=rho, eta=eta_exponent(pair.d, xi), region=box).mass_in(box)
    return CoupledTerms(nu, nu_tilde)


def weak_terms(
    pair: CoupledPair, g: TestFunction, n: float, s: Optional[float] = None, rho: float = DEFAULT_RHO, *, xi: Optional[float] = None
) -> CoupledTerms:
    """Walk measure and cut-ball surrogate integrated against ``g`` for one coupled pair."""
    _check_pair_scale(pair, n)
    s = n / 4 if s is None else s
    nu = occupation_measure(pair.walk_until_exit(n), n, xi=xi).integrate(g)
    bm = pair.bm_until_exit(n).rescaled(-n)
    return CoupledTerms(nu, cutball_measure(bm, s, rho=rho, eta=eta_exponent(pair.d, xi)).integrate(g))


def ratio_compensator(terms: Sequence[CoupledTerms]) -> Optional[float]:
    """sum nu / sum nu_tilde_raw, or None when the surrogate vanishes on every pair."""
    denominator = math.fsum(t.nu_tilde_raw for t in terms)
    if denominator == 0:
        return None
    return math.fsum(t.nu for t in terms) / denominator


def reduce_terms(terms: Sequence[CoupledTerms], n: float, s: float, power: int, compensator: Optional[float] = None) -> CoupledGap:
    """
    Mean of |nu - c * nu_tilde_raw|^power over pairs.

    ``c`` defaults to the ratio calibration. Values are sorted before any
    floating-point reduction so the result ignores the order of pairs.
    """
    if not terms:
        raise ValueError("no coupled pairs to reduce")
    flag = None
    if compensator is None:
        compensator = ratio_compensator(terms)
        if compensator is None:
            logger.warning(f"Cut-ball surrogate is zero on all {len(terms)} pairs at n={n:g}; compensator set to 1.")
            compensator, flag = 1.0, "zero_surrogate"
    gaps = np.sort([abs(t.nu - compensator * t.nu_tilde_raw) ** power for t in terms])
    count = gaps.shape[0]
    stderr = float(gaps.std(ddof=1)) / math.sqrt(count) if count > 1 else None
    return CoupledGap(
        n=n,
        s=s,
        mean=math.fsum(gaps.tolist()) / count,
        stderr=stderr,
        compensator=compensator,
        n_pairs=count,
        nu_mean=math.fsum(t.nu for t in terms) / count,
        nu_tilde_mean=compensator * math.fsum(t.nu_tilde_raw for t in terms) / count,
        flag=flag,
    )


def coupled_box_l2(
    pairs: Sequence[CoupledPair],
    box: NiceBox,
    n: float,
    s: Optional[float] = None,
    compensator: Optional[float] = None,
    *,
    rho: float = DEFAULT_RHO,
) -> CoupledGap:
    """
    Monte Carlo mean of (nu_n(V) - nu~_s(V))^2 over coupled pairs, s = n/4 by default.

    Args:
        pairs: coupled pairs, all built at scale n.
        box: nice box V, ideally at distance e^{-n/6} or more from 0 and the unit sphere.
        n: walk scale.
        s: cut-ball scale.
        compensator: factor on the surrogate; ratio-calibrated when None.
        rho: disjointness margin of the cut-ball test.

    Returns:
        CoupledGap with the mean squared difference.
    """
    if not box.in_bulk(n):
        logger.warning(f"Box {box.to_record()} is closer than e^(-n/6) to the origin or the unit sphere at n={n:g}.")
    s = n / 4 if s is None else s
    result = reduce_terms([box_terms(pair, box, n, s, rho) for pair in pairs], n, s, 2, compensator)
    logger.info(f"Coupled box L2 n={n:g}: {result.mean:.4g} +/- {result.stderr or 0:.2g} over {result.n_pairs} pairs")
    return result


def coupled_weak_gap(
    pairs: Sequence[CoupledPair],
    n: float,
    g: TestFunction,
    s: Optional[float] = None,
    compensator: Optional[float] = None,
    *,
    rho: float = DEFAULT_RHO,
) -> CoupledGap:
    """Monte Carlo mean of |nu_n(g) - nu~_s(g)| over coupled pairs."""
    s = n / 4 if s is None else s
    result = reduce_terms([weak_terms(pair, g, n, s, rho) for pair in pairs], n, s, 1, compensator)
    logger.info(f"Coupled weak gap n={n:g} g={g.name}: {result.mean:.4g} +/- {result.stderr or 0:.2g}")
    return result
