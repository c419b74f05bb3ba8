"""
One driver per experiment kind. A driver runs its estimator over every
scale of the configuration, writes its tables and fits into the output
stage and returns the number of table rows produced per scale.

Streams: the cell (scale i, sub-cell j) of a run draws from
scale_stream(seed, kind, i + 256 * j); fits bootstrap from
scale_stream(seed, kind, 0xFF00 + k).
"""

from __future__ import annotations

import math
from collections import Counter
from functools import partial
from typing import Callable, Optional

import numpy as np
import pandas as pd
from loguru import logger

from src.brownian_coupling.skorokhod import coupled_cutball_agreement, resolved_keep_every, skorokhod_embed
from src.cli_harness.config import ExperimentConfig
from src.cli_harness.outputs import OutputStage
from src.cut_detect.cut_points import CutPointSet, cut_points_fast
from src.estimators.exponents import estimate_nonintersection, estimate_nonintersection_time, estimate_well_separated
from src.estimators.fitting import FitResult, fit_exponent, pooled_stderr
from src.estimators.moments import MomentTable, cut_count_samples, moment_rows
from src.estimators.point_functions import (
    PointFunctionTable,
    boundary_shape_fit,
    estimate_cut_ball,
    estimate_cut_ball_continuous,
    estimate_one_point,
    estimate_transfer_ratio,
    estimate_two_point,
    separation_decay_fit,
)
from src.estimators.potential_checks import beurling_escape_estimate, beurling_slope_fit, gamblers_ruin_check
from src.estimators.trial_pool import map_trials
from src.measures.box_dimension import pooled_box_dimension
from src.measures.boxes import NiceBox, TestFunction
from src.measures.coupled_diagnostics import box_terms, ratio_compensator, reduce_terms, weak_terms
from src.measures.grid import cutball_measure
from src.measures.occupation import cut_set_dimension, eta_exponent, occupation_measure
from src.walk_core.lattice_walk import sample_exit_path
from src.walk_core.path_io import write_path_csv, write_path_dump
from src.walk_core.rng_streams import RngStream, scale_stream

CELL_LIMIT = 256
FIT_BASE = 0xFF00
TRANSFER_BAND = (0.75, 1.33)


# --- 1. Shared helpers ---

def cell_stream(config: ExperimentConfig, scale_index: int, sub: int = 0) -> RngStream:
    """Stream of cell (scale_index, sub)."""
    if not (0 <= scale_index < CELL_LIMIT and 0 <= sub < CELL_LIMIT - 1):
        raise ValueError(f"cell ({scale_index}, {sub}) outside the stream layout")
    return scale_stream(config.seed, config.kind, scale_index + CELL_LIMIT * sub)


def fit_stream(config: ExperimentConfig, k: int = 0) -> RngStream:
    """Bootstrap stream number k of the run."""
    return scale_stream(config.seed, config.kind, FIT_BASE + k)


def scale_label(scale: float) -> str:
    """Compact text form of a scale."""
    return f"{scale:g}"


def file_tag(scale: float) -> str:
    """Scale as it appears in file names, without a dot."""
    return scale_label(scale).replace(".", "p")


def fit_payload(label: str, expected: float, fit_fn: Callable[[], FitResult]) -> dict:
    """FitResult record next to the slope the theory predicts; fit is None when too few points survive."""
    payload = {"label": label, "expected_slope": expected}
    try:
        fit = fit_fn()
    except ValueError as exc:
        logger.warning(f"No fit for {label}: {exc}")
        payload.update(fit=None, reason=str(exc))
        return payload
    payload.update(fit=fit.to_record(), expected_in_ci=fit.contains(expected))
    logger.info(f"Fit {label}: slope {fit.slope:.4f} [{fit.ci_low:.4f}, {fit.ci_high:.4f}], expected {expected:.4f}")
    return payload


def _reps(config: ExperimentConfig) -> int:
    return config.params.get("bootstrap_reps", 1000)


# --- 2. Exponents and point functions ---

def run_xi(config: ExperimentConfig, stage: OutputStage) -> dict:
    """Non-intersection probabilities per scale and the exponent fit."""
    time_indexed = config.params["indexing"] == "time"
    if time_indexed and config.params["well_separated"]:
        logger.warning("Separation quality is radius-indexed; well_separated ignored for time indexing.")
    records, points = [], []
    for i, scale in enumerate(config.scales):
        stream = cell_stream(config, i)
        if time_indexed:
            estimate = estimate_nonintersection_time(int(scale), config.trials, stream, d=config.d, workers=config.workers)
            x = math.log(scale)
        else:
            estimate = estimate_nonintersection(scale, config.trials, stream, d=config.d, workers=config.workers)
            x = scale
        record = {"scale": scale, **estimate.to_record()}
        if config.params["well_separated"] and not time_indexed:
            separated = estimate_well_separated(scale, config.trials, cell_stream(config, i, 1), d=config.d, workers=config.workers)
            record.update({f"ws_{key}": value for key, value in separated.to_record().items()})
        records.append(record)
        if estimate.hits:
            points.append((x, math.log(estimate.p_hat)))

    stage.write_table("nonintersection", pd.DataFrame(records))
    expected = -config.xi / 2 if time_indexed else -config.xi
    label = "log p_hat vs log n" if time_indexed else "log p_hat vs m"
    stage.write_json("fit", fit_payload(label, expected, lambda: fit_exponent(points, _reps(config), rng=fit_stream(config))))
    return {scale_label(s): 1 for s in config.scales}


def run_one_point(config: ExperimentConfig, stage: OutputStage) -> dict:
    """One-point functions per point and scale, fits, and the optional boundary sweep."""
    eta = eta_exponent(config.d, config.xi)
    strict = config.params["strict_bulk"]
    table = PointFunctionTable()
    for j, z in enumerate(config.params["points"]):
        for i, n in enumerate(config.scales):
            table.append(estimate_one_point(z, n, config.trials, cell_stream(config, i, j), workers=config.workers, strict=strict))
    frame = table.to_frame()
    frame["green"] = [row.green_estimate(eta) for row in table.rows]
    stage.write_table("one_point", frame)

    fits = []
    for j, z in enumerate(config.params["points"]):
        points = [(row.n, math.log(row.p_hat)) for row in table.rows if tuple(row.z) == tuple(map(float, z)) and row.hits]
        fits.append({"z": list(z), **fit_payload(f"one-point z={z}", -eta, lambda: fit_exponent(points, _reps(config), rng=fit_stream(config, j)))})
    payload = {"fits": fits}

    sweep = config.params.get("boundary_sweep")
    if sweep is not None:
        n = config.scales[-1]
        direction = np.asarray(sweep["direction"], dtype=float)
        direction /= np.linalg.norm(direction)
        offset = len(config.params["points"])
        rows = PointFunctionTable()
        for k, distance in enumerate(sweep["distances"]):
            z = tuple((1 - distance) * direction)
            stream = cell_stream(config, len(config.scales) - 1, offset + k)
            # sweep points sit next to the sphere by construction
            rows.append(estimate_one_point(z, n, config.trials, stream, workers=config.workers, strict=False))
        stage.write_table("boundary_sweep", rows.to_frame())
        payload["boundary"] = fit_payload(
            "log p_hat vs log dist(z, unit sphere)",
            1 - config.xi,
            lambda: boundary_shape_fit(rows.rows, bootstrap_reps=_reps(config), rng=fit_stream(config, 255)),
        )
    stage.write_json("fit", payload)
    counts = Counter(scale_label(row.n) for row in table.rows)
    return {scale_label(s): counts[scale_label(s)] for s in config.scales}


def run_two_point(config: ExperimentConfig, stage: OutputStage) -> dict:
    """Two-point functions against the separation |z - w| at every scale."""
    eta = eta_exponent(config.d, config.xi)
    strict = config.params["strict_bulk"]
    box = NiceBox(tuple(config.params["box"]["k"]), config.params["box"]["n_box"]) if "box" in config.params else None
    table = PointFunctionTable()
    fits, counts = [], {}
    for i, n in enumerate(config.scales):
        rows = [
            estimate_two_point(
                config.params["z"], w, n, config.trials, cell_stream(config, i, j), box=box, workers=config.workers, strict=strict
            )
            for j, w in enumerate(config.params["w"])
        ]
        for row in rows:
            table.append(row)
        counts[scale_label(n)] = len(rows)
        fit = fit_payload(
            f"two-point decay n={n:g}",
            -eta,
            lambda: separation_decay_fit(rows, bootstrap_reps=_reps(config), rng=fit_stream(config, i)),
        )
        fits.append({"n": n, **fit})
    frame = table.to_frame()
    frame["green"] = [row.green_estimate(eta) for row in table.rows]
    stage.write_table("two_point", frame)
    stage.write_json("fit", {"fits": fits})
    return counts


def run_moments(config: ExperimentConfig, stage: OutputStage) -> dict:
    """First and second moments of the cut-point count per lattice radius."""
    table = MomentTable()
    for i, R in enumerate(config.scales):
        counts = cut_count_samples(R, config.trials, cell_stream(config, i), d=config.d, workers=config.workers)
        table.extend(moment_rows(R, counts))
    frame = table.to_frame()
    frame["second_moment_ratio"] = [table.second_moment_ratio(row.R) for row in table.rows]
    stage.write_table("moments", frame)

    points = [(math.log(row.R), math.log(row.estimate)) for row in table.rows if row.k == 1 and row.estimate > 0]
    expected = 2 - config.xi
    stage.write_json("fit", fit_payload("log E[M] vs log R", expected, lambda: fit_exponent(points, _reps(config), rng=fit_stream(config))))
    return {scale_label(R): 2 for R in config.scales}


# --- 3. Cut balls ---

def _transfer_invariance(rows: list, scales) -> pd.DataFrame:
    """f_hat(z_0) / f_hat(z_j) per scale; None where either side is undefined."""
    records = []
    for n in scales:
        at_scale = [row for row in rows if row.n == n]
        reference = at_scale[0]
        for j, row in enumerate(at_scale[1:], start=1):
            ratio = None
            if reference.f_hat is not None and row.f_hat:
                ratio = reference.f_hat / row.f_hat
            in_band = ratio is not None and TRANSFER_BAND[0] <= ratio <= TRANSFER_BAND[1]
            records.append({"n": n, "point": j, "ratio": ratio, "in_band": in_band})
    return pd.DataFrame(records, columns=["n", "point", "ratio", "in_band"])


def run_cutball(config: ExperimentConfig, stage: OutputStage) -> dict:
    """Discrete, continuous or transfer-ratio cut-ball frequencies with their fits."""
    event = config.params["event"]
    strict = config.params["strict_bulk"]
    eta = eta_exponent(config.d, config.xi)
    rows, fits = [], []
    for j, z in enumerate(config.params["points"]):
        for i, scale in enumerate(config.scales):
            stream = cell_stream(config, i, j)
            if event == "discrete":
                rows.append(estimate_cut_ball(z, scale, config.trials, stream, workers=config.workers, strict=strict))
            elif event == "continuous":
                rows.append(
                    estimate_cut_ball_continuous(
                        z, scale, config.trials, stream, dt=config.params.get("dt"), rho=config.params["rho"], workers=config.workers
                    )
                )
            else:
                rows.append(estimate_transfer_ratio(z, scale, config.trials, stream, workers=config.workers, strict=strict))

        mine = [row for row in rows if tuple(row.z) == tuple(map(float, z))]
        if event == "transfer":
            points = [(row.n, math.log(row.f_hat)) for row in mine if row.f_hat]
            label, expected = f"log f_hat vs n, z={z}", 3 * eta / 4
        elif event == "discrete":
            points = [(row.n / 4, math.log(row.p_hat)) for row in mine if row.hits]
            label, expected = f"log p_hat vs n/4, z={z}", -eta
        else:
            points = [(row.n, math.log(row.p_hat)) for row in mine if row.hits]
            label, expected = f"log p_hat vs s, z={z}", -eta
        fits.append({"z": list(z), **fit_payload(label, expected, lambda: fit_exponent(points, _reps(config), rng=fit_stream(config, j)))})

    table = "transfer_ratio" if event == "transfer" else f"cut_ball_{event}"
    stage.write_table(table, pd.DataFrame([row.to_record() for row in rows]))
    if event == "transfer" and len(config.params["points"]) > 1:
        stage.write_table("transfer_invariance", _transfer_invariance(rows, config.scales))
    stage.write_json("fit", {"event": event, "fits": fits})
    per_scale = len(config.params["points"])
    return {scale_label(s): per_scale for s in config.scales}


# --- 4. Coupling ---

def _keep_every(config: ExperimentConfig, n: float) -> int:
    """Configured thinning, else the coarsest one that resolves the cut balls at n."""
    return config.params.get("keep_every") or resolved_keep_every(n, config.params["dt"])


def _couple_trial(
    n: float, dt: float, keep_every: int, d: int, points: tuple, rho: float, strict: bool, stream: RngStream
) -> dict:
    """One coupled pair: its summary and the cut-ball outcomes at every point."""
    pair = skorokhod_embed(n, dt, stream, d=d, keep_every=keep_every)
    record = pair.summary()
    for j, z in enumerate(points):
        agreement = coupled_cutball_agreement(pair, z, n, rho, strict=strict)
        record[f"discrete_{j}"] = agreement.discrete
        record[f"continuous_{j}"] = agreement.continuous
    return record


def _agreement_summary(frame: pd.DataFrame, n: float, j: int) -> dict:
    """Discrete against continuous cut-ball frequencies for point j at scale n."""
    discrete, continuous = frame[f"discrete_{j}"].to_numpy(bool), frame[f"continuous_{j}"].to_numpy(bool)
    symdiff, union = int((discrete ^ continuous).sum()), int((discrete | continuous).sum())
    if union == 0:
        logger.warning(f"No cut ball in either process for point {j} at n={n:g}; agreement ratio undefined.")
    return {
        "n": n,
        "point": j,
        "p_discrete": float(discrete.mean()),
        "p_continuous": float(continuous.mean()),
        "p_symdiff": symdiff / len(frame),
        "p_union": union / len(frame),
        "symdiff_ratio": symdiff / union if union else None,
    }


def _dump_pair(config: ExperimentConfig, stage: OutputStage, n: float, stream: RngStream, keep_every: int) -> None:
    """Re-runs trial 0 in this process and stores both of its paths."""
    pair = skorokhod_embed(n, config.params["dt"], stream.substream(0), d=config.d, keep_every=keep_every)
    tag = file_tag(n)
    write_path_dump(pair.walk, stage.path(f"walk_n{tag}.cutp"))
    write_path_csv(pair.walk, stage.path(f"walk_n{tag}.csv"))
    np.save(stage.path(f"bm_n{tag}.npy"), pair.bm.samples.astype(np.float32))
    stage.write_json(f"pair_n{tag}", pair.summary())


def run_couple(config: ExperimentConfig, stage: OutputStage) -> dict:
    """Coupled pairs per scale: deviation bound and cut-ball agreement trend."""
    points = tuple(tuple(float(c) for c in z) for z in config.params["points"])
    frames, summaries, deviations = [], [], []
    for i, n in enumerate(config.scales):
        stream = cell_stream(config, i)
        keep_every = _keep_every(config, n)
        trial = partial(
            _couple_trial, n, config.params["dt"], keep_every, config.d, points, config.params["rho"], config.params["strict_bulk"]
        )
        frame = pd.DataFrame(map_trials(trial, stream, config.trials, workers=config.workers, desc=f"coupling n={n:g}"))
        frame.insert(1, "trial", np.arange(len(frame)))
        frames.append(frame)

        bound = math.exp(config.params["deviation_exponent"] * n)
        within = float((frame["max_deviation"] <= bound).mean())
        deviations.append({"n": n, "bound": bound, "fraction_within": within, "keep_every": keep_every})
        logger.info(f"Coupling n={n:g}: {within:.1%} of pairs within e^({config.params['deviation_exponent']}n)")
        summaries.extend(_agreement_summary(frame, n, j) for j in range(len(points)))
        if config.params["dump_first"]:
            _dump_pair(config, stage, n, stream, keep_every)

    summary = pd.DataFrame(summaries)
    stage.write_table("coupled_pairs", pd.concat(frames, ignore_index=True))
    stage.write_table("coupling_summary", summary)
    trends = []
    for j in range(len(points)):
        ratios = [None if pd.isna(r) else float(r) for r in summary.loc[summary["point"] == j, "symdiff_ratio"]]
        defined = all(r is not None for r in ratios)
        decreasing = defined and all(b < a for a, b in zip(ratios, ratios[1:]))
        trends.append({"point": j, "symdiff_ratios": ratios, "strictly_decreasing": decreasing})
    stage.write_json("coupling", {"deviation": deviations, "agreement_trend": trends})
    return {scale_label(n): config.trials for n in config.scales}


def _l2box_trial(
    n: float, dt: float, keep_every: int, d: int, box: NiceBox, bump: Optional[TestFunction], rho: float, xi: float, stream: RngStream
) -> tuple:
    """Box terms, and weak terms when a test function is given, of one coupled pair."""
    pair = skorokhod_embed(n, dt, stream, d=d, keep_every=keep_every)
    terms = box_terms(pair, box, n, rho=rho, xi=xi)
    return terms, (weak_terms(pair, bump, n, rho=rho, xi=xi) if bump is not None else None)


def _dump_measures(config: ExperimentConfig, stage: OutputStage, n: float, stream: RngStream, keep_every: int) -> None:
    """Re-runs trial 0 and stores both of its measures."""
    pair = skorokhod_embed(n, config.params["dt"], stream.substream(0), d=config.d, keep_every=keep_every)
    tag = file_tag(n)
    occupation_measure(pair.walk_until_exit(n), n, xi=config.xi).write_json(stage.path(f"occupation_n{tag}.json"))
    bm = pair.bm_until_exit(n).rescaled(-n)
    grid = cutball_measure(bm, n / 4, rho=config.params["rho"], eta=eta_exponent(config.d, config.xi))
    stage.path(f"cutball_n{tag}.npy")
    stage.path(f"cutball_n{tag}.json")
    grid.write(stage.staging / f"cutball_n{tag}")


def _trend_violations(gaps: list) -> list:
    """Pairs of scales where the later mean exceeds the earlier one by more than two pooled standard errors."""
    violations = []
    for k, earlier in enumerate(gaps):
        for later in gaps[k + 1:]:
            if later.mean > earlier.mean + 2 * pooled_stderr(earlier.stderr, later.stderr):
                violations.append({"earlier_n": earlier.n, "later_n": later.n, "earlier": earlier.mean, "later": later.mean})
    return violations


def run_l2box(config: ExperimentConfig, stage: OutputStage) -> dict:
    """Coupled box L2 gap, and the weak gap when a bump is configured."""
    spec = config.params["box"]
    box = NiceBox(tuple(spec["k"]), spec["n_box"])
    bump = None
    if "bump" in config.params:
        bump = TestFunction.gaussian_bump(config.params["bump"]["center"], config.params["bump"]["width"])
    for n in config.scales:
        if not box.in_bulk(n):
            logger.warning(f"Box {box.to_record()} is closer than e^(-n/6) to the origin or the unit sphere at n={n:g}.")

    results = {}
    for i, n in enumerate(config.scales):
        stream = cell_stream(config, i)
        keep_every = _keep_every(config, n)
        trial = partial(_l2box_trial, n, config.params["dt"], keep_every, config.d, box, bump, config.params["rho"], config.xi)
        results[n] = map_trials(trial, stream, config.trials, workers=config.workers, desc=f"box L2 n={n:g}")
        if config.params["dump_first"]:
            _dump_measures(config, stage, n, stream, keep_every)

    largest = config.scales[-1]
    compensator = ratio_compensator([terms for terms, _ in results[largest]])
    if compensator is None:
        logger.warning(f"Surrogate vanishes at the largest scale n={largest:g}; calibrating per scale instead.")
    gaps = [reduce_terms([terms for terms, _ in results[n]], n, n / 4, 2, compensator) for n in config.scales]
    stage.write_table("box_l2", pd.DataFrame([gap.to_record() for gap in gaps]))
    payload = {"box": box.to_record(), "calibrated_at": largest, "violations": _trend_violations(gaps)}

    if bump is not None:
        weak = [[w for _, w in results[n]] for n in config.scales]
        weak_compensator = ratio_compensator(weak[-1])
        weak_gaps = [reduce_terms(terms, n, n / 4, 1, weak_compensator) for terms, n in zip(weak, config.scales)]
        stage.write_table("weak_gap", pd.DataFrame([gap.to_record() for gap in weak_gaps]))
        payload["weak_violations"] = _trend_violations(weak_gaps)
        payload["test_function"] = bump.name
    if payload["violations"]:
        logger.warning(f"Box L2 diagnostic grows across scales: {payload['violations']}")
    stage.write_json("l2box", payload)
    return {scale_label(n): 1 for n in config.scales}


# --- 5. Dimension and potential checks ---

def _cut_set_trial(d: int, n: float, stream: RngStream) -> CutPointSet:
    """Cut points of one walk stopped at radius e^n."""
    return cut_points_fast(sample_exit_path(d, n, stream))


def run_dimension(config: ExperimentConfig, stage: OutputStage) -> dict:
    """Pooled box-counting dimension of the cut sets per scale."""
    expected = cut_set_dimension(config.d, config.xi)
    records = []
    for i, n in enumerate(config.scales):
        cutsets = map_trials(partial(_cut_set_trial, config.d, n), cell_stream(config, i), config.trials, workers=config.workers, desc=f"cut sets n={n:g}")
        nonempty = sum(1 for cutset in cutsets if len(cutset))
        payload = fit_payload(
            f"box dimension n={n:g}",
            expected,
            lambda: pooled_box_dimension(cutsets, n, config.params["box_sizes"], bootstrap_reps=_reps(config), rng=fit_stream(config, i)),
        )
        fit = payload["fit"] or {}
        ci = fit.get("ci", [None, None])
        records.append(
            {
                "n": n,
                "paths": len(cutsets),
                "nonempty": nonempty,
                "mean_cut_points": float(np.mean([len(cutset) for cutset in cutsets])),
                "slope": fit.get("slope"),
                "ci_low": ci[0],
                "ci_high": ci[1],
                "r2": fit.get("r2"),
                "expected": expected,
            }
        )
    stage.write_table("box_dimension", pd.DataFrame(records))
    return {scale_label(n): 1 for n in config.scales}


def run_ruin(config: ExperimentConfig, stage: OutputStage) -> dict:
    """Gambler's-ruin checks, one row per (k, l) pair."""
    records = []
    for i, (k, l) in enumerate(zip(config.scales, config.params["l"])):
        check = gamblers_ruin_check(
            k,
            l,
            config.d,
            config.trials,
            cell_stream(config, i),
            method=config.params["method"],
            eps=config.params.get("eps"),
            dt=config.params["dt"],
            workers=config.workers,
        )
        records.append({**check.to_record(), "z_score": check.z_score})
    stage.write_table("ruin", pd.DataFrame(records))
    return dict(Counter(scale_label(k) for k in config.scales))


def run_beurling(config: ExperimentConfig, stage: OutputStage) -> dict:
    """Beurling escape frequencies and their slope per outer radius."""
    records, fits = [], []
    for i, r in enumerate(config.scales):
        rows = [
            beurling_escape_estimate(config.d, x, r, config.trials, cell_stream(config, i, j), workers=config.workers)
            for j, x in enumerate(config.params["x_dist"])
        ]
        records.extend(row.to_record() for row in rows)
        fit = fit_payload(f"log p_hat vs log x_dist, r={r:g}", 0.5, lambda: beurling_slope_fit(rows, bootstrap_reps=_reps(config), rng=fit_stream(config, i)))
        fits.append({"r": r, **fit})
    stage.write_table("beurling", pd.DataFrame(records))
    stage.write_json("fit", {"fits": fits})
    return {scale_label(r): len(config.params["x_dist"]) for r in config.scales}


DRIVERS = {
    "xi": run_xi,
    "one_point": run_one_point,
    "two_point": run_two_point,
    "moments": run_moments,
    "cutball": run_cutball,
    "couple": run_couple,
    "l2box": run_l2box,
    "dimension": run_dimension,
    "ruin": run_ruin,
    "beurling": run_beurling,
}
