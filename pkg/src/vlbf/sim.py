"""Monte Carlo simulation of the communication/confirmation coding scheme.

Each trial draws a fresh random codebook and message, runs the phases of
the scheme over the channel, and records whether the accepted estimate is
wrong and when decoding happened. All randomness of trial ``t`` comes from
counter stream ``(master_seed, t)`` with a fixed word layout, so the
vectorised engine (:func:`simulate`) and the step-by-step reference
(:func:`run_trial`) produce identical outcomes.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import beta as beta_dist

from . import rng
from .bound import BoundResult, FeedbackSchedule
from .channel import Bsc, DomainError, Dmc, select_control_symbols

MAX_M = 2**16
_TIE_TOL = 1e-9
_BATCH_BYTES = 2**25


@dataclass(frozen=True)
class SimConfig:
    schedule: FeedbackSchedule
    m: int
    channel: Union[Bsc, Dmc]
    gammas: tuple
    lambdas: Optional[tuple] = None
    trials: int = 1
    master_seed: int = 0
    # LLR thresholds for general-DMC confirmation tests (unused for Bsc)
    llr_thresholds: Optional[tuple] = None

    def __post_init__(self):
        k = self.schedule.k
        if not 1 <= self.m <= MAX_M:
            raise DomainError(f"m must lie in [1, {MAX_M}], got {self.m}")
        if self.trials < 1:
            raise DomainError(f"trials must be positive, got {self.trials}")
        gammas = tuple(int(g) for g in self.gammas)
        lambdas = tuple(float(x) for x in self.lambdas) if self.lambdas is not None else (0.0,) * k
        if len(gammas) != k or len(lambdas) != k:
            raise DomainError(f"need {k} gammas and lambdas, got {len(gammas)} and {len(lambdas)}")
        for i, (g, lam, t) in enumerate(zip(gammas, lambdas, self.schedule.conf_lengths)):
            if not 0 <= g <= t:
                raise DomainError(f"gamma_{i + 1}={g} outside [0, {t}]")
            if not 0.0 <= lam < 1.0:
                raise DomainError(f"lambda_{i + 1}={lam} outside [0, 1)")
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "lambdas", lambdas)
        if isinstance(self.channel, Dmc):
            if self.llr_thresholds is None or len(self.llr_thresholds) != k:
                raise DomainError(f"a general DMC needs {k} llr_thresholds")
            object.__setattr__(self, "llr_thresholds", tuple(float(x) for x in self.llr_thresholds))

    @property
    def is_bsc(self) -> bool:
        return isinstance(self.channel, Bsc)

    @property
    def dmc(self) -> Dmc:
        return self.channel.as_dmc() if self.is_bsc else self.channel

    @property
    def control_symbols(self) -> tuple:
        return Bsc.control_symbols if self.is_bsc else select_control_symbols(self.channel)

    def to_dict(self) -> dict:
        d = {
            "schedule": list(self.schedule.times),
            "m": self.m,
            "gammas": list(self.gammas),
            "lambdas": list(self.lambdas),
            "trials": self.trials,
            "master_seed": self.master_seed,
        }
        if self.is_bsc:
            d["p"] = self.channel.p
        else:
            d["dmc"] = self.channel.to_dict()
            d["llr_thresholds"] = list(self.llr_thresholds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        if "dmc" in d:
            channel = Dmc.from_dict(d["dmc"])
        else:
            channel = Bsc(float(d["p"]))
        return cls(
            FeedbackSchedule(tuple(d["schedule"])),
            int(d["m"]),
            channel,
            tuple(d["gammas"]),
            tuple(d["lambdas"]) if d.get("lambdas") is not None else None,
            int(d["trials"]),
            int(d.get("master_seed", 0)),
            tuple(d["llr_thresholds"]) if d.get("llr_thresholds") is not None else None,
        )


@dataclass(frozen=True)
class _Layout:
    """Word offsets inside one trial's stream."""

    k: int
    n_total: int
    n_comm: int
    m: int
    n_inputs: int

    @property
    def message(self) -> int:
        return 0

    def tie(self, i: int) -> int:  # communication phase i, 1-based
        return i

    def lam(self, i: int) -> int:  # confirmation phase i, 1-based
        return self.k + 1 + i

    @property
    def noise(self) -> int:
        return 2 * self.k + 2

    @property
    def codebook(self) -> int:
        return self.noise + self.n_total

    @property
    def codebook_symbols(self) -> int:
        return self.m * self.n_comm


def _layout(config: SimConfig) -> _Layout:
    s = config.schedule
    return _Layout(s.k, s.n(s.L), s.decoding_lengths[-1], config.m, config.dmc.n_inputs)


def _codebooks(lay: _Layout, keys) -> np.ndarray:
    """Codebooks of shape ``(B, M, n_comm)`` with equiprobable symbols."""
    nsym = lay.codebook_symbols
    if lay.n_inputs == 2:
        cb = rng.bits(keys, lay.codebook, nsym)
    else:
        u = rng.uniforms(keys, lay.codebook, nsym)
        cb = np.minimum((u * lay.n_inputs).astype(np.int64), lay.n_inputs - 1)
    return cb.reshape(len(keys), lay.m, lay.n_comm).astype(np.int8)


def _channel_outputs(config: SimConfig, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Channel outputs for inputs ``x`` driven by uniforms ``u`` of the same shape."""
    if config.is_bsc:
        return (x ^ (u < config.channel.p)).astype(np.int8)
    cdf = np.cumsum(config.channel.transition, axis=1)
    rows = cdf[x]
    y = (u[..., None] >= rows).sum(axis=-1)
    return np.minimum(y, config.channel.n_outputs - 1).astype(np.int8)


def _pick_tied(is_best: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Uniform choice among ``True`` entries of each row, driven by ``u``."""
    count = is_best.sum(axis=1)
    r = np.minimum((u * count).astype(np.int64), count - 1)
    csum = np.cumsum(is_best, axis=1)
    return np.argmax(csum > r[:, None], axis=1)


def _run_batch(config: SimConfig, trial_indices: np.ndarray):
    """Vectorised trials; returns ``(error, tau)`` arrays."""
    lay = _layout(config)
    s = config.schedule
    B = len(trial_indices)
    keys = rng.stream_keys(config.master_seed, trial_indices)
    w = np.minimum((rng.uniforms(keys, lay.message, 1)[:, 0] * config.m).astype(np.int64), config.m - 1)
    noise_u = rng.uniforms(keys, lay.noise, lay.n_total)
    cb = _codebooks(lay, keys)
    x_a, x_r = config.control_symbols
    dmc = config.dmc
    log_w = dmc.log_transition

    sent = cb[np.arange(B), w]  # (B, n_comm)
    score = np.zeros((B, config.m))  # Hamming distance (BSC) or minus log-likelihood
    active = np.ones(B, dtype=bool)
    error = np.zeros(B, dtype=bool)
    tau = np.zeros(B, dtype=np.int64)
    sym_done = 0
    for i in range(1, s.k + 2):
        t_len = s.comm_lengths[i - 1]
        start = s.n(2 * i - 2)
        seg = slice(sym_done, sym_done + t_len)
        y = _channel_outputs(config, sent[:, seg], noise_u[:, start:start + t_len])
        if config.is_bsc:
            score += (cb[:, :, seg] != y[:, None, :]).sum(axis=2)
            is_best = score == score.min(axis=1, keepdims=True)
        else:
            score -= log_w[cb[:, :, seg], y[:, None, :]].sum(axis=2)
            best = np.min(score, axis=1, keepdims=True)
            is_best = score <= best + _TIE_TOL
        sym_done += t_len
        est = _pick_tied(is_best, rng.uniforms(keys, lay.tie(i), 1)[:, 0])
        correct = est == w
        if i == s.k + 1:
            tau[active] = s.n(s.L)
            error[active] = ~correct[active]
            break
        tp = s.conf_lengths[i - 1]
        c_start = s.n(2 * i - 1)
        ctrl = np.where(correct, x_a, x_r).astype(np.int64)[:, None].repeat(tp, axis=1)
        yc = _channel_outputs(config, ctrl, noise_u[:, c_start:c_start + tp])
        u_lam = rng.uniforms(keys, lay.lam(i), 1)[:, 0]
        lam = config.lambdas[i - 1]
        if config.is_bsc:
            stat = yc.sum(axis=1).astype(float)
            thr = float(config.gammas[i - 1])
            above, at = stat > thr, stat == thr
        else:
            llr = (log_w[x_a, yc] - log_w[x_r, yc]).sum(axis=1)
            thr = config.llr_thresholds[i - 1]
            at = np.abs(llr - thr) <= _TIE_TOL
            above = (llr > thr) & ~at
        accept = above | (at & (u_lam >= lam))
        stop = active & accept
        tau[stop] = s.n(2 * i)
        error[stop] = ~correct[stop]
        active &= ~accept
    return error, tau


# --------------------------------------------------------------------------
# step-by-step reference


class FeedbackLink:
    """Noiseless receiver-to-transmitter link that only opens at scheduled times."""

    def __init__(self, schedule: FeedbackSchedule, trace: Optional[list]):
        self.open_times = set(schedule.times)
        self.trace = trace
        self.delivered: list = []

    def send(self, n: int, payload):
        if n not in self.open_times:
            raise AssertionError(f"feedback attempted at time {n}, outside the burst schedule")
        self.delivered.append((n, payload))
        if self.trace is not None:
            self.trace.append(("feedback", n, payload))

    def visible_at(self, n: int):
        """Bursts the transmitter may use when choosing symbol ``n`` (times <= h(n-1))."""
        return [(t, p) for t, p in self.delivered if t <= n - 1]


def run_trial(config: SimConfig, trial_index: int, trace: Optional[list] = None) -> tuple[bool, int]:
    """One transmission, simulated channel use by channel use.

    The transmitter learns the receiver's estimate and decisions only
    through :class:`FeedbackLink`. ``trace`` (if given) receives
    ``("tx", n, last_feedback_time)`` for every channel use and
    ``("feedback", n, payload)`` for every burst.
    """
    lay = _layout(config)
    s = config.schedule
    keys = rng.stream_keys(config.master_seed, np.array([trial_index]))
    w = min(int(rng.uniforms(keys, lay.message, 1)[0, 0] * config.m), config.m - 1)
    noise_u = rng.uniforms(keys, lay.noise, lay.n_total)[0]
    cb = _codebooks(lay, keys)[0]
    x_a, x_r = config.control_symbols
    log_w = config.dmc.log_transition
    link = FeedbackLink(s, trace)

    phase_of = {}
    for i in range(1, s.k + 2):
        for n in range(s.n(2 * i - 2) + 1, s.n(2 * i - 1) + 1):
            phase_of[n] = ("comm", i)
        if i <= s.k:
            for n in range(s.n(2 * i - 1) + 1, s.n(2 * i) + 1):
                phase_of[n] = ("conf", i)

    received: list = []
    comm_received: list = []
    comm_sent_idx = 0
    for n in range(1, s.n(s.L) + 1):
        kind, i = phase_of[n]
        seen = link.visible_at(n)
        if trace is not None:
            trace.append(("tx", n, seen[-1][0] if seen else 0))
        # transmitter: next codeword symbol, or a control symbol chosen from the last estimate fed back
        if kind == "comm":
            x = int(cb[w, comm_sent_idx])
            comm_sent_idx += 1
        else:
            est_fb = [p for _, p in seen if p[0] == "estimate"][-1][1]
            x = x_a if est_fb == w else x_r
        y = int(_channel_outputs(config, np.array([x]), noise_u[n - 1:n])[0])
        received.append(y)
        if kind == "comm":
            comm_received.append(y)
        # receiver actions at burst times
        if kind == "comm" and n == s.n(2 * i - 1):
            yy = np.array(comm_received)
            cols = cb[:, : len(yy)]
            if config.is_bsc:
                score = (cols != yy[None, :]).sum(axis=1).astype(float)
                is_best = score == score.min()
            else:
                score = -log_w[cols, yy[None, :]].sum(axis=1)
                is_best = score <= score.min() + _TIE_TOL
            u = rng.uniforms(keys, lay.tie(i), 1)[:, 0]
            est = int(_pick_tied(is_best[None, :], u)[0])
            if i == s.k + 1:
                return est != w, n
            link.send(n, ("estimate", est))
        elif kind == "conf" and n == s.n(2 * i):
            tp = s.conf_lengths[i - 1]
            yc = np.array(received[-tp:])
            lam = config.lambdas[i - 1]
            if config.is_bsc:
                stat, thr = float(yc.sum()), float(config.gammas[i - 1])
                above, at = stat > thr, stat == thr
            else:
                stat = float((log_w[x_a, yc] - log_w[x_r, yc]).sum())
                thr = config.llr_thresholds[i - 1]
                at = abs(stat - thr) <= _TIE_TOL
                above = stat > thr and not at
            u_lam = float(rng.uniforms(keys, lay.lam(i), 1)[0, 0])
            accept = bool(above or (at and u_lam >= lam))
            link.send(n, ("decision", accept))
            if accept:
                return est != w, n
    raise AssertionError("transmission ended without a decoding decision")


# --------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class SimReport:
    error_count: int
    trial_count: int
    empirical_error: float
    error_ci: tuple
    empirical_mean_tau: float
    tau_std: float
    tau_ci: tuple
    tau_histogram: dict
    master_seed: int

    def to_dict(self) -> dict:
        return {
            "error_count": self.error_count,
            "trial_count": self.trial_count,
            "empirical_error": self.empirical_error,
            "error_ci": list(self.error_ci),
            "empirical_mean_tau": self.empirical_mean_tau,
            "tau_std": self.tau_std,
            "tau_ci": list(self.tau_ci),
            "tau_histogram": {str(k): v for k, v in self.tau_histogram.items()},
            "master_seed": self.master_seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple:
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def _batch_size(config: SimConfig) -> int:
    lay = _layout(config)
    per_trial = 16 * (config.m * lay.n_comm + lay.n_total) + 8 * config.m
    return max(1, _BATCH_BYTES // per_trial)


def _chunk(args):
    config, lo, hi = args
    support = config.schedule.stopping_times
    errors = 0
    tau_sum = 0
    tau_sq = 0
    hist = dict.fromkeys(support, 0)
    step = _batch_size(config)
    for a in range(lo, hi, step):
        err, tau = _run_batch(config, np.arange(a, min(a + step, hi)))
        errors += int(err.sum())
        tau_sum += int(tau.sum())
        tau_sq += int((tau * tau).sum())
        vals, counts = np.unique(tau, return_counts=True)
        for v, c in zip(vals.tolist(), counts.tolist()):
            if v not in hist:
                raise AssertionError(f"decoding time {v} outside the support {support}")
            hist[v] += c
    return errors, tau_sum, tau_sq, hist


def simulate(config: SimConfig, workers: int = 1) -> SimReport:
    """Run ``config.trials`` trials; the report does not depend on ``workers``."""
    n = config.trials
    if workers > 1 and n > 1:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        jobs = [(config, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_chunk, jobs))
    else:
        parts = [_chunk((config, 0, n))]
    errors = sum(p[0] for p in parts)
    tau_sum = sum(p[1] for p in parts)
    tau_sq = sum(p[2] for p in parts)
    hist = dict.fromkeys(config.schedule.stopping_times, 0)
    for p in parts:
        for k, v in p[3].items():
            hist[k] += v
    mean_tau = tau_sum / n
    var = max(tau_sq / n - mean_tau**2, 0.0) * (n / (n - 1) if n > 1 else 0.0)
    sd = math.sqrt(var)
    half = 1.96 * sd / math.sqrt(n)
    return SimReport(
        errors, n, errors / n, clopper_pearson(errors, n),
        mean_tau, sd, (mean_tau - half, mean_tau + half), hist, config.master_seed,
    )


def trial_outcomes(config: SimConfig, trial_indices: Sequence[int]):
    """``(error, tau)`` arrays for specific trials, computed by the batch engine."""
    return _run_batch(config, np.asarray(trial_indices, dtype=np.int64))


def write_trace_csv(config: SimConfig, path) -> None:
    """Per-trial ``trial_index,tau,error`` rows for debugging."""
    step = _batch_size(config)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["trial_index", "tau", "error"])
        for a in range(0, config.trials, step):
            idx = np.arange(a, min(a + step, config.trials))
            err, tau = _run_batch(config, idx)
            for t, ta, e in zip(idx.tolist(), tau.tolist(), err.tolist()):
                wr.writerow([t, ta, int(e)])


@dataclass(frozen=True)
class BoundCheck:
    error_ok: bool
    tau_ok: bool
    error_limit: float
    tau_limit: float
    support_ok: bool

    @property
    def passed(self) -> bool:
        return self.error_ok and self.tau_ok and self.support_ok

    def to_dict(self) -> dict:
        return {
            "verdict": "PASS" if self.passed else "FAIL",
            "error_ok": self.error_ok,
            "error_limit": self.error_limit,
            "tau_ok": self.tau_ok,
            "tau_limit": self.tau_limit,
            "support_ok": self.support_ok,
        }


def check_bound(report: SimReport, bound: BoundResult, sigmas: float = 5.0) -> BoundCheck:
    """Empirical error and mean decoding time against the analytic bounds, with slack."""
    n = report.trial_count
    eps = bound.eps_bound
    err_limit = eps + sigmas * math.sqrt(eps * (1.0 - eps) / n)
    tau_limit = bound.n_bound + sigmas * report.tau_std / math.sqrt(n)
    support = set(bound.schedule.stopping_times)
    support_ok = set(k for k, v in report.tau_histogram.items() if v) <= support and (
        sum(report.tau_histogram.values()) == n
    )
    return BoundCheck(
        report.empirical_error <= err_limit,
        report.empirical_mean_tau <= tau_limit,
        err_limit, tau_limit, support_ok,
    )
