"""Acceptance suite A1-A12 at quick, standard or deep budgets."""
from __future__ import annotations

import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate, stats

from . import limits, moments
from .experiment import (ExperimentConfig, chi2_pairs,
                         run_experiment)
from .geiger import reference_batch, simulate_batch
from .offspring import (aggregate_offspring_sum, build_law, extinction_probs,
                        sample_spine_step, spine_step_pmf, tilted_law)
from .stats import (SplitProfile, chi2_critical, chi2_independence,
                    empirical_law, split_asymptote, tv_distance)

LAWS = ("binary", "geometric")


@dataclass(frozen=True)
class Budget:
    name: str
    n: int
    reps: int
    trend_ns: tuple
    trend_reps: int
    oracle_reps: int
    moment_ns: tuple = (10**3, 10**4, 10**5)
    sampler_draws: int = 10**6
    t: float = 0.5
    seed: int = 20240601


BUDGETS = {
    "quick": Budget("quick", 400, 6000, (100, 250, 1000), 2000, 10**5,
                    sampler_draws=10**5),
    "standard": Budget("standard", 2000, 10**5, (250, 1000, 4000), 2 * 10**4, 10**6),
    "deep": Budget("deep", 2000, 10**5, (250, 1000, 4000, 8000), 2 * 10**4, 10**6),
}


@dataclass
class CriterionResult:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    runtime_s: float = 0.0
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {status} ({self.runtime_s:.1f}s) {self.note}".rstrip()


class Suite:
    """Runs criteria lazily and shares simulation runs between them."""

    def __init__(self, budget: str | Budget = "standard", seed: int | None = None,
                 jobs: int | None = None):
        # results do not depend on the worker count
        self.jobs = jobs or os.cpu_count() or 1
        self.budget = BUDGETS[budget] if isinstance(budget, str) else budget
        if seed is not None:
            self.budget = replace(self.budget, seed=seed)
        self._runs: dict = {}

    def main_run(self, law: str):
        if law not in self._runs:
            b = self.budget
            cfg = ExperimentConfig(law=law, n=b.n, t=b.t, replicates=b.reps, jobs=self.jobs,
                                   master_seed=b.seed)
            self._runs[law] = run_experiment(cfg)
        return self._runs[law]

    def _timed(self, name, fn) -> CriterionResult:
        start = time.perf_counter()
        passed, measured, note = fn()
        return CriterionResult(name, bool(passed), _plain(measured),
                               time.perf_counter() - start, note)

    def _tests(self, keys):
        measured, ok = {}, True
        for law in LAWS:
            tests = self.main_run(law).summary["tests"]
            if not isinstance(tests, dict):
                return False, {law: tests}, "insufficient replicates"
            measured[law] = {k: tests[k] for k in keys}
            ok &= all(tests[k]["pass"] for k in keys)
        return ok, measured, ""

    def a1(self):
        return self._timed("A1", lambda: self._tests(["ks_total", "mean_total"]))

    def a2(self):
        return self._timed("A2", lambda: self._tests(["ks_left", "mean_left"]))

    def a3(self):
        return self._timed("A3", lambda: self._tests(["ks_right", "mean_right"]))

    def _split_criterion(self, name, side):
        def run():
            keys = [f"ks_{side}_split_{k}" for k in (1, 2)]
            ok, measured, note = self._tests(keys)
            if note:
                return ok, measured, note
            notes = set()
            for law in LAWS:
                table = self.main_run(law)
                cache = extinction_probs(build_law(law), table.config.n)
                for k in (1, 2):
                    entry = measured[law][keys[k - 1]]
                    diag = split_bias_diagnostics(table, cache, side, k)
                    entry.update(diag)
                    if entry["pass"]:
                        continue
                    if diag["exact_bias"] > entry["tolerance"]:
                        notes.add("exact finite-n law exceeds tolerance")
                    elif diag["exact_bias"] + diag["null_band"] > entry["tolerance"]:
                        notes.add("exact finite-n bias within noise of tolerance")
            return ok, measured, "; ".join(sorted(notes))
        return self._timed(name, run)

    def a4(self):
        return self._split_criterion("A4", "right")

    def a5(self):
        return self._split_criterion("A5", "left")

    def a6(self):
        def run():
            ok, measured, _ = self._tests(["joint_cdf_sup"])
            for law in LAWS:
                table = self.main_run(law)
                # three disjoint thirds of the replicate range act as independent runs
                pairs = chi2_pairs(table)
                thirds = np.array_split(pairs, 3)
                runs = []
                for part in thirds:
                    stat, dof = chi2_independence(part, 4)
                    runs.append({"statistic": stat, "dof": dof,
                                 "critical": chi2_critical(dof) if dof else 0.0})
                passes = sum(r["statistic"] <= r["critical"] for r in runs)
                measured[law]["chi2_runs"] = runs
                measured[law]["chi2_passes"] = passes
                ok &= passes >= 2
            return ok, measured, ""
        return self._timed("A6", run)

    def a7(self):
        def run():
            b = self.budget
            measured, ok = {}, True
            for law in LAWS:
                per_n = {}
                for idx, n in enumerate(b.trend_ns):
                    cfg = ExperimentConfig(law=law, n=n, t=b.t, replicates=b.trend_reps,
                                           jobs=self.jobs,
                                           master_seed=b.seed + 1 + idx)
                    table = run_experiment(cfg)
                    per_n[n] = {side: _single_survivor_fraction(table, side)
                                for side in ("l", "r")}
                measured[law] = per_n
                for side in ("l", "r"):
                    seq = [per_n[n][side] for n in b.trend_ns]
                    mono = all(x <= y for x, y in zip(seq, seq[1:]))
                    at = per_n.get(4000, per_n[b.trend_ns[-1]])[side]
                    ok &= mono and at >= 0.95
            return ok, measured, ""
        return self._timed("A7", run)

    def a8(self):
        return self._timed("A8", lambda: self._tests(["ks_mrca", "mrca_cdf_at_0.25"]))

    def a9(self):
        def run():
            law = build_law("geometric")
            t = self.budget.t
            ns = self.budget.moment_ns
            cache = extinction_probs(law, max(ns))
            reports = {n: moments.moment_report(cache, n, t) for n in ns}
            ok, measured = True, {}
            for key in reports[ns[0]].rel_errors:
                errs = [reports[n].rel_errors[key] for n in ns]
                tol = 0.03 if "second" in key else 0.01
                mono = all(x > y for x, y in zip(errs, errs[1:]))
                ok &= mono and errs[-1] <= tol
                measured[key] = {"rel_errors": errs, "tolerance": tol, "monotone": mono}
            measured["i2_over_n2"] = [reports[n].i2_over_n2 for n in ns]
            return ok, measured, ""
        return self._timed("A9", run)

    def a10(self):
        def run():
            b = self.budget
            measured, ok = {}, True
            for law_name in LAWS:
                law = build_law(law_name)
                for n in (2, 3, 4):
                    cache = extinction_probs(law, n)
                    seed = b.seed + 100 * n + LAWS.index(law_name)
                    traces = list(simulate_batch(cache, n, b.t, b.oracle_reps, seed))
                    zl = np.concatenate([tr.z_left for tr in traces])
                    zr = np.concatenate([tr.z_right for tr in traces])
                    exact = moments.exact_conditional_law(cache, n, b.t)
                    tv_exact = tv_distance(empirical_law(zl + zr - 1), exact.pmf)
                    ref, attempts = reference_batch(law, n, b.t, b.oracle_reps, seed + 50)
                    tv_joint = tv_distance(
                        empirical_law(np.column_stack([zl, zr])),
                        empirical_law(np.column_stack([ref.z_left, ref.z_right])))
                    measured[f"{law_name}_n{n}"] = {
                        "tv_exact": tv_exact, "tv_joint": tv_joint,
                        "acceptance_rate": b.oracle_reps / attempts,
                        "exact_acceptance_rate": float(cache.surv[n])}
                    ok &= tv_exact <= 0.01 and tv_joint <= 0.015
            return ok, measured, ""
        return self._timed("A10", run)

    def a11(self):
        def run():
            measured, ok = {}, True
            for law in LAWS:
                table = self.main_run(law)
                cache = extinction_probs(build_law(law), table.config.n)
                for side in ("left", "right"):
                    prof = profile_from_table(table, side)
                    lo, hi = math.ceil(prof.nt / 4), math.floor(3 * prof.nt / 4)
                    z = prof.z_scores()[lo:hi + 1]
                    exact = moments.exact_split_probability(cache, prof.n, table.config.t, side)
                    z_exact = ((prof.estimate - exact) / prof.se)[lo:hi + 1]
                    inside = np.abs(z) <= 3.0
                    measured[f"{law}_{side}"] = {
                        "points": int(z.size),
                        "within_3se": int(inside.sum()),
                        "max_abs_z": float(np.max(np.abs(z))),
                        "mean_z": float(np.mean(z)),
                        "within_3se_of_exact": int((np.abs(z_exact) <= 3.0).sum()),
                        "max_abs_z_exact": float(np.max(np.abs(z_exact))),
                        "bonferroni_z": float(stats.norm.isf(0.0005 / z.size)),
                        "max_rel_gap_exact_vs_asymptote":
                            float(np.max(np.abs(exact / prof.asymptote - 1.0)[lo:hi + 1])),
                    }
                    ok &= bool(inside.all())
            note = "" if ok else "per-i 3 SE band has no multiplicity allowance"
            return ok, measured, note
        return self._timed("A11", run)

    def a12(self):
        return self._timed("A12", lambda: closed_form_checks(self.budget))

    def run_all(self) -> list[CriterionResult]:
        return [getattr(self, f"a{k}")() for k in range(1, 13)]


def split_bias_diagnostics(table, cache, side: str, k: int) -> dict:
    """Exact finite-n KS distance to the limit, and sample KS to the exact law."""
    cfg, nt = table.config, table.nt
    exact = moments.exact_split_time_cdf(cache, cfg.n, cfg.t, side, k)
    g = np.arange(nt + 1)
    u = g / nt if side == "right" else limits.g_transform(cfg.t, g / nt)
    lim = limits.nested_uniform_cdf(k, np.clip(u, 0.0, 1.0))
    below = np.concatenate(([0.0], exact[:-1]))
    bias = max(np.max(np.abs(exact - lim)), np.max(np.abs(below - lim)))
    col = table.column(f"g_{side[0]}_{k}").astype(np.int64)
    emp = np.cumsum(np.bincount(col, minlength=nt + 1)[:nt + 1]) / col.size
    return {"exact_bias": float(bias),
            "ks_vs_exact": float(np.max(np.abs(emp - exact))),
            "null_band": 1.95 / math.sqrt(col.size)}


def profile_from_table(table, side: str) -> SplitProfile:
    cfg = table.config
    hits = table.split_hits[side]
    count = table.rows.shape[0]
    est = hits / count
    se = np.sqrt(est * (1.0 - est) / count)
    return SplitProfile(side, cfg.n, table.nt, est, se,
                        split_asymptote(side, cfg.n, table.nt, np.arange(table.nt)), count)


def _single_survivor_fraction(table, side: str) -> float:
    g = table.column(f"g_{side}_1")
    d = table.column(f"d_{side}_1")
    split = g > 0
    return float(np.mean(d[split] == 1)) if split.any() else math.nan


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def closed_form_checks(budget: Budget):
    """Example values of every closed form, plus sampler bands."""
    checks = {}

    def close(label, got, want, tol=1e-9):
        checks[label] = {"value": float(got), "target": float(want),
                         "pass": bool(abs(got - want) <= tol)}

    binary, geometric, poisson = (build_law(x) for x in ("binary", "geometric", "poisson"))
    close("sigma2 binary", binary.sigma2, 1.0)
    close("sigma2 geometric", geometric.sigma2, 2.0)
    close("mean poisson", poisson.mean, 1.0, 1e-10)
    qb = extinction_probs(binary, 3).q
    for m, want in enumerate((0.0, 0.5, 5 / 8, 89 / 128)):
        close(f"binary q[{m}]", qb[m], want)
    cg = extinction_probs(geometric, 3)
    for m in range(4):
        close(f"geometric q[{m}]", cg.q[m], m / (m + 1))
    cb = extinction_probs(binary, 3)
    close("binary spine (1,2) m=1", spine_step_pmf(cb, 1, 1, 2), 2 / 3)
    close("binary spine (2,2) m=1", spine_step_pmf(cb, 1, 2, 2), 1 / 3)
    close("geometric spine (1,1) m=1", spine_step_pmf(cg, 1, 1, 1), 3 / 8)
    tl = tilted_law(cb, 1).pmf
    close("tilted binary p0", tl[0], 4 / 5)
    close("tilted binary p2", tl[2], 1 / 5)
    tg = tilted_law(cg, 1).pmf
    close("tilted geometric ratio", tg[1] / tg[0], 0.25)
    close("nested k=1", limits.nested_uniform_cdf(1, 0.37), 0.37)
    close("nested k=2 at 1/e", limits.nested_uniform_cdf(2, math.exp(-1)), 2 * math.exp(-1))
    close("nested mean k=1", limits.nested_uniform_mean(1), 0.5)
    close("nested mean k=3", limits.nested_uniform_mean(3), 0.125)
    close("nested mean k=2 [2,6]", limits.nested_uniform_mean(2, 2, 6), 3.0)
    close("g_t(1/2)", limits.g_transform(0.5, 0.5), 2 / 3)
    close("g_t(1/4)", limits.g_transform(0.5, 0.25), 0.4)
    close("right split k=1", limits.split_limit_cdf("right", 1, 0.5, 0.2), 0.4)
    close("left split k=1", limits.split_limit_cdf("left", 1, 0.5, 0.25), 2 / 3)
    close("joint (1/4,1/4)", limits.joint_split_limit_cdf(1, 1, 0.5, 0.25, 0.25), 1 / 3)
    close("joint (1/4,1/5)", limits.joint_split_limit_cdf(1, 1, 0.5, 0.25, 0.2), 4 / 15)
    close("mrca 1/4", limits.mrca_limit_cdf(0.5, 0.25), 2 / 3)
    spec = limits.LimitSpec(0.5, 1.0)
    mean_sum, _ = integrate.quad(lambda x: 1 - limits.limit_sum_cdf(spec, x), 0, np.inf)
    close("sum mean", mean_sum, 0.375, 1e-8)
    close("L tail at mean", limits.l_limit_tail(0.5, 1.0, 0.125), math.exp(-1))
    law2 = moments.exact_conditional_law(extinction_probs(geometric, 2), 2, 0.5).pmf
    for j, want in ((1, 3 / 8), (2, 9 / 32), (3, 21 / 128)):
        close(f"exact law geometric n=2 j={j}", law2[j], want)
    close("exact law binary n=2", moments.exact_conditional_law(
        extinction_probs(binary, 2), 2, 0.5).pmf[2], 1.0)
    for k in range(1, 7):
        integral, _ = integrate.quad(lambda x: 1 - limits.nested_uniform_cdf(k, x), 0, 1,
                                     epsabs=1e-13, epsrel=1e-13, limit=200)
        close(f"nested mean-cdf k={k}", integral, limits.nested_uniform_mean(k), 1e-8)

    # sampler bands
    rng = np.random.default_rng(budget.seed)
    draws = budget.sampler_draws
    cache = extinction_probs(binary, 2)
    v = np.array([sample_spine_step(cache, 1, rng)[0] for _ in range(draws)])
    band = 0.002 * math.sqrt(1e6 / draws)
    close("binary spine V=2 fraction", np.mean(v == 2), 1 / 3, band)
    cg2 = extinction_probs(geometric, 2)
    z = np.concatenate([tr.z_total for tr in simulate_batch(cg2, 2, 0.5, draws, budget.seed)])
    close("geometric n=2 P(Z=1)", np.mean(z == 1), 3 / 8, band)
    total = aggregate_offspring_sum(binary, 10**6, rng)
    close("binary aggregate 1e6", total, 1e6, 3e3)
    ok = all(c["pass"] for c in checks.values())
    return ok, checks, f"{sum(c['pass'] for c in checks.values())}/{len(checks)} checks"


def run_suite(budget: str = "standard", seed: int | None = None) -> list[CriterionResult]:
    return Suite(budget, seed).run_all()


def report(results: list[CriterionResult]) -> dict:
    return {"passed": all(r.passed for r in results),
            "criteria": [asdict(r) for r in results]}
