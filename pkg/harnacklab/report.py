"""Result rows, the claim table and the on-disk report formats."""

import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Sequence

logger = logging.getLogger(__name__)

OPS = (">=", "<=", ">", "info")


@dataclass(frozen=True)
class Claim:
    statement: str
    anchor: str


ESCAPE = "escape estimate for the cone exit probability"
BHP = "boundary Harnack inequality, uniform in K"
MASSON = "lattice escape lower bound"
COUNTER = "failure of the uniform bound for d >= 3"
QHBC = "quasi-hyperbolic boundary condition"
SS = "Smith-Stegenga integrability"
GOOD = "(r, eps)-good sets in the plane"
CARLESON = "Carleson estimate near the roots"
BHP2D = "boundary Harnack inequality for good planar sets"
ENGINES = "cross-engine consistency"

CLAIMS: Dict[str, Claim] = {
    "lemma-gap-nonnegative": Claim(
        "g(x) - f(x) >= 0 on [0, kappa_d] for the modified-Poisson comparison", "modified Poisson kernel comparison"
    ),
    "reflection-sum-bound": Claim(
        "the reflected kernel sum stays <= 2 on [0, kappa_d]^2", "reflected kernel sum bound"
    ),
    "cone-exit-axis-lower": Claim("h_beta(x) >= h_beta(0) along the positive axis", ESCAPE),
    "cone-exit-lower-half-upper": Claim("h_beta(x) <= h_beta(0) on the closed lower half-ball", ESCAPE),
    "cone-exit-x2-decreasing": Claim("h_beta decreases in x2 above kappa_beta on the axis", ESCAPE),
    "strip-bound-limit": Claim("c_d/2n + h_beta(0)(n-1)/n against h_beta(0)", "strip decomposition of the cone bound"),
    "escape-ratio-lower-bound": Claim("u(x)/v(x) >= c_beta on the positive axis", ESCAPE),
    "axis-projection-ratio": Claim("u/v at x compared with u/v at its axis projection", BHP),
    "uniform-ratio-positive": Claim("the minimum u/v over B(0,1/2) on the cone side is positive", BHP),
    "uniform-ratio-stability": Claim("the family minimum of u/v stays within a fixed factor of the family median", BHP),
    "uniform-double-ratio": Claim("worst (u(x)/v(x)) / (u(y)/v(y)) over the query points", BHP),
    "masson-exact-residual": Claim("linear-solve residual of the lattice problems", MASSON),
    "masson-positive": Claim("the conditional escape probability into W is positive", MASSON),
    "masson-n-stability": Claim("relative change of the minimum conditional probability under doubling N", MASSON),
    "masson-mc-agreement": Claim("lattice Monte Carlo agrees with the exact solve within 3 sigma", MASSON),
    "masson-reflection-symmetry": Claim(
        "reflecting K across the x1 axis leaves the conditional probability unchanged", MASSON
    ),
    "annulus-hitting-law": Claim("P(hit B(0,delta) before dB) matches the closed form within 3 sigma", COUNTER),
    "counterexample-slope": Claim("|slope of log P_y(hit B(0,delta) before dB) against log delta - (d-2)|", COUNTER),
    "counterexample-symmetric-split": Claim("u_minus(0)/v(0) = 1/2 within 3 sigma", COUNTER),
    "counterexample-ratio-growth": Claim("(u_minus(0)/v(0)) / (u_minus(y)/v(y)) as delta shrinks", COUNTER),
    "qh-ball-distance": Claim("relative error of k_B(0, e1/2) against log 2", QHBC),
    "qhbc-ball-fit": Claim("QHBC constants of the unit disc", QHBC),
    "ss-ball-value": Claim("relative error of the tau = 1/2 integral on the disc against 8 pi / 3", SS),
    "ss-divergence": Claim("the tau = 2 integral on the disc is flagged as diverging", SS),
    "ss-largest-stable-tau": Claim("largest tau with a grid-stable integral on the slit disc", SS),
    "good-set-slit": Claim("the slit is (r, eps)-good", GOOD),
    "good-set-cusp-flagged": Claim("the tangency cusp is rejected by the QHBC fit", GOOD),
    "qhbc-spiral-growth": Claim("C1 grows as the spiral tightens", QHBC),
    "carleson-bound": Claim("max u near the roots over u(w0)", CARLESON),
    "carleson-family-stability": Claim("max over min of the Carleson constant across the family", CARLESON),
    "bhp2d-double-ratio": Claim("worst double ratio u/v over the query pairs", BHP2D),
    "bhp2d-family-stability": Claim("max over min of the worst double ratio across the family", BHP2D),
    "fd-grid-convergence": Claim("relative change of the worst double ratio between h and 2h", BHP2D),
    "engine-agreement": Claim("|v_wos - v_fd| within max(3 sigma, 2 grid error)", ENGINES),
}

REPORT_FIELDS = ("scenario", "claim", "measured", "uncertainty", "threshold", "op", "passed", "detail")


def decide(measured: float, threshold: float, op: str) -> bool:
    if op not in OPS:
        raise ValueError(f"unknown comparison {op!r}")
    if op == "info":
        return True
    if math.isnan(measured):
        return False
    if op == ">=":
        return measured >= threshold
    if op == ">":
        return measured > threshold
    return measured <= threshold


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    claim: str
    measured: float
    uncertainty: float
    threshold: float
    op: str
    passed: bool
    runtime: float = 0.0
    detail: str = ""

    @classmethod
    def check(
        cls,
        scenario: str,
        claim: str,
        measured: float,
        threshold: float,
        op: str,
        uncertainty: float = 0.0,
        runtime: float = 0.0,
        detail: str = "",
    ) -> "ReportRow":
        if claim not in CLAIMS:
            raise KeyError(f"unregistered claim {claim!r}")
        measured = float(measured)
        return cls(
            scenario, claim, measured, float(uncertainty), float(threshold), op,
            decide(measured, threshold, op), runtime, detail,
        )

    def to_dict(self, include_runtime: bool = False) -> Dict[str, Any]:
        out: Dict[str, Any] = {name: getattr(self, name) for name in REPORT_FIELDS}
        if include_runtime:
            out["runtime"] = self.runtime
        return out


def format_float(value: float) -> str:
    return format(value, ".17g")


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, (tuple, list)):
        return " ".join(_cell(v) for v in value)
    return str(value)


def atomic_write(path: str, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_table(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    atomic_write(path, render_csv(header, rows))
    logger.info(f"Wrote {path}")
    return path


def _json_scalar(value: Any) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return format_float(value)
    return json.dumps(value)


def render_json(records: Sequence[Dict[str, Any]]) -> str:
    """A JSON array of flat objects, floats at 17 significant digits like the CSV cells."""
    if not records:
        return "[]\n"
    blocks = []
    for record in records:
        fields = ",\n".join(f"    {json.dumps(k)}: {_json_scalar(v)}" for k, v in record.items())
        blocks.append("  {\n" + fields + "\n  }")
    return "[\n" + ",\n".join(blocks) + "\n]\n"


def write_report(rows: Sequence[ReportRow], fmt: str, path: str, include_runtime: bool = False) -> str:
    """Report rows as CSV or JSON; both print floats with 17 significant digits."""
    if fmt == "json":
        text = render_json([row.to_dict(include_runtime) for row in rows])
    elif fmt == "csv":
        header = list(REPORT_FIELDS) + (["runtime"] if include_runtime else [])
        text = render_csv(header, ([row.to_dict(include_runtime)[k] for k in header] for row in rows))
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    atomic_write(path, text)
    logger.info(f"Wrote {len(rows)} report row(s) to {path}")
    return path


def summarize(rows: Sequence[ReportRow]) -> str:
    failed = [r for r in rows if not r.passed]
    lines = [f"{len(rows) - len(failed)}/{len(rows)} claim rows passed"]
    for r in failed:
        lines.append(f"FAIL {r.scenario} {r.claim}: {format(r.measured, '.6g')} {r.op} {format(r.threshold, '.6g')}")
    return "\n".join(lines)


def all_passed(rows: Sequence[ReportRow]) -> bool:
    return all(r.passed for r in rows)


ESTIMATE_HEADER = (
    "scenario", "d", "point", "n", "count_u", "count_v", "u_hat", "v_hat",
    "ci_lo_u", "ci_hi_u", "ci_lo_v", "ci_hi_v", "censored", "seed",
)
SWEEP_HEADER = ("family", "K_id", "N", "start", "p_F", "p_cond", "method")
GOODSET_HEADER = ("K_id", "r", "eps", "theta1", "theta2", "C1_root1", "C2_root1", "C1_root2", "C2_root2", "is_good")
LEMMA_HEADER = ("lemma", "d", "grid_size", "worst_gap", "pass")
