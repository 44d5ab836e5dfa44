"""Verdict matrix: one row per target configuration, in table order.

A row combines three sources of evidence: an honest run (executability),
every packaged attack script that applies to the configuration, and the
bounded mutation search.  A property is reported as violated when any source
falsifies it; its remark codes are the union over all falsifying runs.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .attacks import ATTACKS, run_attack
from .channel import UnderivableInjection
from .configs import (REMARK_NO_CVM_HIGH_VALUE, VISA, TargetConfig, applicability,
                      suite as suite_configs)
from .properties import PROPERTIES, check_executability, secrecy_labels
from .protocol.world import World
from .search import DEFAULT_BUDGET, explore

COLUMNS = ("executable",) + PROPERTIES
LABELS = ("PIN", "PAN", "keys")
SUITES = ("contact", "contactless")


class NoReference(ValueError):
    """No golden verdicts exist for the requested fix set."""


@dataclass
class Cell:
    """One verdict: ``holds`` is None when the configuration is not applicable."""
    holds: bool | None
    remarks: tuple[int, ...] = ()

    @property
    def code(self) -> str | list[int]:
        # Same encoding as the golden tables.
        if self.holds is None:
            return "na3" if REMARK_NO_CVM_HIGH_VALUE in self.remarks else "na"
        if self.holds:
            return "ok"
        return list(self.remarks)

    def text(self) -> str:
        if self.holds is None:
            return "--(3)" if self.remarks else "--"
        if self.holds:
            return "✓"
        marks = ",".join(str(r) for r in self.remarks)
        return f"✗({marks})" if marks else "✗"

    def plain(self) -> str:
        if self.holds is None:
            return "na(3)" if self.remarks else "na"
        if self.holds:
            return "ok"
        return "x(" + ",".join(str(r) for r in self.remarks) + ")"


@dataclass
class Row:
    line: int
    name: str
    generic: str
    kernel: str | None
    applicable: bool
    reason: str | None
    cells: dict[str, Cell]
    secrecy: dict[str, bool] = field(default_factory=dict)
    attacks: dict[str, list[str]] = field(default_factory=dict)
    witnesses: dict[str, str] = field(default_factory=dict)
    runs: int = 0

    def golden(self) -> list:
        return [self.name] + [self.cells[c].code for c in COLUMNS]


def evaluate(cfg: TargetConfig, line: int = 0, budget: int = DEFAULT_BUDGET, seed: int = 0) -> Row:
    """Evaluate every property on one configuration."""
    ok, reason, remark = applicability(cfg)
    if not ok:
        marks = (remark,) if remark is not None else ()
        cells = {c: Cell(None, marks if c == "executable" else ()) for c in COLUMNS}
        return Row(line, cfg.name, cfg.generic, cfg.kernel, False, reason, cells)

    honest = World(cfg, seed=seed)
    honest.run_transaction()
    executable = check_executability(honest.trace).holds
    secrecy = secrecy_labels(honest.trace, honest.knowledge)
    holds = {p: True for p in PROPERTIES}
    remarks: dict[str, set[int]] = {p: set() for p in PROPERTIES}
    witnesses: dict[str, str] = {}
    attacks: dict[str, list[str]] = {}

    for name, info in ATTACKS.items():
        if not info.applies(cfg):
            continue
        try:
            out = run_attack(cfg, name, seed=seed)
        except UnderivableInjection:
            attacks[name] = ["underivable"]
            continue
        attacks[name] = [p for p in PROPERTIES if not out.verdicts[p].holds]
        for p in PROPERTIES:
            v = out.verdicts[p]
            if not v.holds:
                holds[p] = False
                remarks[p] |= v.remarks
                witnesses.setdefault(p, f"attack {name}")
        for lab in LABELS:
            secrecy[lab] = secrecy[lab] and out.secrecy[lab]

    found = explore(cfg, budget, seed=seed)
    for p in PROPERTIES:
        r = found.properties[p]
        if not r.holds:
            holds[p] = False
            remarks[p] |= r.remarks
            witnesses.setdefault(p, "search " + " ".join(f"{i}:{m}" for i, m in r.witness.vector))
    for lab in LABELS:
        secrecy[lab] = secrecy[lab] and found.secrecy[lab]

    cells = {"executable": Cell(executable)}
    for p in PROPERTIES:
        # Remark 0 marks a disagreement outside the legend; it is not printed.
        cells[p] = Cell(holds[p], tuple(sorted(remarks[p] - {0})))
    return Row(line, cfg.name, cfg.generic, cfg.kernel, True, None, cells, secrecy, attacks,
               witnesses, found.runs)


def _evaluate(args):
    return evaluate(*args)


@dataclass
class Matrix:
    suite: str
    fixes: tuple[str, ...]
    budget: int
    seed: int
    rows: list[Row]

    def secrecy(self, generic: str) -> dict[str, bool]:
        """Per-label secrecy over every applicable row of one suite."""
        out = {lab: True for lab in LABELS}
        for r in self.rows:
            if r.applicable and r.generic.lower() == generic:
                for lab in LABELS:
                    out[lab] = out[lab] and r.secrecy[lab]
        return out

    @property
    def suites(self) -> list[str]:
        present = {r.generic.lower() for r in self.rows}
        return [s for s in SUITES if s in present]


def run_matrix(suite: str = "all", fixes=(), budget: int = DEFAULT_BUDGET, seed: int = 0,
               jobs: int = 1, configs: list[TargetConfig] | None = None) -> Matrix:
    """Evaluate a suite; rows come back in table order whatever ``jobs`` is."""
    if configs is None:
        configs = suite_configs(suite)
    configs = [c.with_fixes(fixes) for c in configs]
    lines = {}
    for s in SUITES:
        for i, c in enumerate(suite_configs(s), 1):
            lines[c.name] = i
    work = [(c, lines[c.name], budget, seed) for c in configs]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_evaluate, work))
    else:
        rows = [_evaluate(w) for w in work]
    return Matrix(suite, tuple(sorted(fixes)), budget, seed, rows)


# -- golden comparison ---------------------------------------------------------

def load_golden() -> dict:
    return json.loads(resources.files("emvsym").joinpath("golden/tables.json").read_text())


def expected_rows(fixes=(), golden: dict | None = None) -> dict[str, list]:
    """Reference verdicts by configuration name.  With fixes, only the full
    fix sets have a reference: they are expected to make every Visa row
    hold.  Other kernels ignore the fixes."""
    golden = golden or load_golden()
    rows = {r[0]: r for s in SUITES for r in golden[s]}
    fixes = set(fixes)
    if not fixes:
        return rows
    if not ({"1", "2"} <= fixes and fixes & {"3a", "3b"}):
        raise NoReference(f"no reference verdicts for fixes {sorted(fixes)}")
    for name, r in rows.items():
        if name.startswith(VISA + "_"):
            rows[name] = [name] + ["ok"] * len(COLUMNS)
    return rows


@dataclass
class Mismatch:
    config: str
    column: str
    expected: object
    got: object

    def __str__(self):
        return f"{self.config} {self.column}: expected {self.expected}, got {self.got}"


def compare(m: Matrix, golden: dict | None = None) -> list[Mismatch]:
    golden = golden or load_golden()
    expected = expected_rows(m.fixes, golden)
    out = []
    for r in m.rows:
        want = expected[r.name]
        for col, exp, got in zip(COLUMNS, want[1:], r.golden()[1:]):
            if exp != got:
                out.append(Mismatch(r.name, col, exp, got))
    for s in m.suites:
        want = golden["secrecy"][s]
        got = m.secrecy(s)
        for lab in LABELS:
            if want[lab] != got[lab]:
                out.append(Mismatch(s, f"secrecy {lab}", want[lab], got[lab]))
    return out


# -- rendering -----------------------------------------------------------------

HEADER = ("#", "Target model", "executable", "bank accepts", "auth. to terminal",
          "auth. to bank")


def _secrecy_line(name: str, sec: dict[str, bool]) -> str:
    parts = [f"{lab} {'secret' if sec[lab] else 'NOT secret'}" for lab in LABELS]
    return f"secrecy ({name}): " + ", ".join(parts)


def render_text(m: Matrix) -> str:
    table = [HEADER] + [(str(r.line), r.name) + tuple(r.cells[c].text() for c in COLUMNS)
                        for r in m.rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(HEADER))]
    lines = [f"suite={m.suite} fixes={','.join(m.fixes) or 'none'} budget={m.budget} seed={m.seed}"]
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    lines.append("")
    for s in m.suites:
        lines.append(_secrecy_line(s, m.secrecy(s)))
    lines.append("legend: ✓ holds within bound, ✗ violated, -- not applicable; "
                 "(1) CVM disagreement, (2) AC disagreement, "
                 "(3) high-value without CVM not completed contactless")
    return "\n".join(lines) + "\n"


CSV_FIELDS = ["line", "config"] + list(COLUMNS) + [f"secret_{lab}" for lab in LABELS] + [
    "search_runs", "reason"]


def render_csv(m: Matrix) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in m.rows:
        rec = {"line": r.line, "config": r.name, "search_runs": r.runs, "reason": r.reason or ""}
        for c in COLUMNS:
            rec[c] = r.cells[c].plain()
        for lab in LABELS:
            rec[f"secret_{lab}"] = "" if not r.applicable else str(r.secrecy[lab]).lower()
        w.writerow(rec)
    return buf.getvalue()


def to_json(m: Matrix) -> dict:
    return {
        "suite": m.suite,
        "fixes": list(m.fixes),
        "budget": m.budget,
        "seed": m.seed,
        "rows": [{**asdict(r), "verdicts": {c: r.cells[c].code for c in COLUMNS}}
                 for r in m.rows],
        "secrecy": {s: m.secrecy(s) for s in m.suites},
    }


def render_json(m: Matrix) -> str:
    return json.dumps(to_json(m), indent=2, sort_keys=True) + "\n"


RENDERERS = {"text": render_text, "csv": render_csv, "json": render_json}


def plot_matrix(m: Matrix, path) -> Path:
    """Write the verdict matrix as a colour grid to ``path``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.colors import ListedColormap

    # 0 not applicable, 1 holds, 2 violated
    grid = [[0 if r.cells[c].holds is None else (1 if r.cells[c].holds else 2) for c in COLUMNS]
            for r in m.rows]
    fig, ax = plt.subplots(figsize=(7.5, 0.32 * len(m.rows) + 1.6))
    cmap = ListedColormap(["#d9d9d9", "#7fbf7b", "#d6604d"])
    ax.imshow(grid, cmap=cmap, vmin=0, vmax=2, aspect="auto")
    for i, r in enumerate(m.rows):
        for j, c in enumerate(COLUMNS):
            cell = r.cells[c]
            label = {None: "--", True: "ok"}.get(cell.holds, "x")
            if cell.remarks:
                label += "(" + ",".join(str(x) for x in cell.remarks) + ")"
            ax.text(j, i, label, ha="center", va="center", fontsize=7)
    ax.set_xticks(range(len(COLUMNS)), COLUMNS, fontsize=8)
    ax.xaxis.tick_top()
    ax.set_yticks(range(len(m.rows)), [f"{r.line} {r.name}" for r in m.rows], fontsize=7)
    fixes = ",".join(m.fixes) or "none"
    ax.set_title(f"verdicts: suite {m.suite}, fixes {fixes}, budget {m.budget}", fontsize=9,
                 pad=24)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def write_report(m: Matrix, outdir, stem: str = "matrix") -> list[Path]:
    """Write every text format plus the figure into ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for ext, render in (("txt", render_text), ("csv", render_csv), ("json", render_json)):
        p = outdir / f"{stem}.{ext}"
        p.write_text(render(m), encoding="utf-8")
        written.append(p)
    written.append(plot_matrix(m, outdir / f"{stem}.png"))
    return written


__all__ = ["Cell", "Row", "Matrix", "Mismatch", "NoReference", "evaluate", "run_matrix",
           "load_golden", "expected_rows", "compare", "render_text", "render_csv",
           "render_json", "to_json", "plot_matrix", "write_report", "RENDERERS", "COLUMNS"]
