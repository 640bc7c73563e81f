"""CSV/JSON result files and their reader.

Every CSV starts with a version line and writes floats with 17 significant
digits, so values read back are bit-identical to the ones written.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import Association, PowerSchedule, Scenario, Trajectory

HEADER = "# uav-mec v1"


def fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else fmt(v))
                        for v in row])


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != HEADER:
            raise ValueError(f"{path}: missing '{HEADER}' header")
        reader = csv.DictReader(fh)
        return list(reader)


def write_solution(out_dir, scen: Scenario, report) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sol = report.solution
    pts = sol.trajectory.points
    speeds = np.concatenate([[0.0], sol.trajectory.speeds(scen.dt)])
    _write_csv(out / "trajectory.csv", ["n", "x", "y", "speed"],
               [(n, pts[n, 0], pts[n, 1], speeds[n]) for n in range(scen.N + 1)])
    served = sol.association.served
    _write_csv(out / "association.csv", ["n", "served_ue"],
               [(n + 1, int(served[n]) + 1) for n in range(scen.N)])
    p = sol.power.p
    _write_csv(out / "power.csv", ["n", "k", "p_watts"],
               [(n + 1, k + 1, p[k, n]) for n in range(scen.N) for k in range(scen.K)])
    _write_csv(out / "iterations.csv", ["r", "S_bits", "E_F", "E_C", "residual"],
               [(rec.r, rec.bits, rec.ledger.flight, rec.ledger.compute, max(rec.residuals.values()))
                for rec in report.iterations])
    write_summary(out / "summary.json", scen, report)


def summary_dict(scen: Scenario, report) -> dict:
    return {
        "format": "uav-mec v1",
        "scheme": report.scheme.value,
        "status": report.status,
        "converged": bool(report.converged),
        "iterations": len(report.iterations),
        "S_bits": float(report.bits),
        "epsilon_bits": float(report.epsilon),
        "restored": bool(report.restored),
        "energy": {
            "flight_J": float(report.ledger.flight),
            "compute_J": float(report.ledger.compute),
            "battery_J": float(scen.uav.battery),
        },
        "ues": [
            {"id": ue.id, "S_bits": float(s), "D_bits": float(ue.min_bits)}
            for ue, s in zip(scen.ues, report.per_ue_bits)
        ],
    }


def write_summary(path, scen: Scenario, report) -> None:
    Path(path).write_text(json.dumps(summary_dict(scen, report), indent=2) + "\n")


def write_failure(out_dir, status: str, message: str, family: str | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"format": "uav-mec v1", "status": status, "message": message}
    if family:
        doc["failing_constraint"] = family
    (out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")


def read_solution(out_dir, scen: Scenario):
    """Load (Trajectory, Association, PowerSchedule) from a solve output directory."""
    out = Path(out_dir)
    rows = _read_csv(out / "trajectory.csv")
    pts = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    rows = _read_csv(out / "association.csv")
    served = np.array([int(r["served_ue"]) - 1 for r in rows])
    p = np.zeros((scen.K, scen.N))
    for r in _read_csv(out / "power.csv"):
        p[int(r["k"]) - 1, int(r["n"]) - 1] = float(r["p_watts"])
    return Trajectory(pts), Association.from_served(served, scen.K), PowerSchedule(p)


def write_sweep(path, points) -> None:
    rows = []
    for pt in points:
        rep = pt.report
        if rep is None:
            rows.append((pt.value, pt.scheme.value, "", "", "", "", pt.status))
        else:
            rows.append((pt.value, pt.scheme.value, rep.bits, rep.ledger.flight, rep.ledger.compute,
                         len(rep.iterations), rep.status))
    _write_csv(Path(path), ["param_value", "scheme", "S_bits", "E_F", "E_C", "iterations", "status"], rows)


def read_sweep(path):
    return _read_csv(Path(path))
