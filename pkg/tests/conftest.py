import subprocess
from pathlib import Path

import pytest

from fairver.smt import SmtSession, resolve_solver

REPO = Path(__file__).resolve().parents[1]


def _ensure_shim() -> None:
    shim_dir = REPO / "solver"
    if (shim_dir / "node_modules" / "z3-solver").exists():
        return
    subprocess.run(
        ["npm", "install", "--prefix", str(shim_dir)],
        check=True,
        capture_output=True,
        timeout=600,
    )


@pytest.fixture(scope="session")
def solver_cmd() -> list[str]:
    try:
        cmd = resolve_solver()
    except Exception:
        _ensure_shim()
        cmd = resolve_solver()
    if cmd[-1].endswith("smt_stdio.js"):
        _ensure_shim()
    return cmd


@pytest.fixture(scope="session")
def session(solver_cmd):
    """One shared solver process for the whole test run (reset between queries)."""
    with SmtSession(solver_cmd) as s:
        yield s
