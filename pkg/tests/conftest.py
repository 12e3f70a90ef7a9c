from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest

from selfforensics import parse_case

ROOT = Path(__file__).resolve().parents[1]
CASES = ROOT / "cases"

M1_TEXT = """
model M1 {
  fields { }
  state A { }
  state B { }
  events stay, go;
  trans A -stay-> A;
  trans A -go-> B;
  init A;
}
seq seq1 = [(true, 3, 0, 1.0)];
evidence E1 = { seq1 };
"""


@pytest.fixture
def m1_case():
    return parse_case(M1_TEXT)


@pytest.fixture
def m1(m1_case):
    return m1_case.model("M1")


@pytest.fixture
def run_cli(tmp_path):
    def run(*args: str, cwd: Path | None = None):
        return subprocess.run(
            [sys.executable, "-m", "selfforensics", *map(str, args)],
            cwd=cwd or tmp_path,
            capture_output=True,
            text=True,
            check=False,
            timeout=120,
        )

    return run
