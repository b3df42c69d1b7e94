"""One test per acceptance criterion; each prints its PASS/FAIL line with the measured values.

Run directly (``python3 tests/test_acceptance.py``) for just the summary lines.
Tolerances are pinned inside ``simple_resonance.acceptance`` and repeated in the asserts below.
"""

import json
import os
import sys


from simple_resonance import acceptance
from simple_resonance.cli import main

JOBS = os.cpu_count() or 1


def report(capsys, result):
    with capsys.disabled():
        print("\n" + result.line())
        for note in result.notes:
            print("    note:", note)
    return result


def test_criterion_1_bezout_frames(capsys):
    r = report(capsys, acceptance.criterion_1())
    # Only n = 1 with k < 0 can break det = +gcd: the sole 1x1 frame is [k] itself.
    assert r.measured["violations"] == 0, r.measured


def test_criterion_1_failures_are_exactly_negative_scalars():
    count, bad = acceptance.frame_violations()
    assert count == sum(21**n - 1 for n in range(1, 5))
    assert sorted(bad) == [(k,) for k in range(-10, 0)]


def test_criterion_2_covering(capsys):
    r = report(capsys, acceptance.criterion_2())
    assert r.passed and r.measured["gaps"] == 0


def test_criterion_3_double_resonance_measure(capsys):
    r = report(capsys, acceptance.criterion_3())
    assert r.passed
    assert 3.0 <= r.measured["ratio"] <= 5.0


def test_criterion_4_homological_equation_and_lie_series(capsys):
    r = report(capsys, acceptance.criterion_4())
    assert r.passed
    assert r.measured["residualRatio"] <= 1e-9
    assert r.measured["lieVersusFlow"] <= 1e-8


def test_criterion_5_normal_form_bounds(capsys):
    r = report(capsys, acceptance.criterion_5())
    assert r.passed


def test_criterion_6_effective_potential(capsys):
    r = report(capsys, acceptance.criterion_6(jobs=JOBS))
    assert r.passed
    assert r.measured["admissible"] == 24
    assert r.measured["morseAllTwo"] and r.measured["counterexampleCritical"] == 4
    assert r.measured["worstGkRatio"] <= 1.0 and r.measured["worstRemainderRatio"] <= 1.0


def test_criterion_7_remainder_decay(capsys):
    r = report(capsys, acceptance.criterion_7(jobs=JOBS))
    assert r.passed
    assert r.measured["worstMeasuredRatio"] <= 10 * r.measured["predictedRatio"]


def test_criterion_8_genericity_measure(capsys):
    r = report(capsys, acceptance.criterion_8())
    assert r.passed


def test_criterion_9_cartan_bound(capsys):
    r = report(capsys, acceptance.criterion_9())
    assert r.passed


def test_criterion_10_pendulum_reduction(capsys):
    r = report(capsys, acceptance.criterion_10())
    assert r.passed


def test_criterion_11_cli_reports_are_byte_identical(tmp_path, capsys):
    cfg = tmp_path / "verify.ini"
    cfg.write_text("[verify]\ncriteria = 2, 8, 10, 11\n")
    codes = [main(["verify-all", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    first = (tmp_path / "a" / "verify_all.json").read_bytes()
    same = first == (tmp_path / "b" / "verify_all.json").read_bytes()
    inner = json.loads(first)["criteria"][-1]
    with capsys.disabled():
        print(f"\ncriterion 11 {'PASS' if same and inner['passed'] else 'FAIL'} byte-identical verify-all reports across runs")
    assert codes == [0, 0]
    assert same and inner["criterion"] == 11 and inner["passed"]


if __name__ == "__main__":
    numbers = [int(a) for a in sys.argv[1:]] or sorted(acceptance.CRITERIA)
    ok = True
    for number in numbers:
        kwargs = {"jobs": JOBS} if number in acceptance.PARALLEL else {}
        result = acceptance.CRITERIA[number](**kwargs)
        print(result.line(), flush=True)
        ok &= result.passed
    sys.exit(0 if ok else 1)
