"""Smoke test for the rankhom_py bindings.

Run with `python python/smoke_test.py` or under pytest after installing the
extension (`pip install --no-build-isolation -e crates/py`).
"""

import json
import os
import pathlib
import sys

import numpy as np

import rankhom_py

HERE = pathlib.Path(__file__).resolve().parent
SCENARIOS = HERE.parent / "scenarios"
sys.path.insert(0, str(HERE))

import chern_oracle  # noqa: E402


def scenario(name):
    return (SCENARIOS / name).read_text()


def run(command, name, **kw):
    report, csv = rankhom_py.run(command, scenario(name), fixed_report=True, **kw)
    return json.loads(report), report, csv


def test_metadata():
    assert rankhom_py.schema_version() == 1
    assert "verify-suite" in rankhom_py.commands()
    assert len(rankhom_py.commands()) == 9


def test_membership_and_determinism():
    r, raw, csv = run("membership", "circle_window.json")
    assert r["pass"] is True
    assert csv is None
    _, raw2, _ = run("membership", "circle_window.json")
    assert raw == raw2
    other, _, _ = run("membership", "circle_window.json", seed=5)
    assert other["effective"]["seed"] == 5
    assert other["inputs_digest"] != r["inputs_digest"]


def test_connect_csv():
    r, _, csv = run("connect", "circle_window.json")
    assert r["pass"] is True
    header, _, rest = csv.partition("\r\n")
    assert header.startswith("segment,step,t,sample,")
    assert header.endswith("lambda_4")
    assert rest.endswith("\r\n")


def test_chern_matches_oracle():
    r, _, _ = run("chern", "tautological_sphere.json")
    assert r["pass"] is True
    value = r["results"]["value"]
    oracle = chern_oracle.chern(level=1, depth=1)
    assert abs(value - oracle) < 1e-6, (value, oracle)
    assert abs(value - 1.0) < 1e-6


def test_contract_refused():
    r, _, _ = run("contract", "tautological_sphere.json")
    assert r["pass"] is False
    check = next(c for c in r["checks"] if c["name"] == "contraction")
    assert check["certificate"]["kind"] == "dimension_hypothesis"


def test_invalid_inputs_raise_value_error():
    for bad in ("{", '{"schema_version": 2, "window": {"n": 2, "k": 1, "l": 1}}'):
        try:
            rankhom_py.run("membership", bad)
        except ValueError:
            pass
        else:
            raise AssertionError(f"accepted {bad!r}")
    try:
        rankhom_py.run("frobnicate", scenario("circle_window.json"))
    except ValueError:
        pass
    else:
        raise AssertionError("accepted unknown command")


def test_linalg_against_numpy():
    rng = np.random.default_rng(3)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    a = g @ g.conj().T
    rows = a.tolist()
    w, v = rankhom_py.hermitian_eig(rows)
    assert np.allclose(w, np.linalg.eigvalsh(a), atol=1e-9)
    v = np.array(v)
    assert np.allclose(v @ np.diag(w) @ v.conj().T, a, atol=1e-9)

    eps = float(np.median(w))
    cut = np.array(rankhom_py.cut_epsilon(rows, eps))
    ww, vv = np.linalg.eigh(a)
    expected = vv @ np.diag(np.maximum(ww - eps, 0.0)) @ vv.conj().T
    assert np.allclose(cut, expected, atol=1e-9)

    eta = 0.5 * (w[1] + w[2])
    p = np.array(rankhom_py.spectral_projection(rows, eta))
    assert np.allclose(p @ p, p, atol=1e-9)
    assert round(np.trace(p).real) == 2

    b = a + 0.01 * np.eye(4)
    c, residual, _ = rankhom_py.roerdam_factor(rows, b.tolist(), 0.1)
    c = np.array(c)
    cut = np.array(rankhom_py.cut_epsilon(rows, 0.1))
    assert residual < 1e-8
    assert np.allclose(c.conj().T @ b @ c, cut, atol=1e-7)


def test_generate_expands_to_explicit():
    out = json.loads(
        rankhom_py.generate(
            '{"kind": "random-window-field", "seed": 4}',
            '{"kind": "circle", "vertices": 6}',
            3, 2, 1,
        )
    )
    assert out["kind"] == "gram"
    assert len(out["factors"]) == 6


if __name__ == "__main__":
    os.environ.pop("RANKHOM_RANK_THRESHOLD", None)
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"ok {t.__name__}")
    print(f"{len(tests)} passed")
