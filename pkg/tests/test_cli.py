import csv
import io
import json
import subprocess
import sys
import textwrap

import pytest

from fracpoly.cli import COLUMNS, ConfigError, main, parse_job, run
from fracpoly.equilibrium import fhat_scalar
from fracpoly.fracmoments import moment_fractional
from fracpoly.models import Pearson
from fracpoly.polybasis import build_basis, monomial


def write(tmp_path, text, name="job.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def read_csv(path):
    return list(csv.reader(io.StringIO(path.read_text())))


MOMENTS = """
[model]
kind = "Pearson"
beta = 1.0
theta = 0.5
a0 = 0.5

[query]
kind = "moments"
p = {"2" = 1.0}
x = 1.0

[grids]
t = [0.5, 1.0, 2.0]
alpha = [0.3, 0.8]
"""


def test_moments_job(tmp_path):
    cfg = write(tmp_path, MOMENTS)
    out = tmp_path / "m.csv"
    assert run(cfg, output=str(out)) == 0
    rows = read_csv(out)
    assert rows[0] == COLUMNS["moments"]
    assert len(rows) == 7
    m = Pearson(1.0, 0.5, a0=0.5)
    x2 = monomial(build_basis(1, 2), (2,))
    for t, a, v in rows[1:]:
        assert float(v) == pytest.approx(moment_fractional(m, x2, 1.0, float(t), float(a)), rel=1e-11)


def test_json_mirrors_csv(tmp_path):
    cfg = write(tmp_path, MOMENTS)
    assert run(cfg, output=str(tmp_path / "a.csv")) == 0
    assert run(cfg, output=str(tmp_path / "a.json")) == 0
    rows = read_csv(tmp_path / "a.csv")
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc["columns"] == rows[0]
    for rec, row in zip(doc["rows"], rows[1:]):
        assert [rec[c] for c in doc["columns"]] == [float(v) for v in row]


def test_correlation_ratio_tends_to_one(tmp_path):
    cfg = write(tmp_path, """
        [model]
        kind = "Pearson"
        beta = 1.0
        theta = 0.0

        [query]
        kind = "correlation"

        [grids]
        s = [1.0, 10.0, 100.0, 1000.0]
        t = [1.0]
        alpha = [0.5]
    """)
    out = tmp_path / "c.csv"
    assert run(cfg, output=str(out)) == 0
    rows = read_csv(out)
    assert rows[0] == COLUMNS["correlation"]
    ratios = [float(r[-1]) for r in rows[1:]]
    assert abs(ratios[-1] - 1.0) < 0.01
    assert all(abs(b - 1) < abs(a - 1) for a, b in zip(ratios, ratios[1:]))
    assert float(rows[1][3]) == pytest.approx(fhat_scalar(0.5, 1.0, 1.0, 1.0), rel=1e-11)


def test_cross_moments_job(tmp_path):
    cfg = write(tmp_path, """
        [model]
        kind = "Pearson"
        beta = 1.0
        theta = 0.5
        a0 = 0.5

        [query]
        kind = "cross-moments"
        p = {"1" = 1.0}
        q = {"1" = 1.0}

        [grids]
        s = [0.0, 1.0]
        t = [1.0]
        alpha = [0.5]
    """)
    out = tmp_path / "x.csv"
    assert run(cfg, output=str(out)) == 0
    rows = read_csv(out)
    assert rows[0] == COLUMNS["cross-moments"]
    # zero lag: both equal the stationary second moment 0.25 + 0.25
    assert float(rows[1][2]) == pytest.approx(0.5, abs=1e-9)
    assert float(rows[1][3]) == pytest.approx(0.5, abs=1e-9)
    assert float(rows[2][2]) > float(rows[2][3])


def test_empty_grid_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, MOMENTS.replace("t = [0.5, 1.0, 2.0]", "t = []"))
    out = tmp_path / "never.csv"
    assert run(cfg, output=str(out)) == 1
    assert "grids.t: empty grid" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("mutation,path", [
    (("a0 = 0.5", "a0 = 0.5\ngamma = 2"), "model"),
    (('kind = "moments"', 'kind = "moments"\nfoo = 1'), "query.foo"),
    (("alpha = [0.3, 0.8]", "alpha = [1.3]"), "grids.alpha"),
    (('kind = "moments"', 'kind = "histogram"'), "query.kind"),
])
def test_config_errors_name_the_key(tmp_path, mutation, path):
    from fracpoly.cli import load_config

    cfg = write(tmp_path, MOMENTS.replace(*mutation))
    with pytest.raises(ConfigError) as info:
        parse_job(load_config(cfg))
    assert str(info.value).startswith(path)


def test_unreadable_and_malformed_files(tmp_path):
    assert run(tmp_path / "missing.toml") == 1
    assert run(write(tmp_path, "[model\n")) == 1


def test_cross_moments_need_one_alpha(tmp_path):
    cfg = {"model": {"kind": "Pearson", "beta": 1.0, "theta": 0.0}, "query": {"kind": "cross-moments"},
           "grids": {"s": [1.0], "t": [1.0], "alpha": [0.3, 0.5]}}
    with pytest.raises(ConfigError, match="exactly one alpha"):
        parse_job(cfg)


def test_numerical_failure_exit_code(tmp_path):
    # Brownian motion has no equilibrium, so correlation must fail cleanly
    cfg = write(tmp_path, """
        [model]
        kind = "BrownianMotion"

        [query]
        kind = "correlation"

        [grids]
        s = [1.0]
        t = [1.0]
        alpha = [0.5]
    """)
    assert run(cfg) == 2


VALIDATE = """
[query]
kind = "validate"

[sim]
n_paths = 2000
batch_size = 500
seed = 7
"""


def test_validate_is_deterministic(tmp_path):
    cfg = write(tmp_path, VALIDATE)
    outs = [tmp_path / f"v{i}.csv" for i in range(3)]
    assert main(["--config", str(cfg), "--output", str(outs[0])]) == 0
    assert main(["--config", str(cfg), "--output", str(outs[1])]) == 0
    assert main(["--config", str(cfg), "--output", str(outs[2]), "--jobs", "3"]) == 0
    a, b, c = (o.read_bytes() for o in outs)
    assert a == b == c
    rows = read_csv(outs[0])
    assert rows[0] == COLUMNS["validate"]
    assert {r[-1] for r in rows[1:]} == {"pass"}


def test_seed_override_changes_estimates(tmp_path):
    cfg = write(tmp_path, VALIDATE)
    o1, o2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
    main(["--config", str(cfg), "--output", str(o1)])
    main(["--config", str(cfg), "--output", str(o2), "--seed", "8"])
    r1, r2 = read_csv(o1), read_csv(o2)
    assert [r[1] for r in r1] == [r[1] for r in r2]  # closed forms unchanged
    assert [r[2] for r in r1[1:]] != [r[2] for r in r2[1:]]


def test_simulate_job_reports_seed(tmp_path):
    cfg = write(tmp_path, MOMENTS.replace('kind = "moments"', 'kind = "simulate"').replace(
        "alpha = [0.3, 0.8]", "alpha = [0.5]") + "\n[sim]\nn_paths = 500\nseed = 3\n")
    out = tmp_path / "sim.csv"
    assert run(cfg, output=str(out)) == 0
    rows = read_csv(out)
    assert rows[0] == COLUMNS["simulate"]
    assert all(r[3] == "500" and r[4] == "3" for r in rows[1:])


def test_json_config_and_module_entry_point(tmp_path):
    cfg = tmp_path / "job.json"
    cfg.write_text(json.dumps({
        "model": {"kind": "BrownianMotion"},
        "query": {"kind": "moments", "p": {"2": 1.0}, "x": 0.0},
        "grids": {"t": [1.0], "alpha": [0.5]},
    }))
    res = subprocess.run([sys.executable, "-m", "fracpoly", "--config", str(cfg)],
                         capture_output=True, text=True, check=True)
    assert res.stdout.splitlines() == ["t,alpha,value", "1,0.5,1.1283791671"]
