import io
import json

import pytest
from flint import arb

from kamcap import cli
from kamcap.interval import working_precision

GOLDEN_CFG = """\
map = standard
eps = 0.06
omega = golden
N = 128
tol = 1e-33
precision = 267
tau = 1
gamma = 0.381966011250104
"""


def test_config_round_trip():
    text = GOLDEN_CFG + "torus = a.txt\n"
    cfg = cli.RunConfig.parse(text)
    assert cfg.to_text() == text
    assert cli.RunConfig.parse(cfg.to_text()).to_text() == text
    # comments and blank lines are dropped, the order is kept
    assert cli.RunConfig.parse("# x\n\nmap = standard  # twist\n").to_text() == "map = standard\n"


def test_config_errors():
    with pytest.raises(cli.UsageError):
        cli.RunConfig.parse("colour = blue\n")
    with pytest.raises(cli.UsageError):
        cli.RunConfig.parse("map standard\n")
    with pytest.raises(cli.UsageError):
        cli.RunConfig.parse("map = henon\n").model()
    assert cli.RunConfig.parse("N = 128 x 64\n").grid() == (128, 64)


def test_parse_omega():
    with working_precision(200):
        g = cli.parse_omega("golden")[0]
        assert g.overlaps((arb(5).sqrt() - 1) / 2)
        w = cli.parse_omega("golden / 16", "1e-40")[0]
        assert w.overlaps((arb(5).sqrt() - 1) / 32) and w.rad() >= arb("1e-40")
        nu, nu2 = cli.parse_omega("cubic")
        assert (nu ** 3 + nu - 1).contains(0) and nu2.overlaps(nu * nu)
        assert cli.parse_omega("0.3 +- 1e-20")[0].contains(arb("0.3") + arb("0.9e-20"))
        assert cli.parse_omega("quadratic 1 2")[0].overlaps(arb(3).sqrt() - 1)
        with pytest.raises(cli.UsageError):
            cli.parse_omega("cubic golden 3")


@pytest.mark.parametrize("argv", [["validate"], ["solve", "--set", "map=henon"], ["frobnicate"]])
def test_usage_errors_exit_two(argv, capfd):
    with pytest.raises(SystemExit) as ei:
        cli.main(argv)
    assert ei.value.code == 2


@pytest.fixture(scope="module")
def golden_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "g.cfg"
    cfg.write_text(GOLDEN_CFG + f"torus = {d / 'g.txt'}\nparams = {d / 'g.par'}\nreport = {d / 'g.json'}\n")
    codes = [cli.main([c, str(cfg)]) for c in ("solve", "tune", "validate")]
    return d, cfg, codes


def test_solve_tune_validate(golden_run):
    d, cfg, codes = golden_run
    assert codes == [0, 0, 0]
    rep = json.loads((d / "g.json").read_text())
    assert rep["verdict"] == "validated"
    assert {"C1", "C10", "C2_hat", "frak_c5", "b_E"} <= set(rep["ledger"])


def test_corrupted_torus_exit_one(golden_run, capfd):
    d, cfg, _ = golden_run
    lines = (d / "g.txt").read_text().splitlines()
    parts = lines[7].split()
    parts[0] = repr(float(parts[0]) + 1e-3)
    lines[7] = " ".join(parts)
    (d / "bad.txt").write_text("\n".join(lines) + "\n")
    assert cli.main(["validate", str(cfg), "--set", f"torus={d / 'bad.txt'}", "--set", "report="]) == 1


def test_validate_is_deterministic(golden_run):
    d, cfg, _ = golden_run
    texts = []
    for _ in range(2):
        out = io.StringIO()
        c = cli.RunConfig.load(cfg).override(["report="])
        cli.cmd_validate(c, out)
        texts.append("\n".join(ln for ln in out.getvalue().splitlines() if not ln.startswith("timing")))
    assert texts[0] == texts[1]


def test_dioph_and_russmann_rows(capfd):
    assert cli.main(["dioph", "--ab", "1,1"]) == 0
    out = capfd.readouterr().out.splitlines()
    row = out[1].split()
    assert row[:2] == ["1", "1"] and row[2].startswith("0.38196601125") and row[3] == "1.26"
    assert cli.main(["russmann", "--ab", "1,1", "--delta", "0.1"]) == 0
    row = capfd.readouterr().out.splitlines()[1].split()
    assert float(row[2]) == pytest.approx(6.53700395e-02, rel=2e-8)
    assert float(row[3]) <= 1.70002315e-02 * 1.01
    # no deltas: header only
    assert cli.main(["russmann", "--ab", "1,1", "--delta", ""]) == 0
    assert len(capfd.readouterr().out.splitlines()) >= 1


def test_plot_columns(golden_run, capfd):
    d, _, _ = golden_run
    assert cli.main(["plot", str(d / "g.txt")]) == 0
    rows = [ln.split() for ln in capfd.readouterr().out.splitlines() if ln and not ln.startswith("#")]
    assert len(rows) > 10 and all(len(r) >= 2 for r in rows)
