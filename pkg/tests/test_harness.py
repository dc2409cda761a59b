import csv
import io

import numpy as np
import pytest

from fastsir.distributions import EpidemicParams, load_table
from fastsir.graph import generate_scale_free, generate_test_graph
from fastsir.harness.cli import main
from fastsir.harness.experiments import (CSV_COLUMNS, GridSpec, SweepConfig, obtain_table,
                                         precalc_command, run_hybrid, run_repetitions, sweep)
from fastsir.harness.verify import run_suite


@pytest.mark.parametrize("algorithm", ["naive", "fast"])
def test_p_zero_ensemble(algorithm):
    net = generate_test_graph("cycle", 8)
    cell = run_repetitions(net, EpidemicParams(0.0, 0.5), [0, 3], 1000, algorithm)
    assert cell.mean_infected == 2 and cell.std_infected == 0
    assert cell.histogram == {2: 1000}


@pytest.mark.parametrize("algorithm", ["naive", "fast"])
def test_p_one_q_one_floods(algorithm):
    net = generate_scale_free(300, seed=2)
    from fastsir.graph import reachable_from
    seed = net.max_degree_node()
    size = int(reachable_from(net, [seed]).sum())
    cell = run_repetitions(net, EpidemicParams(1.0, 1.0), [seed], 50, algorithm)
    assert cell.mean_infected == size and cell.std_infected == 0


@pytest.mark.parametrize("algorithm", ["naive", "fast"])
def test_path_three_mean(algorithm):
    cell = run_repetitions(generate_test_graph("path", 3), EpidemicParams(0.5, 1.0), [1],
                           100_000, algorithm)
    assert cell.mean_infected == pytest.approx(2.0, abs=0.01)


def test_cell_statistics_match_histogram():
    cell = run_repetitions(generate_scale_free(500, seed=3), EpidemicParams(0.3, 0.3),
                           "max-degree", 400, "fast")
    h = cell.histogram
    assert sum(h.values()) == cell.repetitions == 400
    sizes = np.repeat(list(h), list(h.values()))
    assert cell.mean_infected == pytest.approx(sizes.mean(), rel=1e-12)
    assert cell.std_infected == pytest.approx(sizes.std(), rel=1e-12)
    assert cell.wall_seconds > 0 and cell.table_source == "built"


def test_grid_parsing():
    g = GridSpec.parse("0.1:1:0.1")
    assert g.values() == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    assert GridSpec.parse("0.5:0.5:0.1").values() == [0.5]
    for bad in ("0.1:1", "0.5:0.2:0.1", "0:1:0", "0:1.5:0.5"):
        with pytest.raises(ValueError):
            GridSpec.parse(bad)
    with pytest.raises(ValueError):
        SweepConfig(GridSpec.parse("0.1:1:0.1"), GridSpec.parse("0:1:0.1"))
    with pytest.raises(ValueError):
        SweepConfig(GridSpec.single(0.5), GridSpec.single(0.5), repetitions=0)


def test_full_grid_has_100_cells():
    cfg = SweepConfig(GridSpec.parse("0.1:1:0.1"), GridSpec.parse("0.1:1:0.1"), 3, "fast")
    cells = sweep(generate_test_graph("star", 6), cfg)
    assert len(cells) == 100
    assert {(c.p, c.q) for c in cells} == {(p / 10, q / 10) for p in range(1, 11) for q in range(1, 11)}


def test_degenerate_sweep_equals_run_repetitions():
    net = generate_test_graph("cycle", 9)
    params = EpidemicParams(0.4, 0.3)
    cfg = SweepConfig(GridSpec.single(0.4), GridSpec.single(0.3), 500, "naive", (2,), 17,
                      keep_histogram=True)
    (cell,) = sweep(net, cfg)
    ref = run_repetitions(net, params, [2], 500, "naive", 17)
    assert np.array_equal(cell.totals, ref.totals)
    assert (cell.mean_infected, cell.std_infected, cell.mean_duration, cell.histogram) == \
        (ref.mean_infected, ref.std_infected, ref.mean_duration, ref.histogram)


def _strip_timing(text):
    rows = list(csv.reader(io.StringIO(text)))
    keep = [i for i, c in enumerate(CSV_COLUMNS) if c not in ("wall_seconds", "ratio_naive_over_fast")]
    return [r if r[0].startswith("#") else [r[i] for i in keep] for r in rows]


def test_sweep_csv_layout_and_determinism(tmp_path):
    net = generate_scale_free(400, seed=5)
    cfg = SweepConfig(GridSpec.parse("0.2:0.4:0.2"), GridSpec.parse("0.5:1:0.5"), 50, "both",
                      master_seed=99, dist_cache_path=str(tmp_path / "cache"))
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        sweep(net, cfg, buf, "sf400")
        outs.append(buf.getvalue())
    lines = outs[0].splitlines()
    assert lines[0] == "# network: sf400"
    assert lines[1] == f"# seed_nodes: {net.max_degree_node()}"
    assert lines[2] == "# master_seed: 99"
    assert lines[4] == ",".join(CSV_COLUMNS)
    body = list(csv.reader(lines[5:]))
    assert len(body) == 8 and [r[2] for r in body[:2]] == ["naive", "fast"]
    assert all(float(r[8]) > 0 for r in body)
    assert _strip_timing(outs[0]) == _strip_timing(outs[1])
    assert len(list((tmp_path / "cache").iterdir())) == 4


def test_ratio_blank_for_single_algorithm():
    cfg = SweepConfig(GridSpec.single(0.3), GridSpec.single(0.5), 20, "naive")
    buf = io.StringIO()
    sweep(generate_test_graph("path", 6), cfg, buf)
    assert buf.getvalue().splitlines()[-1].endswith(",")


def test_serial_and_parallel_outcomes_identical():
    net = generate_scale_free(600, seed=6)
    params = EpidemicParams(0.3, 0.4)
    for alg in ("naive", "fast"):
        serial = run_repetitions(net, params, "max-degree", 301, alg, 4)
        parallel = run_repetitions(net, params, "max-degree", 301, alg, 4, workers=3)
        assert np.array_equal(serial.totals, parallel.totals)
        assert np.array_equal(serial.durations, parallel.durations)


def test_each_seed_mode_covers_every_node():
    net = generate_test_graph("star", 4)
    cell = run_repetitions(net, EpidemicParams(0.0, 1.0), "each", 5, "naive")
    assert cell.repetitions == 20 and cell.mean_infected == 1


def test_dist_cache_is_reused(tmp_path):
    net = generate_test_graph("complete", 6)
    params = EpidemicParams(0.3, 0.2)
    first = obtain_table(net, params, tmp_path)
    second = obtain_table(net, params, tmp_path)
    assert (first.source, second.source) == ("built", "loaded")
    assert first.table == second.table


def test_hybrid_accounting_with_stubs():
    calls = []

    def stub(name):
        def run(start, count):
            calls.append((name, start, count))
            return np.full(count, 1), np.full(count, 1)
        return run

    cell = run_hybrid(None, EpidemicParams(0.5, 0.5), None, 40, 20, runners={"naive": stub("naive"),
                                                                            "fast": stub("fast")})
    assert cell.repetitions == 40 and cell.selected in ("naive", "fast")
    assert calls == [("naive", 0, 20), ("fast", 20, 20)]
    cell = run_hybrid(None, EpidemicParams(0.5, 0.5), None, 100, 10, runners={"naive": stub("naive"),
                                                                             "fast": stub("fast")})
    assert cell.repetitions == 100
    assert calls[-1][1:] == (20, 80)
    with pytest.raises(ValueError):
        run_hybrid(None, EpidemicParams(0.5, 0.5), None, 10, 1, runners={})
    with pytest.raises(ValueError):
        run_hybrid(None, EpidemicParams(0.5, 0.5), None, 10, 6, runners={})


def test_hybrid_picks_fast_at_low_q():
    net = generate_scale_free(20_000, seed=1)
    cell = run_hybrid(net, EpidemicParams(0.2, 0.1), "max-degree", 60, 10)
    assert cell.selected == "fast"
    assert cell.repetitions == 60


def test_hybrid_statistics_agree_with_plain_runs():
    net = generate_scale_free(2000, seed=2)
    params = EpidemicParams(0.2, 0.3)
    hyb = run_hybrid(net, params, "max-degree", 2000, 100)
    ref = run_repetitions(net, params, "max-degree", 2000, "naive")
    se = np.hypot(hyb.std_infected, ref.std_infected) / np.sqrt(2000)
    assert abs(hyb.mean_infected - ref.mean_infected) < 4 * se


def test_precalc_roundtrip(tmp_path, capsys):
    out = tmp_path / "t.fsir"
    table, seconds = precalc_command(0.5, 0.5, 200, out)
    assert "built CDF table" in capsys.readouterr().out
    with open(out, "rb") as fh:
        assert load_table(fh) == table
    assert table.degrees == tuple(range(201))
    with pytest.raises(ValueError):
        precalc_command(0.5, 0.5, 0, tmp_path / "x.fsir")


def test_verify_suites_pass_and_negative_control_fails():
    for suite in ("sampling", "tree", "equivalence"):
        assert all(r.passed for r in run_suite(suite)), suite
    assert not all(r.passed for r in run_suite("equivalence", corrupt=True))


def test_cli(tmp_path, capsys):
    edges = tmp_path / "g.txt"
    edges.write_text("# tiny\n1 2\n2 3\n3 4\n4 1\n1 3\n")
    out = tmp_path / "run.csv"
    assert main(["run", "--network", str(edges), "--p", "0.5", "--q", "0.5", "--reps", "200",
                 "--rng-seed", "7", "--out", str(out)]) == 0
    text = out.read_text().splitlines()
    assert text[0] == f"# network: {edges}" and text[1] == "# seed_nodes: 0"
    assert len(text) == 7
    assert main(["sweep", "--generate", "path:4", "--p-grid", "0.1:0.3:0.1", "--q-grid", "1:1:1",
                 "--algorithm", "fast", "--reps", "10", "--seed-node", "0,3"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 8
    assert main(["precalc", "--p", "0.2", "--q", "0.1", "--k-max", "0", "--out",
                 str(tmp_path / "x")]) == 2
    assert main(["verify", "sampling"]) == 0
    assert main(["verify", "equivalence", "--corrupt-cdf"]) == 1
