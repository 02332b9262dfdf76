import csv
import io
import json
import statistics

import numpy as np
import pytest

from ccesa.config import experiment_config, parse_kv, round_config
from ccesa.errors import ConfigError
from ccesa.harness import (
    AUTO,
    RESULT_COLUMNS,
    ExperimentConfig,
    ExperimentResult,
    bench_timing,
    emit,
    load_result,
    monte_carlo,
    render_pstar_table,
    resolve_p,
    resolve_t,
)
from ccesa.protocol import DropoutSchedule, ProtocolParams, random_models, run_round
from ccesa.graph import gen_erdos_renyi
from ccesa.seeds import SEED_ENV_VAR, default_seed, derive_seed


def _strip_timing(result):
    doc = result.to_dict()
    for c in doc["cells"]:
        c.pop("step_ms")
    return doc


# -- seeds and resolution ------------------------------------------------------------


def test_seed_env_override(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "77")
    assert default_seed() == 77
    monkeypatch.delenv(SEED_ENV_VAR)
    assert default_seed() == 2021
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2) != derive_seed(1, "a", 3)


def test_auto_resolution():
    assert resolve_p(100, 0.0, AUTO) == pytest.approx(0.6362, abs=1e-4)
    assert resolve_p(10, 0.0, AUTO) == 1.0  # p* above one is clipped
    assert resolve_t(100, 0.6362, AUTO) == 43
    assert resolve_t(100, 0.6362, 7) == 7


# -- Monte Carlo ---------------------------------------------------------------------


def test_monte_carlo_deterministic_and_parallel_invariant():
    cfg = ExperimentConfig(n=[30], q_total=[0.0, 0.1], trials=40, seed=5)
    a = monte_carlo(cfg)
    b = monte_carlo(cfg, parallel=2)
    assert _strip_timing(a) == _strip_timing(b)
    c = monte_carlo(ExperimentConfig(n=[30], q_total=[0.0, 0.1], trials=40, seed=6))
    assert _strip_timing(a) != _strip_timing(c)


def test_complete_graph_never_fails():
    cfg = ExperimentConfig(n=[12], p=[1.0], t=[1, 6, 12], trials=50, seed=1)
    for cell in monte_carlo(cfg).cells:
        assert cell.reliability_failures == 0
        assert cell.privacy_violations == 0


def test_counts_reconcile():
    cfg = ExperimentConfig(n=[20], q_total=[0.3], p=[0.3], t=[4], trials=60, seed=2)
    (cell,) = monte_carlo(cfg).cells
    assert 0 < cell.reliability_failures <= cell.trials
    assert cell.reliability_failure_rate == cell.reliability_failures / cell.trials
    assert 0.0 <= cell.privacy_violation_rate <= 1.0
    assert cell.bits_source == "nominal"


def test_full_protocol_mode():
    cfg = ExperimentConfig(n=[8], q_total=[0.1], p=[0.7], t=[3], m=[4], trials=25, seed=3,
                           full_protocol=True)
    (cell,) = monte_carlo(cfg).cells
    assert cell.aggregate_mismatches == 0
    assert cell.bits_source == "transcript"
    assert "client_step1" in cell.step_ms


def test_nominal_bits_match_transcript_without_dropouts():
    base = dict(n=[10], q_total=[0.0], p=[0.5], t=[2], m=[3], trials=5, seed=4)
    nominal = monte_carlo(ExperimentConfig(**base)).cells[0]
    full = monte_carlo(ExperimentConfig(**base, full_protocol=True)).cells[0]
    assert nominal.mean_client_bits == full.mean_client_bits


def test_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig(n=[], trials=3).cells()
    with pytest.raises(ConfigError):
        ExperimentConfig(n=[10], trials=0).cells()
    with pytest.raises(ConfigError):
        ExperimentConfig(n=[10], t=[11], p=[0.5]).cells()
    with pytest.raises(ConfigError):
        ExperimentConfig(n=[100], q_total=[0.5]).cells()  # p* undefined


# -- output ----------------------------------------------------------------------------


def test_empty_result_is_header_only_csv():
    text = emit(ExperimentResult([], 1), "csv")
    assert text == ",".join(RESULT_COLUMNS) + "\n"


def test_json_roundtrip_is_byte_identical(tmp_path):
    res = monte_carlo(ExperimentConfig(n=[15, 25], trials=10, seed=9))
    path = tmp_path / "r.json"
    text = emit(res, "json", str(path))
    assert path.read_text() == text
    assert emit(load_result(text), "json") == text


def test_csv_columns_stable():
    res = monte_carlo(ExperimentConfig(n=[15], q_total=[0.0, 0.05], trials=5, seed=9))
    rows = list(csv.DictReader(io.StringIO(emit(res, "csv"))))
    assert len(rows) == 2
    assert list(rows[0]) == RESULT_COLUMNS
    with pytest.raises(ConfigError):
        emit(res, "xml")


def test_pstar_table_layout():
    rows = list(csv.reader(io.StringIO(render_pstar_table())))
    assert rows[0] == ["q_total/n"] + [str(n) for n in range(100, 1001, 100)]
    assert [r[0] for r in rows[1:]] == ["0.0", "0.01", "0.05", "0.1"]
    assert rows[1][1] == "0.636" and rows[4][10] == "0.311"
    doc = json.loads(render_pstar_table(fmt="json"))
    assert len(doc["p_star"]) == 4 and len(doc["p_star"][0]) == 10


# -- config files ------------------------------------------------------------------------


def test_parse_experiment_config():
    cfg = experiment_config("""
        # sweep
        n = 50, 100
        q = 0.02
        p = auto, 0.5
        t = auto
        trials = 7
        seed = 3
        full_protocol = no
    """)
    assert cfg.n == [50, 100] and cfg.p == [AUTO, 0.5] and cfg.trials == 7
    assert cfg.q_total[0] == pytest.approx(1 - 0.98 ** 4)
    assert len(cfg.cells()) == 4


@pytest.mark.parametrize("text", [
    "n = 5\nbogus = 1", "n = 5\nn = 6", "n 5", "n = 5\nq = 0.1\nq_total = 0.1",
    "n = five", "q_total = 0.1", "n = 5\ngraph = g.txt", "n = 5\ntrials = 1, 2", "n =",
])
def test_bad_experiment_configs(text):
    with pytest.raises(ConfigError):
        experiment_config(text)


def test_round_config_graph_path(tmp_path):
    cfg = round_config("graph = g.txt\nt = 2\n", tmp_path)
    assert cfg["graph"] == str((tmp_path / "g.txt").resolve())
    assert cfg["t"] == 2 and cfg["p"] == AUTO
    with pytest.raises(ConfigError):
        round_config("t = 2\n")
    assert parse_kv("a_K = 128  # bits\n") == {"a_K": ["128"]}


# -- timing trends ------------------------------------------------------------------------


def test_bench_step_ratios_follow_density():
    res = bench_timing(60, m=2000, seed=1)
    for step in ("client_step1", "client_step2"):
        assert res.within(step), (step, res.ratio(step), res.p)
    assert set(res.to_dict()["ratios"]) >= {"client_step1", "client_step2"}


def test_step2_time_linear_in_model_size():
    g = gen_erdos_renyi(20, 0.5, np.random.default_rng(0))

    def step2_ms(m):
        params = ProtocolParams(n=20, t=3, m=m, R=32)
        runs = []
        for s in range(3):
            ms = random_models(20, m, 32, np.random.default_rng(s))
            out = run_round(params, g, DropoutSchedule.none(), ms, seed=s)
            runs.append(statistics.fmean(out.timings["client_step2"]))
        return min(runs)

    ratio = step2_ms(80_000) / step2_ms(40_000)
    assert 1.4 <= ratio <= 2.8


def test_sa_step1_scales_linearly_in_n():
    # step 1 cost does not depend on the model size, so keep m tiny
    small = bench_timing(100, m=10, seed=2)
    large = bench_timing(500, m=10, seed=2)
    ratio = large.sa_ms["client_step1"] / small.sa_ms["client_step1"]
    assert 3.0 <= ratio <= 8.0
