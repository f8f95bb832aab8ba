import json
import os
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim import cli
from fedsim.analysis import final_metric, ordering, read_log
from fedsim.config import RunConfig, defaults_text, load_config, parse_config, serialize, to_dict
from fedsim.errors import ConfigError, DataError, SecureAbort

SMALL = [
    "--data.tc.n_train", "1000", "--data.tc.n_test", "200", "--model.feature_dim", "64",
    "--partition.n_clients", "10", "--federation.rounds", "3", "--federation.cohort_size", "5",
    "--client_opt.lr", "0.5",
]


def error_keys(exc):
    return [k for k, _ in exc.value.errors]


# config parsing


def test_minimal_config_gets_defaults():
    cfg = parse_config("root_seed: 7\n")
    assert cfg.federation.rounds == 22 and cfg.federation.cohort_size == 10
    assert cfg.partition.strategy == "label_dirichlet" and cfg.partition.alpha == 1.0
    assert cfg.client_opt.name == "sgd" and cfg.server_opt.lr == 1.0
    # every unset seed resolves to the root seed
    assert cfg.partition.seed == cfg.federation.seed == cfg.data.tc.seed == cfg.model.feature_seed == 7


def test_explicit_seed_kept():
    cfg = parse_config("root_seed: 7\npartition: {seed: 3}\n")
    assert cfg.partition.seed == 3 and cfg.federation.seed == 7


def test_negative_alpha_rejected_at_key():
    with pytest.raises(ConfigError) as err:
        parse_config("root_seed: 0\npartition:\n  alpha: -1\n")
    assert error_keys(err) == ["partition.alpha"]


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config("root_seed: 0\nfederation:\n  rounds: 3\n  roundz: 4\n")
    assert err.value.errors == [("federation.roundz", "unknown key")]


def test_type_mismatch_and_missing_root_seed():
    with pytest.raises(ConfigError) as err:
        parse_config("root_seed: 0\nfederation: {rounds: many}\n")
    assert error_keys(err) == ["federation.rounds"]
    with pytest.raises(ConfigError) as err:
        parse_config("federation: {rounds: 3}\n")
    assert error_keys(err) == ["root_seed"]


def test_runtime_constraints_surface_with_key_paths():
    with pytest.raises(ConfigError) as err:
        parse_config("root_seed: 0\npartition: {strategy: quantity_dirichlet}\n")
    assert error_keys(err) == ["partition.beta"]
    with pytest.raises(ConfigError) as err:
        parse_config("root_seed: 0\nfederation: {secure: true, cohort_size: 40, quantization: {bits: 20}}\n")
    assert "federation.quantization.headroom_bits" in error_keys(err)


def test_not_a_mapping():
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        parse_config("root_seed: [unclosed\n")


def test_overrides_and_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"root_seed": 1, "federation": {"rounds": 4}}))
    cfg = load_config(path, overrides=[("federation.rounds", "9"), ("client_opt.name", "adamw")])
    assert cfg.federation.rounds == 9 and cfg.client_opt.name == "adamw"


def test_defaults_text_is_a_valid_config():
    assert parse_config(defaults_text()) == RunConfig(root_seed=0)


configs = st.fixed_dictionaries({
    "root_seed": st.integers(0, 2**64 - 1),
    "partition": st.fixed_dictionaries({
        "strategy": st.sampled_from(["label_dirichlet", "quantity_dirichlet", "natural"]),
        "alpha": st.floats(1e-6, 1e9, allow_nan=False),
        "beta": st.floats(1e-3, 1e3, allow_nan=False),
        "n_clients": st.integers(1, 500),
    }),
    "federation": st.fixed_dictionaries({
        "rounds": st.integers(0, 100),
        "cohort_size": st.integers(1, 10),
        "secure": st.booleans(),
        "weighting": st.sampled_from(["size", "uniform"]),
    }),
    "client_opt": st.fixed_dictionaries({
        "name": st.sampled_from(["sgd", "adamw"]),
        "lr": st.floats(1e-5, 10, allow_nan=False),
        "proximal_mu": st.floats(0, 1, allow_nan=False),
    }),
    "model": st.fixed_dictionaries({"frozen": st.lists(st.sampled_from(["block0", "bias"]), unique=True)}),
    "log_path": st.one_of(st.none(), st.text(st.characters(codec="utf-8", exclude_categories=["Cs", "Cc"]),
                                                max_size=20)),
})


@settings(max_examples=60, deadline=None)
@given(doc=configs, fmt=st.sampled_from(["yaml", "json"]))
def test_serialize_round_trip(doc, fmt):
    cfg = parse_config(json.dumps(doc))
    again = parse_config(serialize(cfg, fmt))
    assert again == cfg
    assert serialize(again, fmt) == serialize(cfg, fmt)


# CLI


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_inspect_natural_two_groups(tmp_path, capsys):
    part = tmp_path / "p.json"
    code, out, _ = run_cli(capsys, "partition", "--strategy", "natural", "--out", str(part),
                           "--data.tc.n_train", "1000", "--data.tc.n_test", "0", "--data.tc.n_groups", "2")
    assert code == 0 and part.exists() and (tmp_path / "p.jsd.csv").exists()
    code, out, _ = run_cli(capsys, "inspect", str(part))
    assert code == 0
    assert "sizes: [500, 500]" in out and "clients: 2" in out
    assert "label histograms:" in out and "jsd mean off-diagonal:" in out


def test_partition_file_drives_run(tmp_path, capsys):
    part = tmp_path / "p.json"
    assert run_cli(capsys, "partition", "--alpha", "0.5", "--out", str(part), *SMALL)[0] == 0
    log = tmp_path / "run.jsonl"
    code, out, _ = run_cli(capsys, "run", "--partition.path", str(part), "--log", str(log), *SMALL)
    assert code == 0 and "rounds=3" in out
    config, records = read_log(log)
    assert config["partition"]["path"] == str(part) and len(records) == 3


def test_gen_data_then_run_from_manifest(tmp_path, capsys):
    data = tmp_path / "d.json"
    assert run_cli(capsys, "gen-data", "--out", str(data), "--seed", "4", *SMALL[:4])[0] == 0
    code, out, _ = run_cli(capsys, "run", "--data.path", str(data), *SMALL)
    assert code == 0 and "accuracy=" in out


def test_run_logs_are_reproducible(tmp_path, capsys):
    log = tmp_path / "run.jsonl"
    blobs = []
    for _ in range(2):
        assert run_cli(capsys, "run", "--log", str(log), "--no-timestamps", "--root-seed", "3", *SMALL)[0] == 0
        blobs.append(log.read_bytes())
    assert blobs[0] == blobs[1]
    first = json.loads(blobs[0].decode().splitlines()[0])
    # the resolved config is logged in full, defaults included
    assert first == {"config": to_dict(parse_config(serialize(RunConfig.model_validate(first["config"]))))}
    assert first["config"]["federation"]["batch_size"] == 10 and first["config"]["root_seed"] == 3


def test_timestamps_present_by_default(tmp_path, capsys):
    log = tmp_path / "run.jsonl"
    assert run_cli(capsys, "run", "--log", str(log), *SMALL)[0] == 0
    _, records = read_log(log)
    assert all("wall_ms" in r for r in records)


def test_centralized(tmp_path, capsys):
    log = tmp_path / "c.jsonl"
    code, out, _ = run_cli(capsys, "centralized", "--log", str(log), *SMALL)
    assert code == 0 and len(read_log(log)[1]) == 3


def test_alpha_sweep_logs_feed_ordering_check(tmp_path, capsys):
    logs = []
    for alpha in (1, 100):
        log = tmp_path / f"a{alpha}.jsonl"
        argv = ["run", "--log", str(log), "--no-timestamps", "--partition.alpha", str(alpha), *SMALL,
                "--partition.n_clients", "20", "--federation.rounds", "6"]
        assert run_cli(capsys, *argv)[0] == 0
        logs.append(log)
    rows, holds = ordering(logs)
    assert [r[0] for r in rows] == [100.0, 1.0]
    assert rows[0][1] == final_metric(logs[1]) and rows[1][1] == final_metric(logs[0])
    code, out, _ = run_cli(capsys, "compare", *map(str, logs))
    assert code == 0 and f"ordering holds: {'yes' if holds else 'no'}" in out


def test_exit_code_config(capsys):
    code, _, err = run_cli(capsys, "run", "--partition.alpha", "-1")
    assert code == 2 and "partition.alpha" in err
    assert run_cli(capsys, "run", "--federation.nope", "1")[0] == 2
    assert run_cli(capsys, "run", "--config", "/nonexistent/cfg.yaml")[0] == 2


def test_exit_code_data(tmp_path, capsys):
    assert run_cli(capsys, "inspect", str(tmp_path / "missing.json"))[0] == 3
    assert run_cli(capsys, "run", "--data.path", str(tmp_path / "missing.json"), *SMALL)[0] == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert run_cli(capsys, "inspect", str(bad))[0] == 3
    assert run_cli(capsys, "compare", str(bad))[0] == 3


def test_exit_code_transport(monkeypatch, capsys):
    monkeypatch.setenv("FEDSIM_JOIN_TIMEOUT", "0.3")
    assert run_cli(capsys, "run", "--distributed", "--no-spawn", *SMALL)[0] == 4


def test_exit_code_secure_abort(monkeypatch, capsys):
    def boom(args, extra):
        raise SecureAbort("client dropped", round=0, missing=(1,))

    monkeypatch.setattr(cli, "cmd_centralized", boom)
    assert run_cli(capsys, "centralized")[0] == 5


def test_error_classes_have_distinct_codes():
    assert (ConfigError.exit_code, DataError.exit_code, SecureAbort.exit_code) == (2, 3, 5)


def test_distributed_cli_matches_local(tmp_path):
    env = dict(os.environ, FEDSIM_JOIN_TIMEOUT="60")
    base = [sys.executable, "-m", "fedsim", "run", "--no-timestamps", "--federation.secure", "true", *SMALL,
            "--partition.n_clients", "3", "--federation.cohort_size", "3"]
    local = subprocess.run(base + ["--save-model", str(tmp_path / "local.npz")], env=env, capture_output=True,
                           text=True, timeout=120)
    dist = subprocess.run(base + ["--distributed", "--save-model", str(tmp_path / "dist.npz")], env=env,
                          capture_output=True, text=True, timeout=120)
    assert local.returncode == 0, local.stderr
    assert dist.returncode == 0, dist.stderr
    from fedsim.core import load

    a, b = load(tmp_path / "local.npz"), load(tmp_path / "dist.npz")
    assert abs(a.values - b.values).max() <= 1e-9
    assert local.stdout == dist.stdout


def test_help_documents_defaults():
    out = subprocess.run([sys.executable, "-m", "fedsim", "run", "--help"], capture_output=True, text=True,
                         timeout=60).stdout
    assert "root_seed" in out and "rounds: 22" in out
