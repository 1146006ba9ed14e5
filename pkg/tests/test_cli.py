"""Command-line behavior: subcommands, artifacts, exit codes, atomicity."""

import json
import os

import pytest

from bvib.cli import EXIT_CHAIN, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from bvib.consensus import load_chain, verify_chain

TOY_CONFIG = """
scenario:
  epochs: 1
  batches_per_epoch: 2
  vehicles_per_server: 2
  servers: 3
  seed: 11
model:
  encoder_widths: [16, 8, 4]
  decoder_widths: [2, 8, 10]
dataset:
  dim: 16
  per_class: 12
  train_size: 64
  test_size: 32
"""


@pytest.fixture()
def toy_config_path(tmp_path):
    path = tmp_path / "toy.yaml"
    path.write_text(TOY_CONFIG)
    return str(path)


def test_train_writes_all_artifacts(tmp_path, toy_config_path, capsys):
    out = tmp_path / "run"
    code = main(["train", "-c", toy_config_path, "-o", str(out)])
    assert code == EXIT_OK
    for name in ("metrics.csv", "summary.json", "chain.jsonl", "checkpoint.bin"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["kind"] == "train"
    assert summary["seed"] == 11
    chain = load_chain(out / "chain.jsonl")
    assert verify_chain(chain) is None
    assert summary["chain_digest"] == chain[-1].hash.hex()
    assert "chain digest" in capsys.readouterr().out


def test_train_twice_is_byte_identical(tmp_path, toy_config_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["train", "-c", toy_config_path, "-o", str(out_a)]) == EXIT_OK
    assert main(["train", "-c", toy_config_path, "-o", str(out_b)]) == EXIT_OK
    for name in ("metrics.csv", "summary.json", "chain.jsonl", "checkpoint.bin"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_test_subcommand_runs_checkpoint(tmp_path, toy_config_path, capsys):
    out = tmp_path / "run"
    main(["train", "-c", toy_config_path, "-o", str(out)])
    code = main(
        [
            "test", "-c", toy_config_path, "-o", str(out),
            "--checkpoint", str(out / "checkpoint.bin"), "--epochs", "2",
        ]
    )
    assert code == EXIT_OK
    assert (out / "test_summary.json").exists()
    summary = json.loads((out / "test_summary.json").read_text())
    assert summary["kind"] == "test"
    assert 0.0 <= summary["mean_accuracy"] <= 100.0


def test_output_dir_env_var(tmp_path, toy_config_path, monkeypatch):
    out = tmp_path / "from-env"
    monkeypatch.setenv("BVIB_OUTPUT_DIR", str(out))
    assert main(["train", "-c", toy_config_path]) == EXIT_OK
    assert (out / "metrics.csv").exists()


def test_latency_breakdown(capsys, toy_config_path):
    assert main(["latency", "-c", toy_config_path]) == EXIT_OK
    out = capsys.readouterr().out
    assert "expected_total_delay" in out
    assert "drop_probability" in out


def test_optimize_lambda_golden_case(capsys):
    code = main(
        ["optimize-lambda", "--vehicles", "2", "--spacing", "1.0", "--encode-delay", "1.0"]
    )
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "0.618033" in out
    assert "derivative" in out


def test_optimize_lambda_single_vehicle_fails(capsys):
    code = main(
        ["optimize-lambda", "--vehicles", "1", "--spacing", "1.0", "--encode-delay", "1.0"]
    )
    assert code != EXIT_OK


def test_sweep_attack_axis_monotone(tmp_path, toy_config_path):
    path = tmp_path / "sweep.csv"
    config = tmp_path / "ten.yaml"
    config.write_text(
        TOY_CONFIG.replace("servers: 3", "servers: 10").replace(
            "vehicles_per_server: 2", "vehicles_per_server: 1"
        )
    )
    code = main(["sweep", "--axis", "a", "-c", str(config), "--out", str(path)])
    assert code == EXIT_OK
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "attack_strength,expected_delay"
    values = [float(line.split(",")[1]) for line in lines[1:]]
    assert values == sorted(values)
    assert len(set(values)) == len(values)


def test_sweep_lambda_axis_u_shape(tmp_path, toy_config_path):
    path = tmp_path / "sweep.csv"
    code = main(
        ["sweep", "--axis", "lambda", "-c", toy_config_path, "--out", str(path), "--points", "21"]
    )
    assert code == EXIT_OK
    lines = path.read_text().strip().splitlines()
    values = [float(line.split(",")[1]) for line in lines[1:]]
    assert min(values) < values[0] and min(values) < values[-1]


def test_verify_chain_valid_and_tampered(tmp_path, toy_config_path, capsys):
    out = tmp_path / "run"
    main(["train", "-c", toy_config_path, "-o", str(out)])
    chain_path = out / "chain.jsonl"
    assert main(["verify-chain", str(chain_path)]) == EXIT_OK

    text = chain_path.read_text()
    lines = text.splitlines()
    record = json.loads(lines[1])
    record["term"] += 1
    lines[1] = json.dumps(record, sort_keys=True)
    tampered = out / "tampered.jsonl"
    tampered.write_text("\n".join(lines) + "\n")
    code = main(["verify-chain", str(tampered)])
    assert code == EXIT_CHAIN
    assert "INVALID at height 1" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario:\n  vehicles_per_server: 0\n")
    assert main(["train", "-c", str(bad)]) == EXIT_CONFIG


def test_missing_mnist_files_exit_code(tmp_path):
    config = tmp_path / "mnist.yaml"
    config.write_text(
        "scenario:\n  epochs: 1\n  batches_per_epoch: 1\n  vehicles_per_server: 1\n"
        "  servers: 1\n"
        "dataset:\n  kind: mnist\n"
        f"  images_path: {tmp_path}/missing-images.idx\n"
        f"  labels_path: {tmp_path}/missing-labels.idx\n"
        f"  test_images_path: {tmp_path}/missing-ti.idx\n"
        f"  test_labels_path: {tmp_path}/missing-tl.idx\n"
    )
    assert main(["train", "-c", str(config)]) == EXIT_DATA


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as excinfo:
        main(["train", "--bogus-flag"])
    assert excinfo.value.code == 2


def test_no_partial_artifacts_on_interrupt(tmp_path, toy_config_path):
    # atomic writes leave no temp files behind after a normal run
    out = tmp_path / "run"
    main(["train", "-c", toy_config_path, "-o", str(out)])
    leftovers = [name for name in os.listdir(out) if name.startswith(".tmp-")]
    assert leftovers == []
