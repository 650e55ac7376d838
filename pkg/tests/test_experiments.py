import csv
import json
import math

import pytest
from pydantic import ValidationError

from app.core.exceptions import ConfigurationException
from app.main import build_parser, main, resolve_config
from app.schemas.experiment import ExperimentConfig
from app.schemas.states import EnergyBudget
from app.services.experiments import (
    ExperimentResult,
    coefficient_profile_ok,
    config_hash,
    render_csv,
    turning_point,
)


def _read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# schema=1 config_sha256="), f"unexpected header {lines[0]}"
    return lines[0], list(csv.DictReader(lines[1:]))


def test_render_csv_formats_cells():
    result = ExperimentResult(
        "fig4",
        ["n_b", "family", "snr", "converged", "a_0"],
        [{"n_b": 0.5, "family": "nphoton", "snr": None, "converged": True}],
        {"schema": "1", "config_sha256": "abc"},
    )
    lines = render_csv(result).splitlines()
    assert lines[0] == "# schema=1 config_sha256=abc"
    assert lines[1] == "n_b,family,snr,converged,a_0"
    assert lines[2] == "5.0000000000e-01,nphoton,NA,true,"


def test_config_hash_ignores_output_location():
    base = ExperimentConfig(experiment="fig3b")
    assert config_hash(base) == config_hash(base.model_copy(update={"out": "x.csv", "jobs": 4}))
    assert config_hash(base) != config_hash(base.model_copy(update={"eta": 2e-3}))


def test_flags_override_config_file(tmp_path):
    """Precedence: command-line flags, then config file, then experiment defaults"""
    env = tmp_path / "run.env"
    env.write_text("STEPS=5\nETA=2e-3\nDERIVATIVE=finite-diff\n", encoding="utf-8")
    args = build_parser().parse_args(["fig4", "--config", str(env), "--steps", "3"])
    config = resolve_config(args)
    assert config.steps == 3
    assert config.eta == pytest.approx(2e-3)
    assert config.derivative.value == "finite_difference"
    assert config.signal_only is True
    assert config.nb_max == 3.0


def test_unknown_config_key_exits_with_config_error(tmp_path):
    env = tmp_path / "bad.env"
    env.write_text("STEPS=3\nBACKGROUND=2\n", encoding="utf-8")
    out = tmp_path / "out.csv"
    assert main(["fig3b", "--config", str(env), "--out", str(out)]) == 2
    assert not out.exists()


def test_invalid_grid_writes_nothing(tmp_path):
    out = tmp_path / "out.csv"
    assert main(["fig3b", "--nb-min", "2", "--nb-max", "1", "--out", str(out)]) == 2
    assert not out.exists()


def test_qfi_point_coherent_pair(tmp_path):
    out = tmp_path / "point.csv"
    assert main(["qfi-point", "--state", "coherent-pair", "--nb", "0", "--out", str(out)]) == 0
    header, rows = _read_csv(out)
    assert "index_convention=" in header
    assert float(rows[0]["qfi"]) == pytest.approx(8.0, rel=1e-4)
    assert float(rows[0]["signal_mean"]) == pytest.approx(2.0, abs=1e-8)
    assert rows[0]["qfi_analytic"] == ""


def test_fig3b_anchors_and_json_mirror(tmp_path):
    out = tmp_path / "fig3b.csv"
    assert main(["fig3b", "--nb-max", "0.5", "--steps", "2", "--out", str(out), "--json"]) == 0
    _, rows = _read_csv(out)
    assert [float(r["n_b"]) for r in rows] == [0.0, 0.5]
    first = rows[0]
    assert float(first["qfi_nphoton_opt"]) == pytest.approx(16.0, rel=1e-4)
    assert float(first["qfi_tmsv"]) == pytest.approx(8.0, rel=1e-4)
    assert float(first["qfi_coherent"]) == pytest.approx(8.0, rel=1e-4)
    assert float(first["qfi_nphoton_opt"]) > float(first["qfi_tmsv"])
    second = rows[1]
    assert float(second["qfi_nphoton_opt"]) > float(second["qfi_tmsv"]) > float(second["qfi_coherent"])
    mirror = json.loads((tmp_path / "fig3b.csv.json").read_text(encoding="utf-8"))
    assert len(mirror["rows"]) == 2
    assert mirror["header"]["schema"] == "1"


def test_fig4_rows_per_family(tmp_path):
    out = tmp_path / "fig4.csv"
    assert main(["fig4", "--nb-min", "0.5", "--nb-max", "1", "--steps", "2", "--out", str(out)]) == 0
    _, rows = _read_csv(out)
    assert [(float(r["n_b"]), r["family"]) for r in rows] == [
        (0.5, "coherent-pair"), (0.5, "nphoton"), (1.0, "coherent-pair"), (1.0, "nphoton"),
    ]
    for r in rows:
        assert float(r["renyi2"]) < 1e-5
        assert abs(float(r["n0_mean"])) <= 1e-12
        assert float(r["eq6_residual"]) < 1e-9


def test_turning_point_detection():
    rows = [{"n_b": n_b, "family": "nphoton", "snr": snr} for n_b, snr in ((0, 3.0), (0.5, 1.0), (1, 2.0))]
    assert turning_point(rows) == 0.5
    assert turning_point(rows[:2]) is None



def test_coefficient_profile_follows_the_background():
    assert coefficient_profile_ok([0.62457, 0.60832, 0.43367, 0.22314, 0.04457], 1.0)
    assert coefficient_profile_ok([0.59631, 0.61466, 0.45765, 0.23909, 0.0], 2.0)
    assert not coefficient_profile_ok([0.59631, 0.61466, 0.45765, 0.23909, 0.0], 0.5)
    assert not coefficient_profile_ok([0.6, 0.6, 0.4, 0.5, 0.0], 3.0)
    assert coefficient_profile_ok([0.0, 0.0, 0.0, 0.0, 1.0], 0.0)


@pytest.mark.slow
def test_verify_suite_passes(tmp_path):
    out = tmp_path / "verify.csv"
    assert main(["verify", "--out", str(out)]) == 0
    _, rows = _read_csv(out)
    failed = [r["name"] for r in rows if r["passed"] == "false" and r["informational"] == "false"]
    assert not failed, f"failed checks: {failed}"


def test_degenerate_range_is_a_single_point():
    config = ExperimentConfig(experiment="fig4", nb_min=1.0, nb_max=1.0, steps=2)
    assert config.grid() == [1.0]


def test_json_without_out_is_rejected_before_running(capsys):
    assert main(["fig3b", "--nb-max", "0.5", "--steps", "2", "--json"]) == 2
    assert capsys.readouterr().out == ""


def test_zero_energy_is_a_config_error(tmp_path):
    out = tmp_path / "out.csv"
    assert main(["fig4", "--energy", "0", "--out", str(out)]) == 2
    assert not out.exists()
    with pytest.raises(ValidationError):
        EnergyBudget(total_mean_photons=0.0)


def test_combiner_sweep_rows_per_phase(tmp_path):
    out = tmp_path / "fig4.csv"
    assert main(["fig4", "--nb-min", "0.5", "--nb-max", "0.5", "--combiner-sweep", "--out", str(out)]) == 0
    _, rows = _read_csv(out)
    assert [(r["family"], float(r["varphi_combiner"])) for r in rows] == [
        ("coherent-pair", 0.0), ("nphoton", 0.0),
        ("coherent-pair", pytest.approx(math.pi / 2)), ("nphoton", pytest.approx(math.pi / 2)),
    ]
    assert rows[1]["a_0"] == rows[3]["a_0"]


def test_combiner_phases_from_config_file(tmp_path):
    env = tmp_path / "run.env"
    env.write_text("COMBINER_PHASES=0,1.5\n", encoding="utf-8")
    config = resolve_config(build_parser().parse_args(["fig4", "--config", str(env)]))
    assert config.phases() == [0.0, 1.5]
    both = build_parser().parse_args(["fig4", "--combiner-phase", "1", "--combiner-sweep"])
    with pytest.raises(ConfigurationException):
        resolve_config(both)


def test_zero_background_nphoton_receiver_is_missing(tmp_path):
    """The n_b = 0 optimum is the pure N-photon signal, whose receiver mean has no eta slope"""
    out = tmp_path / "fig4.csv"
    assert main(["fig4", "--nb-min", "0", "--nb-max", "0", "--out", str(out)]) == 0
    _, rows = _read_csv(out)
    coherent, nphoton = rows
    assert nphoton["family"] == "nphoton"
    assert nphoton["snr"] == "NA" and nphoton["delta_eta"] == "NA"
    assert sorted(float(nphoton[f"a_{n}"]) for n in range(5)) == [0.0, 0.0, 0.0, 0.0, 1.0]
    assert float(coherent["snr"]) > 0


def test_rerun_is_byte_identical(tmp_path):
    paths = [tmp_path / "first.csv", tmp_path / "second.csv"]
    for path in paths:
        assert main(["fig3b", "--nb-max", "1", "--steps", "3", "--seed", "3", "--out", str(path)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
