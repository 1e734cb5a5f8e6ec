import json

import pytest

from ttnflow.cli import main, parse_config, to_csv
from ttnflow.experiments import ConfigError, run


def test_minimal_config_defaults():
    cfg = parse_config({"tree": "[1,2]", "experiment": "exactness"})
    assert cfg.seed == 0 and cfg.t_end == 1.0
    assert cfg.step_sizes == (0.1, 0.01, 0.001)
    assert cfg.b_norms == (1e-1, 5e-2, 2.5e-2, 1.25e-2)


def test_negative_step_size_names_key():
    with pytest.raises(ConfigError, match="step_sizes"):
        parse_config(["exactness", "--tree", "[1,2]", "--step-sizes", "0.1,-0.2"])


def test_preset_expansion():
    cfg = parse_config(["exactness", "--tree", "fig2.1"])
    assert cfg.tree == "[[1,3,5],[4,2],6]"
    assert cfg.dims == 16 and cfg.ranks == 5
    assert cfg.shape().storage() == 1355
    cfg = parse_config(["exactness", "--tree", "fig2.1", "--dims", "4", "--ranks", "2"])
    assert cfg.dims == 4 and cfg.ranks == 2


def test_required_and_unknown_keys():
    with pytest.raises(ConfigError, match="tree"):
        parse_config({"experiment": "exactness"})
    with pytest.raises(ConfigError, match="colour"):
        parse_config({"experiment": "exactness", "tree": "[1,2]", "colour": 1})
    with pytest.raises(ConfigError, match="seed"):
        parse_config({"experiment": "exactness", "tree": "[1,2]", "seed": "x"})


def test_json_config_and_override(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"experiment": "exactness", "tree": "[[1,2],3]", "dims": 3,
                                "ranks": {"1": 2, "2": 2, "3": 2, "[1,2]": 2},
                                "step_sizes": [0.25], "t_end": 0.5}))
    cfg = parse_config(str(path))
    assert cfg.step_sizes == (0.25,)
    cfg = parse_config(["--config", str(path), "--seed", "3"])
    assert cfg.seed == 3 and cfg.experiment == "exactness"


def test_csv_format_and_reproducible(tmp_path, capsys):
    args = ["exactness", "--tree", "[[1,2],3]", "--dims", "3", "--ranks", "2",
            "--step-sizes", "0.25", "--t-end", "0.5"]
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text().splitlines()
    assert lines[0] == "experiment,h,t,abs_error,rel_error"
    assert len(lines) == 3
    fields = lines[2].split(",")
    assert fields[0] == "exactness" and fields[1] == "0.25" and fields[2] == "0.5"
    assert float(fields[3]) < 1e-10  # quadrature error at h = 0.25


def test_seventeen_digits():
    from ttnflow.experiments import ExperimentResult
    text = to_csv(ExperimentResult(("a", "b"), [("x", 0.1)]))
    assert text == "a,b\nx,0.10000000000000001\n"


def test_orthonormality_csv_quotes_nodes(capsys):
    cfg = parse_config(["orthonormality", "--tree", "[[1,2],3]", "--dims", "3", "--ranks", "2",
                        "--step-sizes", "0.5", "--t-end", "0.5"])
    text = to_csv(run(cfg))
    assert '"[1,2]"' in text
    assert text.splitlines()[0] == "experiment,h,t,node,deviation"


def test_main_reports_errors(capsys):
    assert main(["exactness", "--tree", "[1]"]) == 2
    assert "tree" in capsys.readouterr().err


def test_json_dims_and_rank_maps():
    cfg = parse_config(["exactness", "--tree", "[[1,2],3]", "--dims", '{"1": 3, "2": 4, "3": 2}',
                        "--ranks", '{"[1,2]": 2, "1": 2, "2": 2, "3": 2}'])
    shape = cfg.shape()
    assert shape.leaf_dims() == (3, 4, 2)
    assert shape.storage() == 30
    with pytest.raises(ConfigError, match="no rank given for 3"):
        parse_config(["exactness", "--tree", "[[1,2],3]", "--dims", "3",
                      "--ranks", '{"[1,2]": 2, "1": 2, "2": 2}'])
