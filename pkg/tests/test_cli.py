import subprocess
import sys

import pytest
import yaml

from viewplan.cli import build_parser, main

TINY_SCENE = {"plant_count": 1, "points_per_plant": 50, "ground_points": 50, "seed": 4}


def write_cfg(tmp_path, **fields):
    doc = {"schema_version": 1, **fields}
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(doc))
    return str(p)


class TestParser:
    def test_all_subcommands_present(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if a.dest == "command")
        assert set(sub.choices) == {
            "generate", "optimize", "baseline", "evaluate", "regret",
            "compare", "sweep-input-noise", "sweep-image-noise", "generalize",
        }

    def test_config_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["generate"])


class TestMain:
    def test_generate_roundtrip(self, tmp_path):
        cfg = write_cfg(tmp_path, kind="generate", scene=TINY_SCENE)
        out = tmp_path / "out"
        assert main(["generate", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "scene.ply").exists()

    def test_missing_required_field_exits_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, kind="optimize", scene=TINY_SCENE, bo={})
        rc = main(["optimize", "--config", cfg, "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "space" in capsys.readouterr().err

    def test_kind_subcommand_mismatch_exits_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, kind="generate", scene=TINY_SCENE)
        rc = main(["regret", "--config", cfg, "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "does not match" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, tmp_path):
        assert main(["generate", "--config", str(tmp_path / "no.yaml")]) == 2

    def test_seed_flag_overrides(self, tmp_path):
        cfg = write_cfg(tmp_path, kind="generate", scene=dict(TINY_SCENE))
        a, b = tmp_path / "a", tmp_path / "b"
        main(["generate", "--config", cfg, "--out", str(a)])
        main(["generate", "--config", cfg, "--out", str(b), "--seed", "9"])
        # scene seed is fixed in the config, so outputs stay identical;
        # drop the explicit scene seed to make the global seed matter
        assert (a / "scene.ply").read_bytes() == (b / "scene.ply").read_bytes()
        scene = dict(TINY_SCENE)
        del scene["seed"]
        cfg2 = write_cfg(tmp_path, kind="generate", scene=scene)
        c, d = tmp_path / "c", tmp_path / "d"
        main(["generate", "--config", cfg2, "--out", str(c), "--seed", "1"])
        main(["generate", "--config", cfg2, "--out", str(d), "--seed", "2"])
        assert (c / "scene.ply").read_bytes() != (d / "scene.ply").read_bytes()


class TestConsoleScript:
    def test_module_invocation(self, tmp_path):
        cfg = write_cfg(tmp_path, kind="generate", scene=TINY_SCENE)
        out = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "viewplan.cli", "generate", "--config", cfg,
             "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert (out / "scene.ply").exists()

    def test_exit_code_propagates(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "viewplan.cli", "generate", "--config",
             str(tmp_path / "missing.yaml")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2
        assert "config error" in proc.stderr
