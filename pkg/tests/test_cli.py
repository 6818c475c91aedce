import json

import numpy as np
import pytest

from jointprior.cli import main
from jointprior.experiments.configs import (CokrigeConfig, ConfigError,
                                            MonodConfig, apply_scale,
                                            load_config)

TINY_COKRIGE = {
    "nx": 8, "ny": 5, "p_obs_nx": 2, "p_obs_ny": 2, "m_obs_nx": 2, "m_obs_ny": 1,
    "samples": 400, "burn_in": 50, "tracked_nodes": 3,
}


def write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


class TestConfigLoading:
    def test_defaults_validate(self):
        cfg = load_config(CokrigeConfig, None, None)
        assert cfg.nx == 26 and cfg.seed == 0

    def test_unknown_keys_rejected(self, tmp_path):
        path = write_config(tmp_path, {"nx": 10, "mystery_knob": 3})
        with pytest.raises(ConfigError, match="mystery_knob"):
            load_config(CokrigeConfig, path, None)

    def test_invalid_values_rejected(self, tmp_path):
        path = write_config(tmp_path, {"samples": 10, "burn_in": 10})
        with pytest.raises(ConfigError):
            load_config(CokrigeConfig, path, None)

    def test_overrides_win_over_file(self, tmp_path):
        path = write_config(tmp_path, {"seed": 3})
        cfg = load_config(CokrigeConfig, path, {"seed": 9})
        assert cfg.seed == 9

    def test_scale_applies_to_resolution_fields(self):
        cfg = load_config(MonodConfig, None, None)
        apply_scale(cfg, 0.5)
        assert cfg.grid_n == round(241 * 0.5)
        cfg2 = load_config(CokrigeConfig, None, None)
        apply_scale(cfg2, 0.5)
        assert cfg2.nx == 13 and cfg2.ny == 6

    def test_scale_respects_minimums(self):
        cfg = load_config(CokrigeConfig, None, None)
        apply_scale(cfg, 0.01)
        assert cfg.nx >= 4 and cfg.ny >= 3


class TestCliRuns:
    def test_verify_exits_zero(self, tmp_path, capsys):
        code = main(["verify", "--out", str(tmp_path / "v")])
        assert code == 0
        assert (tmp_path / "v" / "verify.json").exists()
        out = capsys.readouterr().out
        assert "10/10 checks passed" in out

    def test_sample_prior_outputs(self, tmp_path):
        code = main([
            "sample-prior", "--out", str(tmp_path / "sp"), "--scale", "0.5",
            "--seed", "1",
        ])
        assert code == 0
        out_dir = tmp_path / "sp"
        for name in ("shared_lattice_samples.csv", "mixed_boundary_samples.csv",
                     "manifest.json", "timings.json", "plot.py"):
            assert (out_dir / name).exists()
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["seed"] == 1
        assert manifest["config"]["nx"] == 10  # scaled from 20

    def test_factor_compare_runs(self, tmp_path):
        code = main(["factor-compare", "--out", str(tmp_path / "fc"), "--scale", "0.5"])
        assert code == 0
        table = np.loadtxt(tmp_path / "fc" / "realised_correlation.csv",
                           delimiter=",", skiprows=1)
        phi_principal = table[:, 2]
        # the symmetric factor keeps the split-sign correlation antisymmetric
        assert np.abs(phi_principal + phi_principal[::-1]).max() < 1e-9
        phi_cholesky = table[:, 3]
        assert np.abs(phi_cholesky + phi_cholesky[::-1]).max() > 0.1

    def test_unknown_config_key_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path, {"not_a_key": 1})
        code = main(["cokrige", "--config", str(path), "--out", str(tmp_path / "x")])
        assert code == 2
        assert "configuration error" in capsys.readouterr().err

    def test_missing_config_file_exit_code(self, tmp_path):
        code = main(["cokrige", "--config", str(tmp_path / "absent.json"),
                     "--out", str(tmp_path / "x")])
        assert code == 2

    def test_flag_misuse_exit_code(self, tmp_path):
        code = main(["sample-prior", "--samples", "10", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_cokrige_rerun_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, TINY_COKRIGE)
        for name in ("a", "b"):
            code = main(["cokrige", "--config", str(cfg), "--seed", "4",
                         "--out", str(tmp_path / name)])
            assert code == 0
        files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
        files_b = sorted(p.name for p in (tmp_path / "b").iterdir())
        assert files_a == files_b
        for name in files_a:
            if name == "timings.json":  # wall clock differs by design
                continue
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes(), name

    def test_monod_scaled_smoke(self, tmp_path):
        cfg = write_config(tmp_path, {"samples": 500, "burn_in": 100, "grid_n": 41})
        code = main(["monod", "--config", str(cfg), "--out", str(tmp_path / "mo")])
        assert code == 0
        table = np.loadtxt(tmp_path / "mo" / "density_at_truth.csv",
                           delimiter=",", skiprows=1)
        assert table.shape == (10, 3)

    def test_darcy_tiny_smoke(self, tmp_path):
        cfg = write_config(tmp_path, {
            "nx": 9, "ny": 5, "k_p": 4, "k_m": 6, "samples": 300, "burn_in": 60,
            "c_steps": 3, "u_obs_nx": 3, "u_obs_ny": 2, "p_wells": 2,
            "p_per_well": 2, "warm_start": True,
        })
        code = main(["darcy", "--config", str(cfg), "--out", str(tmp_path / "dy")])
        assert code == 0
        metrics = json.loads((tmp_path / "dy" / "metrics.json").read_text())
        assert set(metrics) >= {"joint", "independent", "c_posterior_medians"}
        chain = np.loadtxt(tmp_path / "dy" / "chain_reduced.csv", delimiter=",",
                           skiprows=1)
        assert chain.shape == (240, 4 + 6 + 2)
