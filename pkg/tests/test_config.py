import math

import pytest

from partsym.config import ConfigError, RunConfig, format_config, load_config, parse_config


class TestRunConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == RunConfig()

    def test_parse(self):
        cfg = parse_config("# comment\nseed = 7\nbandwidth=0.2  # inline\nradius = inf\n")
        assert cfg.seed == 7 and cfg.bandwidth == 0.2 and math.isinf(cfg.radius)

    @pytest.mark.parametrize(
        "text, msg",
        [
            ("nope = 1\n", "unknown key 'nope'"),
            ("seed 1\n", "expected 'key = value'"),
            ("seed = 1.5\n", "cannot parse"),
            ("seed = 1\nseed = 2\n", "duplicate"),
        ],
    )
    def test_errors(self, text, msg):
        with pytest.raises(ConfigError, match=msg):
            parse_config(text)

    def test_roundtrip(self, tmp_path):
        cfg = RunConfig(seed=3, tol=1e-6, top_k=4)
        (tmp_path / "c.cfg").write_text(format_config(cfg))
        assert load_config(tmp_path / "c.cfg") == cfg

    def test_detect_config(self):
        d = RunConfig(vote_budget=0, top_k=3).detect_config()
        assert d.vote_budget is None and d.top_k == 3
        assert RunConfig(vote_budget=100).detect_config().vote_budget == 100

    def test_json_safe_dict(self):
        assert RunConfig().to_dict()["radius"] == "inf"
