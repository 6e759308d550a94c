import pytest

from dalap.config import (
    FRAMEWORKS,
    ExperimentConfig,
    derive_seed,
    load_config,
    parse_config,
    parse_framework_list,
)
from dalap.errors import ConfigurationError

EXAMPLE = """\
[experiment]
episodes = 50
seeds = 0,1,2
frameworks = dalap,per

[agent]
batch_size = 32
hidden_sizes = 16,16
eps_decay_steps = 500

[framework.per]
loss_kind = huber
"""


def test_parse_example():
    suite = parse_config(EXAMPLE)
    assert suite.seeds == [0, 1, 2] and suite.frameworks == ["dalap", "per"]
    assert suite.base.episodes == 50 and suite.base.batch_size == 32
    assert suite.base.hidden_sizes == (16, 16) and suite.base.eps_decay_steps == 500
    per = suite.config_for("per", 1)
    assert per.loss_kind == "huber" and per.framework == "per"
    assert suite.config_for("dalap", 1).resolved_loss_kind == "huber"
    assert len(suite.experiment_id) == 12


def test_every_field_has_a_key():
    import dataclasses

    lines = ["[agent]"]
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in ("framework", "env", "chain_length", "episodes", "budget_steps", "seed"):
            continue
        value = getattr(ExperimentConfig(), f.name)
        if isinstance(value, tuple):
            value = ",".join(map(str, value))
        lines.append(f"{f.name} = {value}")
    assert parse_config("\n".join(lines)).base == ExperimentConfig()


def test_unknown_key_names_line_and_section():
    text = "[experiment]\nepisodes = 10\n\n[agent]\nbatch_size = 8\nlearning_rate = 0.1\n"
    with pytest.raises(ConfigurationError, match=r"cfg\.ini:6 \[agent\] learning_rate: unknown key"):
        parse_config(text, "cfg.ini")


def test_unknown_section_rejected():
    with pytest.raises(ConfigurationError, match="unknown section"):
        parse_config("[training]\nepisodes = 3\n")


def test_bad_value_names_field():
    with pytest.raises(ConfigurationError, match=r":2 \[agent\] batch_size"):
        parse_config("[agent]\nbatch_size = lots\n", "x.ini")


def test_unknown_framework_names_valid_set():
    with pytest.raises(ConfigurationError, match="valid frameworks: uniform, per, lap, pser, alap, dalap"):
        parse_config("[experiment]\nframeworks = dalap,rank\n")
    with pytest.raises(ConfigurationError, match="valid frameworks"):
        parse_config("[framework.rank]\nalpha = 0.5\n")
    with pytest.raises(ConfigurationError, match="valid frameworks"):
        parse_framework_list("foo")


def test_invalid_values_rejected():
    for text in (
        "[agent]\ngamma = 1.0\n",
        "[agent]\nbatch_size = 64\ncapacity = 10\n",
        "[agent]\nalpha = 2\n",
        "[framework.per]\nloss_kind = l1\n",
    ):
        with pytest.raises(ConfigurationError):
            parse_config(text)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read config"):
        load_config(tmp_path / "missing.ini")


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, "dalap", 3) == derive_seed(0, "dalap", 3)
    seeds = {derive_seed(0, fw, k) for fw in FRAMEWORKS for k in range(10)}
    assert len(seeds) == 60
    assert all(0 <= s < 2**63 for s in seeds)


def test_example_config_matches_acceptance_settings():
    from pathlib import Path

    from dalap.checks import REPRODUCTION_BASE

    suite = load_config(Path(__file__).parent.parent / "configs" / "cartpole.ini")
    assert suite.base == REPRODUCTION_BASE
    assert suite.seeds == list(range(10)) and suite.frameworks == ["dalap", "per"]
