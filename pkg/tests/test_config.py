"""Config parsing, validation, overrides, and round-trip."""

import dataclasses

import pytest

from ssg_lab.config import (
    GuidanceMethod,
    RunConfig,
    SamplerKind,
    SwapPolicy,
    config_to_text,
    load_config,
    parse_config_text,
    set_config_key,
    validate_config,
)
from ssg_lab.errors import ConfigError


def test_defaults_validate():
    validate_config(RunConfig())


def test_parse_sets_nested_fields():
    cfg = parse_config_text(
        "model.image_side = 8\n"
        "model.patch_side = 2\n"
        "guidance.method = ssg\n"
        "guidance.omega = 1.5\n"
        "sampler.kind = euler\n"
        "eval_samples = 64\n")
    assert cfg.model.image_side == 8
    assert cfg.guidance.method is GuidanceMethod.SSG
    assert cfg.guidance.omega == 1.5
    assert cfg.sampler.kind is SamplerKind.EULER_DISCRETE
    assert cfg.eval_samples == 64


def test_parse_skips_comments_and_blanks():
    cfg = parse_config_text("# a comment\n\n  \ntrain.steps = 7\n")
    assert cfg.train.steps == 7


def test_parse_reports_line_number():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("train.steps = 7\nnot a key value pair\n")


def test_unknown_key_paths_rejected():
    for path in ("model.nope", "nope.field", "nonsense", "model.image_side.extra"):
        with pytest.raises(ConfigError, match="unknown config key"):
            set_config_key(RunConfig(), path, "1")


def test_bad_value_names_the_path():
    with pytest.raises(ConfigError, match="train.steps"):
        set_config_key(RunConfig(), "train.steps", "many")
    with pytest.raises(ConfigError, match="guidance.method"):
        set_config_key(RunConfig(), "guidance.method", "telepathy")


def test_bool_spellings():
    cfg = RunConfig()
    for raw, expect in (("true", True), ("1", True), ("on", True), ("YES", True),
                        ("false", False), ("0", False), ("off", False), ("No", False)):
        set_config_key(cfg, "eval_conditional", raw)
        assert cfg.eval_conditional is expect
    with pytest.raises(ConfigError, match="eval_conditional"):
        set_config_key(cfg, "eval_conditional", "maybe")


def test_enum_values_case_insensitive():
    cfg = RunConfig()
    set_config_key(cfg, "guidance.policy", "SIMILAR")
    assert cfg.guidance.policy is SwapPolicy.SIMILAR


def test_roundtrip_through_text():
    cfg = RunConfig()
    cfg.guidance.method = GuidanceMethod.SSG
    cfg.guidance.omega = 2.25
    cfg.model.blocks = 3
    cfg.out_dir = "elsewhere"
    again = parse_config_text(config_to_text(cfg))
    assert again == cfg


def test_load_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("train.steps = 5\ntrain.batch = 4\n")
    cfg = load_config(str(path), overrides={"train.steps": 9, "guidance.omega": 0.5})
    assert cfg.train.steps == 9  # override wins over file
    assert cfg.train.batch == 4
    assert cfg.guidance.omega == 0.5


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read config file"):
        load_config("/nonexistent/path.cfg")


def test_load_config_validates_result(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("model.image_side = 15\n")  # not divisible by patch_side=4
    with pytest.raises(ConfigError, match="model.image_side"):
        load_config(str(path))


@pytest.mark.parametrize("path,value,match", [
    ("model.patch_side", "3", "divisible"),
    ("model.channels", "63", "divisible by heads|even"),
    ("schedule.beta_start", "0", "beta_start"),
    ("sampler.num_inference_steps", "5000", "num_inference_steps"),
    ("sampler.eta", "1.5", "eta"),
    ("guidance.omega", "-1", "omega"),
    ("guidance.spatial_r", "1.5", "spatial_r"),
    ("dataset.image_side", "8", "image_side"),
    ("train.learning_rate", "0", "learning_rate"),
    ("eval_samples", "1", "eval_samples"),
])
def test_validation_failures(path, value, match):
    cfg = RunConfig()
    set_config_key(cfg, path, value)
    with pytest.raises(ConfigError, match=match):
        validate_config(cfg)


def test_patch_side_equal_to_image_rejected():
    # a single token leaves nothing to swap
    cfg = RunConfig()
    set_config_key(cfg, "model.image_side", "4")
    set_config_key(cfg, "model.patch_side", "4")
    set_config_key(cfg, "dataset.image_side", "4")
    with pytest.raises(ConfigError, match="token count"):
        validate_config(cfg)


def test_default_text_covers_every_field():
    text = config_to_text(RunConfig())
    cfg = RunConfig()
    keys = {line.split("=")[0].strip() for line in text.splitlines() if "=" in line}
    sections = ("model", "schedule", "sampler", "guidance", "dataset", "train")
    for section_name in sections:
        for f in dataclasses.fields(type(getattr(cfg, section_name))):
            assert f"{section_name}.{f.name}" in keys
