"""Config text parsing and schema validation."""

import numpy as np
import pytest

from spinqds.config import (
    ConfigError,
    build_shell_family,
    parse_config_text,
    parse_model,
    schema_text,
)

MINIMAL = """
model {
  local_dim = 2
  lattice_dim = 1
  flavor = algebra_form
  shell {
    level = 0
    sites = [[0]]
    matrix = [[0+0i, 1+0i], [1+0i, 0+0i]]
  }
}
study {
  type = cp_sweep
  times = [0.1, 0.3, 1.0]
}
"""


def test_minimal_config_parses():
    spec = parse_model(MINIMAL)
    assert spec.local_dim == 2 and spec.flavor == "algebra_form"
    assert spec.shells[0].level == 0
    assert np.array_equal(spec.shells[0].matrix, [[0, 1], [1, 0]])
    assert spec.study.kind == "cp_sweep"
    assert spec.study.times == (0.1, 0.3, 1.0)


def test_complex_literals():
    root = parse_config_text("a = [1+2i, -0.5-2e-3i, 2i, -1i, 3, 0.25]")
    values, _ = root.values["a"]
    assert values[0] == 1 + 2j
    assert values[1] == complex(-0.5, -2e-3)
    assert values[2] == 2j
    assert values[3] == -1j
    assert values[4] == 3 and isinstance(values[4], int)
    assert values[5] == 0.25


def test_comments_and_nesting():
    root = parse_config_text("""
    outer {  # trailing comment
      # full-line comment
      inner { key = value }
      flag = true
    }
    """)
    outer = root.subsections("outer")[0]
    assert outer.values["flag"][0] is True
    assert outer.subsections("inner")[0].values["key"][0] == "value"


def test_parse_error_reports_line():
    bad = "model {\n  local_dim = = 2\n}"
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text(bad)


def test_unclosed_section_rejected():
    with pytest.raises(ConfigError, match="unclosed"):
        parse_config_text("model {\n key = 1\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("a = 1\na = 2")


def test_wrong_matrix_side_rejected():
    bad = MINIMAL.replace(
        "matrix = [[0+0i, 1+0i], [1+0i, 0+0i]]",
        "matrix = [[0+0i,1+0i,0i],[1+0i,0+0i,0i],[0i,0i,1+0i]]")
    with pytest.raises(ConfigError, match="side 3"):
        parse_model(bad)


def test_off_shell_site_rejected():
    bad = MINIMAL.replace("level = 0", "level = 2").replace("sites = [[0]]",
                                                            "sites = [[1]]")
    with pytest.raises(ConfigError, match="not on shell 2"):
        parse_model(bad)


def test_unknown_key_rejected():
    bad = MINIMAL.replace("local_dim = 2", "local_dim = 2\n  typo_key = 1")
    with pytest.raises(ConfigError, match="typo_key"):
        parse_model(bad)


def test_unknown_study_type_rejected():
    bad = MINIMAL.replace("type = cp_sweep", "type = explore")
    with pytest.raises(ConfigError, match="type"):
        parse_model(bad)


def test_convergence_requires_geometric_steps():
    bad = MINIMAL.replace("type = cp_sweep", "type = convergence").replace(
        "times = [0.1, 0.3, 1.0]", "step_counts = [100, 200, 300]")
    with pytest.raises(ConfigError, match="geometric"):
        parse_model(bad)
    good = bad.replace("[100, 200, 300]", "[128, 256, 512]")
    spec = parse_model(good)
    assert spec.study.step_counts == (128, 256, 512)


def test_compatibility_requires_two_levels():
    bad = MINIMAL.replace("type = cp_sweep", "type = compatibility")
    with pytest.raises(ConfigError, match="levels"):
        parse_model(bad)


def test_compatibility_levels_must_have_shells():
    text = """
model {
  shell { level = 1
          sites = [[1]]
          matrix = [[0i, 1+0i], [1+0i, 0i]] }
}
study { type = compatibility
        levels = [1, 2] }
"""
    with pytest.raises(ConfigError, match="exceed"):
        parse_model(text)


def test_build_shell_family_from_spec():
    spec = parse_model(MINIMAL)
    family = build_shell_family(spec)
    assert family.max_shell == 0
    assert np.array_equal(family.shells[0][1].matrix, [[0, 1], [1, 0]])


def test_two_site_shell_block():
    text = """
model {
  shell { level = 1
          sites = [[-1], [1]]
          matrix = [[0i,0i,0i,1+0i],
                    [0i,0i,1+0i,0i],
                    [0i,1+0i,0i,0i],
                    [1+0i,0i,0i,0i]] }
}
study { type = ito_check }
"""
    spec = parse_model(text)
    family = build_shell_family(spec)
    from spinqds.lattice import support

    assert support(family.shells[0][1]) == {(-1,), (1,)}


def test_schema_document_is_shipped():
    text = schema_text()
    assert "Grammar" in text and "study" in text
