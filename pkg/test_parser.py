from mlsvm.parser import FormatParser
from mlsvm.exceptions import DataFormatError


def test_parse_samples():
    print("--- Testing Sample Lines ---")
    parser = FormatParser()

    parsed = parser.parse_sample("+1 1:0.5 3:2.0  # trailing comment", 1)
    assert parsed == {'type': 'SAMPLE', 'label': '+1', 'features': [(0, 0.5), (2, 2.0)]}, parsed
    print("[v] Labeled line with comment")

    assert parser.parse_sample("   # only a comment", 2) == {'type': 'BLANK'}
    assert parser.parse_sample("", 3) == {'type': 'BLANK'}
    print("[v] Blank and comment lines")

    unlabeled = parser.parse_sample("1:1 2:-3e-2", 4)
    assert unlabeled['label'] is None
    assert unlabeled['features'] == [(0, 1.0), (1, -0.03)]
    print("[v] Unlabeled line")

    label_only = parser.parse_sample("-1", 5)
    assert label_only == {'type': 'SAMPLE', 'label': '-1', 'features': []}
    print("[v] Row with no features")


def test_sample_errors():
    print("--- Testing Malformed Sample Lines ---")
    parser = FormatParser()
    bad_lines = [
        "+1 2:1 1:1",    # descending indices
        "+1 1:1 1:2",    # repeated index
        "+1 0:1",        # 0-based index
        "+1 1:abc",      # not a number
        "+1 1:nan",      # non-finite
        "+1 1=2",        # bad separator
    ]
    for line in bad_lines:
        try:
            parser.parse_sample(line, 7)
            raise AssertionError(f"accepted '{line}'")
        except DataFormatError as e:
            assert e.line_no == 7
            assert "line 7" in str(e)
            print(f"[v] Rejected '{line}': {e}")


def test_parse_settings():
    print("--- Testing Setting Lines ---")
    parser = FormatParser()

    cases = {
        "stop-size = 500": ("stop_size", 500),
        "tol = 1e-4": ("tol", 1e-4),
        "Q = 0.5": ("q", 0.5),
        "ud_c_range = -5, 15": ("ud_c_range", (-5.0, 15.0)),
        "ud_g_range = (-15, 3)": ("ud_g_range", (-15.0, 3.0)),
        "neighbor_expand = yes": ("neighbor_expand", True),
        "volume_weighting = off": ("volume_weighting", False),
        "weight_rule = fixed:2": ("weight_rule", "fixed:2"),
        "name = 'x y'": ("name", "x y"),
    }
    for line, (key, value) in cases.items():
        parsed = parser.parse_setting(line, 1)
        assert parsed['type'] == 'SETTING'
        assert parsed['key'] == key, parsed
        assert parsed['value'] == value and type(parsed['value']) is type(value), parsed
    print(f"[v] {len(cases)} setting lines typed correctly")

    assert parser.parse_setting("# a comment", 2) == {'type': 'BLANK'}
    try:
        parser.parse_setting("just words", 3)
        raise AssertionError("accepted a line without '='")
    except DataFormatError as e:
        assert e.line_no == 3
        print(f"[v] Rejected non-setting line: {e}")


if __name__ == "__main__":
    test_parse_samples()
    test_sample_errors()
    test_parse_settings()
    print("--- Testing Complete ---")
