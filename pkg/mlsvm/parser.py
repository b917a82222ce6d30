import math
import re
from typing import Any, Dict, List, Tuple, Union

from .exceptions import DataFormatError

Setting = Union[bool, int, float, str, Tuple[float, float]]


class FormatParser:
    """A regex-based parser for the line formats MLSVM reads.

    Three formats share it: sparse sample lines (``<label> <index>:<value> ...``),
    model-file support-vector lines (same grammar, the label slot holds
    ``alpha_y``) and ``key = value`` settings of config files and model headers.

    Attributes:
        patterns (Dict[str, re.Pattern]): Map of token kinds to compiled regex patterns.
    """

    def __init__(self) -> None:
        """Initializes the parser with predefined line patterns."""
        self.patterns: Dict[str, re.Pattern] = {
            'PAIR': re.compile(r"(\d+):(\S+)"),
            'SETTING': re.compile(r"([A-Za-z_][\w\-]*)\s*=\s*(.*)"),
            'INT': re.compile(r"[+-]?\d+"),
            'FLOAT': re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?"),
            'RANGE': re.compile(r"\(?\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\)?"),
        }

    @staticmethod
    def _strip_comment(line: str) -> str:
        return line.split('#', 1)[0].strip()

    def parse_sample(self, line: str, line_no: int) -> Dict[str, Any]:
        """Parses one sparse-format line.

        Args:
            line: The raw line.
            line_no: 1-based line number used in error messages.

        Returns:
            Dict[str, Any]: ``{'type': 'BLANK'}`` for blank/comment lines, else
            ``{'type': 'SAMPLE', 'label': str or None, 'features': [(index0, value), ...]}``
            with 0-based indices.

        Raises:
            DataFormatError: On a malformed token, a non-finite value, or
                indices that are not 1-based and strictly ascending.
        """
        content = self._strip_comment(line)
        if not content:
            return {'type': 'BLANK'}

        tokens = content.split()
        if ':' in tokens[0]:
            # unlabeled row
            label = None
            feature_tokens = tokens
        else:
            label = tokens[0]
            feature_tokens = tokens[1:]

        features: List[Tuple[int, float]] = []
        previous = 0
        for token in feature_tokens:
            match = self.patterns['PAIR'].fullmatch(token)
            if not match:
                raise DataFormatError(f"malformed feature token '{token}'", line_no)
            index = int(match.group(1))
            if index < 1:
                raise DataFormatError(f"feature index must be 1-based, got {index}", line_no)
            if index <= previous:
                raise DataFormatError(f"feature indices must ascend ({previous} then {index})", line_no)
            value = self.parse_float(match.group(2), line_no)
            features.append((index - 1, value))
            previous = index

        return {'type': 'SAMPLE', 'label': label, 'features': features}

    def parse_float(self, token: str, line_no: int) -> float:
        """Converts a decimal token to a finite float.

        Raises:
            DataFormatError: If the token is not a finite decimal number.
        """
        try:
            value = float(token)
        except ValueError:
            raise DataFormatError(f"not a number: '{token}'", line_no)
        if not math.isfinite(value):
            raise DataFormatError(f"non-finite value '{token}'", line_no)
        return value

    def parse_setting(self, line: str, line_no: int) -> Dict[str, Any]:
        """Parses one ``key = value`` line.

        Keys are lower-cased and dashes become underscores, so ``stop-size``
        and ``stop_size`` name the same setting.

        Args:
            line: The raw line.
            line_no: 1-based line number used in error messages.

        Returns:
            Dict[str, Any]: ``{'type': 'BLANK'}`` or
            ``{'type': 'SETTING', 'key': str, 'value': Setting}``.

        Raises:
            DataFormatError: If the line is not a setting.
        """
        content = self._strip_comment(line)
        if not content:
            return {'type': 'BLANK'}

        match = self.patterns['SETTING'].fullmatch(content)
        if not match:
            raise DataFormatError(f"expected 'key = value', got '{content}'", line_no)
        key = match.group(1).lower().replace('-', '_')
        return {'type': 'SETTING', 'key': key, 'value': self._infer_type(match.group(2).strip())}

    def _infer_type(self, value: str) -> Setting:
        """Helper to convert a setting value to the appropriate Python type.

        Args:
            value: The text right of ``=``.

        Returns:
            Setting: bool, int, float, a (lo, hi) float pair, or the string.
        """
        if (value.startswith("'") and value.endswith("'")) or \
           (value.startswith('"') and value.endswith('"')):
            return value[1:-1]

        lowered = value.lower()
        if lowered in ('true', 'yes', 'on'):
            return True
        if lowered in ('false', 'no', 'off'):
            return False

        if self.patterns['INT'].fullmatch(value):
            return int(value)
        if self.patterns['FLOAT'].fullmatch(value):
            return float(value)

        match = self.patterns['RANGE'].fullmatch(value)
        if match:
            lo, hi = match.group(1), match.group(2)
            if self.patterns['FLOAT'].fullmatch(lo) and self.patterns['FLOAT'].fullmatch(hi):
                return (float(lo), float(hi))
        return value
