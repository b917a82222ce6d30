import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix

from .exceptions import DimensionMismatchError, DomainError


@dataclass(frozen=True)
class Metrics:
    """Binary classification quality with the positive (+1) class as minority.

    Attributes:
        sn (float): Sensitivity TP / (TP + FN).
        sp (float): Specificity TN / (TN + FP).
        kappa (float): Geometric mean sqrt(SN * SP).
        acc (float): Accuracy (TP + TN) / n.
        sn_undefined (bool): True when no positive samples were present.
        sp_undefined (bool): True when no negative samples were present.
    """
    tp: int
    tn: int
    fp: int
    fn: int
    sn: float
    sp: float
    kappa: float
    acc: float
    sn_undefined: bool = False
    sp_undefined: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _ratio(num: int, den: int):
    if den == 0:
        return 0.0, True
    return num / den, False


def compute_metrics(predicted: Sequence[int], actual: Sequence[int]) -> Metrics:
    """Confusion counts and derived rates for two {-1, +1} label vectors.

    A zero denominator yields 0 with the matching ``*_undefined`` flag set.

    Raises:
        DimensionMismatchError: If the vectors differ in length.
        DomainError: If they are empty or hold values other than -1 and +1.
    """
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape:
        raise DimensionMismatchError(f"{predicted.shape[0]} predictions for {actual.shape[0]} labels.")
    if predicted.size == 0:
        raise DomainError("cannot score an empty prediction set.")
    if not (np.all(np.abs(predicted) == 1) and np.all(np.abs(actual) == 1)):
        raise DomainError("labels must be -1 or +1.")

    tn, fp, fn, tp = (int(c) for c in confusion_matrix(actual, predicted, labels=[-1, 1]).ravel())
    sn, sn_undefined = _ratio(tp, tp + fn)
    sp, sp_undefined = _ratio(tn, tn + fp)
    return Metrics(
        tp=tp, tn=tn, fp=fp, fn=fn,
        sn=sn, sp=sp, kappa=math.sqrt(sn * sp), acc=(tp + tn) / predicted.size,
        sn_undefined=sn_undefined, sp_undefined=sp_undefined,
    )
