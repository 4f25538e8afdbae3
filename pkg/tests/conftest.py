import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from relucert import Dense, Network


@pytest.fixture
def gradient_trap_net():
    """1-D three-label linear classifier whose loss gradient at the origin
    points away from the nearest label flip: scores (5/4)x + ln(9/8), x,
    and ln(1/3). The origin is labeled 0; the closest flip is to label 1 at
    x = -4 ln(9/8)."""
    w = np.array([[5 / 4], [1.0], [0.0]])
    b = np.array([math.log(9 / 8), 0.0, math.log(1 / 3)])
    return Network([Dense(w, b)], input_dim=1, num_labels=3)
