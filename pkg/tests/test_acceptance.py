"""Runs every acceptance criterion at its stated tolerance.

Each criterion prints one ``[PASS]``/``[FAIL]`` line and the lines are repeated in the
"acceptance criteria" section of the terminal summary.
"""

import pytest

from sdl import acceptance

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("criterion", acceptance.CRITERIA, ids=lambda f: f.__name__)
def test_criterion(criterion):
    result = criterion()
    print(result.line())
    ACCEPTANCE_LINES.append(result.line())
    assert result.passed, result.line()
