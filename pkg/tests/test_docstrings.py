import doctest

import pytest

from otsep import baselines, metrics


@pytest.mark.parametrize("module", [baselines, metrics])
def test_docstring_examples(module):
    result = doctest.testmod(module)
    assert result.attempted > 0 and result.failed == 0
