import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crowdlabel.data import Instance
from crowdlabel.taxonomy import load_taxonomy


@pytest.fixture(scope="session")
def canonical_taxonomy():
    return load_taxonomy()


def make_instance(
    instance_id: str,
    subj_type: str = "PERSON",
    obj_type: str = "THING",
    label: str | None = None,
    length: int = 8,
    rng: random.Random | None = None,
) -> Instance:
    rng = rng or random.Random(instance_id)
    tokens = tuple(f"t{i}" for i in range(length))
    subj_start = rng.randrange(0, length - 3)
    obj_start = rng.randrange(subj_start + 1, length - 1)
    return Instance(
        id=instance_id,
        tokens=tokens,
        subj_span=(subj_start, subj_start + 1),
        obj_span=(obj_start, obj_start + 1),
        subj_type=subj_type,
        obj_type=obj_type,
        original_label=label,
    )
