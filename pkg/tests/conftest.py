from __future__ import annotations

import numpy as np
import pytest

from embedscope.model import IngestRow
from embedscope.store import ProjectStore


@pytest.fixture
def store(tmp_path) -> ProjectStore:
    return ProjectStore(tmp_path / "data")


def rows_from_matrix(x, prefix="r", labels=None, payload="sample"):
    rows = []
    width = len(str(len(x)))
    for i, vec in enumerate(np.asarray(x, dtype=np.float32)):
        rows.append(
            IngestRow(
                record_id=f"{prefix}{i:0{width}d}",
                vector=vec,
                label=None if labels is None else labels[i],
                payload=f"{payload} {i}",
            )
        )
    return rows


@pytest.fixture
def news_project(store):
    project = store.create_project("news", 8, ["World", "Sports", "Business", "SciTech"])
    return store, project
