# tests/conftest.py - Fixtures and configuration
import numpy as np
import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from retypelab import models  # noqa: F401
from retypelab.database import Base
from retypelab.schemas.asm import LabelScheme
from retypelab.schemas.dataset import Dataset, FeatureVocabulary
from retypelab.schemas.synth import SynthConfig
from retypelab.services.corpus_synth import synthesize_corpus
from retypelab.services.dataset_builder import build_from_functions

# Test registry
SQLALCHEMY_DATABASE_URL = "sqlite://"
engine = create_engine(
    SQLALCHEMY_DATABASE_URL,
    connect_args={"check_same_thread": False},
    poolclass=StaticPool,
)
TestingSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale pipeline runs (deselect with -m \"not slow\")")


@pytest.fixture(scope="session")
def db():
    """Create test registry tables."""
    Base.metadata.create_all(bind=engine)
    yield
    Base.metadata.drop_all(bind=engine)


@pytest.fixture(scope="function")
def session(db):
    """Create a fresh registry session for each test."""
    connection = engine.connect()
    transaction = connection.begin()
    session = TestingSessionLocal(bind=connection)

    yield session

    session.close()
    transaction.rollback()
    connection.close()


@pytest.fixture(scope="session")
def small_corpus():
    """Ten functions per type with their callers."""
    return synthesize_corpus(SynthConfig.uniform(10, rng_seed=7))


@pytest.fixture(scope="session")
def small_dataset(small_corpus):
    return build_from_functions(small_corpus.functions)


@pytest.fixture
def toy_dataset():
    """Three classes separated by one feature each, plus a noise column."""
    X = np.array([
        [1, 0, 0, 0],
        [1, 0, 0, 1],
        [1, 0, 0, 0],
        [1, 0, 0, 1],
        [0, 1, 0, 0],
        [0, 1, 0, 1],
        [0, 1, 0, 0],
        [0, 1, 0, 1],
        [0, 0, 1, 0],
        [0, 0, 1, 1],
        [0, 0, 1, 0],
        [0, 0, 1, 1],
    ], dtype=np.uint8)
    labels = ("bool",) * 4 + ("int",) * 4 + ("void",) * 4
    return Dataset(
        vocabulary=FeatureVocabulary(names=(
            "RET: mov al, <lit> | callee_epilogue",
            "RET: mov eax, <lit> | callee_epilogue",
            "POST: dest_class(unused)",
            "RET: push <reg> | callee_epilogue",
        )),
        X=X,
        labels=labels,
        functions=tuple(f"_f{i}" for i in range(len(labels))),
        scheme=LabelScheme.HIGH_LEVEL,
    )


@pytest.fixture
def write_listing(tmp_path):
    """Write listing text to a file under tmp_path and return the path."""
    def write(text: str, name: str = "listing.asm"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return write
