import numpy as np
import pytest

from corpus.filtrado import TextSpan
from corpus.vocabulario import VocabularySpec
from entrenamiento.tareas import TareaClasificacion
from modelo.configuracion import ModelConfig
from tokenizador.bpe import train_bpe

PALABRAS = (
    "look at the doggy ball baby mommy daddy play played player playing go went see saw "
    "big little red blue cat dog milk cookie eat ate want more no yes up down"
).split()


# Dos temas disjuntos del vocabulario cerrado
TEMA_A = PALABRAS[:16]
TEMA_B = PALABRAS[16:]


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true",
                     default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def vocab():
    return VocabularySpec(words=frozenset(PALABRAS))


def oraciones_aleatorias(n, seed=0, longitud=8):
    rng = np.random.default_rng(seed)
    return [" ".join(rng.choice(PALABRAS, size=longitud)) + "." for _ in range(n)]


@pytest.fixture
def corpus_sintetico():
    """Spans de 40 palabras del vocabulario cerrado."""
    rng = np.random.default_rng(7)
    return [
        TextSpan.desde_texto(" ".join(rng.choice(PALABRAS, size=40)), ("sint", str(i), 0))
        for i in range(120)
    ]


@pytest.fixture(scope="session")
def tokenizador_chico():
    rng = np.random.default_rng(7)
    textos = [" ".join(rng.choice(PALABRAS, size=40)) for _ in range(120)]
    return train_bpe(textos, 320)


@pytest.fixture
def config_micro(tokenizador_chico):
    return ModelConfig(E=8, H=8, I=16, L=1, A=2, V=tokenizador_chico.vocab_size, S=16, dropout=0.1, max_positions=16)


def corpus_por_temas(n, seed=0, longitud=12):
    """Oraciones que alternan entre los dos temas; cada una usa un solo tema."""
    rng = np.random.default_rng(seed)
    return [" ".join(rng.choice((TEMA_A, TEMA_B)[i % 2], size=longitud)) for i in range(n)]


def tarea_temas(n=400, seed=0, longitud=8):
    """
    Clasifica el tema de una oración. El entrenamiento usa la mitad de las
    palabras de cada tema y la validación sólo la otra mitad.
    """
    rng = np.random.default_rng(seed)
    vistas = (TEMA_A[0::2], TEMA_B[0::2])
    nuevas = (TEMA_A[1::2], TEMA_B[1::2])
    n_val = n // 4

    def ejemplos(grupos, cuantos):
        return [(" ".join(rng.choice(grupos[i % 2], size=longitud)), None, i % 2) for i in range(cuantos)]

    return TareaClasificacion("temas", 2, ejemplos(vistas, n - n_val), ejemplos(nuevas, n_val))


@pytest.fixture(scope="session")
def tokenizador_temas():
    return train_bpe(corpus_por_temas(400, seed=11), 512)


@pytest.fixture
def config_chica(tokenizador_temas):
    return ModelConfig(E=32, H=32, I=128, L=2, A=2, V=tokenizador_temas.vocab_size, S=16, dropout=0.1,
                       max_positions=16)
