import logging
from typing import List, Sequence, Tuple

import numpy as np

from corpus.filtrado import TextSpan

logger = logging.getLogger(__name__)


def split_dataset(
        spans: Sequence[TextSpan],
        dev_size: int,
        test_size: int,
        seed: int = 0
) -> Tuple[List[TextSpan], List[TextSpan], List[TextSpan]]:
    """
    Divide los spans en entrenamiento, desarrollo y prueba.

    Los conjuntos de desarrollo y prueba se toman de una permutación con
    semilla; cada partición conserva el orden original de los spans.

    Args:
        spans: Spans filtrados
        dev_size: Tamaño del conjunto de desarrollo
        test_size: Tamaño del conjunto de prueba
        seed: Semilla de la permutación

    Returns:
        Tupla (train, dev, test) disjunta
    """
    n = len(spans)
    if dev_size < 0 or test_size < 0:
        raise ValueError("Los tamaños de partición no pueden ser negativos")
    if dev_size + test_size > n:
        raise ValueError(
            f"dev_size + test_size ({dev_size + test_size}) excede el número de spans ({n})"
        )

    rng = np.random.default_rng(seed)
    permutacion = rng.permutation(n)

    indices_dev = np.sort(permutacion[:dev_size])
    indices_test = np.sort(permutacion[dev_size:dev_size + test_size])
    indices_train = np.sort(permutacion[dev_size + test_size:])

    train = [spans[i] for i in indices_train]
    dev = [spans[i] for i in indices_dev]
    test = [spans[i] for i in indices_test]

    logger.info("Partición: train=%d, dev=%d, test=%d", len(train), len(dev), len(test))
    return train, dev, test
