"""Representations of the surface group into the isometries of H^3."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import hyperbolic as hyp
from .surface import FuchsianDomain, generator_names, relation_product, word_matrix


@dataclass
class Representation:
    """Images of the generators ``a1, b1, ..., ag, bg`` as 4x4 Lorentz matrices."""

    generators: np.ndarray  # (2g, 4, 4)
    psl2: Optional[np.ndarray] = None  # (2g, 2, 2) complex lifts

    def __post_init__(self):
        self.generators = np.asarray(self.generators, dtype=float)
        if self.generators.ndim != 3 or self.generators.shape[1:] != (4, 4) or len(self.generators) % 2:
            raise ValueError("expected an even number of 4x4 generator matrices")
        for g in self.generators:
            hyp.check_isometry(g, tol=1e-6)

    @property
    def genus(self) -> int:
        return len(self.generators) // 2

    @property
    def names(self) -> list[str]:
        return generator_names(self.genus)

    @classmethod
    def fuchsian(cls, domain: FuchsianDomain) -> "Representation":
        return cls(domain.generators.copy())

    @property
    def relation_residual(self) -> float:
        return float(np.linalg.norm(relation_product(self.generators) - np.eye(4)))

    def word_matrices(self, words) -> np.ndarray:
        return np.array([word_matrix(w, self.generators) for w in words])

    def conjugate(self, g) -> "Representation":
        gi = hyp.lorentz_inverse(g)
        return Representation(np.array([g @ m @ gi for m in self.generators]))

    def is_fuchsian(self, tol: float = 1e-7) -> bool:
        """Whether every generator preserves the plane ``x3 = 0``."""
        G = self.generators
        off = np.abs(G[:, 3, :3]).max() + np.abs(G[:, :3, 3]).max()
        return bool(off <= tol * max(1.0, np.abs(G).max()) and np.all(np.abs(G[:, 3, 3] - 1.0) <= tol))

    def sl2(self, reference: Optional[np.ndarray] = None) -> np.ndarray:
        """SL(2,C) lifts; signs chosen closest to ``reference`` (or the identity)."""
        out = []
        for j, g in enumerate(self.generators):
            A = hyp.so13_to_sl2(g)
            ref = None if reference is None else reference[j]
            out.append(hyp.sl2_fix_sign(A, ref))
        return np.array(out)

    def trace_invariants(self) -> np.ndarray:
        """``tr^2`` of the generators and of the products ``a_i b_i`` (sign free)."""
        A = self.sl2()
        vals = [np.trace(a) ** 2 for a in A]
        vals += [np.trace(A[2 * i] @ A[2 * i + 1]) ** 2 for i in range(self.genus)]
        return np.array(vals)

    def to_dict(self) -> dict:
        A = self.sl2()
        return {
            "format": "HREP 1",
            "genus": self.genus,
            "generators": {n: g.tolist() for n, g in zip(self.names, self.generators)},
            "psl2": {n: [[[z.real, z.imag] for z in row] for row in a] for n, a in zip(self.names, A)},
            "relation_residual": self.relation_residual,
            "trace_invariants": [[z.real, z.imag] for z in self.trace_invariants()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Representation":
        names = generator_names(int(data["genus"]))
        return cls(np.array([data["generators"][n] for n in names], dtype=float))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
