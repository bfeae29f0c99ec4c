"""Data -> immersion -> representation -> minimizer -> data."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .codazzi import (
    QDBasis,
    assemble,
    combine_b_a,
    decompose,
    el_residuals,
    newton_det,
    qd_basis,
    split_b_a,
    symmetry_defect,
)
from .energy import EquivariantMap, minimize
from .reconstruct import extract_data, fc_value, integrate_immersion, monodromy_report
from .surface import SurfaceMesh

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    """Failure of one pipeline stage; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RoundTripReport:
    q: np.ndarray
    qprime: np.ndarray
    q_out: np.ndarray
    qprime_out: np.ndarray
    field_error: float  # |phi' - phi| / |phi| with phi' reassembled from the decomposition
    extracted_field_error: float  # same, for the extracted field before decomposition
    coefficient_error: float  # |(q', qprime') - (q, qprime)| / |(q, qprime)|, nan at zero
    fc: complex
    energy: float
    energy_gap: float  # |Re fc - energy| / energy
    relation_residual: float
    raw_relation_residual: float
    side_matching: float
    loop_defect: float
    symmetry_defect: float
    projection_residual: float
    newton_iterations: int
    el: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    minimizer: Optional[EquivariantMap] = None

    def summary(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "minimizer"}
        for k in ("q", "qprime", "q_out", "qprime_out"):
            out[k] = [float(x) for x in out[k]]
        out["fc"] = [self.fc.real, self.fc.imag]
        return out


def extracted_field(mesh: SurfaceMesh, f: EquivariantMap) -> tuple[np.ndarray, float]:
    """Vertex field ``b - i J b a`` of a map, made symmetric; also the symmetry defect removed."""
    b, a = extract_data(f)
    phi = mesh.from_triangles(combine_b_a(b, a))
    defect = symmetry_defect(phi) / max(np.abs(phi).max(), 1e-300)
    return 0.5 * (phi + np.swapaxes(phi, -1, -2)), defect


def roundtrip(
    mesh: SurfaceMesh,
    q: Sequence[float],
    qprime: Sequence[float],
    qd: Optional[QDBasis] = None,
    schedule: Sequence[float] = (1.0, 0.3, 0.1, 0.03, 0.0),
    max_iter: int = 5000,
    gtol: float = 1e-9,
    newton_tol: float = 1e-10,
    do_minimize: bool = True,
    gauss_scale: float = 1.0,
) -> RoundTripReport:
    """Run every stage, raising :class:`StageError` with the failing stage.

    ``gauss_scale`` multiplies ``b`` before integration; values other than 1
    break the Gauss equation and are meant for testing the consistency checks.
    """
    q = np.asarray(q, dtype=float)
    qprime = np.asarray(qprime, dtype=float)
    timings: dict = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
            raise StageError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        logger.info("stage %s: %.2f s", name, timings[name])
        return out

    qd = stage("basis", lambda: qd_basis(mesh) if qd is None else qd)
    datum = stage("newton", lambda: newton_det(mesh, q, qprime, qd=qd, tol=newton_tol))
    b, a = split_b_a(datum.phi)
    b = gauss_scale * b
    f, frames = stage("integrate", lambda: integrate_immersion(mesh, b, a))
    rep, mon = stage("monodromy", lambda: monodromy_report(frames, mesh))
    f = EquivariantMap(mesh, rep, f.positions)
    if do_minimize:
        res = stage("minimize", lambda: minimize(rep, f, schedule=schedule, max_iter=max_iter, gtol=gtol))
        if not res.converged:
            raise StageError("minimize", RuntimeError("optimizer did not converge"))
        g, energy_value = res.map, res.energy
    else:
        from .energy import energy

        g, energy_value = f, energy(f).value
    phi2, sym = stage("extract", lambda: extracted_field(mesh, g))
    dec = stage("decompose", lambda: decompose(mesh, phi2, qd, max_residual=1.0))
    phi_back = assemble(mesh, qd, dec.u, dec.q, dec.qprime)
    scale = mesh.norm_vertices(datum.phi)
    nq = float(np.sqrt(np.sum(q**2) + np.sum(qprime**2)))
    dq = float(np.sqrt(np.sum((dec.q - q) ** 2) + np.sum((dec.qprime - qprime) ** 2)))
    fc = fc_value(mesh, datum.phi)
    bt, at = extract_data(g)
    return RoundTripReport(
        q=q,
        qprime=qprime,
        q_out=dec.q,
        qprime_out=dec.qprime,
        field_error=mesh.norm_vertices(phi_back - datum.phi) / scale,
        extracted_field_error=mesh.norm_vertices(phi2 - datum.phi) / scale,
        coefficient_error=dq / nq if nq > 0 else float("nan"),
        fc=fc,
        energy=float(energy_value),
        energy_gap=abs(fc.real - energy_value) / energy_value,
        relation_residual=rep.relation_residual,
        raw_relation_residual=mon.raw_relation_residual,
        side_matching=float(mon.fit_residuals.max()),
        loop_defect=float(frames.loop_defects.max()),
        symmetry_defect=float(sym),
        projection_residual=dec.projection_residual,
        newton_iterations=datum.iterations,
        el=el_residuals(mesh, bt, at),
        timings=timings,
        minimizer=g,
    )
