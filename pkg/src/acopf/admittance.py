"""Branch admittance blocks, bus admittance matrices and their polar parts.

Tap ratio and phase shift follow the MATPOWER convention: the ideal
transformer sits on the from side of the branch.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .case_io import Branch, NetworkCase

__all__ = [
    "BranchAdmittance", "AdmittanceData", "PolarMatrix",
    "branch_admittance", "bus_admittance_matrix", "polar_components",
]


@dataclass(frozen=True)
class BranchAdmittance:
    y_ff: complex
    y_ft: complex
    y_tf: complex
    y_tt: complex


@dataclass(frozen=True)
class PolarMatrix:
    """Magnitude and angle of every structural entry of a sparse matrix."""
    magnitude: sp.csr_matrix
    angle: sp.csr_matrix


@dataclass(frozen=True)
class AdmittanceData:
    """Admittance quantities for one case.

    Directed pairs enumerate both orientations of every branch (``2K``
    entries): pair ``k < K`` is branch ``k`` seen from its from bus, pair
    ``K + k`` is the same branch seen from its to bus. For a pair ``(i, j)``
    the branch current leaving ``i`` is ``y_self * v_i + y_mutual * v_j``.
    """
    branches: tuple[BranchAdmittance, ...]
    from_idx: np.ndarray
    to_idx: np.ndarray
    pair_from: np.ndarray
    pair_to: np.ndarray
    pair_branch: np.ndarray
    pair_reversed: np.ndarray
    pair_self: np.ndarray
    pair_mutual: np.ndarray
    shunt_g: np.ndarray
    shunt_b: np.ndarray
    ybus: sp.csr_matrix
    ybus_lines: sp.csr_matrix
    polar: PolarMatrix | None = None
    polar_lines: PolarMatrix | None = None
    pair_self_abs: np.ndarray | None = None
    pair_mutual_abs: np.ndarray | None = None
    pair_angle: np.ndarray | None = None

    @property
    def n_pairs(self) -> int:
        return len(self.pair_from)


def branch_admittance(branch: Branch) -> BranchAdmittance:
    z = complex(branch.r, branch.x)
    if z == 0:
        raise ValueError(f"branch {branch.from_bus}-{branch.to_bus} has zero impedance")
    ys = 1.0 / z
    half_b = 1j * branch.b_charging / 2.0
    tap = branch.tap * np.exp(1j * branch.shift)
    return BranchAdmittance(
        y_ff=complex((ys + half_b) / (branch.tap ** 2)),
        y_ft=complex(-ys / np.conj(tap)),
        y_tf=complex(-ys / tap),
        y_tt=complex(ys + half_b),
    )


def bus_admittance_matrix(case: NetworkCase, polar: bool = True) -> AdmittanceData:
    """Assemble the bus admittance matrix with and without bus shunts.

    ``ybus`` includes the bus shunts on its diagonal; ``ybus_lines`` holds
    only the branch contributions, for balance equations that add the
    shunt term explicitly. Both always store the full diagonal.
    """
    idx = case.bus_index()
    nb, nl = case.n_buses, case.n_branches
    blocks = tuple(branch_admittance(br) for br in case.branches)
    f = np.array([idx[br.from_bus] for br in case.branches], dtype=np.int64)
    t = np.array([idx[br.to_bus] for br in case.branches], dtype=np.int64)
    yff = np.array([b.y_ff for b in blocks], dtype=complex)
    yft = np.array([b.y_ft for b in blocks], dtype=complex)
    ytf = np.array([b.y_tf for b in blocks], dtype=complex)
    ytt = np.array([b.y_tt for b in blocks], dtype=complex)

    gs = np.array([b.shunt_g for b in case.buses], dtype=float)
    bs = np.array([b.shunt_b for b in case.buses], dtype=float)

    diag = np.arange(nb)
    rows = np.concatenate([f, f, t, t, diag])
    cols = np.concatenate([f, t, f, t, diag])
    vals = np.concatenate([yff, yft, ytf, ytt, np.zeros(nb, dtype=complex)])
    lines = sp.csr_matrix((vals, (rows, cols)), shape=(nb, nb))
    lines.sum_duplicates()
    lines.sort_indices()
    full = lines + sp.csr_matrix((gs + 1j * bs, (diag, diag)), shape=(nb, nb))
    full.sort_indices()

    data = AdmittanceData(
        branches=blocks, from_idx=f, to_idx=t,
        pair_from=np.concatenate([f, t]), pair_to=np.concatenate([t, f]),
        pair_branch=np.concatenate([np.arange(nl), np.arange(nl)]),
        pair_reversed=np.concatenate([np.zeros(nl, bool), np.ones(nl, bool)]),
        pair_self=np.concatenate([yff, ytt]), pair_mutual=np.concatenate([yft, ytf]),
        shunt_g=gs, shunt_b=bs, ybus=full, ybus_lines=lines,
    )
    return polar_components(data) if polar else data


def _polar(mat: sp.csr_matrix) -> PolarMatrix:
    mag = mat.copy()
    mag.data = np.abs(mat.data)
    ang = mat.copy()
    ang.data = np.angle(mat.data)
    return PolarMatrix(mag.real, ang.real)


def polar_components(data: AdmittanceData) -> AdmittanceData:
    """Fill in magnitudes and angles of both matrices and of every pair.

    ``pair_angle`` is ``angle(y_self) - angle(y_mutual)``; with it the squared
    branch current magnitude reads
    ``|y|^2 V_i^2 + |Y|^2 V_j^2 + 2 |y||Y| V_i V_j cos(theta_i - theta_j + pair_angle)``.
    """
    return replace(
        data,
        polar=_polar(data.ybus), polar_lines=_polar(data.ybus_lines),
        pair_self_abs=np.abs(data.pair_self), pair_mutual_abs=np.abs(data.pair_mutual),
        pair_angle=np.angle(data.pair_self) - np.angle(data.pair_mutual),
    )
