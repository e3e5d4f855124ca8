"""
Rotation of score-orthogonal functions from a reference model Q to a
candidate model F

Steps, all with inner products under F on the shared grid:

    l   = sqrt(q / f)                         isometry  <l g, l h>_F = <g, h>_Q
    K h = h - (1 - l) <1 - l, h>_F / (1 - <l, 1>_F)      unitary, maps l to 1
    c_j = K (l b_j)                           images of Q's normalized scores
    U   = U_{a_p, c~_p} ... U_{a_1, c_1}      maps c_j to a_j (F's normalized scores)
    U_{a,c} h = h - (a - c) <a - c, h>_F / (1 - <a, c>_F)

and for each node x

    phi~_x = U K (l psi_x) - sum_j a_j <b_j, psi_x>_Q

Every operator adds multiples of fixed functions, so phi~_x is l psi_x plus
a linear combination of the basis E = [1, l, l b_1..l b_p, a_1..a_p]. The
plan stores those coefficients per node, which lets the rotated process be
evaluated exactly at data points:

    (1/sqrt n) [ sum_i l(t_i) 1{t_i <= x} - Q(x) sum_i l(t_i) + W(x) . sum_i E(t_i) ]
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from k2gof.config.logging_config import get_logger
from k2gof.errors import AuditError, DegenerateK, DimensionMismatch, GridMismatch, SupportMismatch
from k2gof.estimation.fit import NormalizedScores, normalized_scores
from k2gof.models.base import ModelInstance
from k2gof.process.projection import ProcessField, ProjectionPlan, data_points, psi_field
from k2gof.quadrature.grid import Grid, GridField, check_same_grid, empirical_cdf, inner_product, prefix_sum

logger = get_logger(__name__)

DEGENERACY = 1e-12


def isometry_field(q_inst: ModelInstance, f_inst: ModelInstance, grid: Grid) -> GridField:
    """
    l = sqrt(q / f) at the nodes

    Raises:
        SupportMismatch: If f vanishes where q does not, or the ratio is not finite
    """
    q = q_inst.density_field.values
    f = f_inst.density_field.values
    if np.any((f <= 0.0) & (q > 0.0)):
        raise SupportMismatch(f"{f_inst.spec.name} vanishes on nodes where {q_inst.spec.name} has mass")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0.0, q / f, 0.0)
    if not np.all(np.isfinite(ratio)):
        raise SupportMismatch(f"Density ratio {q_inst.spec.name}/{f_inst.spec.name} is not finite on the grid")
    return GridField(grid, np.sqrt(ratio))


def apply_U_pair(h: GridField, a: GridField, c: GridField, density: GridField) -> GridField:
    """
    U_{a,c} h = h - (a - c) <a - c, h>_F / (1 - <a, c>_F)

    Identity when ||a - c||_F^2 < 1e-12.
    """
    check_same_grid(h, a, c, density)
    diff = a - c
    if inner_product(diff, diff, density) < DEGENERACY:
        return h
    denom = 1.0 - inner_product(a, c, density)
    return h - diff * (inner_product(diff, h, density) / denom)


@dataclass(frozen=True)
class UPair:
    """One factor U_{a,c} of the composed operator, as basis coefficients"""

    a: np.ndarray
    c: np.ndarray
    active: bool
    denom: float

    @property
    def diff(self) -> np.ndarray:
        return self.a - self.c


@dataclass(frozen=True, eq=False)
class RotationPlan:
    """
    Precomputed rotation from Q at theta-hat to F at beta-hat

    Attributes:
        q_inst, f_inst: Fitted reference and candidate models
        proj_plan: Q's projection plan (supplies b_j and <b_j, psi_x>_Q)
        f_scores: F's normalized scores a_1..a_p
        l_field: sqrt(q / f) on the grid
        K_const: <l, 1>_F
        k_identity: True when ||1 - l||_F^2 < 1e-12
        basis_nodes: E at the nodes, shape (grid.size, 2 + 2p)
        gram: Gram matrix of E under F
        c_coeffs: c_j in E coefficients, shape (p, 2 + 2p)
        u_pairs: Factors of U in application order
        w_tilde: Coefficients of phi~_x on E per node, shape (grid.size, 2 + 2p)
        residuals: Invariant-check residuals computed at build time
    """

    q_inst: ModelInstance
    f_inst: ModelInstance
    proj_plan: ProjectionPlan
    f_scores: NormalizedScores
    l_field: GridField
    K_const: float
    k_identity: bool
    basis_nodes: np.ndarray
    gram: np.ndarray
    c_coeffs: np.ndarray
    u_pairs: Tuple[UPair, ...]
    w_tilde: np.ndarray
    residuals: Dict[str, float]

    @property
    def grid(self) -> Grid:
        return self.q_inst.grid

    @property
    def p(self) -> int:
        return self.f_scores.p

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    def _field(self, coeff: np.ndarray) -> GridField:
        return self.grid.field_from_nodes(self.basis_nodes @ coeff)

    @property
    def a_fields(self) -> Tuple[GridField, ...]:
        return self.f_scores.fields

    @property
    def c_fields(self) -> Tuple[GridField, ...]:
        return tuple(self._field(c) for c in self.c_coeffs)

    @property
    def ctilde_fields(self) -> Tuple[GridField, ...]:
        return tuple(self._field(pair.c) for pair in self.u_pairs)

    def l_at(self, points: np.ndarray) -> np.ndarray:
        """sqrt(q / f) evaluated exactly at data points"""
        q = self.q_inst.density(points)
        f = self.f_inst.density(points)
        if np.any((f <= 0.0) & (q > 0.0)):
            raise SupportMismatch(f"{self.f_inst.spec.name} vanishes at a data point where {self.q_inst.spec.name} does not")
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.sqrt(np.where(q > 0.0, q / f, 0.0))

    def basis_at(self, points: np.ndarray) -> np.ndarray:
        """E evaluated exactly at data points, shape (m, 2 + 2p)"""
        pts = np.atleast_2d(points)
        l = self.l_at(pts)
        b = self.proj_plan.scores.at(pts)
        a = self.f_scores.at(pts)
        return np.column_stack([np.ones(pts.shape[0]), l, l[:, None] * b, a])

    def summary(self) -> Dict:
        """Audit record: models, parameters, K constant and invariant residuals"""
        return {
            "reference": self.q_inst.spec.name,
            "candidate": self.f_inst.spec.name,
            "reference_params": list(self.q_inst.params.values),
            "candidate_params": list(self.f_inst.params.values),
            "K_const": self.K_const,
            "k_identity": self.k_identity,
            "residuals": dict(self.residuals),
            "max_residual": self.max_residual,
        }

    def audit(self, tolerance: float) -> None:
        """
        Raise AuditError if any invariant residual exceeds ``tolerance``
        """
        failed = {k: v for k, v in self.residuals.items() if not v <= tolerance}
        if failed:
            logger.error(
                "rotation_audit_failed",
                reference=self.q_inst.spec.name,
                candidate=self.f_inst.spec.name,
                failed=failed,
                tolerance=tolerance,
            )
            raise AuditError(
                f"Rotation {self.q_inst.spec.name}->{self.f_inst.spec.name} fails its invariant checks: {failed}"
            )


def apply_K(h: GridField, plan: RotationPlan) -> GridField:
    """K h = h - (1 - l) <1 - l, h>_F / (1 - K_const); identity in the degenerate case"""
    if plan.k_identity:
        return h
    one_minus_l = 1.0 - plan.l_field
    return h - one_minus_l * (inner_product(one_minus_l, h, plan.f_inst.density_field) / (1.0 - plan.K_const))


def apply_U(h: GridField, plan: RotationPlan) -> GridField:
    """Composed U applied to a field, factors in application order"""
    density = plan.f_inst.density_field
    for a, c in zip(plan.a_fields, plan.ctilde_fields):
        h = apply_U_pair(h, a, c, density)
    return h


def _u_coefficients(h: np.ndarray, pair: UPair, gram: np.ndarray) -> np.ndarray:
    if not pair.active:
        return h
    beta = pair.diff @ gram @ h / pair.denom
    return h - beta * pair.diff


def build_rotation_plan(
    q_inst: ModelInstance,
    f_inst: ModelInstance,
    grid: Grid,
    proj_plan: ProjectionPlan,
) -> RotationPlan:
    """
    Precompute the rotation from Q (at theta-hat) to F (at beta-hat)

    Args:
        q_inst: Reference model at its plug-in estimate
        f_inst: Candidate model at its plug-in estimate
        grid: Shared grid both models are normalized on
        proj_plan: Q's projection plan at the same estimate

    Returns:
        RotationPlan: Immutable plan with build-time invariant residuals

    Raises:
        DimensionMismatch: If Q and F have different parameter counts
        SupportMismatch: If the supports differ or f vanishes where q does not
        DegenerateK: If <l, 1>_F is 1 while l differs from 1
    """
    if q_inst.spec.p != f_inst.spec.p:
        raise DimensionMismatch(
            f"{q_inst.spec.name} has p={q_inst.spec.p} but {f_inst.spec.name} has p={f_inst.spec.p}"
        )
    if q_inst.spec.support != f_inst.spec.support:
        raise SupportMismatch(f"{q_inst.spec.name} and {f_inst.spec.name} have different supports")
    for inst in (q_inst, f_inst, proj_plan.instance):
        if not grid.same_as(inst.grid):
            raise GridMismatch(f"Model {inst.spec.name} is normalized on a different grid")

    p = q_inst.spec.p
    dim = 2 + 2 * p
    f_density = f_inst.density_field
    fw = f_density.flat() * grid.cell_weight

    f_scores = normalized_scores(f_inst, grid)
    l_field = isometry_field(q_inst, f_inst, grid)
    l_nodes = l_field.flat()
    b_nodes = proj_plan.scores.node_matrix()
    basis = np.column_stack([np.ones(grid.size), l_nodes, l_nodes[:, None] * b_nodes, f_scores.node_matrix()])
    gram = (basis * fw[:, None]).T @ basis
    gram = 0.5 * (gram + gram.T)

    def unit(k: int) -> np.ndarray:
        e = np.zeros(dim)
        e[k] = 1.0
        return e

    one_minus_l = unit(0) - unit(1)
    k_const = float(gram[0, 1])
    k_norm = float(one_minus_l @ gram @ one_minus_l)
    k_identity = k_norm < DEGENERACY
    if not k_identity and abs(1.0 - k_const) < DEGENERACY:
        raise DegenerateK(f"<l, 1>_F = {k_const} while ||1 - l||^2 = {k_norm}")

    def apply_k(h: np.ndarray) -> np.ndarray:
        if k_identity:
            return h
        return h - one_minus_l * (one_minus_l @ gram @ h) / (1.0 - k_const)

    c_coeffs = np.array([apply_k(unit(2 + j)) for j in range(p)])
    a_coeffs = [unit(2 + p + j) for j in range(p)]

    pairs: List[UPair] = []
    for j in range(p):
        ctilde = c_coeffs[j]
        for pair in pairs:
            ctilde = _u_coefficients(ctilde, pair, gram)
        diff = a_coeffs[j] - ctilde
        active = float(diff @ gram @ diff) >= DEGENERACY
        denom = 1.0 - float(a_coeffs[j] @ gram @ ctilde)
        pairs.append(UPair(a=a_coeffs[j], c=ctilde, active=active, denom=denom))

    # <E_k, l psi_x>_F for every node x and basis function k
    cdf = proj_plan.cdf_field.flat()
    weighted = basis * (l_nodes * fw)[:, None]
    partial = np.column_stack([prefix_sum(weighted[:, k].reshape(grid.shape)).ravel() for k in range(dim)])
    psi_products = partial - np.outer(cdf, weighted.sum(axis=0))

    # phi_x = U K (l psi_x) = l psi_x + W(x) . E, applied to all nodes at once
    w = np.zeros((grid.size, dim))
    if not k_identity:
        w -= np.outer((psi_products + w @ gram) @ one_minus_l / (1.0 - k_const), one_minus_l)
    for pair in pairs:
        if pair.active:
            beta = (psi_products + w @ gram) @ pair.diff / pair.denom
            w -= np.outer(beta, pair.diff)

    proj_coeff = proj_plan.coefficient_matrix()
    a_products = (psi_products + w @ gram)[:, 2 + p :]
    w_tilde = w.copy()
    w_tilde[:, 2 + p :] -= proj_coeff

    residuals = _residuals(
        gram=gram,
        c_coeffs=c_coeffs,
        pairs=pairs,
        a_coeffs=a_coeffs,
        psi_products=psi_products,
        w_tilde=w_tilde,
        a_products=a_products,
        proj_coeff=proj_coeff,
        basis=basis,
    )

    for arr in (basis, gram, c_coeffs, w_tilde):
        arr.setflags(write=False)
    plan = RotationPlan(
        q_inst=q_inst,
        f_inst=f_inst,
        proj_plan=proj_plan,
        f_scores=f_scores,
        l_field=l_field,
        K_const=k_const,
        k_identity=k_identity,
        basis_nodes=basis,
        gram=gram,
        c_coeffs=c_coeffs,
        u_pairs=tuple(pairs),
        w_tilde=w_tilde,
        residuals=residuals,
    )
    logger.info(
        "rotation_plan_built",
        reference=q_inst.spec.name,
        candidate=f_inst.spec.name,
        K_const=k_const,
        max_residual=plan.max_residual,
    )
    return plan


def _residuals(
    gram: np.ndarray,
    c_coeffs: np.ndarray,
    pairs: Sequence[UPair],
    a_coeffs: Sequence[np.ndarray],
    psi_products: np.ndarray,
    w_tilde: np.ndarray,
    a_products: np.ndarray,
    proj_coeff: np.ndarray,
    basis: np.ndarray,
) -> Dict[str, float]:
    p = len(a_coeffs)
    one = np.zeros(gram.shape[0])
    one[0] = 1.0
    l_vec = np.zeros(gram.shape[0])
    l_vec[1] = 1.0

    isometry = abs(float(l_vec @ gram @ l_vec) - 1.0)
    c_mean = max(abs(float(one @ gram @ c)) for c in c_coeffs)
    ctilde_orth = max(
        [abs(float(pairs[j].c @ gram @ a_coeffs[k])) for j in range(p) for k in range(j)] or [0.0]
    )
    mapping = 0.0
    for j in range(p):
        image = c_coeffs[j]
        for pair in pairs:
            image = _u_coefficients(image, pair, gram)
        mapping = max(mapping, float(np.max(np.abs(basis @ (image - a_coeffs[j])))))
    shortcut = float(np.max(np.abs(a_products - proj_coeff)))
    phi_products = psi_products + w_tilde @ gram
    phi_mean = float(np.max(np.abs(phi_products[:, 0])))
    phi_orth = float(np.max(np.abs(phi_products[:, 2 + p :])))
    return {
        "isometry": isometry,
        "c_mean": c_mean,
        "ctilde_orthogonality": ctilde_orth,
        "u_mapping": mapping,
        "shortcut": shortcut,
        "phi_mean": phi_mean,
        "phi_orthogonality": phi_orth,
    }


def phi_tilde_field(node_index: Sequence[int], plan: RotationPlan) -> GridField:
    """phi~_x as a field over t for the node with multi-index ``node_index``"""
    flat = int(np.ravel_multi_index(tuple(node_index), plan.grid.shape))
    base = plan.l_field * psi_field(node_index, plan.proj_plan)
    return base + plan.grid.field_from_nodes(plan.basis_nodes @ plan.w_tilde[flat])


def rotated_process(data: np.ndarray, plan: RotationPlan) -> ProcessField:
    """
    Rotated process (1/sqrt n) sum_i phi~_x(t_i) at every node

    Raises:
        OutOfSupport: If a data point lies outside the support
    """
    pts = data_points(data, plan.f_inst)
    n = pts.shape[0]
    basis = plan.basis_at(pts)
    l = basis[:, 1]
    weighted_counts = empirical_cdf(plan.grid, pts, weights=l)
    cdf = plan.proj_plan.cdf_field.values
    correction = (plan.w_tilde @ basis.sum(axis=0)).reshape(plan.grid.shape)
    values = (weighted_counts - cdf * l.sum() + correction) / np.sqrt(n)
    return ProcessField(GridField(plan.grid, values), n, "rotated-F")
