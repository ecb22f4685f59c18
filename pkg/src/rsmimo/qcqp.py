"""Convex precoder subproblem: assembly and a primal-dual interior-point solve.

The complex quadratic forms produced by the sample-averaged AWMSE expansion
are lifted to real symmetric PSD forms on stacked [Re; Im] coordinates, one
segment per precoder.  The decision vector is

    z = [v; xhat],  v = real lift of [vec(Pc); vec(P_1); ...; vec(P_K)],

with one nonpositive slack xhat_k per user holding a free common-rate share.
Constraints: one common-rate quadratic inequality per user, the power ball
v^T v <= Pt, and the sign constraints xhat <= 0.  Quadratics are stored as
f(z) = z^T A z + b^T z + c <= 0 with A symmetric PSD.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SystemConfig
from .rates import PrecoderSet
from .wmmse import SafBlocks

PSD_FLOOR_WARN = 1e-8


class QcqpError(RuntimeError):
    pass


def lift_hermitian(A: np.ndarray) -> np.ndarray:
    """Real symmetric representation of p^H A p on [Re p; Im p]."""
    Re, Im = A.real, A.imag
    top = np.concatenate([Re, -Im], axis=1)
    bot = np.concatenate([Im, Re], axis=1)
    L = np.concatenate([top, bot], axis=0)
    return 0.5 * (L + L.T)


def lift_vector(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a.real, a.imag])


@dataclass(frozen=True)
class PrecoderLayout:
    """Mapping between PrecoderSet matrices and real decision coordinates."""

    M: int
    Qc: int
    Qk: tuple[int, ...]
    free_shares: tuple[int, ...]    # users whose xhat is a variable

    @property
    def seg_cols(self) -> tuple[int, ...]:
        return (self.Qc, *self.Qk)

    @property
    def seg_slices(self) -> tuple[slice, ...]:
        out, off = [], 0
        for c in self.seg_cols:
            out.append(slice(off, off + 2 * self.M * c))
            off += 2 * self.M * c
        return tuple(out)

    @property
    def n_v(self) -> int:
        return 2 * self.M * sum(self.seg_cols)

    @property
    def n(self) -> int:
        return self.n_v + len(self.free_shares)

    def xhat_index(self, k: int) -> int:
        return self.n_v + self.free_shares.index(k)

    def pack(self, P: PrecoderSet, xhat: np.ndarray | None = None) -> np.ndarray:
        z = np.zeros(self.n)
        for sl, mat in zip(self.seg_slices, (P.Pc, *P.Pk)):
            p = mat.flatten(order="F")
            z[sl] = lift_vector(p)
        if xhat is not None:
            for k in self.free_shares:
                z[self.xhat_index(k)] = xhat[k]
        return z

    def unpack(self, z: np.ndarray) -> tuple[PrecoderSet, np.ndarray]:
        mats = []
        for sl, c in zip(self.seg_slices, self.seg_cols):
            r = z[sl]
            d = self.M * c
            mats.append((r[:d] + 1j * r[d:]).reshape((self.M, c), order="F"))
        xhat = np.zeros(len(self.Qk))
        for k in self.free_shares:
            xhat[k] = min(z[self.xhat_index(k)], 0.0)
        return PrecoderSet(Pc=mats[0], Pk=tuple(mats[1:])), xhat


@dataclass
class QuadConstraint:
    """f(z) = z^T A z + b^T z + c <= 0; A is None for linear constraints."""

    b: np.ndarray
    c: float
    A: np.ndarray | None = None
    name: str = ""

    def value(self, z: np.ndarray) -> float:
        v = float(self.b @ z) + self.c
        if self.A is not None:
            v += float(z @ (self.A @ z))
        return v

    def grad(self, z: np.ndarray) -> np.ndarray:
        g = self.b.copy()
        if self.A is not None:
            g += 2.0 * (self.A @ z)
        return g


@dataclass
class QcqpProblem:
    """Assembled STEP-2 subproblem over real coordinates."""

    layout: PrecoderLayout
    A0: np.ndarray
    b0: np.ndarray
    c0: float
    constraints: list[QuadConstraint]
    mu: np.ndarray
    Pt: float
    blocks: SafBlocks | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.layout.n

    def objective(self, z: np.ndarray) -> float:
        return float(z @ (self.A0 @ z) + self.b0 @ z) + self.c0

    def dump(self, path: str | Path) -> None:
        """Write the complex problem data as structured text (JSON).

        Schema: complex matrices are nested lists of [re, im] pairs in
        row-major order; `common_core`/`private_core` are the M x M cores
        whose Kronecker expansion with an identity of the consumer's column
        count forms each quadratic block; `a_*` are the linear coefficient
        vectors and `phi_*` the constants, exactly as in the averaged AWMSE
        expansion.
        """
        if self.blocks is None:
            raise QcqpError("problem was assembled without coefficient blocks")

        def cpx(arr):
            a = np.asarray(arr)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        blocks = self.blocks
        doc = {
            "format": "rsmimo-qcqp-v1",
            "M": blocks.M, "Qc": blocks.Qc, "Qk": list(blocks.Qk),
            "mu": np.asarray(self.mu, dtype=float).tolist(),
            "Pt": self.Pt,
            "free_shares": list(self.layout.free_shares),
            "sigma_n2": blocks.sigma_n2,
            "common_core": cpx(blocks.common_core),
            "private_core": cpx(blocks.private_core),
            "a_common": cpx(blocks.a_common),
            "a_private": [cpx(a) for a in blocks.a_private],
            "phi_common": blocks.phi_common.tolist(),
            "phi_private": blocks.phi_private.tolist(),
        }
        Path(path).write_text(json.dumps(doc, indent=1))


def load_dump(path: str | Path) -> dict:
    """Read a problem dump back into complex arrays."""
    doc = json.loads(Path(path).read_text())

    def decpx(obj):
        a = np.asarray(obj, dtype=float)
        return a[..., 0] + 1j * a[..., 1]

    for key in ("common_core", "private_core", "a_common"):
        doc[key] = decpx(doc[key])
    doc["a_private"] = [decpx(a) for a in doc["a_private"]]
    return doc


def _floored_psd(core: np.ndarray, name: str) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues, warning beyond roundoff."""
    core = 0.5 * (core + core.conj().T)
    w, V = np.linalg.eigh(core)
    if w.size and w[0] < -PSD_FLOOR_WARN:
        warnings.warn(
            f"{name}: PSD floor clipped eigenvalue {w[0]:.3e}", RuntimeWarning)
    if w.size and w[0] < 0.0:
        core = (V * np.maximum(w, 0.0)) @ V.conj().T
        core = 0.5 * (core + core.conj().T)
    return core


def assemble(blocks: SafBlocks, mu, config: SystemConfig,
             zero_share_users: tuple[int, ...] = ()) -> QcqpProblem:
    """Build the precoder QCQP from sample-averaged coefficient blocks.

    With the common stream disabled (Qc = 0) the common-rate constraints and
    the xhat variables are dropped entirely.  ``zero_share_users`` pins the
    listed users' common-rate shares to zero by variable elimination.
    """
    mu = np.asarray(mu, dtype=float)
    K = blocks.K
    if mu.shape != (K,):
        raise ValueError("need one weight per user")
    has_common = blocks.Qc > 0
    free = tuple(k for k in range(K)
                 if has_common and k not in zero_share_users)
    layout = PrecoderLayout(M=blocks.M, Qc=blocks.Qc, Qk=blocks.Qk,
                            free_shares=free)
    n = layout.n
    segs = layout.seg_slices

    cp = [_floored_psd(blocks.private_core[k], f"private_core[{k}]")
          for k in range(K)]
    cc = [_floored_psd(blocks.common_core[k], f"common_core[{k}]")
          for k in range(K)]

    # objective: private AWMSEs weighted by mu, plus sum_k mu_k xhat_k
    A0 = np.zeros((n, n))
    b0 = np.zeros(n)
    obj_core = sum(m * c for m, c in zip(mu, cp))
    for i in range(K):
        if blocks.Qk[i]:
            sl = segs[1 + i]
            A0[sl, sl] = lift_hermitian(np.kron(np.eye(blocks.Qk[i]), obj_core))
            b0[sl] += -2.0 * mu[i] * lift_vector(blocks.a_private[i])
    c0 = float(np.dot(mu, blocks.phi_private))
    for k in free:
        b0[layout.xhat_index(k)] = mu[k]

    constraints: list[QuadConstraint] = []
    if has_common:
        for k in range(K):
            A = np.zeros((n, n))
            A[segs[0], segs[0]] = lift_hermitian(
                np.kron(np.eye(blocks.Qc), cc[k]))
            for i in range(K):
                if blocks.Qk[i]:
                    sl = segs[1 + i]
                    A[sl, sl] = lift_hermitian(
                        np.kron(np.eye(blocks.Qk[i]), cc[k]))
            b = np.zeros(n)
            b[segs[0]] = -2.0 * lift_vector(blocks.a_common[k])
            for j in free:
                b[layout.xhat_index(j)] = -1.0
            constraints.append(QuadConstraint(
                A=A, b=b, c=float(blocks.phi_common[k]) - blocks.Qc,
                name=f"common[{k}]"))

    A_pow = np.zeros((n, n))
    A_pow[:layout.n_v, :layout.n_v] = np.eye(layout.n_v)
    constraints.append(QuadConstraint(
        A=A_pow, b=np.zeros(n), c=-float(config.Pt), name="power"))

    for k in free:
        b = np.zeros(n)
        b[layout.xhat_index(k)] = 1.0
        constraints.append(QuadConstraint(b=b, c=0.0, name=f"sign[{k}]"))

    return QcqpProblem(layout=layout, A0=A0, b0=b0, c0=c0,
                       constraints=constraints, mu=mu, Pt=float(config.Pt),
                       blocks=blocks)


@dataclass
class QcqpSolution:
    precoders: PrecoderSet
    xhat: np.ndarray
    objective: float
    status: str              # converged | max_iter | infeasible
    iterations: int
    gap: float


def _strictly_feasible_start(prob: QcqpProblem, warm) -> np.ndarray | None:
    """Interior starting point from a warm precoder set (or the origin)."""
    layout = prob.layout
    if warm is not None:
        v = layout.pack(warm[0], None)[:layout.n_v]
    else:
        v = np.zeros(layout.n_v)
    quad_cons = [c for c in prob.constraints if c.name.startswith("common")]
    for scale in (1.0, 0.9, 0.7, 0.5, 0.3, 0.1, 0.03, 0.0):
        z = np.zeros(layout.n)
        z[:layout.n_v] = scale * v
        nrm2 = float(z[:layout.n_v] @ z[:layout.n_v])
        # real interior margin: a start on the power boundary would blow up
        # the initial duals (lambda = -1/f) and stall the Newton iteration
        if nrm2 > 0.99 * prob.Pt:
            z[:layout.n_v] *= np.sqrt(0.99 * prob.Pt / nrm2)
        if layout.free_shares:
            # constraints read g_k(v) - sum(xhat) <= 0; need max_k g_k < 0
            gmax = max(c.value(z) for c in quad_cons)
            if gmax >= 0.0:
                continue
            for k in layout.free_shares:
                z[layout.xhat_index(k)] = 0.5 * gmax / len(layout.free_shares)
        if all(c.value(z) < 0.0 for c in prob.constraints):
            return z
    return None


def solve(prob: QcqpProblem, tol: float = 1e-7, max_iter: int = 200,
          warm: tuple[PrecoderSet, np.ndarray | None] | None = None) -> QcqpSolution:
    """Primal-dual interior-point solve of the assembled QCQP.

    Stops when the surrogate duality gap and dual residual fall below
    ``tol`` relative to the objective scale.  The returned precoders are
    rescaled onto the power ball if the solve left them marginally outside.
    """
    z = _strictly_feasible_start(prob, warm)
    if z is None:
        P, xhat = prob.layout.unpack(np.zeros(prob.n))
        return QcqpSolution(P, xhat, prob.objective(np.zeros(prob.n)),
                            "infeasible", 0, np.inf)

    cons = prob.constraints
    m = len(cons)
    lam = np.clip(np.array([-1.0 / c.value(z) for c in cons]), 1e-10, 1e8)
    MU = 10.0
    BETA, ALPHA = 0.5, 0.01
    status = "max_iter"
    eta = np.inf
    it = 0

    def residuals(z, lam, t):
        f = np.array([c.value(z) for c in cons])
        J = np.stack([c.grad(z) for c in cons])
        grad0 = 2.0 * (prob.A0 @ z) + prob.b0
        rdual = grad0 + J.T @ lam
        rcent = -lam * f - 1.0 / t
        return f, J, grad0, rdual, rcent

    for it in range(1, max_iter + 1):
        f = np.array([c.value(z) for c in cons])
        eta = float(-f @ lam)
        t = MU * m / eta
        f, J, grad0, rdual, rcent = residuals(z, lam, t)
        scale = max(1.0, abs(float(z @ (prob.A0 @ z) + prob.b0 @ z)))
        gscale = max(1.0, float(np.max(np.abs(grad0))))
        if eta <= tol * scale and np.max(np.abs(rdual)) <= max(tol, 1e-9) * gscale:
            status = "converged"
            break

        w = lam / (-f)
        H = 2.0 * prob.A0 + (J.T * w) @ J
        for c, l in zip(cons, lam):
            if c.A is not None:
                H = H + (2.0 * l) * c.A
        g = grad0 + J.T @ (1.0 / (t * (-f)))
        try:
            dz = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            dz = np.linalg.lstsq(H, -g, rcond=None)[0]
        dlam = w * (J @ dz) - lam + 1.0 / (t * (-f))

        s = 1.0
        neg = dlam < 0
        if np.any(neg):
            s = min(1.0, 0.99 * np.min(-lam[neg] / dlam[neg]))
        while any(c.value(z + s * dz) >= 0.0 for c in cons):
            s *= BETA
            if s < 1e-14:
                break
        rnorm = np.linalg.norm(np.concatenate([rdual, rcent]))
        while s >= 1e-14:
            z2, lam2 = z + s * dz, lam + s * dlam
            _, _, _, rd2, rc2 = residuals(z2, lam2, t)
            if np.linalg.norm(np.concatenate([rd2, rc2])) <= (1 - ALPHA * s) * rnorm:
                break
            s *= BETA
        if s < 1e-14:
            break
        z = z + s * dz
        lam = lam + s * dlam

    # exact power after marginal violations
    v = z[:prob.layout.n_v]
    nrm2 = float(v @ v)
    if nrm2 > prob.Pt:
        z = z.copy()
        z[:prob.layout.n_v] *= np.sqrt(prob.Pt / nrm2)
    P, xhat = prob.layout.unpack(z)
    return QcqpSolution(P, xhat, prob.objective(z), status, it, eta)
