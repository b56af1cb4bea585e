"""Primal-dual interior-point solver for second-order cone programs.

Programs are in standard form::

    minimize    c'x
    subject to  A x = b,   x in K = K_1 x ... x K_p

where each block ``K_k`` is free, the nonnegative orthant, a second-order
cone ``{x : x_0 >= ||x_1:||}`` or a rotated cone
``{x : 2 x_0 x_1 >= ||x_2:||^2, x_0, x_1 >= 0}``.

The method is an infeasible-start path-following scheme with Nesterov-Todd
scaling and a Mehrotra predictor-corrector step.  Newton systems are solved
through the sparse quasi-definite KKT matrix

    [ -(H + rho I)   A' ] [dx]
    [      A       dI   ] [dy]

with static regularisation and iterative refinement against the exact matrix.
Rotated cones keep their own coordinates in ``A``; their scaling is the
ordinary second-order cone scaling conjugated by the 45-degree rotation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

CONE_KINDS = ("free", "nonneg", "soc", "rsoc")
_SQRT2 = np.sqrt(2.0)


class ConicError(ValueError):
    """Malformed program or unrecoverable numerical breakdown."""


@dataclass(frozen=True)
class ConeBlock:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ConicError(f"unknown cone kind {self.kind!r}")
        min_dim = {"free": 1, "nonneg": 1, "soc": 2, "rsoc": 3}[self.kind]
        if self.dim < min_dim:
            raise ConicError(f"{self.kind} block needs dim >= {min_dim}, got {self.dim}")


@dataclass(frozen=True)
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple[ConeBlock, ...]

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        A = sp.csr_matrix(self.A, dtype=float)
        cones = tuple(ConeBlock(*blk) if not isinstance(blk, ConeBlock) else blk for blk in self.cones)
        n = sum(blk.dim for blk in cones)
        if A.shape != (b.size, n) or c.size != n:
            raise ConicError(f"shape mismatch: A {A.shape}, b {b.size}, c {c.size}, cones {n}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(b)) and np.all(np.isfinite(A.data))):
            raise ConicError("non-finite program data")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "cones", cones)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    def block_slices(self):
        start = 0
        for blk in self.cones:
            yield blk, slice(start, start + blk.dim)
            start += blk.dim

    def count(self, kind: str) -> int:
        return sum(1 for blk in self.cones if blk.kind == kind)


@dataclass
class ConicSettings:
    tol: float = 1e-8
    max_iter: int = 100
    static_reg: float = 1e-8
    step_fraction: float = 0.99
    refine_steps: int = 4
    presolve: bool = True
    stall_window: int = 10


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    status: str  # optimal | infeasible | unbounded | max_iter
    iterations: int
    residuals: tuple[float, float, float]
    objective: float = float("nan")
    history: list = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def kkt_residuals(prog: ConicProgram, sol) -> tuple[float, float, float]:
    """Relative primal infeasibility, dual infeasibility and duality gap."""
    x, y, z = sol.x, sol.y, sol.z
    pf = np.linalg.norm(prog.A @ x - prog.b) / (1 + np.linalg.norm(prog.b))
    df = np.linalg.norm(prog.A.T @ y + z - prog.c) / (1 + np.linalg.norm(prog.c))
    cx = float(prog.c @ x)
    gap = abs(cx - float(prog.b @ y)) / (1 + abs(cx))
    return float(pf), float(df), float(gap)


def cone_violation(prog: ConicProgram, x) -> np.ndarray:
    """Per-block amount by which ``x`` leaves its cone (0 when inside)."""
    out = []
    for blk, sl in prog.block_slices():
        v = np.asarray(x[sl])
        if blk.kind == "free":
            out.append(0.0)
        elif blk.kind == "nonneg":
            out.append(max(0.0, -v.min()))
        elif blk.kind == "soc":
            out.append(max(0.0, np.linalg.norm(v[1:]) - v[0]))
        else:
            out.append(max(0.0, v[2:] @ v[2:] - 2 * v[0] * v[1], -v[0], -v[1]))
    return np.array(out)


# ---------------------------------------------------------------------------
# cone algebra on groups of equally sized blocks


class _Orthant:
    """Nonnegative variables, handled as one vector."""

    def __init__(self, idx):
        self.idx = np.asarray(idx, dtype=int)
        self.size = self.idx.size
        self.degree = self.size

    def unit(self):
        return np.ones(self.size)

    def shift_needed(self, v):
        return -v.min() if self.size else -np.inf

    def add_unit(self, v, t):
        return v + t

    def max_step(self, v, d):
        neg = d < 0
        return np.min(-v[neg] / d[neg]) if np.any(neg) else np.inf

    def set_scaling(self, s, z):
        self.w = np.sqrt(s / z)
        self.lam = np.sqrt(s * z)

    def w_apply(self, v):  # W v
        return self.w * v

    def w_inv_apply(self, v):  # W^{-1} v
        return v / self.w

    def w_inv_t_apply(self, v):  # W^{-T} v
        return v / self.w

    def hessian_blocks(self):
        return 1.0 / self.w**2

    def jprod(self, u, v):
        return u * v

    def jdiv(self, lam, r):  # solve lam o u = r
        return r / lam


class _SecondOrder:
    """Group of second-order (or rotated) cones with a common dimension.

    Vectors are flattened ``(nblk * dim,)`` arrays in block order.  Rotated
    blocks are mapped to the standard cone by the involution ``T`` on their
    first two coordinates, applied on the unscaled side only.
    """

    def __init__(self, idx, dim, rotated):
        self.idx = np.asarray(idx, dtype=int)
        self.dim = dim
        self.nblk = self.idx.size // dim
        self.size = self.idx.size
        self.degree = self.nblk
        self.rotated = rotated
        self.J = np.ones(dim)
        self.J[1:] = -1.0

    def _r(self, v):
        return v.reshape(self.nblk, self.dim)

    def _T(self, V):
        if not self.rotated:
            return V
        out = V.copy()
        out[:, 0] = (V[:, 0] + V[:, 1]) / _SQRT2
        out[:, 1] = (V[:, 0] - V[:, 1]) / _SQRT2
        return out

    def unit(self):
        e = np.zeros((self.nblk, self.dim))
        e[:, 0] = 1.0
        return self._T(e).ravel()

    def shift_needed(self, v):
        V = self._T(self._r(v))
        return np.max(np.linalg.norm(V[:, 1:], axis=1) - V[:, 0]) if self.nblk else -np.inf

    def add_unit(self, v, t):
        return v + t * self.unit()

    def max_step(self, v, d):
        V, D = self._T(self._r(v)), self._T(self._r(d))
        J = self.J
        a = np.einsum("ij,ij->i", D * J, D)
        bh = np.einsum("ij,ij->i", V * J, D)
        c = np.einsum("ij,ij->i", V * J, V)
        steps = np.full(self.nblk, np.inf)
        # smallest positive root of a t^2 + 2 bh t + c, with c > 0
        lin = np.abs(a) <= 1e-14 * (np.abs(bh) + np.abs(c) + 1e-300)
        lin_neg = lin & (bh < 0)
        steps[lin_neg] = -c[lin_neg] / (2 * bh[lin_neg])
        q = ~lin
        with np.errstate(over="ignore", invalid="ignore"):
            disc = bh**2 - a * c
        real = q & (disc >= 0)
        sq = np.sqrt(np.where(real, disc, 0.0))
        # roots are (-bh +- sq)/a; written to avoid cancellation
        with np.errstate(divide="ignore", invalid="ignore"):
            qq = -(bh + np.copysign(sq, bh))
            r1 = qq / a
            r2 = c / qq
        cand = np.stack([np.where(real, r1, np.inf), np.where(real, r2, np.inf)])
        cand = np.where(cand > 0, cand, np.inf)
        steps[q] = cand.min(axis=0)[q]
        # a direction pointing out through the apex side is caught by x0 + t d0 >= 0
        neg = D[:, 0] < 0
        steps[neg] = np.minimum(steps[neg], -V[neg, 0] / D[neg, 0])
        return steps.min() if self.nblk else np.inf

    @staticmethod
    def _det(V):
        # x0^2 - |x1|^2 in factored form, which keeps accuracy near the boundary
        nrm = np.linalg.norm(V[:, 1:], axis=1)
        return (V[:, 0] - nrm) * (V[:, 0] + nrm)

    def set_scaling(self, s, z):
        S, Z = self._T(self._r(s)), self._T(self._r(z))
        J = self.J
        ds, dz = self._det(S), self._det(Z)
        if np.any(ds <= 0) or np.any(dz <= 0):
            raise FloatingPointError("iterate left the cone interior")
        sn = S / np.sqrt(ds)[:, None]
        zn = Z / np.sqrt(dz)[:, None]
        gamma = np.sqrt((1 + np.einsum("ij,ij->i", sn, zn)) / 2)
        w = (sn + zn * J) / (2 * gamma)[:, None]
        # W = eta * (2 v v' - J) with v the "square root" of the scaling point w
        v = w.copy()
        v[:, 0] += 1.0
        self.wbar = v / np.sqrt(2 * (w[:, 0] + 1))[:, None]
        self.eta = (ds / dz) ** 0.25
        self.lam = self._w_soc(Z).ravel()

    def _w_soc(self, V):
        w = self.wbar
        return self.eta[:, None] * (2 * w * np.einsum("ij,ij->i", w, V)[:, None] - V * self.J)

    def _w_inv_soc(self, V):
        Jw = self.wbar * self.J
        return (2 * Jw * np.einsum("ij,ij->i", Jw, V)[:, None] - V * self.J) / self.eta[:, None]

    def w_apply(self, v):
        return self._w_soc(self._T(self._r(v))).ravel()

    def w_inv_apply(self, v):
        return self._T(self._w_inv_soc(self._r(v))).ravel()

    def w_inv_t_apply(self, v):
        return self._w_inv_soc(self._T(self._r(v))).ravel()

    def hessian_blocks(self):
        Jw = self.wbar * self.J
        Winv = (2 * Jw[:, :, None] * Jw[:, None, :] - np.diag(self.J)[None]) / self.eta[:, None, None]
        H = Winv @ Winv
        if self.rotated:
            T = np.eye(self.dim)
            T[:2, :2] = np.array([[1, 1], [1, -1]]) / _SQRT2
            H = T @ H @ T
        return H

    def jprod(self, u, v):
        U, V = self._r(u), self._r(v)
        out = np.empty_like(U)
        out[:, 0] = np.einsum("ij,ij->i", U, V)
        out[:, 1:] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        return out.ravel()

    def jdiv(self, lam, r):
        L, R = self._r(lam), self._r(r)
        det = L[:, 0] ** 2 - np.einsum("ij,ij->i", L[:, 1:], L[:, 1:])
        u0 = (L[:, 0] * R[:, 0] - np.einsum("ij,ij->i", L[:, 1:], R[:, 1:])) / det
        out = np.empty_like(L)
        out[:, 0] = u0
        out[:, 1:] = (R[:, 1:] - u0[:, None] * L[:, 1:]) / L[:, :1]
        return out.ravel()

    def scaled_unit(self):
        e = np.zeros((self.nblk, self.dim))
        e[:, 0] = 1.0
        return e.ravel()


# ---------------------------------------------------------------------------
# solver


def _presolve(A: sp.csr_matrix, b: np.ndarray, tol: float):
    """Drop linearly dependent rows; return kept row indices or raise if inconsistent."""
    m = A.shape[0]
    if m == 0:
        return np.arange(0)
    dense = A.toarray()
    _, R, piv = scipy.linalg.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > max(dense.shape) * np.finfo(float).eps * max(diag.max(initial=0), 1.0) * 10))
    if rank == m:
        return np.arange(m)
    keep = np.sort(piv[:rank])
    x_ls = np.linalg.lstsq(dense[keep], b[keep], rcond=None)[0]
    if np.linalg.norm(dense @ x_ls - b) > 1e3 * tol * (1 + np.linalg.norm(b)):
        raise ConicError("inconsistent linear equalities")
    log.debug("presolve removed %d dependent rows", m - rank)
    return keep


class _Kkt:
    """Sparse quasi-definite KKT system with a fixed sparsity pattern.

    The pattern (cone Hessian blocks, ``A``, ``A'`` and both diagonals) is laid
    out once; each factorisation only rewrites the CSC data array.
    """

    MAX_BOOST = 1e4

    def __init__(self, A: sp.csr_matrix, n_free: int, groups, reg: float, refine: int):
        m, n = A.shape
        self.m, self.n = m, n
        self.groups = groups
        self.reg = reg
        self.refine = refine
        self.free_h = np.zeros(n_free)
        rows, cols = [np.arange(n_free)], [np.arange(n_free)]
        for g in groups:
            if isinstance(g, _Orthant):
                rows.append(g.idx)
                cols.append(g.idx)
            else:
                blk = g.idx.reshape(g.nblk, g.dim)
                rows.append(np.repeat(blk, g.dim, axis=1).ravel())
                cols.append(np.tile(blk, (1, g.dim)).ravel())
        a = A.tocoo()
        diag = np.arange(n + m)
        all_rows = np.concatenate(rows + [a.row + n, a.col, diag])
        all_cols = np.concatenate(cols + [a.col, a.row + n, diag])
        N = n + m
        pattern = sp.coo_matrix((np.ones(all_rows.size), (all_rows, all_cols)), shape=(N, N)).tocsc()
        pattern.sum_duplicates()
        pattern.sort_indices()
        col_of = np.repeat(np.arange(N), np.diff(pattern.indptr))
        keys = col_of.astype(np.int64) * N + pattern.indices
        self.pos = np.searchsorted(keys, all_cols.astype(np.int64) * N + all_rows)
        self.nnz = keys.size
        self.nh = sum(r.size for r in rows)
        self.a_data = np.concatenate([a.data, a.data])
        self.reg_diag = np.concatenate([np.full(n, -reg), np.full(m, reg)])
        self.K = pattern.copy()
        self.K_exact = pattern.copy()
        self.boost = 1.0

    def factor(self):
        H = np.concatenate([self.free_h] + [np.ravel(g.hessian_blocks()) for g in self.groups])
        exact = np.concatenate([-H, self.a_data, np.zeros(self.n + self.m)])
        self.K_exact.data = np.bincount(self.pos, exact, minlength=self.nnz)
        # a zero pivot near convergence is handled by stiffer regularisation;
        # refinement against the exact matrix recovers the accuracy
        while True:
            exact[-(self.n + self.m):] = self.boost * self.reg_diag
            self.K.data = np.bincount(self.pos, exact, minlength=self.nnz)
            try:
                self.lu = spla.splu(self.K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1,
                                    options={"SymmetricMode": True})
                return
            except RuntimeError:
                if not self.stiffen():
                    raise

    def stiffen(self) -> bool:
        """Raise the regularisation by 100x, up to ``MAX_BOOST``; False once capped."""
        if self.boost >= self.MAX_BOOST:
            return False
        self.boost *= 100.0
        return True

    def solve(self, rhs):
        sol = self.lu.solve(rhs)
        for _ in range(self.refine):
            res = rhs - self.K_exact @ sol
            if np.linalg.norm(res, np.inf) <= 1e-14 * (1 + np.linalg.norm(rhs, np.inf)):
                break
            sol = sol + self.lu.solve(res)
        return sol


def solve_conic(prog: ConicProgram, settings: ConicSettings | None = None, **overrides) -> ConicSolution:
    """Solve a standard-form cone program.

    Returns a :class:`ConicSolution` whose ``status`` is ``optimal`` when the
    relative primal/dual infeasibility and duality gap are all below
    ``settings.tol``.  ``infeasible``/``unbounded`` come from approximate
    Farkas certificates or from residual stalling; ``max_iter`` otherwise.
    """
    st = replace(settings, **overrides) if settings else ConicSettings(**overrides)
    tol = st.tol

    slices = [sl for _, sl in prog.block_slices()]

    def gather(kind, dim=None):
        return [np.arange(sl.start, sl.stop) for blk, sl in zip(prog.cones, slices)
                if blk.kind == kind and (dim is None or blk.dim == dim)]

    free = np.concatenate(gather("free") or [np.arange(0)])
    nonneg = np.concatenate(gather("nonneg") or [np.arange(0)])
    perm = [free, nonneg]
    soc_groups = []
    for kind in ("soc", "rsoc"):
        for d in sorted({blk.dim for blk in prog.cones if blk.kind == kind}):
            idx = np.concatenate(gather(kind, d))
            perm.append(idx)
            soc_groups.append((idx.size, d, kind == "rsoc"))
    perm = np.concatenate(perm).astype(int)
    nf = free.size
    n = prog.n

    A = prog.A[:, perm].tocsr()
    b = prog.b.copy()
    c = prog.c[perm]
    rows = np.arange(prog.m)
    if st.presolve and prog.m:
        rows = _presolve(A, b, tol)
        A, b = A[rows].tocsr(), b[rows]
    m = A.shape[0]

    # cone groups in internal (permuted) coordinates
    groups = []
    pos = nf
    if nonneg.size:
        groups.append(_Orthant(np.arange(pos, pos + nonneg.size)))
        pos += nonneg.size
    for size, d, rot in soc_groups:
        groups.append(_SecondOrder(np.arange(pos, pos + size), d, rot))
        pos += size
    degree = sum(g.degree for g in groups)

    def cslice(g):
        return slice(g.idx[0] - nf, g.idx[-1] - nf + 1)

    def each(fn, *vecs):
        return np.concatenate([fn(g, *[v[cslice(g)] for v in vecs]) for g in groups]) if groups else np.zeros(0)

    def max_step(v, d):
        steps = [g.max_step(v[cslice(g)], d[cslice(g)]) for g in groups]
        return min(steps) if steps else np.inf

    def interior(v):
        return all(g.shift_needed(v[cslice(g)]) < 0 for g in groups)

    def push_interior(v):
        shift = max([g.shift_needed(v[cslice(g)]) for g in groups], default=-np.inf)
        if shift >= 0:
            v = each(lambda g, u: g.add_unit(u, 1.0 + shift), v)
        return v

    kkt = _Kkt(A, nf, groups, st.static_reg, st.refine_steps)
    nb = np.linalg.norm(b)
    nrm_c = np.linalg.norm(c)

    # starting point: least-norm primal and dual estimates pushed into the cone
    for g in groups:
        if isinstance(g, _Orthant):
            g.set_scaling(np.ones(g.size), np.ones(g.size))
        else:
            e = g.unit()
            g.set_scaling(e, e)
    kkt.factor()
    sol = kkt.solve(np.concatenate([np.zeros(n), b]))
    x = sol[:n].copy()
    x[nf:] = push_interior(x[nf:])
    sol = kkt.solve(np.concatenate([c, np.zeros(m)]))
    y = sol[n:].copy()
    zc = push_interior(-sol[nf:n])

    status = "max_iter"
    history = []
    best_feas = np.inf
    best_feas_it = 0
    it = 0
    alpha = 1.0
    for it in range(st.max_iter + 1):
        xc = x[nf:]
        rp = b - A @ x
        ATy = A.T @ y
        rd = c - ATy
        rd[nf:] -= zc
        cx, by = float(c @ x), float(b @ y)
        pres = np.linalg.norm(rp) / (1 + nb)
        dres = np.linalg.norm(rd) / (1 + nrm_c)
        gap = abs(cx - by) / (1 + abs(cx))
        compl = float(xc @ zc)
        history.append((pres, dres, gap, compl))
        if pres <= tol and dres <= tol and gap <= tol and compl / (1 + abs(cx)) <= tol:
            status = "optimal"
            break
        # approximate Farkas certificates
        if by > 0 and m:
            ATy_n = ATy / by
            cert = max(np.linalg.norm(ATy_n[:nf], np.inf) if nf else 0.0,
                       max([g.shift_needed(-ATy_n[g.idx]) for g in groups], default=0.0))
            if cert <= tol and pres > tol:
                status = "infeasible"
                break
        if cx < 0 and np.linalg.norm(A @ x) / -cx <= tol and dres > tol:
            shift = max([g.shift_needed(x[g.idx]) for g in groups], default=-np.inf)
            if shift <= 0:
                status = "unbounded"
                break
        feas = max(pres, dres)
        if feas < 0.5 * best_feas:
            best_feas, best_feas_it = feas, it
        # residual stall: feasibility stuck well above tolerance for a whole window
        if it - best_feas_it >= st.stall_window and feas > max(1e3 * tol, 1e-6):
            status = "infeasible" if pres >= dres else "unbounded"
            break
        if it == st.max_iter:
            break

        mu = compl / degree if degree else 0.0
        try:
            for g in groups:
                g.set_scaling(xc[cslice(g)], zc[cslice(g)])
            kkt.factor()
        except (FloatingPointError, RuntimeError) as exc:
            log.debug("numerical breakdown at iteration %d: %s", it, exc)
            break
        lam = each(lambda g, s, z: g.lam, xc, zc)

        def newton(r_c):
            u = each(lambda g, r, l: g.jdiv(l, r), r_c, lam)
            winv_u = each(lambda g, v: g.w_inv_apply(v), u)
            top = rd.copy()
            top[nf:] -= winv_u
            sol = kkt.solve(np.concatenate([top, rp]))
            dx, dy = sol[:n], sol[n:]
            hdx = each(lambda g, v: g.w_inv_apply(g.w_inv_t_apply(v)), dx[nf:])
            dz = winv_u - hdx
            return dx, dy, dz

        lam_sq = each(lambda g, l: g.jprod(l, l), lam)
        dx_a, dy_a, dz_a = newton(-lam_sq)
        a_aff = min(1.0, max_step(xc, dx_a[nf:]), max_step(zc, dz_a))
        mu_aff = float((xc + a_aff * dx_a[nf:]) @ (zc + a_aff * dz_a)) / degree if degree else 0.0
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0
        ds_t = each(lambda g, v: g.w_inv_t_apply(v), dx_a[nf:])
        dz_t = each(lambda g, v: g.w_apply(v), dz_a)
        e = each(lambda g, l: g.scaled_unit() if hasattr(g, "scaled_unit") else g.unit(), lam)
        r_c = sigma * mu * e - lam_sq - each(lambda g, u, v: g.jprod(u, v), ds_t, dz_t)
        dx, dy, dz = newton(r_c)
        alpha = min(1.0, st.step_fraction * min(max_step(xc, dx[nf:]), max_step(zc, dz)))
        if not np.isfinite(alpha) or alpha <= 0:
            break
        # guard against rounding in the step-length formula
        for _ in range(20):
            if interior(xc + alpha * dx[nf:]) and interior(zc + alpha * dz):
                break
            alpha *= 0.5
        if alpha < 0.1 and pres + dres < 1e-4:
            # short steps late in the run come from an inaccurate Newton direction
            kkt.stiffen()
        x = x + alpha * dx
        y = y + alpha * dy
        zc = zc + alpha * dz

    # map back to caller coordinates
    x_out = np.empty(n)
    x_out[perm] = x
    z_int = np.zeros(n)
    z_int[nf:] = zc
    z_out = np.empty(n)
    z_out[perm] = z_int
    y_out = np.zeros(prog.m)
    y_out[rows] = y
    result = ConicSolution(x_out, y_out, z_out, status, it, (0.0, 0.0, 0.0), float(prog.c @ x_out), history)
    result.residuals = kkt_residuals(prog, result)
    return result


def planted_program(rng: np.random.Generator, cones: Sequence[ConeBlock | tuple], m: int,
                    density: float = 0.3):
    """Random program with a known primal-dual optimal pair.

    Builds a complementary pair ``(x*, z*)`` block by block (one side strictly
    interior and the other zero, or both on the boundary facing each other),
    draws a random ``A`` and ``y*``, and sets ``b = A x*``, ``c = A' y* + z*``.
    The first row of ``A`` is a trace row (sum of the cone "heads") and every
    free column gets its own unit entry, so the primal feasible set is bounded
    and the optimal face cannot run off to infinity.  Needs ``m > #free``.
    Returns ``(program, x*, y*, z*)``; the optimal value is ``c' x* = b' y*``.
    """
    cones = tuple(ConeBlock(*c) if not isinstance(c, ConeBlock) else c for c in cones)
    xs, zs, trace = [], [], []
    for blk in cones:
        d = blk.dim
        tr = np.zeros(d)
        if blk.kind == "free":
            xs.append(rng.normal(size=d))
            zs.append(np.zeros(d))
            trace.append(tr)
            continue
        if blk.kind == "nonneg":
            on = rng.uniform(0.5, 2.0, d)
            pick = rng.integers(2, size=d).astype(bool)
            xs.append(np.where(pick, on, 0.0))
            zs.append(np.where(pick, 0.0, rng.uniform(0.5, 2.0, d)))
            trace.append(tr + 1.0)
            continue
        mode = rng.integers(3)
        u = rng.normal(size=d - 1)
        u /= np.linalg.norm(u)
        if mode == 0:  # x interior, z = 0
            xv, zv = np.concatenate([[2.0], 0.5 * u]), np.zeros(d)
        elif mode == 1:  # x = 0, z interior
            xv, zv = np.zeros(d), np.concatenate([[2.0], 0.5 * u])
        else:  # both on the boundary, opposite rays
            t = rng.uniform(0.5, 2.0)
            xv, zv = np.concatenate([[1.0], u]), t * np.concatenate([[1.0], -u])
        if blk.kind == "rsoc":
            # map standard-cone points to rotated coordinates (T is an involution)
            for v in (xv, zv):
                a, bb = v[0], v[1]
                v[0], v[1] = (a + bb) / _SQRT2, (a - bb) / _SQRT2
            tr[:2] = 1.0
        else:
            tr[0] = 1.0
        xs.append(xv)
        zs.append(zv)
        trace.append(tr)
    x_star = np.concatenate(xs)
    z_star = np.concatenate(zs)
    n = x_star.size
    free = np.flatnonzero(np.concatenate([np.full(b.dim, b.kind == "free") for b in cones]))
    if free.size == n:
        raise ConicError("planted programs need at least one cone block")
    if m <= free.size:
        raise ConicError(f"need more than {free.size} rows for {free.size} free variables")
    A = sp.random(m - 1, n, density=density, random_state=np.random.default_rng(rng.integers(2**32)),
                  data_rvs=lambda k: rng.normal(size=k), format="csr")
    A = A + sp.eye(m - 1, n, k=int(rng.integers(0, max(n - m, 0) + 1)), format="csr")
    A = A + sp.csr_matrix((np.full(free.size, 2.0), (np.arange(free.size), free)), shape=(m - 1, n))
    A = sp.vstack([sp.csr_matrix(np.concatenate(trace)), A], format="csr")
    y_star = rng.normal(size=m)
    b = A @ x_star
    c = A.T @ y_star + z_star
    return ConicProgram(c, A, b, cones), x_star, y_star, z_star
