"""Pointwise linear algebra of Dirac structures.

Elements of ``V ⊕ V*`` are stored as flat arrays of length ``2N``: the first
``N`` entries are the vector part, the last ``N`` the covector part.  Subspaces
carry an orthonormal basis (columns), so projections are plain matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NotDiracError

#: relative singular-value threshold used for every rank decision
RANK_RTOL = 1e-10


def _svd_split(a: np.ndarray, rtol: float = RANK_RTOL):
    """Return ``(rank, U, s, Vh)`` of ``a`` with rank from relative thresholding."""
    if a.size == 0:
        return 0, None, np.zeros(0), None
    u, s, vh = np.linalg.svd(a)
    if s.size == 0 or s[0] == 0.0:
        return 0, u, s, vh
    rank = int(np.sum(s > rtol * s[0]))
    return rank, u, s, vh


def rank(a, rtol: float = RANK_RTOL) -> int:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0
    return _svd_split(a, rtol)[0]


def orth(a, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the column space of ``a``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.size == 0:
        return np.zeros((n, 0))
    r, u, _, _ = _svd_split(a, rtol)
    return u[:, :r].copy()


def null_space(a, rtol: float = RANK_RTOL, ncols: int | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of ``{x : a @ x = 0}``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {a.shape}")
    n = a.shape[1] if ncols is None else ncols
    if a.shape[0] == 0:
        return np.eye(n)
    r, _, _, vh = _svd_split(a, rtol)
    return vh[r:].T.copy()


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of ``R^ambient_dim`` given by an orthonormal basis."""

    ambient_dim: int
    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.ambient_dim <= 0:
            raise DimensionError("ambient_dim must be positive")
        b = np.asarray(self.basis, dtype=float)
        if b.size == 0:
            b = np.zeros((self.ambient_dim, 0))
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if b.shape[0] != self.ambient_dim:
            raise DimensionError(
                f"basis has {b.shape[0]} rows, ambient_dim is {self.ambient_dim}"
            )
        if b.shape[1] > self.ambient_dim:
            raise DimensionError("more basis vectors than ambient dimension")
        q = orth(b)
        if q.shape[1] != b.shape[1]:
            raise DimensionError("basis vectors are linearly dependent")
        q.setflags(write=False)
        object.__setattr__(self, "basis", q)

    @classmethod
    def span(cls, vectors, ambient_dim: int | None = None) -> "Subspace":
        """Subspace spanned by the columns of ``vectors`` (dependent columns dropped)."""
        v = np.asarray(vectors, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        dim = v.shape[0] if ambient_dim is None else ambient_dim
        if v.size == 0:
            return cls(dim, np.zeros((dim, 0)))
        return cls(dim, orth(v))

    @classmethod
    def zero(cls, ambient_dim: int) -> "Subspace":
        return cls(ambient_dim, np.zeros((ambient_dim, 0)))

    @classmethod
    def full(cls, ambient_dim: int) -> "Subspace":
        return cls(ambient_dim, np.eye(ambient_dim))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.basis @ (self.basis.T @ x)

    def contains(self, x, tol: float = 1e-10) -> bool:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.project(x)) <= tol * max(1.0, np.linalg.norm(x))


def same_subspace(a: Subspace, b: Subspace, rtol: float = RANK_RTOL) -> bool:
    """Basis-independent equality: ``rank([A|B]) == rank(A) == rank(B)``."""
    if a.ambient_dim != b.ambient_dim:
        return False
    ra, rb = rank(a.basis, rtol), rank(b.basis, rtol)
    if ra != rb:
        return False
    return rank(np.hstack([a.basis, b.basis]), rtol) == ra


@dataclass(frozen=True)
class PresymplecticForm:
    """Antisymmetric bilinear form ``Omega(v, w) = v @ matrix @ w``."""

    matrix: np.ndarray = field(repr=False)
    atol: float = 1e-12

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError("form must be a square matrix")
        if np.max(np.abs(m + m.T), initial=0.0) > self.atol:
            raise ValueError("form is not antisymmetric")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def canonical(cls, n: int) -> "PresymplecticForm":
        """``dq^i ∧ dp_i`` on ``R^{2n}`` with coordinates ordered ``(q, p)``."""
        z = np.zeros((n, n))
        eye = np.eye(n)
        return cls(np.block([[z, eye], [-eye, z]]), atol=0.0)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def flat(self, v) -> np.ndarray:
        """The covector ``w ↦ Omega(v, w)``."""
        return self.matrix.T @ np.asarray(v, dtype=float)

    def __call__(self, v, w) -> float:
        return float(np.asarray(v, dtype=float) @ self.matrix @ np.asarray(w, dtype=float))


@dataclass(frozen=True)
class LinearDiracDescriptor:
    """Subspace ``D ⊂ V ⊕ V*`` with ``dim V = base_dim``."""

    base_dim: int
    elements: Subspace

    def __post_init__(self):
        if self.elements.ambient_dim != 2 * self.base_dim:
            raise DimensionError(
                f"elements live in R^{self.elements.ambient_dim}, expected R^{2 * self.base_dim}"
            )

    @property
    def basis(self) -> np.ndarray:
        return self.elements.basis


@dataclass(frozen=True)
class DiracCertificate:
    is_dirac: bool
    dim_ok: bool
    max_pairing: float


def pairing_matrix(n: int) -> np.ndarray:
    """Gram matrix ``J`` of the symmetric pairing: ``<<a, b>> = a @ J @ b``."""
    z = np.zeros((n, n))
    eye = np.eye(n)
    return np.block([[z, eye], [eye, z]])


def symmetric_pairing(a, b) -> float:
    """``<α, v̄> + <ᾱ, v>`` for ``a = (v, α)``, ``b = (v̄, ᾱ)``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape or a.size % 2:
        raise DimensionError(f"cannot pair elements of sizes {a.size} and {b.size}")
    n = a.size // 2
    return float(a[n:] @ b[:n] + b[n:] @ a[:n])


def annihilator(s: Subspace) -> Subspace:
    """Covectors vanishing on ``s``."""
    if s.dim == 0:
        return Subspace.full(s.ambient_dim)
    return Subspace(s.ambient_dim, null_space(s.basis.T, ncols=s.ambient_dim))


def orthogonal_complement(d: Subspace) -> Subspace:
    """Complement of ``d ⊂ V ⊕ V*`` with respect to the symmetric pairing."""
    if d.ambient_dim % 2:
        raise DimensionError("orthogonal complement needs an even ambient dimension")
    n = d.ambient_dim // 2
    if d.dim == 0:
        return Subspace.full(d.ambient_dim)
    return Subspace(d.ambient_dim, null_space(d.basis.T @ pairing_matrix(n), ncols=2 * n))


def certify_dirac(d: LinearDiracDescriptor, tol: float = 1e-10) -> DiracCertificate:
    n = d.base_dim
    b = d.basis
    dim_ok = b.shape[1] == n
    if b.shape[1]:
        max_pairing = float(np.max(np.abs(b.T @ pairing_matrix(n) @ b)))
    else:
        max_pairing = 0.0
    return DiracCertificate(dim_ok and max_pairing <= tol, dim_ok, max_pairing)


def induced_dirac(delta: Subspace, omega: PresymplecticForm) -> LinearDiracDescriptor:
    """``{(v, α) : v ∈ delta, α − Ω♭v ∈ delta°}``."""
    n = delta.ambient_dim
    if omega.dim != n:
        raise DimensionError(f"form acts on R^{omega.dim}, distribution on R^{n}")
    b = delta.basis
    ann = annihilator(delta).basis
    graph = np.vstack([b, omega.matrix.T @ b])
    fiber = np.vstack([np.zeros_like(ann), ann])
    return LinearDiracDescriptor(n, Subspace(2 * n, np.hstack([graph, fiber])))


def membership_residual(d: LinearDiracDescriptor, candidate, tol: float = 1e-10) -> float:
    """Euclidean distance from ``candidate`` to ``span(d)``."""
    cert = certify_dirac(d, tol)
    if not cert.is_dirac:
        raise NotDiracError(
            f"descriptor is not Dirac (dim_ok={cert.dim_ok}, max_pairing={cert.max_pairing:.3g})"
        )
    c = np.asarray(candidate, dtype=float).ravel()
    if c.size != 2 * d.base_dim:
        raise DimensionError(f"candidate has size {c.size}, expected {2 * d.base_dim}")
    return float(np.linalg.norm(c - d.elements.project(c)))
