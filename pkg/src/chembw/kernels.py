"""Mass-action flux kernels.

The compiled extension ``chembw._ckernels`` is used when it was built; the
numpy implementation below is the fallback and the reference it is tested
against. Set ``CHEMBW_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

try:
    if os.environ.get("CHEMBW_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "numpy"


@dataclass(eq=False)
class CompiledNetwork:
    """CSR-style arrays for a reaction list.

    ``react_*`` hold reactant species and exponents per reaction;
    ``change_*`` hold nonzero net stoichiometry per reaction.
    """

    n_species: int
    react_ptr: np.ndarray
    react_idx: np.ndarray
    react_exp: np.ndarray
    change_ptr: np.ndarray
    change_idx: np.ndarray
    change_coef: np.ndarray
    backend: str = BACKEND

    @classmethod
    def from_reactions(cls, n_species, reactions, backend=None) -> "CompiledNetwork":
        rp, ri, re, cp, ci, cc = [0], [], [], [0], [], []
        for rxn in reactions:
            for s, c in rxn.reactants:
                ri.append(s)
                re.append(c)
            rp.append(len(ri))
            for s, c in sorted(rxn.net_change().items()):
                ci.append(s)
                cc.append(c)
            cp.append(len(ci))
        i32 = np.int32
        return cls(
            n_species,
            np.array(rp, dtype=i32),
            np.array(ri, dtype=i32),
            np.array(re, dtype=i32),
            np.array(cp, dtype=i32),
            np.array(ci, dtype=i32),
            np.array(cc, dtype=float),
            backend or BACKEND,
        )

    @property
    def n_reactions(self) -> int:
        return len(self.react_ptr) - 1

    def with_backend(self, backend: str) -> "CompiledNetwork":
        if backend == "cython" and _ckernels is None:
            raise RuntimeError("compiled kernels are not available")
        clone = CompiledNetwork(**{**self.__dict__, "backend": backend})
        return clone

    def fluxes(self, x, k) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        k = np.ascontiguousarray(k, dtype=float)
        if self.backend == "cython":
            out = np.empty(self.n_reactions)
            _ckernels.fluxes(x, k, self.react_ptr, self.react_idx, self.react_exp, out)
            return out
        return self._numpy.fluxes(x, k)

    def rhs(self, x, k, out=None) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        k = np.ascontiguousarray(k, dtype=float)
        if out is None:
            out = np.empty(self.n_species)
        if self.backend == "cython":
            _ckernels.rhs(
                x, k, self.react_ptr, self.react_idx, self.react_exp,
                self.change_ptr, self.change_idx, self.change_coef, out,
            )
            return out
        out[:] = self._numpy.stoich @ self._numpy.fluxes(x, k)
        return out

    @property
    def _numpy(self) -> "_NumpyKernel":
        kern = self.__dict__.get("_numpy_kernel")
        if kern is None:
            kern = self.__dict__["_numpy_kernel"] = _NumpyKernel(self)
        return kern


class _NumpyKernel:
    """Padded-gather flux evaluation plus a sparse stoichiometry product."""

    def __init__(self, cn: CompiledNetwork):
        m, n = cn.n_reactions, cn.n_species
        counts = np.diff(cn.react_ptr)
        width = int(counts.max()) if m else 0
        # padding gathers slot n, which always holds 1.0
        self.idx = np.full((m, width), n, dtype=np.intp)
        self.exp = np.ones((m, width), dtype=float)
        for j in range(m):
            lo, hi = cn.react_ptr[j], cn.react_ptr[j + 1]
            self.idx[j, : hi - lo] = cn.react_idx[lo:hi]
            self.exp[j, : hi - lo] = cn.react_exp[lo:hi]
        self.unit_exp = bool(np.all(self.exp == 1.0))
        self.n = n
        rows = cn.change_idx
        cols = np.repeat(np.arange(m), np.diff(cn.change_ptr))
        self.stoich = sp.csr_matrix((cn.change_coef, (rows, cols)), shape=(n, m))

    def fluxes(self, x, k):
        xp = np.empty(self.n + 1)
        xp[: self.n] = x
        xp[self.n] = 1.0
        g = xp[self.idx]
        if not self.unit_exp:
            g = g**self.exp
        return k * g.prod(axis=1)
