"""Simultaneous fit of the vortex sensitivity model to several cooldowns.

The resistive and reactive sensitivities of all datasets are fitted at
once. By default the depinning parameters ``omega0`` and ``alpha`` are
shared across datasets and ``F`` is free per dataset. Only the reactive
channel depends on ``F``, so the resistive data alone pin down
``(omega0, alpha)``.

The estimator follows the scikit-learn API. Its input is in long format:
one row per observation with columns ``(temperature_K, dataset_index,
channel)``, where channel 0 is S and channel 1 is S'. Use
:func:`curves_to_xy` to build those arrays from SensitivityCurve objects.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import FitError, RankDeficiencyError
from .model import (
    DEFAULT_MATERIAL,
    PinningParams,
    sensitivity_model,
    sensitivity_prefactor,
)

KINDS = ("omega0", "alpha", "F")
# omega0 and F are fitted as logarithms to keep them positive
LOG_KINDS = frozenset({"omega0", "F"})

DEFAULT_BOUNDS = {"omega0": (1e6, 1e16), "alpha": (-50.0, 50.0), "F": (1e-6, 1e9)}
DEFAULT_SHARE = {"omega0": "global", "alpha": "global", "F": "per_dataset"}

CHANNEL_S = 0
CHANNEL_S_PRIME = 1


@dataclass
class FitConfig:
    """Options for :func:`fit_simultaneous`.

    ``omega0=None`` starts from the cavity angular frequency. ``F`` may be
    a scalar or one starting value per dataset. ``fixed`` maps parameter
    names (``"alpha"``, ``"F"``, ``"F[1]"`` ...) to values held constant.
    """

    omega0: float = None
    alpha: float = 1.0
    F: object = 100.0
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    share: dict = field(default_factory=lambda: dict(DEFAULT_SHARE))
    fixed: dict = field(default_factory=dict)
    weight: str = "inverse_variance"
    xtol: float = 1e-10
    gtol: float = 1e-10
    ftol: float = 1e-12
    max_iter: int = 500
    fd_step: float = 1e-7
    rcond: float = 1e-7

    def __post_init__(self):
        for name in ("xtol", "gtol", "ftol", "fd_step", "rcond"):
            if not getattr(self, name) > 0:
                raise FitError(f"{name} must be > 0")
        if self.weight not in ("inverse_variance", "unit"):
            raise FitError(f"unknown weight mode {self.weight!r}")


@dataclass
class FitResult:
    """Outcome of a simultaneous fit.

    ``values`` and ``uncertainties`` are keyed by parameter name in linear
    scale. ``covariance`` covers the free parameters in ``free_names``
    order and is already scaled by the reduced chi-square, so the
    uncertainties are the square roots of its diagonal.
    """

    names: list
    values: dict
    uncertainties: dict
    free_names: list
    covariance: np.ndarray
    chi2_reduced: float
    n_points: int
    n_residuals: int
    n_iterations: int
    converged: bool
    residuals: list
    cost_history: list
    n_datasets: int
    share: dict
    x_internal: np.ndarray = None
    dataset_labels: list = None

    def param(self, kind, k):
        """Value of ``kind`` for dataset ``k`` (resolves sharing)."""
        if self.share[kind] == "global":
            return self.values[kind]
        return self.values[f"{kind}[{k}]"]

    def sigma(self, kind, k):
        if self.share[kind] == "global":
            return self.uncertainties[kind]
        return self.uncertainties[f"{kind}[{k}]"]

    def pinning_params(self):
        return [
            PinningParams(self.param("omega0", k), self.param("alpha", k), self.param("F", k))
            for k in range(self.n_datasets)
        ]

    def to_report(self):
        def collect(source, kind):
            if self.share[kind] == "global":
                return source[kind]
            return [source[f"{kind}[{k}]"] for k in range(self.n_datasets)]

        keys = {"omega0": "omega0_rad_s", "alpha": "alpha_per_k", "F": "f"}
        return {
            "params": {keys[k]: collect(self.values, k) for k in KINDS},
            "uncertainties": {keys[k]: collect(self.uncertainties, k) for k in KINDS},
            "covariance": np.asarray(self.covariance).tolist(),
            "covariance_parameters": list(self.free_names),
            "chi2_reduced": self.chi2_reduced,
            "n_points": self.n_points,
            "n_iterations": self.n_iterations,
            "converged": self.converged,
            "datasets": list(self.dataset_labels or range(self.n_datasets)),
            "share": dict(self.share),
            "note": (
                "F values are listed in dataset order; the resistive channel "
                "carries no F, so S data alone constrain omega0 and alpha."
            ),
        }


class _Layout:
    """Maps named model parameters onto the free-parameter vector."""

    def __init__(self, n_datasets, share, fixed):
        self.n_datasets = n_datasets
        self.share = share
        self.entries = []  # (name, kind, dataset or None)
        for kind in KINDS:
            mode = share.get(kind, "global")
            if mode == "global":
                self.entries.append((kind, kind, None))
            elif mode == "per_dataset":
                for k in range(n_datasets):
                    self.entries.append((f"{kind}[{k}]", kind, k))
            else:
                raise FitError(f"share mode for {kind!r} must be 'global' or 'per_dataset'")
        self.names = [e[0] for e in self.entries]
        unknown = set(fixed) - set(self.names) - set(KINDS)
        if unknown:
            raise FitError(f"cannot fix unknown parameter(s): {', '.join(sorted(unknown))}")
        self.fixed = {}
        for name, kind, _ in self.entries:
            if name in fixed:
                self.fixed[name] = float(fixed[name])
            elif kind in fixed:
                self.fixed[name] = float(fixed[kind])
        self.free = [i for i, e in enumerate(self.entries) if e[0] not in self.fixed]
        self.free_names = [self.names[i] for i in self.free]

    def to_internal(self, name, value):
        kind = self.entries[self.names.index(name)][1]
        if kind in LOG_KINDS:
            if value <= 0:
                raise FitError(f"{name} must be > 0, got {value!r}")
            return np.log(value)
        return float(value)

    def full_linear(self, x):
        """Linear-scale values of every named parameter."""
        out = np.empty(len(self.entries))
        for i, (name, kind, _) in enumerate(self.entries):
            if name in self.fixed:
                out[i] = self.fixed[name]
        for j, i in enumerate(self.free):
            kind = self.entries[i][1]
            out[i] = np.exp(x[j]) if kind in LOG_KINDS else x[j]
        return out

    def per_dataset(self, linear):
        """Arrays ``(omega0, alpha, F)`` of length ``n_datasets``."""
        res = {}
        for kind in KINDS:
            arr = np.empty(self.n_datasets)
            for i, (_, knd, k) in enumerate(self.entries):
                if knd != kind:
                    continue
                if k is None:
                    arr[:] = linear[i]
                else:
                    arr[k] = linear[i]
            res[kind] = arr
        return res["omega0"], res["alpha"], res["F"]

    def linear_derivative(self, x):
        """d(linear value)/d(internal value) for each free parameter."""
        d = np.ones(len(self.free))
        for j, i in enumerate(self.free):
            if self.entries[i][1] in LOG_KINDS:
                d[j] = np.exp(x[j])
        return d


class _Problem:
    """Weighted residuals of the long-format data for a given layout."""

    def __init__(self, X, y, weights, layout, material, omega):
        self.t = X[:, 0]
        self.ds = X[:, 1].astype(int)
        self.reactive = X[:, 2] == CHANNEL_S_PRIME
        self.y = y
        self.w = weights
        self.layout = layout
        self.omega = omega
        self.pref = np.asarray(sensitivity_prefactor(self.t, material), dtype=float)

    def model(self, x):
        w0, a, F = self.layout.per_dataset(self.layout.full_linear(x))
        with np.errstate(over="ignore", divide="ignore"):
            r = w0[self.ds] * np.exp(a[self.ds] * self.t) / self.omega
            real = 1.0 / (1.0 + r * r)
            imag = 1.0 / (r + 1.0 / r)
        return self.pref * np.where(self.reactive, F[self.ds] * imag, real)

    def residual(self, x):
        return (self.y - self.model(x)) * self.w

    def jacobian(self, x, r=None, fd_step=1e-7, central=False):
        x = np.asarray(x, dtype=float)
        if r is None and not central:
            r = self.residual(x)
        J = np.empty((self.y.size, x.size))
        for j in range(x.size):
            h = fd_step * max(abs(x[j]), 1.0)
            xp = x.copy()
            xp[j] += h
            if central:
                xm = x.copy()
                xm[j] -= h
                J[:, j] = (self.residual(xp) - self.residual(xm)) / (2 * h)
            else:
                J[:, j] = (self.residual(xp) - r) / h
        return J


def _levenberg_marquardt(problem, x0, lower, upper, xtol, gtol, ftol, max_iter, fd_step):
    """Damped Gauss-Newton with Marquardt diagonal scaling.

    Only steps that lower the cost are accepted, so the recorded cost
    history is non-increasing. Returns ``(x, r, J, n_iter, converged,
    costs)``.
    """
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    r = problem.residual(x)
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        raise FitError("model is not finite at the initial guess")
    J = problem.jacobian(x, r, fd_step)
    costs = [cost]
    lam, nu = None, 2.0
    converged = False
    n_iter = 0
    while n_iter < max_iter:
        n_iter += 1
        g = J.T @ r
        A = J.T @ J
        diag = np.diag(A).copy()
        col = np.sqrt(diag)
        rnorm = np.sqrt(2.0 * cost)
        if rnorm == 0.0:
            converged = True
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            cosines = np.where(col > 0, np.abs(g) / (col * rnorm), 0.0)
        if np.max(cosines, initial=0.0) <= gtol:
            converged = True
            break
        scale = np.maximum(diag, 1e-30 * max(diag.max(), 1e-300))
        if lam is None:
            lam = 1e-3
        accepted = False
        while not accepted:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= nu
                nu *= 2.0
                continue
            x_new = np.clip(x + step, lower, upper)
            step = x_new - x
            r_new = problem.residual(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(x) + xtol)
            if np.isfinite(cost_new) and cost_new < cost:
                predicted = -(step @ g) - 0.5 * step @ A @ step
                actual = cost - cost_new
                rho = actual / predicted if predicted > 0 else 0.0
                lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                x, r, cost = x_new, r_new, cost_new
                costs.append(cost)
                J = problem.jacobian(x, r, fd_step)
                accepted = True
                if small_step or (actual <= ftol * costs[-2] and predicted <= ftol * costs[-2]):
                    converged = True
            else:
                if small_step or lam > 1e30:
                    # no downhill step left at resolvable size
                    converged = small_step
                    break
                lam *= nu
                nu *= 2.0
        if converged or not accepted:
            break
    return x, r, J, n_iter, converged, costs


def _null_parameters(Jn, names, v_threshold=0.3):
    _, s, vt = np.linalg.svd(Jn, full_matrices=False)
    v = vt[-1]
    picked = [names[i] for i in np.argsort(-np.abs(v)) if abs(v[i]) >= v_threshold]
    return picked or [names[int(np.argmax(np.abs(v)))]]


class VortexSensitivityRegressor(RegressorMixin, BaseEstimator):
    """Global least-squares fit of the vortex sensitivity model.

    Parameters
    ----------
    material : MaterialParams, optional
        Material constants; defaults to the niobium values.
    omega : float, optional
        RF angular frequency (rad/s); defaults to ``material.omega``.
    omega0, alpha, F : float
        Starting values. ``omega0=None`` starts at ``omega``. ``F`` may be a
        sequence with one entry per dataset.
    bounds, share, fixed, weight, xtol, gtol, ftol, max_iter, fd_step, rcond
        See :class:`FitConfig`.

    Attributes
    ----------
    result_ : FitResult
    n_datasets_ : int
    """

    def __init__(
        self,
        material=None,
        omega=None,
        omega0=None,
        alpha=1.0,
        F=100.0,
        bounds=None,
        share=None,
        fixed=None,
        weight="inverse_variance",
        xtol=1e-10,
        gtol=1e-10,
        ftol=1e-12,
        max_iter=500,
        fd_step=1e-7,
        rcond=1e-7,
    ):
        self.material = material
        self.omega = omega
        self.omega0 = omega0
        self.alpha = alpha
        self.F = F
        self.bounds = bounds
        self.share = share
        self.fixed = fixed
        self.weight = weight
        self.xtol = xtol
        self.gtol = gtol
        self.ftol = ftol
        self.max_iter = max_iter
        self.fd_step = fd_step
        self.rcond = rcond

    def _material(self):
        return DEFAULT_MATERIAL if self.material is None else self.material

    def _omega(self):
        return self._material().omega if self.omega is None else float(self.omega)

    def _validate_X(self, X):
        X = check_array(X, dtype=float)
        if X.shape[1] != 3:
            raise FitError("X must have columns (temperature, dataset, channel)")
        ds = X[:, 1]
        if np.any(ds < 0) or np.any(ds != np.round(ds)):
            raise FitError("dataset indices must be non-negative integers")
        if not np.all(np.isin(X[:, 2], (CHANNEL_S, CHANNEL_S_PRIME))):
            raise FitError("channel must be 0 (S) or 1 (S')")
        return X

    def _weights(self, y, sigma):
        if self.weight == "unit":
            return np.ones_like(y)
        if self.weight != "inverse_variance":
            raise FitError(f"unknown weight mode {self.weight!r}")
        if sigma is None:
            raise FitError("inverse-variance weighting needs sigma")
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != y.shape:
            raise FitError("sigma must match y in shape")
        if np.any(~(sigma > 0)):
            raise FitError("inverse-variance weighting needs every sigma > 0")
        return 1.0 / sigma

    def fit(self, X, y, sigma=None):
        """Fit to long-format observations ``y`` with 1-sigma errors ``sigma``."""
        cfg = FitConfig(
            omega0=self.omega0, alpha=self.alpha, F=self.F,
            bounds={**DEFAULT_BOUNDS, **(self.bounds or {})},
            share={**DEFAULT_SHARE, **(self.share or {})},
            fixed=dict(self.fixed or {}), weight=self.weight,
            xtol=self.xtol, gtol=self.gtol, ftol=self.ftol,
            max_iter=self.max_iter, fd_step=self.fd_step, rcond=self.rcond,
        )
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        X = self._validate_X(X)
        weights = self._weights(y, sigma)
        mp = self._material()
        omega = self._omega()
        n_datasets = int(X[:, 1].max()) + 1
        present = np.unique(X[:, 1].astype(int))
        if present.size != n_datasets:
            raise FitError("dataset indices must be contiguous from 0")

        layout = _Layout(n_datasets, cfg.share, cfg.fixed)
        problem = _Problem(X, y, weights, layout, mp, omega)
        n_free = len(layout.free)
        if n_free == 0:
            raise FitError("every parameter is fixed; nothing to fit")
        if y.size < n_free + 1:
            raise RankDeficiencyError(
                f"{y.size} observations cannot determine {n_free} free parameters "
                f"({', '.join(layout.free_names)})",
                layout.free_names,
            )

        starts = {"omega0": omega if cfg.omega0 is None else cfg.omega0, "alpha": cfg.alpha}
        F0 = np.broadcast_to(np.asarray(cfg.F, dtype=float), (n_datasets,))
        x0, lower, upper = [], [], []
        for i in layout.free:
            name, kind, k = layout.entries[i]
            start = F0[k if k is not None else 0] if kind == "F" else starts[kind]
            lo, hi = cfg.bounds[kind]
            if not lo <= start <= hi:
                raise FitError(f"initial {name} = {start:g} outside bounds [{lo:g}, {hi:g}]")
            x0.append(layout.to_internal(name, start))
            lower.append(layout.to_internal(name, lo) if kind not in LOG_KINDS or lo > 0 else -np.inf)
            upper.append(layout.to_internal(name, hi))
        x, r, J, n_iter, converged, costs = _levenberg_marquardt(
            problem, np.array(x0), np.array(lower), np.array(upper),
            cfg.xtol, cfg.gtol, cfg.ftol, cfg.max_iter, cfg.fd_step,
        )

        norms = np.linalg.norm(J, axis=0)
        if np.any(norms == 0):
            bad = [layout.free_names[j] for j in np.flatnonzero(norms == 0)]
            raise RankDeficiencyError(
                f"data carry no information on {', '.join(bad)}", bad
            )
        Jn = J / norms
        sv = np.linalg.svd(Jn, compute_uv=False)
        if sv[-1] < cfg.rcond * sv[0]:
            bad = _null_parameters(Jn, layout.free_names)
            raise RankDeficiencyError(
                f"parameters {', '.join(bad)} are not separately identifiable "
                f"(condition number {sv[0] / max(sv[-1], 1e-300):.3g})",
                bad,
            )

        dof = y.size - n_free
        chi2 = float(r @ r)
        chi2_red = chi2 / dof
        # invert in the column-normalized basis for numerical stability
        cov_n = np.linalg.inv(Jn.T @ Jn)
        cov_internal = cov_n / np.outer(norms, norms) * chi2_red
        d = layout.linear_derivative(x)
        cov = cov_internal * np.outer(d, d)
        cov = 0.5 * (cov + cov.T)

        linear = layout.full_linear(x)
        values = dict(zip(layout.names, linear.tolist()))
        sig = dict.fromkeys(layout.names, 0.0)
        for j, name in enumerate(layout.free_names):
            sig[name] = float(np.sqrt(max(cov[j, j], 0.0)))

        residuals = [r[problem.ds == k] for k in range(n_datasets)]
        self.result_ = FitResult(
            names=layout.names,
            values=values,
            uncertainties=sig,
            free_names=layout.free_names,
            covariance=cov,
            chi2_reduced=chi2_red,
            n_points=int(y.size),
            n_residuals=int(y.size),
            n_iterations=n_iter,
            converged=bool(converged),
            residuals=residuals,
            cost_history=costs,
            n_datasets=n_datasets,
            share=dict(cfg.share),
            x_internal=x,
        )
        self.problem_ = problem
        self.n_datasets_ = n_datasets
        return self

    def predict(self, X):
        """Model S or S' for each long-format row of ``X``."""
        check_is_fitted(self, "result_")
        X = self._validate_X(X)
        if X[:, 1].max() >= self.n_datasets_:
            raise FitError("dataset index beyond those seen in fit")
        layout = self.problem_.layout
        problem = _Problem(X, np.zeros(len(X)), np.ones(len(X)), layout,
                           self._material(), self._omega())
        return problem.model(self.result_.x_internal)

    def pinning_params(self):
        check_is_fitted(self, "result_")
        return self.result_.pinning_params()


def curves_to_xy(curves):
    """Long-format ``(X, y, sigma)`` from a list of SensitivityCurve.

    Each curve contributes its S rows, then its S' rows.
    """
    X, y, sigma = [], [], []
    for k, c in enumerate(curves):
        if len(c) == 0:
            raise FitError(f"curve {c.cooldown_id!r} is empty")
        n = len(c)
        for channel, values, errors in (
            (CHANNEL_S, c.s, c.s_err),
            (CHANNEL_S_PRIME, c.s_prime, c.s_prime_err),
        ):
            X.append(np.column_stack([c.temperature, np.full(n, k), np.full(n, channel)]))
            y.append(values)
            sigma.append(errors)
    return np.vstack(X).astype(float), np.concatenate(y), np.concatenate(sigma)


def residual_vector(params, curves, mp=DEFAULT_MATERIAL, cfg=None, omega=None):
    """Stacked weighted residuals of ``curves`` under per-curve ``params``.

    ``params`` holds one PinningParams per curve. With the default
    inverse-variance weighting every residual is ``(data - model) / sigma``.
    """
    cfg = cfg or FitConfig()
    if len(params) != len(curves):
        raise FitError("need one PinningParams per curve")
    omega = mp.omega if omega is None else omega
    out = []
    for pp, c in zip(params, curves):
        model = sensitivity_model(c.temperature, omega, mp, pp)
        for values, errors, m in (
            (c.s, c.s_err, model.s), (c.s_prime, c.s_prime_err, model.s_prime)
        ):
            if cfg.weight == "unit":
                out.append(values - m)
                continue
            if np.any(~(errors > 0)):
                raise FitError(f"curve {c.cooldown_id!r}: zero sigma with 1/sigma^2 weighting")
            out.append((values - m) / errors)
    return np.concatenate(out)


def fit_simultaneous(curves, mp=DEFAULT_MATERIAL, cfg=None, omega=None):
    """Fit all ``curves`` at once and return a :class:`FitResult`.

    Curve ``k`` gets dataset index ``k``; the cooldown ids are recorded
    in ``FitResult.dataset_labels``.
    """
    cfg = cfg or FitConfig()
    X, y, sigma = curves_to_xy(curves)
    est = VortexSensitivityRegressor(material=mp, omega=omega, **asdict(cfg))
    est.fit(X, y, sigma)
    est.result_.dataset_labels = [c.cooldown_id for c in curves]
    return est.result_


def predict_curves(params, mp=DEFAULT_MATERIAL, t_grid=None, omega=None):
    """Dense model curves, one ComplexSensitivity per PinningParams."""
    if t_grid is None:
        t_grid = np.linspace(0.01, 1.3, 200)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    return [sensitivity_model(t_grid, omega, mp, pp) for pp in params]
