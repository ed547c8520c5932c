"""Response families for the layer engines: Bernoulli (logit) and gamma (log)."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, gammaln

_ETA_MAX_LOGIT = 30.0
_ETA_MAX_LOG = 500.0


class Bernoulli:
    name = "bernoulli"
    link = "logit"

    @staticmethod
    def link_fn(mu):
        mu = np.clip(np.asarray(mu, dtype=float), 1e-12, 1 - 1e-12)
        return np.log(mu / (1 - mu))

    @staticmethod
    def inv_link(eta):
        return expit(np.clip(eta, -_ETA_MAX_LOGIT, _ETA_MAX_LOGIT))

    @staticmethod
    def logpdf(y, mu, dispersion=None):
        p = np.clip(np.asarray(mu, dtype=float), 1e-15, 1 - 1e-15)
        y = np.asarray(y, dtype=float)
        return y * np.log(p) + (1 - y) * np.log1p(-p)

    @classmethod
    def deviance(cls, y, mu, w=None):
        w = 1.0 if w is None else np.asarray(w, dtype=float)
        return float(-2.0 * np.sum(w * cls.logpdf(y, mu)))

    @staticmethod
    def validate_response(y):
        y = np.asarray(y, dtype=float)
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("bernoulli responses must be 0/1")
        return y


class Gamma:
    name = "gamma"
    link = "log"

    @staticmethod
    def link_fn(mu):
        return np.log(np.asarray(mu, dtype=float))

    @staticmethod
    def inv_link(eta):
        return np.exp(np.clip(eta, -_ETA_MAX_LOG, _ETA_MAX_LOG))

    @staticmethod
    def logpdf(y, mu, dispersion):
        """Gamma log density with mean mu and variance dispersion * mu^2."""
        theta = max(float(dispersion), 1e-300)
        a = 1.0 / theta
        y = np.asarray(y, dtype=float)
        mu = np.asarray(mu, dtype=float)
        return -gammaln(a) - a * np.log(theta * mu) + (a - 1) * np.log(y) - y / (theta * mu)

    @staticmethod
    def deviance(y, mu, w=None):
        y = np.asarray(y, dtype=float)
        mu = np.asarray(mu, dtype=float)
        w = 1.0 if w is None else np.asarray(w, dtype=float)
        return float(2.0 * np.sum(w * ((y - mu) / mu - np.log(y / mu))))

    @staticmethod
    def pearson_dispersion(y, mu, w, dof: int) -> float:
        """Weighted Pearson estimate of the dispersion, sum w*(y-mu)^2/mu^2 / dof."""
        y = np.asarray(y, dtype=float)
        mu = np.asarray(mu, dtype=float)
        w = np.asarray(w, dtype=float)
        chi2 = float(np.sum(w * (y - mu) ** 2 / mu**2))
        return chi2 / dof if dof > 0 else 0.0

    @staticmethod
    def validate_response(y):
        y = np.asarray(y, dtype=float)
        if (y <= 0).any():
            raise ValueError("gamma responses must be strictly positive")
        return y


_FAMILIES = {"bernoulli": Bernoulli, "gamma": Gamma}


def get_family(name: str):
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; expected one of {sorted(_FAMILIES)}") from None
