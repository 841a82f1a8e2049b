"""Amortised variational posteriors ``q_phi(theta | y)``.

A :class:`Guide` is a *body* that maps an outcome to a raw output vector,
followed by one *head* per latent that turns its slice of the raw vector
into a distribution. All trainable numbers live in one flat array ``phi``;
passing a tape leaf as ``phi`` makes every downstream quantity
differentiable with respect to it.

Bodies:

* ``tabular``: one row of raw outputs per enumerated outcome.
* ``linear``: raw = W features(y) + b.
* ``mlp``: rectifier network on features(y).
"""
import json

import numpy as np

from . import autodiff as ad
from . import distributions as dist
from .errors import ConfigError, ContractError


def softplus_inverse(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 30, x + np.log(-np.expm1(-np.minimum(x, 700))),
                    np.log(np.expm1(np.clip(x, 1e-300, 30))))


def _slice(r, start, stop):
    return ad.getitem(r, (Ellipsis, slice(start, stop)))


class Head:
    """Maps raw outputs to the distribution of one latent.

    ``family`` is one of ``normal``, ``lognormal``, ``logitnormal`` (elementwise
    over ``event_shape``), ``logisticnormal`` (simplex of size K),
    ``mvn`` (full covariance ``s * L L^T`` with a trainable global factor) or
    ``bernoulli`` (binary latents).
    """

    families = ("normal", "lognormal", "logitnormal", "logisticnormal", "mvn", "bernoulli")

    def __init__(self, name, family, event_shape=(), init_loc=0.0, init_scale=1.0):
        if family not in self.families:
            raise ConfigError(f"unknown head family {family!r}")
        self.name = name
        self.family = family
        self.event_shape = tuple(event_shape)
        self.size = int(np.prod(self.event_shape)) if self.event_shape else 1
        self.init_loc = init_loc
        self.init_scale = init_scale
        if family == "logisticnormal" and len(self.event_shape) != 1:
            raise ConfigError("logisticnormal heads need a 1-d simplex event")
        if family == "mvn" and len(self.event_shape) != 1:
            raise ConfigError("mvn heads need a 1-d event")

    @property
    def n_out(self):
        if self.family == "logisticnormal":
            return 2 * (self.size - 1)
        if self.family == "mvn":
            return self.size + 1
        if self.family == "bernoulli":
            return self.size
        return 2 * self.size

    @property
    def n_global(self):
        return self.size * self.size if self.family == "mvn" else 0

    def init_bias(self):
        d = self.size
        if self.family == "bernoulli":
            return np.broadcast_to(np.asarray(self.init_loc, dtype=float), (d,)).copy()
        if self.family == "logisticnormal":
            k = d - 1
            loc = np.broadcast_to(np.asarray(self.init_loc, dtype=float), (k,))
            sc = np.broadcast_to(np.asarray(self.init_scale, dtype=float), (k,))
            return np.concatenate([loc, softplus_inverse(sc)])
        if self.family == "mvn":
            loc = np.broadcast_to(np.asarray(self.init_loc, dtype=float), (d,))
            return np.concatenate([loc, softplus_inverse([1.0])])
        loc = np.broadcast_to(np.asarray(self.init_loc, dtype=float), (d,))
        sc = np.broadcast_to(np.asarray(self.init_scale, dtype=float), (d,))
        return np.concatenate([loc, softplus_inverse(sc)])

    def init_global(self):
        if self.family != "mvn":
            return np.zeros(0)
        d = self.size
        sc = np.asarray(self.init_scale, dtype=float)
        tril = np.diag(np.broadcast_to(sc, (d,))) if sc.ndim < 2 else np.array(sc)
        raw = np.tril(tril, -1)
        raw[np.diag_indices(d)] = softplus_inverse(np.diag(tril))
        return raw.reshape(-1)

    def tril(self, g):
        """Lower-triangular factor from the raw global block (softplus diagonal)."""
        d = self.size
        m = ad.reshape(g, (d, d))
        strict = np.tril(np.ones((d, d)), -1)
        eye = np.eye(d)
        return m * strict + ad.softplus(m) * eye

    def build(self, r, g=None):
        batch = ad.value_of(r).shape[:-1]
        d = self.size
        ev = self.event_shape
        if self.family == "bernoulli":
            return dist.Bernoulli(ad.sigmoid(ad.reshape(r, batch + ev)))
        if self.family == "logisticnormal":
            k = d - 1
            return dist.LogisticNormal(_slice(r, 0, k), ad.softplus(_slice(r, k, 2 * k)))
        if self.family == "mvn":
            loc = _slice(r, 0, d)
            factor = ad.sqrt(ad.softplus(ad.reshape(_slice(r, d, d + 1), batch)))
            return dist.MultivariateNormalTriL(loc, self.tril(g), factor)
        loc = ad.reshape(_slice(r, 0, d), batch + ev)
        scale = ad.softplus(ad.reshape(_slice(r, d, 2 * d), batch + ev))
        cls = {"normal": dist.Normal, "lognormal": dist.LogNormal,
               "logitnormal": dist.LogitNormal}[self.family]
        return cls(loc, scale)

    def describe(self):
        return {"name": self.name, "family": self.family, "event_shape": list(self.event_shape)}


def _log_prob_summed(head, d, x):
    lp = d.log_prob(x)
    extra = len(head.event_shape) - d.event_ndim
    for _ in range(extra):
        lp = ad.sum(lp, axis=-1)
    return lp


class Guide:
    """Amortised mean-field posterior over named latents.

    :param heads: one :class:`Head` per latent.
    :param body: ``"tabular"``, ``"linear"`` or ``"mlp"``.
    :param features: callable ``y -> (..., n_features)`` for linear/mlp bodies.
    :param n_features: width of the feature vector.
    :param index_fn: callable ``y -> int array`` of row indices (tabular).
    :param n_rows: number of enumerated outcomes (tabular).
    :param hidden: hidden widths of the mlp body.
    :param seed: seed of the weight initialisation.
    """

    def __init__(self, heads, body, features=None, n_features=None, index_fn=None,
                 n_rows=None, hidden=(64, 64), seed=0, head_gain=0.1):
        self.heads = list(heads)
        self.body = body
        self.features = features
        self.n_features = n_features
        self.index_fn = index_fn
        self.n_rows = n_rows
        self.hidden = tuple(hidden)
        self.head_gain = head_gain
        self.seed = seed
        self.n_out = sum(h.n_out for h in self.heads)
        if body not in ("tabular", "linear", "mlp"):
            raise ConfigError(f"unknown guide body {body!r}")
        if body == "tabular" and (index_fn is None or n_rows is None):
            raise ConfigError("tabular guides need index_fn and n_rows")
        if body in ("linear", "mlp") and (features is None or n_features is None):
            raise ConfigError(f"{body} guides need a feature map")
        self.blocks = self._layout()
        self.size = sum(int(np.prod(s)) for _, s in self.blocks)
        self.phi = self.init_params(seed)

    # ---------------------------------------------------------------- layout
    def _layout(self):
        blocks = []
        if self.body == "tabular":
            blocks.append(("table", (self.n_rows, self.n_out)))
        elif self.body == "linear":
            blocks += [("W", (self.n_out, self.n_features)), ("b", (self.n_out,))]
        else:
            widths = (self.n_features,) + self.hidden
            for i in range(len(self.hidden)):
                blocks += [(f"W{i}", (widths[i + 1], widths[i])), (f"b{i}", (widths[i + 1],))]
            blocks += [("Wout", (self.n_out, widths[-1])), ("bout", (self.n_out,))]
        for h in self.heads:
            if h.n_global:
                blocks.append((f"global_{h.name}", (h.n_global,)))
        return blocks

    def unpack(self, phi):
        out = {}
        i = 0
        for name, shape in self.blocks:
            n = int(np.prod(shape))
            out[name] = ad.reshape(ad.getitem(phi, slice(i, i + n)), shape)
            i += n
        return out

    def pack(self, parts):
        return np.concatenate([np.asarray(parts[name], dtype=np.float64).reshape(-1)
                               for name, _ in self.blocks])

    def init_params(self, seed=0):
        """Prior-centred initial parameters; weights scaled by sqrt(2 / fan_in)."""
        rng = np.random.default_rng(seed)
        bias = np.concatenate([h.init_bias() for h in self.heads])
        parts = {}
        if self.body == "tabular":
            parts["table"] = np.tile(bias, (self.n_rows, 1))
        elif self.body == "linear":
            parts["W"] = np.zeros((self.n_out, self.n_features))
            parts["b"] = bias
        else:
            widths = (self.n_features,) + self.hidden
            for i in range(len(self.hidden)):
                parts[f"W{i}"] = rng.standard_normal((widths[i + 1], widths[i])) * np.sqrt(2.0 / widths[i])
                parts[f"b{i}"] = np.zeros(widths[i + 1])
            parts["Wout"] = self.head_gain * rng.standard_normal((self.n_out, widths[-1])) * np.sqrt(2.0 / widths[-1])
            parts["bout"] = bias
        for h in self.heads:
            if h.n_global:
                parts[f"global_{h.name}"] = h.init_global()
        return self.pack(parts)

    # ---------------------------------------------------------------- forward
    def raw(self, y, phi=None):
        phi = self.phi if phi is None else phi
        p = self.unpack(phi)
        if self.body == "tabular":
            idx = self.index_fn(y)
            return ad.getitem(p["table"], idx)
        f = self.features(y)
        if self.body == "linear":
            return ad.linear(f, p["W"]) + p["b"]
        h = f
        for i in range(len(self.hidden)):
            h = ad.relu(ad.linear(h, p[f"W{i}"]) + p[f"b{i}"])
        return ad.linear(h, p["Wout"]) + p["bout"]

    def condition(self, y, phi=None):
        """Per-latent distributions given outcomes ``y``; batch shape follows ``y``."""
        phi = self.phi if phi is None else phi
        r = self.raw(y, phi)
        p = self.unpack(phi) if any(h.n_global for h in self.heads) else {}
        out = {}
        i = 0
        for h in self.heads:
            out[h.name] = h.build(_slice(r, i, i + h.n_out), p.get(f"global_{h.name}"))
            i += h.n_out
        return out

    def log_prob(self, dists, theta):
        """Sum of per-latent log-densities (mean-field)."""
        out = 0.0
        for h in self.heads:
            out = out + _log_prob_summed(h, dists[h.name], theta[h.name])
        return out

    def noise(self, dists, rng, shape):
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        return {h.name: dists[h.name].noise(rng, shape) for h in self.heads}

    def rsample(self, dists, noise):
        return {h.name: dists[h.name].rsample(noise[h.name]) for h in self.heads}

    def sample(self, dists, rng, shape):
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        return {h.name: dists[h.name].sample(rng, shape) for h in self.heads}

    @property
    def reparameterizable(self):
        return all(h.family != "bernoulli" for h in self.heads)

    def copy(self):
        g = object.__new__(Guide)
        g.__dict__.update(self.__dict__)
        g.phi = self.phi.copy()
        return g

    # ---------------------------------------------------------------- io
    def header(self):
        return {
            "format": "eigopt-guide",
            "version": 1,
            "body": self.body,
            "hidden": list(self.hidden) if self.body == "mlp" else [],
            "heads": [h.describe() for h in self.heads],
            "blocks": [[name, list(shape)] for name, shape in self.blocks],
            "size": self.size,
        }

    def save(self, path):
        """Write a JSON checkpoint: header fields then the flat ``phi``."""
        doc = self.header()
        doc["phi"] = [float(v) for v in self.phi]
        with open(path, "w") as fh:
            json.dump(doc, fh)

    def load(self, path):
        with open(path) as fh:
            doc = json.load(fh)
        phi = doc.pop("phi")
        if doc != self.header():
            raise ContractError("checkpoint header does not match this guide's layout")
        self.phi = np.asarray(phi, dtype=np.float64)
        return self
