import numpy as np

from netlqr.model import Dims, make_model, random_model


def small_random(seed, n=2, d=2, T=8, p=0.5, lo=-1.0, hi=1.0, du0=None):
    """Random model with well-scaled entries, cheap enough for exact checks."""
    dims = Dims(n, (d,) * n, (du0 or d,) + (d,) * n, T)
    return random_model(dims, (lo, hi), seed, p=p, cost_method="gram")


def with_random_noise(model, seed):
    """Same plant/cost/channel with random nonzero means and full covariances."""
    rng = np.random.default_rng(seed)
    dims = model.dims

    def cov(d):
        G = rng.standard_normal((d, d))
        return G @ G.T / d + 0.1 * np.eye(d)

    return make_model(
        [pl.A for pl in model.plants],
        [pl.B_local for pl in model.plants],
        [pl.B_remote for pl in model.plants],
        np.stack([c.R for c in model.costs]),
        horizon=dims.horizon,
        p=model.channel.p,
        mu0=[rng.standard_normal(d) for d in dims.d_x],
        sigma0=[cov(d) for d in dims.d_x],
        sigma_w=[cov(d) for d in dims.d_x],
    )
