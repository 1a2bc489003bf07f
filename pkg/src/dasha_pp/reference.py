"""Full-participation DASHA, written in its own (non partial-participation) form.

Used as an oracle: with every node participating, DASHA-PP must reproduce
this method when both consume the same random streams. The estimator here
is updated directly (``h_new = ...``) instead of through an increment
scaled by ``1/p_a``.
"""

import numpy as np

from dasha_pp.compressors import SparseMessage
from dasha_pp.optimizer import FiniteMVR, Gradient, MVR, Page, SyncMVR
from dasha_pp.rng import bernoulli, partial_shuffle, stream


class ReferenceDasha:
    def __init__(self, problem, compressors, config, seed=0):
        if not isinstance(compressors, (list, tuple)):
            compressors = [compressors] * problem.n
        self.problem = problem
        self.compressors = list(compressors)
        self.config = config
        self.seed = seed
        variant = config.variant
        # DASHA's estimators correspond to these momentum values
        if isinstance(variant, Gradient) and config.b != 1.0:
            raise ValueError("reference gradient DASHA uses b = 1")
        if isinstance(variant, Page) and config.b != variant.p_page:
            raise ValueError("reference DASHA-PAGE uses b = p_page")
        if isinstance(variant, SyncMVR) and config.b != variant.p_mega:
            raise ValueError("reference DASHA-SYNC-MVR uses b = p_mega")

    def initial(self, x0):
        p, v = self.problem, self.config.variant
        hs = []
        h_samples = []
        for i in range(p.n):
            if isinstance(v, (MVR, SyncMVR)):
                batch_init = v.batch_init or v.batch
                draw = p.draw_stochastic(batch_init, stream(self.seed, "init", 0, i),
                                         exhaustive=v.exhaustive and batch_init == p.m)
                hs.append(p.grad_draw(i, x0, draw))
            else:
                hs.append(p.grad_full(i, x0))
            if isinstance(v, FiniteMVR):
                h_samples.append(p.sample_grads(i, np.arange(p.m), x0))
        return hs, h_samples

    def _new_estimator(self, i, x_new, x_old, h, h_rows, t, coin):
        p, v, b = self.problem, self.config.variant, self.config.b
        rng = stream(self.seed, "batch", t, i)
        if isinstance(v, Gradient):
            return p.grad_full(i, x_new), h_rows
        if isinstance(v, Page):
            if coin:
                return p.grad_full(i, x_new), h_rows
            idx = rng.integers(0, p.m, v.batch)
            return h + (p.grad_batch(i, idx, x_new) - p.grad_batch(i, idx, x_old)), h_rows
        if isinstance(v, MVR):
            draw = p.draw_stochastic(v.batch, rng, v.exhaustive)
            at_old = p.grad_draw(i, x_old, draw)
            return p.grad_draw(i, x_new, draw) + (1 - b) * (h - at_old), h_rows
        if isinstance(v, SyncMVR):
            if coin:
                draw = p.draw_stochastic(v.batch_mega, rng, v.exhaustive)
                return p.grad_draw(i, x_new, draw), h_rows
            draw = p.draw_stochastic(v.batch, rng, v.exhaustive)
            return h + (p.grad_draw(i, x_new, draw) - p.grad_draw(i, x_old, draw)), h_rows
        if isinstance(v, FiniteMVR):
            idx = partial_shuffle(rng, p.m, v.batch)
            rows = h_rows.copy()
            G_new = p.sample_grads(i, idx, x_new)
            G_old = p.sample_grads(i, idx, x_old)
            rows[idx] = rows[idx] + (p.m / v.batch) * (G_new - G_old - b * (rows[idx] - G_old))
            return rows.mean(axis=0), rows
        raise ValueError(f"unknown variant {v!r}")

    def run(self, T, x0=None):
        """Return the list of iterates ``x^0 .. x^T`` and the final server vector."""
        p, cfg, v = self.problem, self.config, self.config.variant
        x = np.zeros(p.dim) if x0 is None else np.array(x0, dtype=np.float64)
        h, h_samples = self.initial(x)
        g_nodes = [hi.copy() for hi in h]
        g = sum(g_nodes) / p.n
        xs = [x.copy()]
        for t in range(T):
            x_new = x - cfg.gamma * g
            coin = False
            if isinstance(v, Page):
                coin = bernoulli(stream(self.seed, "page_coin", t), v.p_page)
            elif isinstance(v, SyncMVR):
                coin = bernoulli(stream(self.seed, "mega_coin", t), v.p_mega)
            messages = []
            for i in range(p.n):
                rows = h_samples[i] if h_samples else None
                h_new, rows = self._new_estimator(i, x_new, x, h[i], rows, t, coin)
                if h_samples:
                    h_samples[i] = rows
                delta = h_new - h[i] - cfg.a * (g_nodes[i] - h[i])
                if isinstance(v, SyncMVR) and coin:
                    msg = SparseMessage.dense(delta)
                else:
                    msg = self.compressors[i].compress(delta, stream(self.seed, "compressor", t, i))
                dense = msg.to_dense()
                g_nodes[i] = g_nodes[i] + dense
                h[i] = h_new
                messages.append(dense)
            g = g + sum(messages) / p.n
            x = x_new
            xs.append(x.copy())
        return xs, g
