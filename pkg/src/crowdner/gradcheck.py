"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    worst_index: tuple
    analytic: float
    numeric: float
    n_checked: int


@dataclass
class GradCheckReport:
    checks: list
    h: float

    @property
    def max_rel_err(self):
        return max((c.max_rel_err for c in self.checks), default=0.0)

    @property
    def worst(self):
        return max(self.checks, key=lambda c: c.max_rel_err)

    def passed(self, tol):
        return self.max_rel_err <= tol

    def summary(self):
        lines = [f"{'parameter':32s} {'checked':>7s} {'max rel err':>12s}"]
        for c in sorted(self.checks, key=lambda c: -c.max_rel_err):
            lines.append(f"{c.name:32s} {c.n_checked:7d} {c.max_rel_err:12.3e}")
        w = self.worst
        lines.append(
            f"worst: {w.name}[{w.worst_index}] analytic={w.analytic:.6e} "
            f"numeric={w.numeric:.6e} rel={w.max_rel_err:.3e}"
        )
        return "\n".join(lines)


def _rel_err(a, n, floor):
    return abs(a - n) / max(abs(a), abs(n), floor)


def grad_check(loss_fn, params, h=1e-5, max_coords=None, rng=None, denom_floor=1e-4,
               fd_fn=None):
    """Compare analytic gradients of loss_fn() against central differences.

    loss_fn builds a fresh scalar loss node on each call and must be
    deterministic (dropout off, fixed inputs).  For parameters larger
    than max_coords, a seeded sample of coordinates is perturbed.

    fd_fn, when given, is the scalar function that is perturbed instead
    of loss_fn.  Gradient reversal makes the applied gradient of the
    shared branch equal the true gradient of a *different* scalar (the
    saddle objective), so model-level checks pass the matching objective
    per parameter group; see model_grad_check.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if fd_fn is None:
        fd_fn = loss_fn
    autodiff.zero_grads(params)
    autodiff.backward(loss_fn())
    analytic = {p.name: p.grad.copy() for p in params}
    autodiff.zero_grads(params)

    checks = []
    for p in params:
        size = p.value.size
        if max_coords is not None and size > max_coords:
            flat = rng.choice(size, size=max_coords, replace=False)
        else:
            flat = np.arange(size)
        worst = ParamCheck(p.name, 0.0, (0, 0), 0.0, 0.0, len(flat))
        for f in flat:
            idx = np.unravel_index(f, p.value.shape)
            orig = p.value[idx]
            p.value[idx] = orig + h
            up = fd_fn().value[0, 0]
            p.value[idx] = orig - h
            down = fd_fn().value[0, 0]
            p.value[idx] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic[p.name][idx]
            rel = _rel_err(a, numeric, denom_floor)
            if rel >= worst.max_rel_err:
                worst = ParamCheck(p.name, rel, idx, a, numeric, len(flat))
        checks.append(worst)
    return GradCheckReport(checks, h)


def model_grad_check(tagger, chars, labels, worker=None, h=1e-5, max_coords=8, seed=0):
    """Finite-difference check of a full model on one fixed sentence.

    In baseline mode every parameter is checked against the NER loss.  In
    adversarial mode the analytic gradients always come from the combined
    training loss (reversal embedded); tagger-group parameters are
    compared against the saddle objective ner_nll - worker_nll, whose
    true gradient is what the reversal arranges to apply, and
    discriminator-group parameters against ner_nll + worker_nll.
    """
    ad = autodiff
    rng = np.random.default_rng(seed)
    if tagger.config.mode == "baseline":
        loss = lambda: tagger.ner_loss(chars, labels)
        return grad_check(loss, tagger.params(), h=h, max_coords=max_coords, rng=rng)

    total = lambda: tagger.total_loss([(chars, labels, worker)])
    saddle = lambda: ad.sub(
        tagger.ner_loss(chars, labels),
        tagger.worker_loss(chars, labels, worker),
    )
    rep_tagger = grad_check(
        total, tagger.tagger_params(), h=h, max_coords=max_coords, rng=rng, fd_fn=saddle
    )
    rep_discr = grad_check(
        total, tagger.discriminator_params(), h=h, max_coords=max_coords, rng=rng
    )
    return GradCheckReport(rep_tagger.checks + rep_discr.checks, h)
