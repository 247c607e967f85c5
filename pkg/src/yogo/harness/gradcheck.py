"""Central finite-difference checks for every differentiable operator.

Each case builds a small float64 problem, projects the output onto a fixed
random direction to get a scalar, and compares autograd against central
differences. The reported error is ``max|analytic - numeric| / max|numeric|``
over all checked elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import torch
from torch import nn

from .. import ops
from ..loss import decompose, total_loss
from ..model import HybridFusionBlock, ModelConfig, RecurrentCell, YOGO

STEP = 1e-5
TOL = 1e-4
E2E_TOL = 1e-3


@dataclass
class GradCase:
    name: str
    build: Callable[[torch.Generator], tuple[Callable[[], object], list[torch.Tensor]]]
    tol: float = TOL
    sample_fraction: float = 1.0


@dataclass
class GradResult:
    name: str
    max_rel_err: float
    tol: float
    checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def _flatten(out) -> torch.Tensor:
    if isinstance(out, torch.Tensor):
        return out.reshape(-1)
    return torch.cat([_flatten(o) for o in out])


def check_gradients(fn: Callable[[], object], tensors: Sequence[torch.Tensor],
                    step: float = STEP, sample_fraction: float = 1.0,
                    generator: torch.Generator | None = None) -> tuple[float, int]:
    """Compare autograd and central differences of ``<fn(), proj>``.

    ``tensors`` are leaves (inputs or parameters) read by ``fn``; they are
    perturbed in place. Returns (max relative error, elements checked).
    """
    gen = generator or torch.Generator().manual_seed(0)
    with torch.no_grad():
        proj = torch.randn(_flatten(fn()).numel(), generator=gen, dtype=torch.float64)

    def scalar() -> torch.Tensor:
        return (_flatten(fn()) * proj).sum()

    for t in tensors:
        t.grad = None
    scalar().backward()
    analytic, numeric = [], []
    for t in tensors:
        grad = t.grad.reshape(-1) if t.grad is not None else torch.zeros(t.numel(), dtype=t.dtype)
        n = t.numel()
        if sample_fraction < 1.0:
            k = max(1, int(round(n * sample_fraction)))
            idx = torch.randperm(n, generator=gen)[:k]
        else:
            idx = torch.arange(n)
        flat = t.data.view(-1)
        with torch.no_grad():
            for i in idx.tolist():
                orig = flat[i].item()
                flat[i] = orig + step
                plus = scalar().item()
                flat[i] = orig - step
                minus = scalar().item()
                flat[i] = orig
                numeric.append((plus - minus) / (2 * step))
                analytic.append(grad[i].item())
    a = torch.tensor(analytic, dtype=torch.float64)
    num = torch.tensor(numeric, dtype=torch.float64)
    scale = max(num.abs().max().item(), a.abs().max().item(), 1e-12)
    return (a - num).abs().max().item() / scale, len(numeric)


def _leaf(shape, gen, scale=1.0) -> torch.Tensor:
    return (torch.randn(*shape, generator=gen, dtype=torch.float64) * scale).requires_grad_()


def _randomize(module: nn.Module, gen: torch.Generator, scale: float = 0.3) -> nn.Module:
    """Double precision, fresh random weights (offset heads included)."""
    module.double()
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * scale)
    return module


def _params(module: nn.Module) -> list[torch.Tensor]:
    return [p for p in module.parameters()]


def _case_bilinear(gen):
    feat = _leaf((1, 3, 4, 5), gen)
    ys = (torch.rand(1, 12, generator=gen, dtype=torch.float64) * 5.0 - 0.7).requires_grad_()
    xs = (torch.rand(1, 12, generator=gen, dtype=torch.float64) * 6.0 - 0.7).requires_grad_()
    return (lambda: ops.sample_points(feat, ys, xs)), [feat, ys, xs]


def _case_deform_conv(gen):
    x = _leaf((1, 2, 5, 5), gen)
    off = _leaf((1, 18, 5, 5), gen, 1.5)
    w = _leaf((3, 2, 3, 3), gen)
    b = _leaf((3,), gen)
    return (lambda: ops.deform_conv(x, off, w, b)), [x, off, w, b]


def _case_offset_estimator(gen):
    est = _randomize(ops.OffsetEstimator(2), gen)
    a, b = _leaf((1, 2, 4, 4), gen), _leaf((1, 2, 4, 4), gen)
    return (lambda: est(a, b)), [a, b] + _params(est)


def _case_residual_block(gen):
    block = _randomize(ops.ResidualBlock(3), gen)
    x = _leaf((1, 3, 5, 5), gen)
    return (lambda: block(x)), [x] + _params(block)


def _case_se_gate(gen):
    se = _randomize(ops.SEGate(4), gen, 1.0)
    x = _leaf((1, 4, 5, 5), gen)
    return (lambda: se(x)), [x] + _params(se)


def _case_pixel_shuffle(gen):
    x = _leaf((1, 8, 3, 3), gen)
    return (lambda: ops.pixel_shuffle(x, 2)), [x]


def _case_fuse(gen):
    fuse = _randomize(ops.Fuse1x1([2, 2], 3), gen)
    p1, p2 = _leaf((1, 2, 4, 4), gen), _leaf((1, 2, 4, 4), gen)
    return (lambda: fuse([p1, p2])), [p1, p2] + _params(fuse)


def _case_dfu(gen):
    cell = _randomize(RecurrentCell(2, 2, 1), gen)
    h1, h2, f = _leaf((1, 2, 4, 4), gen), _leaf((1, 2, 4, 4), gen), _leaf((1, 2, 4, 4), gen)
    params = [p for n, p in cell.named_parameters() if n.startswith(("estimators", "dconvs"))]
    return (lambda: cell.dfu([h1, h2], f)), [h1, h2, f] + params


def _case_fru(gen):
    cell = _randomize(RecurrentCell(2, 2, 2), gen)
    a1, a2, f = _leaf((1, 2, 4, 4), gen), _leaf((1, 2, 4, 4), gen), _leaf((1, 2, 4, 4), gen)
    params = [p for n, p in cell.named_parameters() if n.startswith(("fusion", "frbs"))]
    return (lambda: cell.fru([a1, a2], f)), [a1, a2, f] + params


def _case_hfb(gen):
    block = _randomize(HybridFusionBlock(4), gen)
    hb, hf, f = _leaf((1, 4, 4, 4), gen), _leaf((1, 4, 4, 4), gen), _leaf((1, 4, 4, 4), gen)
    return (lambda: block(hb, hf, f)), [hb, hf, f] + _params(block)


def _tiny_config(**kw) -> ModelConfig:
    base = dict(channels=4, frb_backward=1, frb_forward=1, hfb_count=1, fe_resblocks=1)
    base.update(kw)
    return ModelConfig(**base)


def _case_reconstruct(gen):
    model = _randomize(YOGO(_tiny_config(channels=2)), gen)
    heads = [model.recon_frame, model.recon_structure, model.recon_detail]
    f, hb, hf = _leaf((1, 2, 3, 3), gen), _leaf((1, 2, 3, 3), gen), _leaf((1, 2, 3, 3), gen)
    params = [p for h in heads for p in h.parameters()]
    return (lambda: model.reconstruct(f, hb, hf)), [f, hb, hf] + params


def _case_total_loss(gen):
    shape = (1, 3, 3, 4, 4)
    pred = [_leaf(shape, gen, 0.3) for _ in range(3)]
    hr = torch.rand(shape, generator=gen, dtype=torch.float64)
    target = decompose(hr)
    return (lambda: total_loss(pred, target).total), pred


def _case_end_to_end(gen):
    # default initialisation; offset heads get small weights so sampling
    # points are off the integer grid where bilinear is not differentiable
    with torch.random.fork_rng():
        torch.manual_seed(int(torch.randint(0, 2**31 - 1, (1,), generator=gen)))
        model = YOGO(_tiny_config()).double()
    for name, module in model.named_modules():
        if name.endswith("conv_offset"):
            _randomize(module, gen, 0.05)
    lr = torch.rand(1, 2, 3, 8, 8, generator=gen, dtype=torch.float64)
    target = decompose(torch.rand(1, 3, 3, 32, 32, generator=gen, dtype=torch.float64))
    return (lambda: total_loss(model(lr), target).total), _params(model)


REGISTRY: list[GradCase] = [
    GradCase("bilinear_sample", _case_bilinear),
    GradCase("deform_conv", _case_deform_conv),
    GradCase("offset_estimator", _case_offset_estimator),
    GradCase("residual_block", _case_residual_block),
    GradCase("se_gate", _case_se_gate),
    GradCase("pixel_shuffle", _case_pixel_shuffle),
    GradCase("fuse_1x1", _case_fuse),
    GradCase("dfu", _case_dfu),
    GradCase("fru", _case_fru),
    GradCase("hfb", _case_hfb),
    GradCase("reconstruct", _case_reconstruct),
    GradCase("total_loss", _case_total_loss, tol=1e-5),
    GradCase("end_to_end", _case_end_to_end, tol=E2E_TOL, sample_fraction=0.01),
]


def run_case(case: GradCase, seed: int = 0) -> GradResult:
    gen = torch.Generator().manual_seed(seed)
    fn, tensors = case.build(gen)
    err, n = check_gradients(fn, tensors, sample_fraction=case.sample_fraction, generator=gen)
    return GradResult(case.name, err, case.tol, n)


def run_all(cases: Iterable[GradCase] | None = None, seed: int = 0) -> list[GradResult]:
    return [run_case(c, seed) for c in (REGISTRY if cases is None else cases)]


def format_table(results: Sequence[GradResult]) -> str:
    lines = [f"{'op':<18} {'max_rel_err':>12} {'tol':>8} {'checked':>8}  status"]
    for r in results:
        lines.append(f"{r.name:<18} {r.max_rel_err:12.3e} {r.tol:8.0e} {r.checked:8d}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
