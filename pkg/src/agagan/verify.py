"""Self-checks runnable from the CLI: gradients, metric oracles, shapes, loss identities.

Each check returns ``(name, passed, detail)``.  ``inject_fault`` swaps one
kernel for a deliberately broken copy so the detection path itself can be
tested; the failing check names the broken op.
"""

from __future__ import annotations

import contextlib
import inspect
import time
from typing import Callable, Iterator

import numpy as np

from .autograd import Tensor, gradcheck, precision
from .autograd.tensor import make_result
from .autograd import functional as F
from .attributes import N_ATTRIBUTES

GRAD_TOL = 1e-3
# composed modules are checked in float64: at toy sizes the float32 rounding
# of the output and the LeakyReLU kinks within any usable step swamp the quotient
COMPOSED_EPS = 1e-6
Check = tuple[str, bool, str]


# -- fault injection -------------------------------------------------------


def _halve_backward(op: Callable) -> Callable:
    def broken(*args, **kwargs):
        out = op(*args, **kwargs)
        return make_result(out.data, (out,), lambda g: (0.5 * g,))

    return broken


def _offset_value(fn: Callable) -> Callable:
    def broken(*args, **kwargs):
        return fn(*args, **kwargs) + 1e-3

    return broken


FAULTY_METRICS = ("psnr", "ssim", "sre", "uiq")


def can_inject(op: str) -> bool:
    fn = getattr(F, op, None)
    return op in FAULTY_METRICS or (inspect.isfunction(fn) and fn.__module__ == F.__name__ and not op.startswith("_"))


@contextlib.contextmanager
def injected_fault(op: str | None) -> Iterator[None]:
    """Temporarily replace ``op`` (a functional kernel or metric name) with a broken version."""
    if op is None:
        yield
        return
    from .metrics import fullref

    if not can_inject(op):
        raise ValueError(f"cannot inject a fault into unknown op {op!r}")
    if op in FAULTY_METRICS:
        module, broken = fullref, _offset_value(getattr(fullref, op))
    else:
        module, broken = F, _halve_backward(getattr(F, op))
    original = getattr(module, op)
    setattr(module, op, broken)
    try:
        yield
    finally:
        setattr(module, op, original)


# -- gradient checks --------------------------------------------------------


def _t(rng, *shape, scale=1.0, name=None) -> Tensor:
    return Tensor((rng.standard_normal(shape) * scale).astype(np.float32), requires_grad=True, name=name)


def _projection(rng, shape) -> np.ndarray:
    return rng.standard_normal(shape).astype(np.float32)


def _grad_case(name: str, f, inputs, eps=1e-2, max_elements=None) -> Check:
    report = gradcheck(f, inputs, eps=eps, max_elements=max_elements)
    worst = max(report.values())
    return name, worst < GRAD_TOL, f"max rel err {worst:.2e}"


def gradcheck_checks() -> list[Check]:
    rng = np.random.default_rng(7)
    out: list[Check] = []

    def proj(x: Tensor, seed: int) -> Tensor:
        w = _projection(np.random.default_rng(seed), x.shape)
        return F.sum_(F.hadamard(x, Tensor(w)))

    x, w, b = _t(rng, 2, 3, 6, 6), _t(rng, 4, 3, 3, 3, scale=0.3), _t(rng, 4)
    out.append(_grad_case("conv2d", lambda x, w, b: proj(F.conv2d(x, w, b, 1, 1), 1), [x, w, b]))
    out.append(_grad_case("conv2d stride 2", lambda x, w, b: proj(F.conv2d(x, w, b, 2, 1), 2), [x, w, b]))
    xd, wd, bd = _t(rng, 3, 5), _t(rng, 4, 5), _t(rng, 4)
    out.append(_grad_case("dense", lambda x, w, b: proj(F.dense(x, w, b), 3), [xd, wd, bd]))
    for kind in ("sigmoid", "tanh", "relu", "leaky_relu"):
        xa = Tensor(rng.uniform(0.05, 1.5, (2, 3, 4)).astype(np.float32) * rng.choice([-1, 1], (2, 3, 4)), requires_grad=True)
        out.append(_grad_case(f"activation {kind}", lambda x, k=kind: proj(F.activation(x, k), 4), [xa]))
    xs = _t(rng, 1, 8, 3, 3)
    out.append(_grad_case("pixel_shuffle", lambda x: proj(F.pixel_shuffle(x, 2), 5), [xs]))
    xp = Tensor(rng.permutation(2 * 2 * 4 * 4).reshape(2, 2, 4, 4).astype(np.float32) * 0.1, requires_grad=True)
    out.append(_grad_case("max_pool2", lambda x: proj(F.max_pool2(x), 6), [xp]))
    xg = _t(rng, 2, 3, 4, 4)
    out.append(_grad_case("global_avg_pool", lambda x: proj(F.global_avg_pool(x), 7), [xg]))
    a, c = _t(rng, 1, 2, 3, 3), _t(rng, 1, 3, 3, 3)
    out.append(_grad_case("concat_channels", lambda a, c: proj(F.concat_channels(a, c), 8), [a, c]))
    h1, h2 = _t(rng, 2, 3, 4, 4), _t(rng, 1, 3, 1, 1)
    out.append(_grad_case("hadamard broadcast", lambda a, c: proj(F.hadamard(a, c), 9), [h1, h2]))
    out.append(_grad_case("add broadcast", lambda a, c: proj(F.add(a, c), 10), [h1, h2]))
    xo = _t(rng, 2, 3, 4, 4)
    mask_rng = lambda: np.random.default_rng(11)  # noqa: E731 - same mask on every evaluation
    out.append(_grad_case("dropout", lambda x: proj(F.dropout(x, 0.3, "train", mask_rng()), 12), [xo]))

    with precision(np.float64):
        out.append(_aga_module_case())
        out.append(_discriminator_case())
        out.append(_dual_attention_case())
    return out


def _aga_module_case() -> Check:
    from .generator import GeneratorConfig, aga_module_forward, build_generator

    state = build_generator(GeneratorConfig(scale=4, main_channels=2, attr_channels=2, rrdb_count=1, rrdb_growth=2, aga_module_count=1, hr_side=16), 3)
    rng = np.random.default_rng(13)
    sr, asm = _t(rng, 1, 2, 4, 4, name="sr_main"), _t(rng, 1, 2, 4, 4, name="as_stem")
    names = [k for k in state.params if k.startswith("gen.aga0.")]
    params = [state.params[k] for k in names]
    w1, w2, w3 = (_projection(np.random.default_rng(s), (1, 2, 4, 4)) for s in (14, 15, 16))
    w3 = w3[:, :1]

    def f(*_):
        s, a, m = aga_module_forward(sr, asm, state, 0)
        return F.sum_(F.hadamard(s, Tensor(w1))) + F.sum_(F.hadamard(a, Tensor(w2))) + F.sum_(F.hadamard(m, Tensor(w3)))

    return _grad_case("AGA module (tiny)", f, [sr, asm, *params], eps=COMPOSED_EPS)


def _discriminator_case() -> Check:
    from .discriminator import DiscConfig, build_discriminator, discriminator_forward

    state = build_discriminator(DiscConfig(base_channels=2, hr_side=8), 4)
    rng = np.random.default_rng(17)
    img = _t(rng, 2, 3, 8, 8, scale=0.5, name="img")
    att = Tensor(rng.uniform(0, 1, (2, N_ATTRIBUTES)).astype(np.float32), requires_grad=True, name="att")
    params = list(state.params.params.values())
    return _grad_case(
        "discriminator (tiny)",
        lambda *_: F.sum_(discriminator_forward(img, att, state)),
        [img, att, *params],
        eps=COMPOSED_EPS,
        max_elements=24,
    )


def _dual_attention_case() -> Check:
    from .unet import UNetConfig, build_unet, dual_attention_forward

    state = build_unet(UNetConfig(depth=1, base_channels=4, se_reduction=2, hr_side=8, passthrough_init=False), 5)
    rng = np.random.default_rng(19)
    x = _t(rng, 2, 8, 4, 4, name="x")
    names = [k for k in state.params if k.startswith("unet.dec0.attn.")]
    params = [state.params[k] for k in names]
    w = _projection(np.random.default_rng(20), (2, 8, 4, 4))
    return _grad_case(
        "dual attention (tiny)",
        lambda *_: F.sum_(F.hadamard(dual_attention_forward(x, state.params, "unet.dec0.attn"), Tensor(w))),
        [x, *params],
        eps=COMPOSED_EPS,
    )


# -- metric oracles ---------------------------------------------------------


def _loop_ssim(r, t):
    from .metrics.fullref import gaussian_window

    w = gaussian_window()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    vals = []
    for i in range(r.shape[0] - 10):
        for j in range(r.shape[1] - 10):
            a, b = r[i : i + 11, j : j + 11], t[i : i + 11, j : j + 11]
            ma, mb = (w * a).sum(), (w * b).sum()
            va, vb = (w * (a - ma) ** 2).sum(), (w * (b - mb) ** 2).sum()
            cov = (w * (a - ma) * (b - mb)).sum()
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def _loop_uiq(r, t):
    vals = []
    for i in range(r.shape[0] - 7):
        for j in range(r.shape[1] - 7):
            a, b = r[i : i + 8, j : j + 8].ravel(), t[i : i + 8, j : j + 8].ravel()
            ma, mb = a.mean(), b.mean()
            va, vb = a.var(ddof=1), b.var(ddof=1)
            cov = ((a - ma) * (b - mb)).sum() / 63
            den = (va + vb) * (ma**2 + mb**2)
            if den != 0:
                vals.append(4 * cov * ma * mb / den)
    return float(np.mean(vals))


def metric_checks(pairs: int = 10) -> list[Check]:
    from .metrics import fullref
    from .metrics.fsim import fsim

    rng = np.random.default_rng(23)
    worst = {"psnr": 0.0, "sre": 0.0, "ssim": 0.0, "uiq": 0.0}
    for _ in range(pairs):
        side = int(rng.integers(16, 33))
        r = rng.integers(0, 256, (side, side)).astype(np.float64)
        t = np.clip(r + rng.normal(0, 20, r.shape), 0, 255).round()
        mse = np.mean((r - t) ** 2)
        worst["psnr"] = max(worst["psnr"], abs(fullref.psnr(r, t) - 10 * np.log10(255**2 / mse)))
        worst["sre"] = max(worst["sre"], abs(fullref.sre(r, t) - 10 * np.log10(r.mean() ** 2 / mse)))
        worst["ssim"] = max(worst["ssim"], abs(fullref.ssim(r, t) - _loop_ssim(r, t)))
        worst["uiq"] = max(worst["uiq"], abs(fullref.uiq(r, t) - _loop_uiq(r, t)))
    tol = {"psnr": 1e-9, "sre": 1e-9, "ssim": 1e-6, "uiq": 1e-6}
    out = [(f"{m} oracle", worst[m] <= tol[m], f"max |diff| {worst[m]:.1e}") for m in worst]
    img = rng.integers(0, 256, (48, 48)).astype(np.float64)
    self_sim = fsim(img, img)
    out.append(("fsim self-similarity", abs(self_sim - 1.0) <= 1e-6, f"fsim(x, x) = {self_sim:.8f}"))
    return out


# -- shapes -----------------------------------------------------------------


def shape_checks() -> list[Check]:
    from .generator import GeneratorConfig, build_generator, generator_forward

    out = []
    for scale, lr_side, stages in ((8, 16, 2), (4, 32, 1)):
        cfg = GeneratorConfig(scale=scale)
        state = build_generator(cfg, 0)
        lr = np.zeros((1, 3, lr_side, lr_side), np.float32)
        att = np.full((1, N_ATTRIBUTES), 0.5, np.float32)
        from .autograd import no_grad

        with no_grad():
            sr, maps = generator_forward(lr, att, state, mode="eval")
        side = 2 * lr_side
        ok = (
            sr.shape == (1, 3, 128, 128)
            and len(maps) == 3
            and all(m.shape == (1, 1, side, side) for m in maps)
            and cfg.deconv_stages == stages
        )
        out.append((f"x{scale} generator shapes", ok, f"out {sr.shape}, {len(maps)} maps at {maps[0].shape[2:]}, {cfg.deconv_stages} deconv stages"))
    return out


# -- loss identities ---------------------------------------------------------


def loss_checks() -> list[Check]:
    from .losses import ADV_WEIGHT, PerceptualExtractor, d_loss, d_loss_terms, total_generator_loss

    rng = np.random.default_rng(29)
    ext = PerceptualExtractor()
    hr = Tensor(rng.uniform(-1, 1, (2, 3, 16, 16)).astype(np.float32))
    sr = Tensor(rng.uniform(-1, 1, (2, 3, 16, 16)).astype(np.float32))
    d_sr = Tensor(np.array([[0.3], [0.6]], np.float32))
    parts: dict = {}
    total = float(total_generator_loss(hr, sr, d_sr, ext, parts=parts).item())
    recomposed = ADV_WEIGHT * parts["adv"] + parts["percep"] + parts["mae"]
    out = [("generator loss recomposition", abs(total - recomposed) <= 1e-6, f"|diff| {abs(total - recomposed):.1e}")]
    ld = float(d_loss(np.array([[0.9]]), np.array([[1e-7]])).item())
    expected = 0.9 * -np.log(0.9)
    out.append(("d_loss smoothed value", abs(ld - expected) <= 1e-4, f"{ld:.6f} vs {expected:.6f}"))
    fakes = [float(d_loss_terms(np.array([[0.8]]), np.array([[0.3]]), s)[1].item()) for s in (0.9, 1.0, 0.5)]
    out.append(("one-sided smoothing", max(fakes) == min(fakes), f"fake terms {fakes}"))
    return out


SUITES = {"gradcheck": gradcheck_checks, "metrics": metric_checks, "shapes": shape_checks, "losses": loss_checks}


def run_suites(names=None, inject_fault: str | None = None, echo=print) -> bool:
    names = list(names or SUITES)
    ok = True
    with injected_fault(inject_fault):
        for suite in names:
            t0 = time.time()
            for name, passed, detail in SUITES[suite]():
                ok &= passed
                echo(f"{'PASS' if passed else 'FAIL'} [{suite}] {name}: {detail}")
            echo(f"---- {suite} finished in {time.time() - t0:.1f}s")
    echo("verification " + ("passed" if ok else "FAILED"))
    return ok
