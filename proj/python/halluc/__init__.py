"""Feasible-set and hallucination analysis for linear inverse problems.

Arrays are numpy float64 or complex128. Reports are returned as plain
dictionaries with the same layout as the CLI's JSON output.
"""

import json

from . import _core
from ._core import (
    ContractError,
    Model,
    NotFoundError,
    ParseError,
    ShapeError,
    bilinear_aa,
    first_coordinate_model,
    gaussian_meanpool,
    htk_load,
    htk_save,
    masked_fft,
    matrix_model,
    seminorm,
)

__version__ = _core.__version__

__all__ = [
    "ContractError",
    "Model",
    "NotFoundError",
    "ParseError",
    "ShapeError",
    "analyze",
    "bilinear_aa",
    "converge",
    "eta_interval",
    "first_coordinate_model",
    "gaussian_meanpool",
    "htk_load",
    "htk_save",
    "masked_fft",
    "matrix_model",
    "model_from_json",
    "paste",
    "patchify",
    "seminorm",
]


def model_from_json(descriptor, base_dir="."):
    """Builds a forward model from a descriptor dict or JSON text."""
    text = descriptor if isinstance(descriptor, str) else json.dumps(descriptor)
    return _core.model_from_json(text, str(base_dir))


def analyze(xs, ys, epsilon, model=None, fxs=None, norm="l2", x_norm="l2", jobs=1):
    """Feasible sets, diameters and kernel size of the pairs (xs, f xs) for probes ys."""
    return json.loads(
        _core.analyze(list(xs), list(ys), epsilon, model=model, fxs=None if fxs is None else list(fxs),
                      norm=norm, x_norm=x_norm, jobs=jobs))


def eta_interval(model, epsilon, x, x_det, noise, decoder, norm="l2", x_norm="l2", etas=(), seed=0):
    """Hallucination size interval of x_det at x for a Python decoder y -> array(s)."""
    return json.loads(
        _core.eta_interval(model, epsilon, x, x_det, list(noise), decoder, norm=norm, x_norm=x_norm,
                           etas=list(etas), seed=seed))


def paste(z, y, source, start, stop, model, epsilon, offset=(), taper=3, norm="l2"):
    """Pastes the null-space part of source[start:stop] - z into z."""
    out = _core.paste(z, y, source, list(start), list(stop), offset=list(offset), taper=taper, model=model,
                      epsilon=epsilon, norm=norm)
    report = json.loads(out["report"])
    report["pasted"] = out["pasted"]
    report["projected_detail"] = out["projected_detail"]
    return report


def converge(schedule=(100, 1000, 10000), probes=(0.5,), epsilon=0.2, seed=0, set="circle", jobs=1):
    """Diameter convergence table on a synthetic model set."""
    return json.loads(_core.converge(set=set, schedule=list(schedule), probes=list(probes), epsilon=epsilon,
                                     seed=seed, jobs=jobs))


def patchify(hr, lr, hr_patch=16, lr_patch=4, bands=4):
    """Splits aligned HR/LR images into patch pairs; returns (xs, fxs, ids)."""
    return _core.patchify(list(hr), list(lr), hr_patch=hr_patch, lr_patch=lr_patch, bands=bands)
