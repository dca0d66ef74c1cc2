import numpy as np
import pytest

from lhsurf.errors import OptionError
from lhsurf.geometry import (
    check_immersion,
    conformal_factor,
    conformality_residual,
    gaussian_curvature,
    mean_curvature,
)
from lhsurf.synth import KINDS, SynthSpec, synth


@pytest.mark.parametrize("kind", KINDS)
def test_all_kinds_are_immersions(kind):
    res = synth(SynthSpec(kind, 32))
    check_immersion(res.patch)


@pytest.mark.parametrize("kind", ["plane", "tilted-plane", "sphere-cap", "catenoid", "cylinder"])
def test_smooth_kinds_are_conformal(kind):
    res = synth(SynthSpec(kind, 48))
    assert conformality_residual(res.patch).accepted


@pytest.mark.parametrize("kind", ["plane", "tilted-plane", "sphere-cap", "catenoid", "cylinder"])
def test_lambda_reference_matches(kind):
    res = synth(SynthSpec(kind, 64))
    lam = conformal_factor(res.patch)
    sel = lam.valid_mask()
    err = np.max(np.abs(lam.values[sel] - res.lam_ref.values[sel]))
    assert err < 2e-3 * np.max(res.lam_ref.values)


@pytest.mark.parametrize("kind", ["plane", "tilted-plane", "sphere-cap", "cylinder"])
def test_h_reference_matches(kind):
    res = synth(SynthSpec(kind, 64))
    h = mean_curvature(res.patch)
    sel = h.valid_mask()
    err = np.max(np.abs(h.values[sel] - res.h_ref.values[sel]))
    assert err < 5e-3


def test_catenoid_minimal_reference():
    res = synth(SynthSpec("catenoid", 64))
    h = mean_curvature(res.patch)
    assert np.max(np.abs(h.values[h.valid_mask()])) < 1e-3


@pytest.mark.parametrize("kind", ["sphere-cap", "catenoid"])
def test_gauss_reference_matches(kind):
    res = synth(SynthSpec(kind, 64))
    k = gaussian_curvature(conformal_factor(res.patch))
    sel = k.valid_mask()
    assert np.max(np.abs(k.values[sel] - res.gauss_ref.values[sel])) < 2e-3


def test_ridge_flat_off_crease():
    res = synth(SynthSpec("ridge", 32, angle=90.0))
    h = mean_curvature(res.patch)
    jc = res.meta["crease_j"]
    off = res.grid.interior(1)
    off[jc - 1 : jc + 2, :] = False
    assert np.max(np.abs(h.values[off])) < 1e-10


def test_ridge_angle_range():
    with pytest.raises(OptionError):
        synth(SynthSpec("ridge", 16, angle=0.0))


def test_snowman_derives_aspect():
    res = synth(SynthSpec("snowman", 32))
    assert res.grid.k != 1.0
    lam = conformal_factor(res.patch)
    err = np.abs(lam.values - res.lam_ref.values)[res.grid.interior(1)]
    # conformal away from the neck crease
    assert np.median(err) < 5e-3 * np.max(res.lam_ref.values)


def test_sine_graph_not_conformal():
    res = synth(SynthSpec("sine-graph", 32))
    assert res.lam_ref is None
    assert not conformality_residual(res.patch).accepted


def test_unknown_kind_rejected():
    with pytest.raises(OptionError):
        SynthSpec("moebius", 32)


def test_deterministic():
    a = synth(SynthSpec("snowman", 24))
    b = synth(SynthSpec("snowman", 24))
    assert np.array_equal(a.patch.phi.values, b.patch.phi.values)
