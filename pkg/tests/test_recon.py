import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrhdr import kernels
from nrhdr.core import DimensionError, HdrImage, make_layout
from nrhdr.recon import (BlockModel, DegenerateSystemError, ReconstructionConfig, fit_block,
                         l_kernel_response, oracle_least_squares, reconstruct, reconstruct_region,
                         spatial_weights)
from nrhdr.sensor import CameraModel, Validity, all_valid_frame, expand_to_grid, sample, simulate
from nrhdr.synth import ZoneplateSpec, zoneplate

from conftest import cosine_image

needs_cython = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernel not built")


def frame_of(img, kind="nonregular", seed=1):
    img = img if isinstance(img, HdrImage) else HdrImage(img)
    return all_valid_frame(sample(img, make_layout(kind, img.width, img.height, seed=seed)))


def noisy_frame(n=32, kind="nonregular", seed=3):
    img = zoneplate(ZoneplateSpec(size=n))
    return simulate(img, make_layout(kind, n, n, seed=seed), CameraModel(), noise_seed=seed)


class TestConfig:
    def test_defaults(self):
        cfg = ReconstructionConfig()
        assert (cfg.model_block, cfg.border, cfg.transform_size) == (4, 14, 32)
        assert (cfg.max_iterations, cfg.gamma, cfg.rho, cfg.min_residual_gain) == (200, 0.5, 0.7, 1e-6)

    @pytest.mark.parametrize("kw", [dict(model_block=3), dict(model_block=0), dict(gamma=0), dict(gamma=1.5),
                                    dict(rho=1.0), dict(rho=0), dict(max_iterations=0),
                                    dict(fft_size=16), dict(backend="fortran")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ReconstructionConfig(**kw)

    def test_frame_not_divisible(self):
        fr = frame_of(np.full((6, 6), 0.3))
        with pytest.raises(DimensionError):
            reconstruct(fr)


class TestKernelResponse:
    def test_l_response_is_three_cell_sum(self):
        t = 8
        H = l_kernel_response(t)
        k = (np.arange(t)[:, None], np.arange(t)[None, :])
        phase = lambda dy, dx: np.exp(2j * np.pi * (k[0] * dy + k[1] * dx) / t)
        cells = [phase(0, 0), phase(0, 1), phase(1, 0), phase(1, 1)]
        for q in range(4):
            assert np.allclose(H[q], sum(cells) - cells[q])

    def test_weights_decay(self):
        win, wq = spatial_weights(ReconstructionConfig())
        d = 14
        assert np.all(win[d:d + 4, d:d + 4] == 1.0)
        assert win[d - 1, d] == pytest.approx(0.7) and win[0, 0] < win[d - 1, d - 1]


class TestBackends:
    @needs_cython
    @pytest.mark.parametrize("kind", ["regular", "nonregular"])
    @pytest.mark.parametrize("prior", [0.0, 2.0])
    def test_cython_matches_python(self, kind, prior):
        fr = noisy_frame(32, kind)
        a = reconstruct(fr, ReconstructionConfig(backend="python", frequency_prior=prior)).data
        b = reconstruct(fr, ReconstructionConfig(backend="cython", frequency_prior=prior)).data
        assert np.max(np.abs(a - b)) < 1e-9

    def test_env_override_name(self):
        assert kernels.BACKEND in ("cython", "python")
        assert kernels.get_pursue("python") is kernels.pursue_batch_python


class TestInvariants:
    @settings(max_examples=15)
    @given(st.integers(0, 10_000), st.sampled_from(["regular", "nonregular"]),
           st.floats(0.2, 1.0), st.floats(0.3, 0.9))
    def test_energy_non_increasing(self, seed, kind, gamma, rho):
        rng = np.random.default_rng(seed)
        img = HdrImage(rng.random((16, 16)) * 1.5)
        fr = simulate(img, make_layout(kind, 16, 16, seed=seed), CameraModel(), noise_seed=seed)
        cfg = ReconstructionConfig(gamma=gamma, rho=rho, border=6, max_iterations=60)
        for br, bc in ((0, 0), (1, 2), (3, 3)):
            e = fit_block(fr, br, bc, cfg).energy
            assert np.all(np.diff(e) <= 1e-9 * e[0])

    def test_realness_and_symmetry(self):
        fr = noisy_frame(32, "nonregular")
        diag = {}
        reconstruct(fr, diagnostics=diag)
        assert diag["max_imag_ratio"] < 1e-9
        model = fit_block(fr, 3, 4)
        assert model.is_conjugate_symmetric()
        g = model.synthesize_complex()
        assert np.abs(g.imag).max() < 1e-9 * np.abs(g.real).max()
        assert model.n_terms <= ReconstructionConfig().max_iterations

    def test_output_finite_nonnegative(self):
        img = reconstruct(noisy_frame(32, "regular")).data
        assert np.all(np.isfinite(img)) and img.min() >= 0

    @pytest.mark.parametrize("workers", [2, 3])
    def test_worker_count_determinism(self, workers):
        fr = noisy_frame(32, "nonregular")
        a = reconstruct(fr).data
        b = reconstruct(fr, ReconstructionConfig(workers=workers)).data
        assert np.array_equal(a, b)
        assert np.array_equal(a, reconstruct(fr).data)

    def test_region_matches_crop(self):
        fr = noisy_frame(32, "nonregular")
        full = reconstruct(fr).data
        part = reconstruct_region(fr, (5, 9, 10, 7))
        assert np.array_equal(part, full[5:15, 9:16])

    def test_context_mode_runs(self):
        fr = noisy_frame(16, "nonregular")
        out = reconstruct(fr, ReconstructionConfig(use_reconstructed_context=True, border=6)).data
        assert np.all(np.isfinite(out)) and out.min() >= 0


class TestConsistency:
    def test_constant_exact(self):
        for kind in ("regular", "nonregular"):
            out = reconstruct(frame_of(np.full((32, 32), 0.37), kind)).data
            assert np.max(np.abs(out / 0.37 - 1)) < 1e-6

    def test_zero_frame(self):
        out = reconstruct(frame_of(np.zeros((16, 16)))).data
        assert not out.any()

    def test_constraints_satisfied_when_converged(self):
        cfg = ReconstructionConfig(gamma=1.0, max_iterations=1000, min_residual_gain=0.0)
        fr = frame_of(cosine_image(32), "nonregular")
        cons = expand_to_grid(fr)
        out = reconstruct(fr, cfg).data
        assert np.max(np.abs(cons.apply(out) - cons.values)) < 1e-4


class TestOracle:
    def test_constant_patch(self):
        fr = frame_of(np.full((16, 16), 0.6))
        patch = oracle_least_squares(fr, (4, 4, 8, 8), k_limit=2)
        assert np.allclose(patch, 0.6, atol=1e-12)

    def test_cosine_amplitude_and_dc(self):
        # period 8 fits the 8x8 region exactly; the oracle basis then holds the truth
        x = np.arange(16)
        img = np.broadcast_to(0.4 + 0.2 * np.cos(2 * np.pi * x / 8), (16, 16))
        fr = frame_of(img, "regular")
        patch = oracle_least_squares(fr, (0, 0, 8, 8), k_limit=2)
        spec = np.fft.fft2(patch) / 64
        assert abs(spec[0, 0].real - 0.4) < 1e-6
        assert abs(2 * abs(spec[0, 1]) - 0.2) < 1e-6

    def test_degenerate(self):
        fr = frame_of(np.full((8, 8), 0.3))
        fr = dataclasses.replace(fr, large_validity=np.full((4, 4), Validity.DISCARDED_OVEREXPOSED,
                                                            dtype=np.int8))
        with pytest.raises(DegenerateSystemError) as err:
            oracle_least_squares(fr, (0, 0, 4, 4), k_limit=3)
        assert err.value.deficiency > 0

    def test_region_limits(self):
        fr = frame_of(np.full((32, 32), 0.3))
        with pytest.raises(ValueError):
            oracle_least_squares(fr, (0, 0, 17, 8))
        with pytest.raises(DimensionError):
            oracle_least_squares(fr, (28, 28, 8, 8))


class TestBlockModel:
    def test_round_trip(self):
        C = np.zeros((8, 8), complex)
        C[0, 1], C[0, 7] = 0.1 + 0.2j, 0.1 - 0.2j
        C[0, 0] = 0.5
        m = BlockModel.from_coefficients(C)
        assert m.n_terms == 2
        assert np.array_equal(m.coefficient_grid(), C)
        assert m.is_conjugate_symmetric()
        assert np.allclose(m.synthesize()[0], 0.5 + 2 * np.real((0.1 + 0.2j) * np.exp(2j * np.pi * np.arange(8) / 8)))
