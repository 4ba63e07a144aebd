import numpy as np
import pytest

from neuroloop.preprocess import (BIPOLAR, CAR, LAPLACIAN, ChainConfig,
                                  DesignError, FilterState, MontageError,
                                  PreprocessChain, ShapeError, artifact_mask,
                                  design_bandpass, design_notch, filter_block,
                                  spatial_filter)
from neuroloop.sigcore import (Epoch, Montage, SampleBlock, SignalError,
                               default_montage)
from oracles import measured_gain

FS = 250.0


@pytest.fixture(scope="module")
def alpha_bp():
    return design_bandpass(4, 8.0, 13.0, FS)


@pytest.fixture(scope="module")
def mains_notch():
    return design_notch(50.0, 30.0, FS)


class TestBandpassDesign:
    def test_midband_gain(self, alpha_bp):
        f_mid = np.sqrt(8.0 * 13.0)
        assert 0.95 <= measured_gain(alpha_bp, f_mid, FS) <= 1.05

    def test_edge_gains_are_3db(self, alpha_bp):
        # -3 dB = 1/sqrt(2) = 0.7071 is the Butterworth edge definition
        assert measured_gain(alpha_bp, 8.0, FS) == pytest.approx(0.708, abs=0.05)
        assert measured_gain(alpha_bp, 13.0, FS) == pytest.approx(0.708, abs=0.05)

    def test_stopband(self, alpha_bp):
        assert measured_gain(alpha_bp, 2.0, FS) < 0.01
        assert measured_gain(alpha_bp, 40.0, FS) < 0.01

    def test_edge_at_nyquist_rejected(self):
        with pytest.raises(DesignError):
            design_bandpass(4, 8.0, 130.0, FS)

    def test_bad_order_rejected(self):
        with pytest.raises(DesignError):
            design_bandpass(3, 8.0, 13.0, FS)

    def test_inverted_edges_rejected(self):
        with pytest.raises(DesignError):
            design_bandpass(4, 13.0, 8.0, FS)

    @pytest.mark.parametrize("order", [2, 4, 6, 8])
    def test_all_orders_stable(self, order):
        coeffs = design_bandpass(order, 4.0, 30.0, FS)
        assert coeffs.n_sections == order
        assert np.all(coeffs.pole_radii() < 1.0)


class TestNotchDesign:
    def test_kills_line_frequency(self, mains_notch):
        assert measured_gain(mains_notch, 50.0, FS) <= 0.01

    def test_passes_band_of_interest(self, mains_notch):
        assert measured_gain(mains_notch, 10.0, FS) >= 0.95

    def test_center_at_nyquist_rejected(self):
        with pytest.raises(DesignError):
            design_notch(125.0, 30.0, FS)

    def test_stable(self, mains_notch):
        assert np.all(mains_notch.pole_radii() < 1.0)


class TestFilterBlock:
    def test_dc_rejected_by_bandpass(self, alpha_bp):
        x = np.full((1, int(4 * FS)), 10.0)
        state = FilterState.zeros(alpha_bp, 1)
        y = filter_block(alpha_bp, state, SampleBlock(0, x, FS)).samples[0]
        assert np.abs(y[int(2 * FS):]).max() < 1e-3

    def test_streaming_continuity(self, alpha_bp):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(3, 1000))
        whole_state = FilterState.zeros(alpha_bp, 3)
        whole = filter_block(alpha_bp, whole_state, SampleBlock(0, x, FS)).samples

        state = FilterState.zeros(alpha_bp, 3)
        a = filter_block(alpha_bp, state, SampleBlock(0, x[:, :321], FS)).samples
        b = filter_block(alpha_bp, state, SampleBlock(321, x[:, 321:], FS)).samples
        joined = np.concatenate([a, b], axis=1)
        assert np.allclose(joined, whole, rtol=1e-12, atol=1e-12)

    def test_impulse_response_decays(self, alpha_bp):
        x = np.zeros((1, int(10 * FS)))
        x[0, 0] = 1.0
        state = FilterState.zeros(alpha_bp, 1)
        y = filter_block(alpha_bp, state, SampleBlock(0, x, FS)).samples[0]
        assert np.abs(y[-int(FS):]).max() < 1e-6

    def test_state_shape_checked(self, alpha_bp):
        state = FilterState.zeros(alpha_bp, 2)
        with pytest.raises(ShapeError):
            filter_block(alpha_bp, state, SampleBlock(0, np.zeros((3, 10)), FS))


class TestSpatialFilters:
    def test_car_subtracts_mean(self):
        m = Montage(("A", "B", "C"), ((1,), (0,), (0,)))
        block = SampleBlock(0, np.array([[1.0], [2.0], [3.0]]), FS)
        out = spatial_filter(block, m, CAR).samples
        assert np.allclose(out[:, 0], [-1.0, 0.0, 1.0])

    def test_laplacian_subtracts_neighbor_mean(self):
        m = Montage(("A", "B", "C"), ((1, 2), (0,), (0,)))
        block = SampleBlock(0, np.array([[5.0], [1.0], [3.0]]), FS)
        out = spatial_filter(block, m, LAPLACIAN).samples
        assert out[0, 0] == pytest.approx(5.0 - 2.0)

    def test_bipolar_pairs(self):
        m = Montage(("A", "B"), ((1,), (0,)), bipolar_pairs=((0, 1),))
        block = SampleBlock(0, np.array([[4.0], [1.0]]), FS)
        out = spatial_filter(block, m, BIPOLAR)
        assert out.n_channels == 1
        assert out.samples[0, 0] == pytest.approx(3.0)

    def test_laplacian_empty_neighbors_rejected(self):
        m = Montage(("A", "B"), ((1,), ()))
        block = SampleBlock(0, np.zeros((2, 5)), FS)
        with pytest.raises(MontageError):
            spatial_filter(block, m, LAPLACIAN)

    def test_car_columns_sum_to_zero(self):
        rng = np.random.default_rng(0)
        block = SampleBlock(0, rng.normal(size=(8, 400)), FS)
        out = spatial_filter(block, default_montage(), CAR).samples
        assert np.abs(out.sum(axis=0)).max() < 1e-9

    @pytest.mark.parametrize("method", [CAR, LAPLACIAN, BIPOLAR])
    def test_linearity(self, method):
        rng = np.random.default_rng(1)
        m = default_montage()
        x = rng.normal(size=(8, 100))
        y = rng.normal(size=(8, 100))
        alpha, beta = 2.5, -1.25
        combo = spatial_filter(SampleBlock(0, alpha * x + beta * y, FS), m, method)
        fx = spatial_filter(SampleBlock(0, x, FS), m, method)
        fy = spatial_filter(SampleBlock(0, y, FS), m, method)
        expected = alpha * fx.samples + beta * fy.samples
        scale = np.abs(expected).max()
        assert np.abs(combo.samples - expected).max() / scale < 1e-9


class TestArtifactMask:
    def test_clean_epoch(self):
        ep = Epoch(0, np.full((2, 10), 50.0), FS)
        assert artifact_mask(ep, 100.0).artifact_flag is False

    def test_flagged_epoch(self):
        x = np.full((2, 10), 50.0)
        x[1, 3] = 150.0
        ep = Epoch(0, x, FS)
        flagged = artifact_mask(ep, 100.0)
        assert flagged.artifact_flag is True
        assert np.array_equal(flagged.samples, x)  # samples unchanged

    def test_zero_threshold_rejected(self):
        ep = Epoch(0, np.zeros((1, 5)), FS)
        with pytest.raises(SignalError):
            artifact_mask(ep, 0.0)


class TestPreprocessChain:
    def test_canonical_chain_runs(self):
        chain = PreprocessChain(ChainConfig(), FS, default_montage())
        rng = np.random.default_rng(2)
        out = chain.process_block(SampleBlock(0, rng.normal(size=(8, 250)), FS))
        assert out.n_channels == 8
        assert np.abs(out.samples.sum(axis=0)).max() < 1e-9  # CAR applied

    def test_bipolar_chain_changes_channel_count(self):
        chain = PreprocessChain(ChainConfig(spatial=BIPOLAR), FS, default_montage())
        assert chain.out_channels == 4
        out = chain.process_block(SampleBlock(0, np.zeros((8, 100)), FS))
        assert out.n_channels == 4
