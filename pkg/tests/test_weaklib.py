import numpy as np
import pytest
from numpy.polynomial import Polynomial
from pydantic import ValidationError

from ubic.features.grid import Axis, Field
from ubic.features.weaklib import (
    CandidateTerm,
    SubdomainSpec,
    TestFunction,
    build,
    denoised_build,
    enumerate_terms,
    read_library,
    refit,
    required_weight_power,
    sample_subdomains,
    write_library,
)
from ubic.utils.exceptions import FieldFormatException, LibraryException


def _grid_field(func, n_x=41, n_t=41, x=(-1.0, 1.0), t=(-1.0, 1.0)):
    x_axis = Axis(min=x[0], max=x[1], count=n_x)
    t_axis = Axis(min=t[0], max=t[1], count=n_t)
    xx, tt = np.meshgrid(x_axis.points(), t_axis.points(), indexing="ij")
    return Field(x_axis, t_axis, func(xx, tt))


def _whole_grid(power=2):
    return SubdomainSpec(n_domains=1, half_width_x=1.0, half_width_t=1.0, weight_power=power)


class TestTerms:
    def test_counts(self):
        assert len(enumerate_terms(2, 2)) == 8
        assert len(enumerate_terms(2, 4)) == 14
        assert enumerate_terms(0, 1) == [CandidateTerm(d1=0, d2=1)]

    def test_labels(self):
        labels = [term.label for term in enumerate_terms(2, 2)]
        assert labels == ["u_x", "u_xx", "u", "uu_x", "uu_xx", "u^2", "u^2u_x", "u^2u_xx"]
        assert CandidateTerm(d1=0, d2=4).label == "u_xxxx"

    def test_rejects_empty_term(self):
        with pytest.raises(ValidationError):
            CandidateTerm(d1=0, d2=0)

    def test_required_weight_power(self):
        assert required_weight_power(enumerate_terms(2, 2)) == 2
        assert required_weight_power(enumerate_terms(2, 4)) == 4


class TestTestFunction:
    @pytest.mark.parametrize("power", [2, 4])
    def test_vanishes_on_boundary(self, power):
        weight = TestFunction(power)
        edges = np.array([-1.0, 1.0])
        for order in range(power):
            assert np.all(np.abs(weight.evaluate(edges, order)) < 1e-14)

    def test_derivative_scaling(self):
        weight = TestFunction(2)
        z = np.array([0.3])
        assert weight.evaluate(z, 1, 2.0)[0] == pytest.approx(weight.evaluate(z, 1)[0] / 2.0)


class TestBuild:
    def test_constant_field(self):
        field = _grid_field(lambda x, t: np.full_like(x, 3.0))
        spec = SubdomainSpec(n_domains=20, half_width_x=0.4, half_width_t=0.4, seed=2)
        library = build(field, enumerate_terms(2, 2), spec, include_intercept=True)
        labels = library.labels
        intercept = library.phi[:, -1]
        assert labels[-1] == "1"
        assert np.allclose(library.phi[:, labels.index("u")], 3.0 * intercept)
        assert np.allclose(library.phi[:, labels.index("u^2")], 9.0 * intercept)
        assert np.max(np.abs(library.phi[:, labels.index("u_x")])) < 1e-12
        assert np.max(np.abs(library.q0)) < 1e-12

    def test_finite_difference_term_converges_second_order(self):
        # u u_xx for u = (1 + x)^4 (1 + t^2) is 12 (1 + x)^6 (1 + t^2)^2
        w = Polynomial([-1.0, 0.0, 1.0]) ** 2
        fx = (w * Polynomial([1.0, 1.0]) ** 6).integ()
        ft = (w * Polynomial([1.0, 0.0, 1.0]) ** 2).integ()
        exact = 12.0 * (fx(1.0) - fx(-1.0)) * (ft(1.0) - ft(-1.0))
        term = [CandidateTerm(d1=1, d2=2)]

        errors = []
        for n in (41, 81):
            field = _grid_field(lambda x, t: (1 + x) ** 4 * (1 + t ** 2), n, n)
            library = build(field, term, _whole_grid())
            errors.append(abs(library.phi[0, 0] - exact))
        assert errors[1] < errors[0]
        assert errors[0] / errors[1] > 3.0

    def test_subdomains_stay_inside(self, smooth_field):
        spec = SubdomainSpec.from_fractions(smooth_field, 200, 0.1, 0.1, seed=4)
        nx, nt = smooth_field.shape
        for domain in sample_subdomains(smooth_field, spec):
            sx, st = domain.slices()
            assert sx.start >= 0 and sx.stop <= nx
            assert st.start >= 0 and st.stop <= nt

    def test_seeded_and_thread_invariant(self, smooth_field):
        spec = SubdomainSpec.from_fractions(smooth_field, 60, 0.1, 0.1, seed=9)
        terms = enumerate_terms(2, 2)
        one = build(smooth_field, terms, spec, threads=1)
        four = build(smooth_field, terms, spec, threads=4)
        assert np.array_equal(one.phi, four.phi)
        assert np.array_equal(one.q0, four.q0)

    def test_recovers_transport_equation(self):
        # u_t = -u_x for u = sin(x - t)
        field = _grid_field(lambda x, t: np.sin(x - t), 201, 101, (0.0, 2 * np.pi), (0.0, 2.0))
        spec = SubdomainSpec.from_fractions(field, 100, 0.1, 0.2, seed=1)
        library = build(field, [CandidateTerm(d1=0, d2=1)], spec)
        assert refit(library, [0])[0] == pytest.approx(-1.0, abs=1e-2)


class TestDenoisedBuild:
    def test_alpha_one_matches_build(self, smooth_field):
        spec = SubdomainSpec.from_fractions(smooth_field, 30, 0.1, 0.1, seed=3)
        terms = enumerate_terms(2, 2)
        plain = build(smooth_field, terms, spec)
        same = denoised_build(smooth_field, terms, spec, alpha=1)
        assert np.array_equal(plain.phi, same.phi)
        assert same.savgol_window == 1

    def test_quadratic_field_is_unchanged(self):
        field = _grid_field(lambda x, t: x ** 2 + x * t - t ** 2 + 0.5)
        spec = SubdomainSpec(n_domains=25, half_width_x=0.4, half_width_t=0.4, seed=6)
        terms = enumerate_terms(2, 2)
        plain = build(field, terms, spec)
        smoothed = denoised_build(field, terms, spec, alpha=5)
        assert np.allclose(smoothed.phi, plain.phi, rtol=1e-8, atol=1e-10)
        assert np.allclose(smoothed.q0, plain.q0, rtol=1e-8, atol=1e-10)

    def test_rejects_even_alpha(self, smooth_field):
        spec = SubdomainSpec.from_fractions(smooth_field, 10)
        with pytest.raises(LibraryException):
            denoised_build(smooth_field, enumerate_terms(2, 2), spec, alpha=4)


class TestErrors:
    def test_subdomain_wider_than_grid(self, smooth_field):
        spec = SubdomainSpec.from_fractions(smooth_field, 10, hx_frac=0.6)
        with pytest.raises(LibraryException):
            build(smooth_field, enumerate_terms(2, 2), spec)

    def test_subdomain_too_narrow(self, smooth_field):
        spec = SubdomainSpec.from_fractions(smooth_field, 10, hx_frac=0.01)
        with pytest.raises(LibraryException):
            build(smooth_field, enumerate_terms(2, 2), spec)

    def test_weight_power_too_small(self, smooth_field):
        spec = SubdomainSpec.from_fractions(smooth_field, 10, weight_power=2)
        with pytest.raises(LibraryException):
            build(smooth_field, enumerate_terms(2, 4), spec)

    def test_invalid_spec(self):
        with pytest.raises(ValidationError):
            SubdomainSpec(n_domains=5, half_width_x=1.0, half_width_t=1.0, weight_power=1)


class TestLibraryFile:
    def test_roundtrip(self, tmp_path, smooth_field):
        spec = SubdomainSpec.from_fractions(smooth_field, 40, seed=8)
        library = build(smooth_field, enumerate_terms(2, 2), spec, include_intercept=True)
        loaded = read_library(write_library(library, tmp_path / "library.bin"))
        assert np.array_equal(loaded.phi, library.phi)
        assert np.array_equal(loaded.q0, library.q0)
        assert loaded.labels == library.labels
        assert loaded.spec == library.spec

    def test_truncated_payload(self, tmp_path, smooth_field):
        spec = SubdomainSpec.from_fractions(smooth_field, 10)
        path = write_library(build(smooth_field, enumerate_terms(1, 1), spec), tmp_path / "library.bin")
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(FieldFormatException):
            read_library(path)
