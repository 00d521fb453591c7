import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fosb_em.geometry import (
    KITE_FIELD,
    MeshError,
    PerturbationField,
    SurfaceMesh,
    build_hierarchy,
    fichera_quads,
    generate_fichera,
    generate_kite,
    generate_sphere,
    mesh_width,
    perturb_mesh,
    precision,
    read_emesh,
    write_emesh,
)


def n_edges(mesh):
    e = np.sort(mesh.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    return len(np.unique(e, axis=0))


def test_icosahedron_counts():
    m = generate_sphere(0)
    assert (m.nt, n_edges(m), m.nv) == (20, 30, 12)


def test_sphere_refinement_two_counts():
    m = generate_sphere(2)
    assert (m.nt, n_edges(m)) == (320, 480)


def test_sphere_refinement_three_volume():
    # signed-volume sum over triangles
    m = generate_sphere(3)
    v = np.einsum("td,td->t", m.corners[:, 0], np.cross(m.corners[:, 1], m.corners[:, 2])).sum() / 6
    assert abs(v - 4 * np.pi / 3) / (4 * np.pi / 3) < 0.01
    assert np.allclose(np.linalg.norm(m.vertices, axis=1), 1.0)


def test_sphere_rejects_negative_refinement():
    with pytest.raises(ValueError):
        generate_sphere(-1)


@pytest.mark.parametrize("builder", ["sphere", "kite", "fichera"])
def test_generated_meshes_are_closed_genus_zero(builder):
    h = 0.3
    m = {"sphere": lambda: generate_sphere(2), "kite": lambda: generate_kite(h),
         "fichera": lambda: generate_fichera(h)}[builder]()
    m.validate()
    assert m.euler_characteristic() == 2
    assert m.areas.min() > 1e-14
    assert m.volume > 0


def test_kite_mesh_size_at_finest_paper_level():
    # r = 20 at k0 = 5; the reference count is 9003 dofs, +-20% mesher tolerance
    h = 2 * np.pi / (5 * 20)
    m = generate_kite(h)
    assert abs(n_edges(m) - 9003) <= 0.2 * 9003
    assert mesh_width(m) <= 1.5 * h


def test_kite_field_vanishes_on_caps():
    x = np.array([[0.3, 0.1, 1.0], [-0.2, 0.05, -1.0]])
    assert np.all(KITE_FIELD(x) == 0.0)


def test_kite_field_at_theta_pi():
    # (z^2 - 1)(cos(theta) - 1) = (-1)(-2) = 2
    v = KITE_FIELD(np.array([-0.4, 0.0, 0.0]))
    np.testing.assert_allclose(v, [2.0, 0.0, 0.0], atol=1e-15)


def test_kite_perturbed_family_keeps_connectivity():
    m = generate_kite(0.3)
    for t in (0.01, 0.1, 0.25, 0.5, 1.0):
        mt = perturb_mesh(m, KITE_FIELD, t)
        assert np.array_equal(mt.triangles, m.triangles)
        np.testing.assert_allclose(mt.vertices, m.vertices + t * KITE_FIELD(m.vertices))


def test_perturb_with_zero_amplitude_is_identity():
    m = generate_kite(0.3)
    mt = perturb_mesh(m, KITE_FIELD, 0.0)
    assert np.array_equal(mt.vertices, m.vertices)
    assert np.array_equal(mt.triangles, m.triangles)


def test_perturb_rejects_degenerate_triangles():
    m = generate_sphere(1)
    collapse = PerturbationField(lambda x: -x)  # t = 1 maps every vertex to the origin
    with pytest.raises(MeshError, match="degenerates"):
        perturb_mesh(m, collapse, 1.0)


@given(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05))
def test_perturb_is_additive_in_t(t1, t2):
    m = generate_sphere(1)
    disp = KITE_FIELD(m.vertices)  # evaluated once on the nominal surface
    a = perturb_mesh(m, disp, t1 + t2)
    b = perturb_mesh(perturb_mesh(m, disp, t1), disp, t2)
    np.testing.assert_allclose(a.vertices, b.vertices, atol=1e-15)


def test_fichera_area_from_constructed_faces():
    # area oracle: sum of the 0.5 x 0.5 squares that make up the solid's boundary
    oracle = sum(np.linalg.norm(np.cross(u, v)) for _, u, v in fichera_quads())
    m = generate_fichera(0.2)
    assert oracle == pytest.approx(6.0)
    assert m.total_area == pytest.approx(oracle, rel=1e-12)


@pytest.mark.parametrize("r, ref", [(2, 270), (5, 792), (10, 3204)])
def test_fichera_level_sizes(r, ref):
    m = generate_fichera(2 * np.pi / (5 * r))
    assert abs(n_edges(m) - ref) <= 0.2 * ref


def test_fichera_inside_unit_box_with_top_face():
    m = generate_fichera(0.2)
    assert np.all(np.abs(m.vertices) <= 0.5 + 1e-15)
    top = np.abs(m.centroids[:, 2] - 0.5) < 1e-12
    assert top.any()
    np.testing.assert_allclose(m.normals[top], [[0, 0, 1]] * top.sum(), atol=1e-12)


def test_wavelength_and_precision():
    assert 2 * np.pi / 3 == pytest.approx(2.094, abs=1e-3)
    assert round(2 * np.pi / 3, 1) == 2.1
    assert round(2 * np.pi / 5, 2) == 1.26
    lam = 2 * np.pi / 3
    assert precision(lam / 10, 3.0) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        precision(0.0, 3.0)


def test_mesh_width_is_max_circumdiameter():
    # right isosceles triangles: circumdiameter equals the hypotenuse
    m = generate_fichera(0.75)  # one cell per 0.5 x 0.5 square
    assert mesh_width(m) == pytest.approx(0.5 * np.sqrt(2))


def test_hierarchy_monotone():
    H = build_hierarchy("kite", 5.0, [2, 5, 10])
    assert all(a > b for a, b in zip(H.widths, H.widths[1:]))
    r = [precision(h, 5.0) for h in H.widths]
    assert all(a < b for a, b in zip(r, r[1:]))
    assert H.L == 2 and H[1] is H.meshes[1]


def test_emesh_round_trip(tmp_path):
    m = generate_kite(0.4)
    p = tmp_path / "kite.emesh"
    write_emesh(m, p)
    assert p.read_text().startswith("EMESH 1\n")
    back = read_emesh(p)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)


def test_emesh_bad_header(tmp_path):
    p = tmp_path / "bad.emesh"
    p.write_text("MESH 2\n0 0\n")
    with pytest.raises(MeshError):
        read_emesh(p)


def test_validate_rejects_open_and_inverted_meshes():
    m = generate_sphere(0)
    with pytest.raises(MeshError):
        SurfaceMesh(m.vertices, m.triangles[1:]).validate()
    with pytest.raises(MeshError):
        SurfaceMesh(m.vertices, m.triangles[:, ::-1]).validate()
