import numpy as np
import pytest

from swarmseq.geometry import (
    Domain,
    GeometryError,
    InteractionGraph,
    Obstacle,
    RobotState,
    is_cycle_graph,
    is_spanning_subgraph,
    point_in_polygon,
    polygon_area_centroid,
    proximity_graph,
    voronoi_cells,
    voronoi_centroids,
)


def states(*positions):
    return [RobotState(i + 1, np.array(p, dtype=float)) for i, p in enumerate(positions)]


class TestProximityGraph:
    def test_boundary_distance_is_included(self):
        g = proximity_graph(states((0, 0), (0.3, 0.4)), 0.5)
        assert g.has_edge(1, 2)

    def test_collinear_distances(self):
        g = proximity_graph(states((0, 0), (1, 0), (2, 0)), 1.0)
        assert g.has_edge(1, 2) and g.has_edge(2, 3)
        assert not g.has_edge(1, 3)

    def test_symmetric_and_loop_free(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            pts = rng.uniform(-1, 1, size=(6, 2))
            g = proximity_graph(states(*pts), 0.5)
            for i, j in g.edges:
                assert i < j and i != j
                assert g.has_edge(j, i)

    def test_monotone_in_delta(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            pts = rng.uniform(-1, 1, size=(7, 2))
            st = states(*pts)
            d1, d2 = sorted(rng.uniform(0.1, 2.0, size=2))
            assert proximity_graph(st, d1).edges <= proximity_graph(st, d2).edges

    def test_rejects_bad_inputs(self):
        with pytest.raises(GeometryError):
            proximity_graph(states((0, 0)), 0.0)
        with pytest.raises(GeometryError):
            proximity_graph([], 1.0)


class TestGraphPredicates:
    def test_spanning_reflexive(self):
        g = InteractionGraph.from_edges(4, [(1, 2), (3, 4)])
        assert is_spanning_subgraph(g, g)

    def test_empty_required_is_spanning(self):
        empty = InteractionGraph(5)
        live = InteractionGraph.from_edges(5, [(1, 2)])
        assert is_spanning_subgraph(empty, live)

    def test_missing_edge_detected(self):
        cycle = InteractionGraph.from_edges(5, [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1)])
        live = InteractionGraph.from_edges(5, [(1, 2), (2, 3), (3, 4), (4, 5)])
        assert not is_spanning_subgraph(cycle, live)

    def test_vertex_count_mismatch(self):
        with pytest.raises(GeometryError):
            is_spanning_subgraph(InteractionGraph(3), InteractionGraph(4))

    def test_triangle_is_cycle(self):
        assert is_cycle_graph(InteractionGraph.from_edges(3, [(1, 2), (2, 3), (3, 1)]))

    def test_path_is_not_cycle(self):
        assert not is_cycle_graph(InteractionGraph.from_edges(4, [(1, 2), (2, 3), (3, 4)]))

    def test_disjoint_triangles_are_not_one_cycle(self):
        # degrees are all 2 but the graph has two components
        g = InteractionGraph.from_edges(
            6, [(1, 2), (2, 3), (3, 1), (4, 5), (5, 6), (6, 4)]
        )
        assert not is_cycle_graph(g)

    def test_cycle_implies_degree_two(self):
        g = InteractionGraph.from_edges(5, [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1)])
        assert is_cycle_graph(g)
        assert all(g.degree(i) == 2 for i in range(1, 6))

    def test_too_small_for_cycle(self):
        with pytest.raises(GeometryError):
            is_cycle_graph(InteractionGraph.from_edges(2, [(1, 2)]))


class TestVoronoi:
    def test_single_robot_cell_is_whole_domain(self):
        cents = voronoi_centroids(states((0.2, 0.2)), Domain(0, 1, 0, 1))
        np.testing.assert_allclose(cents[0], [0.5, 0.5], atol=1e-12)

    def test_two_symmetric_halves(self):
        cents = voronoi_centroids(states((0.25, 0.5), (0.75, 0.5)), Domain(0, 1, 0, 1))
        np.testing.assert_allclose(cents[0], [0.25, 0.5], atol=1e-12)
        np.testing.assert_allclose(cents[1], [0.75, 0.5], atol=1e-12)

    def test_cell_areas_partition_domain(self):
        rng = np.random.default_rng(7)
        dom = Domain(0, 1, 0, 1)
        for _ in range(10):
            st = states(*rng.uniform(0.05, 0.95, size=(5, 2)))
            cells = voronoi_cells(st, dom)
            total = sum(abs(polygon_area_centroid(c)[0]) for c in cells)
            assert abs(total - dom.area) <= 1e-9 * dom.area

    def test_monte_carlo_oracle(self):
        # Oracle: classify 10^6 stratified samples (jittered 1000x1000 grid) by
        # nearest site; compare per-cell area fractions and sample-mean
        # centroids against the polygon values. Stratification keeps the
        # sampling error comfortably below the 1e-3 comparison tolerance.
        rng = np.random.default_rng(123)
        dom = Domain(0, 1, 0, 1)
        pts = rng.uniform(0.1, 0.9, size=(4, 2))
        st = states(*pts)
        cells = voronoi_cells(st, dom)

        side = 1000
        gx, gy = np.meshgrid(np.arange(side), np.arange(side))
        grid = np.column_stack([gx.ravel(), gy.ravel()]).astype(float)
        samples = (grid + rng.uniform(0, 1, size=grid.shape)) / side
        d2 = ((samples[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        owner = np.argmin(d2, axis=1)

        for k, cell in enumerate(cells):
            mask = owner == k
            mc_area = mask.mean() * dom.area
            area, centroid = polygon_area_centroid(cell)
            assert abs(abs(area) - mc_area) <= 1e-3
            mc_centroid = samples[mask].mean(axis=0)
            np.testing.assert_allclose(centroid, mc_centroid, atol=1e-3)
            assert point_in_polygon(cell, centroid)

    def test_coincident_sites_rejected(self):
        with pytest.raises(GeometryError):
            voronoi_centroids(states((0.5, 0.5), (0.5, 0.5)), Domain(0, 1, 0, 1))

    def test_site_outside_domain_rejected(self):
        with pytest.raises(GeometryError):
            voronoi_centroids(states((2.0, 0.5)), Domain(0, 1, 0, 1))


class TestDomainTypes:
    def test_degenerate_bounds_rejected(self):
        with pytest.raises(GeometryError):
            Domain(0, 0, 0, 1)

    def test_obstacle_needs_positive_shape(self):
        with pytest.raises(GeometryError):
            Obstacle(np.zeros(2), a=-1.0, b=1.0)

    def test_robot_position_must_be_finite(self):
        with pytest.raises(GeometryError):
            RobotState(1, np.array([np.nan, 0.0]))
