"""Small simulator-backed factor graphs shared by the graph and acceptance tests."""

import math
import numpy as np

from uwslam.graph import VariableKind, X, retract
from uwslam.graph.builder import BuildConfig, build_graph, keyframe_times
from uwslam.simulator import Cluster, ConcentricCircles, Scenario, SurveySpec, WorldSpec, simulate
from uwslam.simulator.scenarios import _down_rig


def tiny_scenario(duration=0.5, n_landmarks=20, seed=3, noiseless=True) -> Scenario:
    """Five keyframes on a 5 m circle above a patch of 20 seabed landmarks."""
    sc = Scenario(
        "tiny",
        SurveySpec(ConcentricCircles((0.0, 0.0), (5.0,), (10.0, 10.0), 60.0), speed=0.5, duration=duration, seed=seed),
        WorldSpec((Cluster("ring", 0, n_landmarks, {"center": (5.0, 1.5, 12.0), "inner": 0.2, "outer": 1.5}),)),
        _down_rig(),
    )
    return sc.noiseless() if noiseless else sc


def ground_truth_init(sim, rate=10.0):
    times = keyframe_times(sim.log, rate)
    states = [sim.ground_truth.state_at(int(t)) for t in times]
    landmarks = {int(i): p for i, p in zip(sim.world.ids, sim.world.positions)}
    return states, landmarks


def build_at_truth(sim, config=None):
    states, landmarks = ground_truth_init(sim, (config or BuildConfig()).keyframe_rate)
    return build_graph(sim.log, sim.calibration, config, initial_states=states, initial_landmarks=landmarks)


def tiny_problem(config=None, **kw):
    sim = simulate(tiny_scenario(**kw))
    return sim, build_at_truth(sim, config)


def perturb(graph, rng, sigma_t=0.05, sigma_deg=2.0, landmarks=True):
    """Perturb every free nav-state pose (and landmark) in place."""
    for key in graph.keys():
        if graph.is_frozen(key):
            continue
        v = graph.values[key]
        if key.kind is VariableKind.NAV_STATE:
            d = np.zeros(15)
            d[0:3] = rng.normal(0, sigma_t, 3)
            d[3:6] = rng.normal(0, math.radians(sigma_deg), 3)
            graph.values[key] = retract(key.kind, v, d)
        elif key.kind is VariableKind.LANDMARK and landmarks:
            graph.values[key] = v + rng.normal(0, sigma_t, 3)


def max_position_error(graph, truth_states):
    return max(float(np.linalg.norm(graph.values[X(i)].position - s.position)) for i, s in enumerate(truth_states))

