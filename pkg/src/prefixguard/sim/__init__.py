"""Desk-scale BGP propagation simulator driving the engine end to end."""

from .bgp import NoCandidates, Route, RouteChange, ScenarioStalled, Simulator, UnknownOrigin, decide, propagate
from .scenario import (Scenario, ScenarioError, ScenarioResult, load_scenario, parse_scenario, random_scenario,
                       run_scenario)
from .topology import SimTopology, TopologyError, parse_topology, random_topology, render_topology
