import pytest

from notilab.netsim import LatencyProfile, ReceiverSpec, ScenarioConfig, run_scenario
from notilab.traces import PacketEvent, load_profiles, match_sequences


@pytest.fixture(scope="session")
def profiles():
    return load_profiles()


# The example capture excerpt used throughout: one message (idx 209) with its
# server confirmation (idx 211, len 123) and delivery confirmation (idx 213,
# len 776), surrounded by ACK-sized noise in both directions.
EXAMPLE_CAPTURE_ROWS = [
    (207, 53.9259, "out", 536),
    (208, 53.9261, "in", 42),
    (209, 53.9263, "out", 97),
    (210, 53.9264, "in", 42),
    (211, 54.0722, "in", 123),
    (212, 54.1225, "out", 42),
    (213, 55.0154, "in", 776),
    (214, 55.0656, "out", 56),
]

EXAMPLE_PEER = "198.51.100.23"


@pytest.fixture
def example_capture_events():
    return [PacketEvent(index=i, t=t, direction=d, length=ln, peer=EXAMPLE_PEER)
            for i, t, d, ln in EXAMPLE_CAPTURE_ROWS]


def write_example_capture(path):
    import json
    with open(path, "w", encoding="utf-8") as fh:
        for i, t, d, ln in EXAMPLE_CAPTURE_ROWS:
            fh.write(json.dumps({"idx": i, "t": t, "dir": d, "len": ln, "peer": EXAMPLE_PEER}) + "\n")


def make_scenario(means, iterations, seed, sigma=0.02, messenger="signal",
                  delivery_delay_max=0.0, messages_per_iteration=5, profiles_map=None):
    """Scenario with one receiver per latency mean; labels loc0, loc1, ..."""
    if profiles_map is None:
        profiles_map = load_profiles()
    receivers = [
        ReceiverSpec(
            id=f"r{i}", location_label=f"loc{i}",
            network_type="wifi" if i % 2 == 0 else "cellular",
            uplink=LatencyProfile.normal(m, sigma),
            processing_delay=LatencyProfile.normal(0.002, 0.0005),
        )
        for i, m in enumerate(means)
    ]
    return ScenarioConfig(
        messenger=profiles_map[messenger],
        sender_to_server=LatencyProfile.lognormal(-3.2, 0.25),
        server_processing=LatencyProfile.shifted_exponential(0.002, 500.0),
        receivers=receivers,
        iterations=iterations,
        messages_per_iteration=messages_per_iteration,
        delivery_delay_max=delivery_delay_max,
        rng_seed=seed,
    )


def extract_runs(cfg):
    """Simulate and re-extract; returns (rows, label map, runs)."""
    runs = run_scenario(cfg)
    rows = []
    for rid, run in runs.items():
        res = match_sequences(run.trace, cfg.messenger)
        rows.extend((rid, rec) for rec in res.records)
    labels = {rid: run.receiver.location_label for rid, run in runs.items()}
    return rows, labels, runs


def fast_cnn(seed=0, **overrides):
    """Reduced-epoch config to keep unit tests quick; acceptance uses defaults."""
    from notilab.classifier import CnnConfig
    kwargs = dict(epochs=25, seed=seed)
    kwargs.update(overrides)
    return CnnConfig(**kwargs)
