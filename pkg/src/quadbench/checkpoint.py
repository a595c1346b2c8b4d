"""Binary checkpoint container.

Layout: 8-byte magic, uint32 little-endian header length, a JSON header
(layer shapes, activations, observation-config name, training settings,
step counter, array manifest), then the raw little-endian float32 arrays
in the order the manifest declares. Round-trips are bit-exact across
platforms.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct

import numpy as np

from .errors import MissingArtifactError
from .mlp import MlpParams

MAGIC = b"QBNCKPT1"
FORMAT_VERSION = 1


def _net_arrays(prefix: str, net: MlpParams):
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        yield f"{prefix}.w{i}", w
        yield f"{prefix}.b{i}", b


def save_checkpoint(path, agent, obs_name: str, obs_config, sac_cfg, step: int) -> None:
    """Write the full agent (actor, critics, targets, temperature)."""
    arrays = list(_net_arrays("actor", agent.actor.mlp))
    arrays.append(("actor.scale", agent.actor.action_scale))
    for ci, head in enumerate(agent.critic.heads):
        arrays.extend(_net_arrays(f"critic{ci}", head))
    for ci, head in enumerate(agent.target.heads):
        arrays.extend(_net_arrays(f"target{ci}", head))
    arrays.append(("log_alpha", np.asarray(agent.log_alpha).reshape(1)))

    header = {
        "format": FORMAT_VERSION,
        "obs_config": obs_name,
        "history": obs_config.H,
        "actor_activations": list(agent.actor.mlp.activations),
        "critic_activations": list(agent.critic.heads[0].activations),
        "n_critics": len(agent.critic.heads),
        "sac": dataclasses.asdict(sac_cfg),
        "step": int(step),
        "dtype": "<f4",
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    os.replace(tmp, path)


def read_checkpoint(path) -> tuple:
    """Return (header dict, {name: float32 array})."""
    if not os.path.exists(path):
        raise MissingArtifactError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path} is not a quadbench checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for spec in header["arrays"]:
            n = int(np.prod(spec["shape"])) if spec["shape"] else 1
            buf = fh.read(4 * n)
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f4").reshape(spec["shape"]).copy()
    return header, arrays


def _rebuild_net(prefix: str, header, arrays, activations) -> MlpParams:
    weights, biases = [], []
    i = 0
    while f"{prefix}.w{i}" in arrays:
        weights.append(arrays[f"{prefix}.w{i}"])
        biases.append(arrays[f"{prefix}.b{i}"])
        i += 1
    return MlpParams(weights, biases, list(activations))


def load_actor(path):
    """Rebuild the deployable actor; returns (ActorNet, header)."""
    from .sac import ActorNet

    header, arrays = read_checkpoint(path)
    net = _rebuild_net("actor", header, arrays, header["actor_activations"])
    scale = arrays["actor.scale"].astype(float)
    return ActorNet(net, scale), header
