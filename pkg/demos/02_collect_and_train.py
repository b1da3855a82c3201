"""Collect a trajectory buffer and fit the structural causal action model.

Uses a desk-sized buffer and a reduced network so the whole script runs in
about two minutes; raise episodes/iterations (and drop hidden_sizes) for a
full-scale run.  Writes buffer, checkpoint, and matrix CSV to ./out/.
"""

import os

import numpy as np

from causalchef import (
    ACTIONS,
    KitchenLayout,
    PolicySpec,
    TrainConfig,
    build_matrix,
    collect_buffer,
    export_heatmap_triples,
    export_matrix,
    save_buffer,
    save_checkpoint,
    schema_for_pots,
    train,
)

os.makedirs("out", exist_ok=True)
layout = KitchenLayout(name="cramped_room", num_pots=1, cook_time=20)
schema = schema_for_pots(1)

policy = PolicySpec(kind="greedy_chef", epsilon=0.1)
buffer = collect_buffer(layout, policy, episodes=100, horizon=400, seed=7, schema=schema)
save_buffer(buffer, "out/buffer.jsonl")
print(f"collected {len(buffer)} records from {buffer.meta['episodes']} per-seat episodes")

config = TrainConfig(
    lr=1e-3,
    lambda_reg=3e-3,
    iterations=8000,
    batch_size=256,
    hidden_sizes=(32, 64, 64, 32),
    weight_decay=1e-3,
    seed=0,
)
model = train(buffer, config, schema=schema)
save_checkpoint(model, config, "out/sca_model.json")
print(f"final prediction loss: {model.loss_trace['causal'][-1]:.4f}")

matrix = build_matrix(model.gates(), schema, provenance="out/sca_model.json")
export_matrix(matrix, "out/matrix.csv")
export_heatmap_triples(matrix, "out/matrix_triples.csv")

names = schema.parent_names()
print("\nstrongest causal edges per next action:")
for i, action in enumerate(ACTIONS):
    top = sorted(((matrix.entries[i, j], names[j]) for j in range(len(names))), reverse=True)[:3]
    edges = ", ".join(f"{name}={weight:.2f}" for weight, name in top if weight > 0.3)
    print(f"  {action.value:<24} {edges}")
