"""Self-supervised unimodal labels: class centers, relative distances and the momentum update."""

import numpy as np

from gsifn.ulgm import Centers, LabelStore, generate_labels, relative_distance, update_centers

rng = np.random.default_rng(0)
y_m = np.array([2.0, 1.0, -1.5, -2.5, 0.0, 0.8])
ids = [f"clip{i}" for i in range(len(y_m))]

# hidden states where the fused stream separates the classes well and text less so
direction = rng.normal(size=4)
hidden = {
    "m": y_m[:, None] * direction + 0.1 * rng.normal(size=(6, 4)),
    "t": 0.5 * y_m[:, None] * direction + 0.8 * rng.normal(size=(6, 4)),
}
centers = update_centers(hidden, y_m, Centers())
alpha_m = relative_distance(hidden["m"], centers, "m")
alpha_t = relative_distance(hidden["t"], centers, "t")
print("alpha (fused):", np.round(alpha_m, 3))
print("alpha (text): ", np.round(alpha_t, 3))

store = LabelStore()
store.register(ids, y_m)
for epoch in range(5):
    labels = generate_labels({"t": alpha_t}, alpha_m, y_m, store, ids)
print("fused labels:         ", y_m)
print("generated text labels:", np.round(labels["t"], 3))
print("clamped to [-3, 3]:", bool(np.all(np.abs(labels["t"]) <= 3)))
