"""The three training losses and the weights that balance them.

Run: python3 demos/01_losses.py
"""
# %% A scene with four entities and two related ordered pairs
import numpy as np

from rifa.pairnet import TrainingTargets, connection_loss
from rifa.relnet import class_loss, possibility_loss
from rifa.scenedata import BBox, Entity, Scene, Triple

scene = Scene("demo", [Entity(0, BBox(0, 0, 1, 1))] * 4, [Triple(0, 2, 1), Triple(3, 0, 2)])
targets = TrainingTargets.from_scene(scene)
print("related pairs:\n", targets.positive.astype(int))

# %% Connection-strength loss: every pair weighs 1/m^2, related pairs an extra 1/|I_t|
b = connection_loss(np.zeros((4, 4)), targets)
print("pair weights:\n", np.round(b.weights, 4))
print("weights sum to", b.weights.sum(), "so an undecided scorer costs 2 ln 2 =", round(b.loss, 6))

# %% A scorer that leans the right way is cheaper
sc = np.where(targets.positive, 0.6, -0.6)
print("loss with a good scorer:", round(connection_loss(sc, targets).loss, 6))

# %% Possibility loss over proposals: the same balancing, now over the proposal list
positive = np.array([True, False, False, False, True, False])
for rp in (np.full(6, 0.5), np.where(positive, 0.8, 0.1)):
    r = possibility_loss(rp, positive)
    print("rp", rp, "-> loss", round(r.loss, 6), "weights sum", r.weights.sum())

# %% Class loss averages -ln rc over every ground-truth relation, multi-relation pairs included
pairs = np.array([[0, 1], [3, 2], [1, 0]])
rc = np.array([[0.1, 0.1, 0.7, 0.1], [0.6, 0.2, 0.1, 0.1], [0.25, 0.25, 0.25, 0.25]])
loss, _ = class_loss(rc, pairs, targets)
print("class loss:", round(loss, 6), "=", round((-np.log(0.7) - np.log(0.6)) / 2, 6))
