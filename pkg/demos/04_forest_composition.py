"""Composing the final forest: equilibrium weights vs. equal voting.

Island champions become ensemble members.  Equal voting gives each
champion weight 1/|islands|; Nash voting solves the champions-versus-
perturbations game and uses the equilibrium row probabilities, which
concentrates weight on champions that stay accurate under attack.
"""

import os
import tempfile

import numpy as np

from coevoforest import archipelago, ensemble
from coevoforest.config import desk_config
from coevoforest.data import load_csv, normalize, train_test_split
from coevoforest.game import lemke_howson
from coevoforest.metrics import accuracy, adversarial_accuracy_empirical
from coevoforest.perturb import sample_uniform

HERE = os.path.dirname(__file__)
rng = np.random.default_rng(0)

raw = load_csv(os.path.join(HERE, "..", "datasets", "moons.csv"), "label")
dataset, _ = normalize(raw)
train, test = train_test_split(dataset, 0.2, rng)
eps = 0.05

config = desk_config(epsilon=eps, seed=4, generation_limit=40)
result = archipelago.run(train, config)

nash = ensemble.compose_nash(result, train, config)
equal = ensemble.compose_equal(result)
print("champion weights per island")
print(f"  nash voting : {[round(w, 3) for _, w in nash.members]}")
print(f"  equal voting: {[round(w, 3) for _, w in equal.members]}")
print(f"  game value at the equilibrium: {nash.metadata['game_value']:.3f}")

# The matrix behind the weights: worst column payoff per weighting.
payoff = ensemble.composition_game(result, config)
eq_pair = lemke_howson(payoff)
A = payoff.entries
uniform = np.full(A.shape[0], 1.0 / A.shape[0])
print(f"\nworst-column payoff: nash {float((eq_pair.row_probs @ A).min()):.3f}, "
      f"uniform {float((uniform @ A).min()):.3f}")

# Held-out comparison under sampled attacks.
perts = [sample_uniform(test.n_instances, test.n_features, eps,
                        np.random.default_rng(9)) for _ in range(200)]
for name, forest in (("nash", nash), ("equal", equal)):
    clean = accuracy(forest, test.instances, test.labels)
    adv = adversarial_accuracy_empirical(forest, test.instances, test.labels, perts)
    print(f"  {name:5s}: clean {clean:.3f}, empirical adversarial {adv:.3f}")

# Models serialize canonically: save -> load -> save is byte-identical.
with tempfile.TemporaryDirectory() as tmp:
    path_a = os.path.join(tmp, "a.json")
    path_b = os.path.join(tmp, "b.json")
    ensemble.save_forest(nash, path_a)
    ensemble.save_forest(ensemble.load_forest(path_a, 2, 2), path_b)
    identical = open(path_a, "rb").read() == open(path_b, "rb").read()
print(f"\nmodel round-trip byte-identical: {identical}")
