# Test-set rates reconstructed from confusion counts on a 200/200 split.
import numpy as np

from covxr.evaluation import confusion, evaluate_predictions, f1_conventional

rng = np.random.default_rng(1)
labels = np.array([1] * 200 + [0] * 200)
probs = np.concatenate([
    rng.uniform(0.5, 1.0, 187), rng.uniform(0.0, 0.49, 13),   # positives: 187 caught, 13 missed
    rng.uniform(0.0, 0.49, 195), rng.uniform(0.5, 1.0, 5),    # negatives: 195 cleared, 5 flagged
])

cm = confusion(labels, probs)
print(cm)
print(cm.as_grid())

rep = evaluate_predictions(labels, probs)
print(f"sensitivity {rep.sensitivity:.4f}")
print(f"specificity {rep.specificity:.4f}")
print(f"accuracy    {rep.accuracy:.4f}")

# "F1" here is the harmonic mean of sensitivity and specificity.
print(f"f1 (sens/spec harmonic mean) {rep.f1_paper:.6f}")
# The usual precision/recall F1 is reported next to it.
print(f"f1 (precision/recall)        {f1_conventional(cm):.6f}")
