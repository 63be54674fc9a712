"""CTC on a toy 2-class problem: paths, collapse, and the exact oracle."""

import numpy as np

from htrkit.ctc import ctc_brute_force, ctc_loss, extended_label, greedy_decode
from htrkit.data import Charset

# three frames, classes = {blank, 'a'}; every frame slightly prefers 'a'
probs = np.array([[0.4, 0.6]] * 3)
logp = np.log(probs)

print("extended label for 'a':", extended_label([1]))  # blank, a, blank

nll, grad = ctc_loss(logp, [1])
print(f"ctc loss for target 'a': {nll:.6f}")

# enumerate all 2^3 frame paths by hand: those collapsing to 'a' are every
# path containing at least one 'a' with no blank-separated repeat
brute = ctc_brute_force(logp, [1])
print(f"brute-force enumeration:  {brute:.6f}  (diff {abs(nll - brute):.2e})")

print("gradient wrt log-probs (pushes blank down, 'a' up):")
print(np.round(grad, 4))

print("greedy decode of the frame argmaxes:", repr(greedy_decode(logp, Charset("a"))))

# a target longer than the frame count cannot be emitted at all
impossible, _ = ctc_loss(logp, [1, 1, 1])  # needs a-blank-a-blank-a: 5 frames
print("infeasible target gives infinite loss:", impossible)
