"""
iForest vs OCSVM on toy data
============================

Two-dimensional sets where the detectors' inductive biases differ. The
isolation forest splits along axes, so it scores the empty middle of a ring
as fairly normal; the RBF one-class SVM wraps the ring and flags it.
"""

import numpy as np

from wingbeat_qc.iforest import IsolationForest
from wingbeat_qc.ocsvm import OneClassSVM

rng = np.random.default_rng(0)

# a ring of radius 3
theta = rng.uniform(0, 2 * np.pi, 300)
ring = np.c_[3 * np.cos(theta), 3 * np.sin(theta)] + 0.15 * rng.standard_normal((300, 2))

# a blob with one far point
blob = np.vstack([rng.standard_normal((200, 2)), [[6.0, 6.0]]])

probes = {"centre": [0.0, 0.0], "on ring": [3.0, 0.0], "far": [8.0, 8.0]}
P = np.array(list(probes.values()))

forest = IsolationForest(seed=0).fit(ring)
svm = OneClassSVM(nu=0.1, gamma=0.5).fit(ring)
print("ring")
for name, a, b in zip(probes, forest.score(P), svm.anomaly_score(P)):
    print(f"  {name:8s} iforest {a:.3f}  ocsvm {b:.3f}")

forest = IsolationForest(seed=0).fit(blob)
svm = OneClassSVM(nu=0.1, gamma=0.5).fit(blob)
print("blob with outlier at (6, 6)")
print("  iforest argmax", int(np.argmax(forest.score(blob))))
print("  ocsvm   argmax", int(np.argmax(svm.anomaly_score(blob))))

# OCSVM's nu bounds the training outlier fraction from above and the SV fraction from below
for nu in (0.05, 0.2, 0.5):
    p = OneClassSVM(nu=nu, gamma=0.5).fit(blob).nu_property()
    print(f"  nu={nu:.2f}: outliers {p['outlier_fraction']:.3f}, SVs {p['sv_fraction']:.3f}")
