import numpy as np

from .model import PolicyTree


def feature_importance(tree: PolicyTree) -> np.ndarray:
    """Weighted impurity decrease per feature, normalized to sum to 1.

    Each internal node contributes its weight share times its split gain; for
    cost criteria both factors are ratios of costs, so rescaling every cost
    leaves the result unchanged.  A tree without informative splits gets a
    uniform vector.
    """
    imp = np.zeros(tree.n_features)
    internal = tree.feature >= 0
    np.add.at(imp, tree.feature[internal],
              tree.weight[internal] * np.maximum(tree.gain[internal], 0.0))
    total = imp.sum()
    if not total > 0:
        return np.full(tree.n_features, 1.0 / tree.n_features)
    return imp / total
