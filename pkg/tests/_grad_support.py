"""Shared helpers for finite-difference validation of the training loss.

The loss is piecewise smooth: top-k selections, the min over paths, and the
relu kinks are all non-differentiable boundaries. Finite differences only
agree with the subgradient at generic points, so pairs sitting within the
probe step of a boundary are rejected and redrawn.
"""

import numpy as np

from recursic.training import _tree_forward, loss_min_path_ce, stack_samples


def is_generic_point(p, sample, k, c, margin=2e-3):
    batch = stack_samples([sample])
    l = batch["true"].shape[1]
    _, stages, _, width = _tree_forward(p, batch, k, c)
    leaf = np.zeros((1, width ** l))
    for t, st in enumerate(stages):
        probs = st["acts"]["probs"].reshape(1, st["n_paths"], c.order)
        ce = -np.log(probs[0, :, batch["true"][0, st["layer"]]])
        leaf += np.repeat(ce[None, :], width ** (l - t), axis=1)
    leaf /= l
    # sibling leaves under the last expansion share their loss exactly;
    # compare distinct ancestor prefixes only
    branch = np.sort(leaf[0, ::width])
    if branch.size > 1 and branch[1] - branch[0] < margin:
        return False
    for t, st in enumerate(stages):
        if np.abs(st["acts"]["a1"]).min() < margin:
            return False
        if np.abs(st["acts"]["a2"]).min() < margin:
            return False
        if t < len(stages) - 1 and k < c.order:
            for row in st["acts"]["probs"]:
                ordered = np.sort(row)[::-1]
                if ordered[k - 1] - ordered[k] < margin:
                    return False
    return True


def fd_gradients(p, sample, k, c, names=None, step=1e-4):
    """Central finite differences of the min-path loss, per tensor."""
    out = {}
    for name, tensor in p.tensors().items():
        if names is not None and name not in names:
            continue
        grad = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            saved = tensor[ix]
            tensor[ix] = saved + step
            up = loss_min_path_ce(p, sample, k, c)
            tensor[ix] = saved - step
            down = loss_min_path_ce(p, sample, k, c)
            tensor[ix] = saved
            grad[ix] = (up - down) / (2 * step)
        out[name] = grad
    return out
