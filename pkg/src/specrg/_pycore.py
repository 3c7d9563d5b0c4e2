"""Pure-numpy fallback for :mod:`specrg._core`."""
import numpy as np


def scatter_monomial(out, t_idx, t_amp, s_idx, s_amp, vals):
    """out[t, s] += vals[u, I, J] * t_amp[u, I] * s_amp[u, J] for valid t, s."""
    tt, ss = np.broadcast_arrays(t_idx[:, :, None], s_idx[:, None, :])
    ok = (tt >= 0) & (ss >= 0)
    contrib = vals * (t_amp[:, :, None] * s_amp[:, None, :])
    np.add.at(out, (tt[ok], ss[ok]), contrib[ok])
    return None
