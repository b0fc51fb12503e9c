"""
================================================================================
Region Attention
================================================================================
| Derives region attention vectors from the geometry feature of a point and
| uses them to reweight the condition features. The audio feature is scaled
| channel-wise by an unbounded vector, the eye scalar is gated by a sigmoid.

| Each branch is a two layer network: the first layer plays the role of a
| key memory and the second of a value memory.

"""
import numpy as np
from scipy.special import expit
from ..ernf_core import _get_logger, ParameterModule, ContractError, sub_grads

# module globals
logger = _get_logger(__name__)
AUDIO_DIM = 32
ATTENTION_MODES = ('channel', 'feature', 'concat')


class AttentionMlp(ParameterModule):
    r"""
    v = W2^T relu(W1^T f + b1) + b2

    Parameters
    ----------
    input_dim : int
        width N of the geometry feature
    hidden_dim : int
        hidden width H
    output_dim : int
        width O of the attention vector
    rng : numpy.random.Generator, optional
        initialization source
    """
    _param_names = ('W1', 'b1', 'W2', 'b2')

    def __init__(self, input_dim, hidden_dim, output_dim, rng=None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        bound1 = np.sqrt(6.0 / input_dim)
        bound2 = np.sqrt(3.0 / hidden_dim)
        self.W1 = rng.uniform(-bound1, bound1, (input_dim, hidden_dim))
        self.b1 = np.zeros(hidden_dim)
        self.W2 = rng.uniform(-bound2, bound2, (hidden_dim, output_dim))
        self.b2 = np.zeros(output_dim)

    @property
    def input_dim(self):
        return self.W1.shape[0]

    @property
    def output_dim(self):
        return self.W2.shape[1]

    def forward(self, f_x):
        r"""
        Returns the attention vectors (B, O) and the cache for backward
        """
        f_x = np.atleast_2d(np.asarray(f_x, dtype=float))
        if f_x.shape[-1] != self.input_dim:
            msg = 'attention input has width {:d}, expected {:d}'
            raise ContractError(msg.format(f_x.shape[-1], self.input_dim))
        z = f_x @ self.W1 + self.b1
        hidden = np.maximum(z, 0.0)
        v = hidden @ self.W2 + self.b2
        return v, (f_x, z, hidden)

    def backward(self, cache, upstream, grads=None):
        r"""
        Returns parameter gradients and dL/df_x
        """
        f_x, z, hidden = cache
        if grads is None:
            grads = self.zero_grads()
        grads['W2'] += hidden.T @ upstream
        grads['b2'] += upstream.sum(axis=0)
        dz = (upstream @ self.W2.T) * (z > 0.0)
        grads['W1'] += f_x.T @ dz
        grads['b1'] += dz.sum(axis=0)
        return grads, dz @ self.W1.T


#
########################################################################
#  Functions
########################################################################


def attention_vector(mlp, f_x):
    r"""returns the attention vectors of geometry features f_x"""
    return mlp.forward(f_x)[0]


def reweight_audio(v_a, a):
    r"""channel-wise reweighting a_r = v_a * a"""
    v_a = np.asarray(v_a, dtype=float)
    a = np.asarray(a, dtype=float)
    if v_a.shape[-1] != a.shape[-1]:
        raise ContractError('audio attention and audio feature widths differ')
    return v_a * a


def gate_eye(v_e, e):
    r"""sigmoid gate e_r = e * sigmoid(v_e)"""
    e = np.asarray(e, dtype=float)
    if np.any((e < 0.0) | (e > 1.0)):
        raise ContractError('eye condition must lie in [0, 1]')
    return e * expit(v_e)


def feature_wise_variant(v_scalar, a):
    r"""scales the whole audio feature by one attention value"""
    return np.asarray(v_scalar, dtype=float) * np.asarray(a, dtype=float)


def region_attention_backward(attn, cache, d_audio, d_eye):
    r"""
    Adjoint of RegionAttention.forward, returns (grads, df_x, da, de)
    """
    return attn.backward(cache, d_audio, d_eye)


#
########################################################################
#  Region attention module
########################################################################


class RegionAttention(ParameterModule):
    r"""
    Audio and eye attention branches of the head field.

    Parameters
    ----------
    geometry_dim : int
        width of the geometry feature f_x
    mode : str
        channel (per-channel audio attention), feature (one scalar for the
        whole audio feature) or concat (no attention, raw conditions)
    audio_hidden, eye_hidden : int
        hidden widths of the two branches
    detach_geometry : bool
        when True no gradient flows from the attention back into f_x
    rng : numpy.random.Generator, optional
        initialization source
    """
    def __init__(self, geometry_dim, mode='channel', audio_hidden=64, eye_hidden=16,
                 detach_geometry=False, rng=None):
        super().__init__()
        if mode not in ATTENTION_MODES:
            msg = 'unknown attention mode {}, expected one of {}'
            raise ContractError(msg.format(mode, ', '.join(ATTENTION_MODES)))
        rng = np.random.default_rng(0) if rng is None else rng
        self.mode = mode
        self.detach_geometry = bool(detach_geometry)
        self.zero_gates = False
        self.geometry_dim = int(geometry_dim)
        if mode == 'concat':
            self._child_names = ()
            self.audio_attn = None
            self.eye_attn = None
        else:
            audio_out = AUDIO_DIM if mode == 'channel' else 1
            self._child_names = ('audio_attn', 'eye_attn')
            self.audio_attn = AttentionMlp(geometry_dim, audio_hidden, audio_out, rng)
            self.eye_attn = AttentionMlp(geometry_dim, eye_hidden, 1, rng)

    def forward(self, f_x, a, e):
        r"""
        Reweights the conditions for every point.

        Parameters
        ----------
        f_x : (B, N) geometry features
        a : (B, 32) audio features
        e : (B, 1) eye conditions

        Returns
        -------
        a_r : (B, 32), e_r : (B, 1), cache
        """
        a = np.asarray(a, dtype=float)
        e = np.asarray(e, dtype=float)
        if a.shape[-1] != AUDIO_DIM:
            msg = 'audio feature must have {:d} channels, got {:d}'
            raise ContractError(msg.format(AUDIO_DIM, a.shape[-1]))
        cache = {'a': a, 'e': e, 'zeroed': self.zero_gates}
        if self.zero_gates:
            return np.zeros(a.shape), np.zeros(e.shape), cache
        if self.mode == 'concat':
            return a, e, cache
        #
        v_a, cache['audio'] = self.audio_attn.forward(f_x)
        v_e, cache['eye'] = self.eye_attn.forward(f_x)
        gate = expit(v_e)
        if self.mode == 'channel':
            a_r = reweight_audio(v_a, a)
        else:
            a_r = feature_wise_variant(v_a, a)
        cache.update(v_a=v_a, v_e=v_e, gate=gate)
        return a_r, gate_eye(v_e, e), cache

    def backward(self, cache, d_audio, d_eye, grads=None):
        r"""
        Adjoint of forward.

        Returns
        -------
        grads : OrderedDict of branch parameter gradients
        df_x : (B, N) or None when no gradient reaches the geometry feature
        da, de : condition gradients
        """
        if grads is None:
            grads = self.zero_grads()
        a, e = cache['a'], cache['e']
        if cache['zeroed']:
            return grads, None, np.zeros(a.shape), np.zeros(e.shape)
        if self.mode == 'concat':
            return grads, None, np.array(d_audio, dtype=float), np.array(d_eye, dtype=float)
        #
        v_a, gate = cache['v_a'], cache['gate']
        if self.mode == 'channel':
            dv_a = d_audio * a
        else:
            dv_a = np.sum(d_audio * a, axis=-1, keepdims=True)
        da = d_audio * v_a
        de = d_eye * gate
        dv_e = d_eye * e * gate * (1.0 - gate)
        #
        audio_grads = sub_grads(grads, 'audio_attn.')
        eye_grads = sub_grads(grads, 'eye_attn.')
        _, df_audio = self.audio_attn.backward(cache['audio'], dv_a, audio_grads)
        _, df_eye = self.eye_attn.backward(cache['eye'], dv_e, eye_grads)
        df_x = None if self.detach_geometry else df_audio + df_eye
        return grads, df_x, da, de

    def attention_norms(self, f_x):
        r"""
        Returns per-point |v_a| and sigmoid(v_e), or None in concat mode
        """
        if self.audio_attn is None:
            return None
        v_a = attention_vector(self.audio_attn, f_x)
        v_e = attention_vector(self.eye_attn, f_x)
        return np.linalg.norm(v_a, axis=-1), expit(v_e[:, 0])

