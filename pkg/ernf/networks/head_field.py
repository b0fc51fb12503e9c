"""
================================================================================
Head Field
================================================================================
| Conditioned implicit function of the head: a point is encoded by the
| geometry encoder, the audio and eye conditions are reweighted by region
| attention and a density network maps the concatenation to a density and a
| latent vector. The color network combines the latent vector with an
| encoding of the viewing direction.

"""
from collections import OrderedDict
import numpy as np
from ..ernf_core import _get_logger, ParameterModule, check_finite, sub_grads
from .dense import DenseStack
from .region_attention import RegionAttention, AUDIO_DIM

# module globals
logger = _get_logger(__name__)
SIGMA_CLAMP = 15.0
DIR_OCTAVES = 4
DIR_ENCODING_DIM = 3 + 6 * DIR_OCTAVES


def encode_direction(d):
    r"""
    Frequency encoding [d, sin(2^k pi d), cos(2^k pi d)] for k < 4
    """
    d = np.atleast_2d(np.asarray(d, dtype=float))
    parts = [d]
    for octave in range(DIR_OCTAVES):
        scaled = (2.0**octave) * np.pi * d
        parts += [np.sin(scaled), np.cos(scaled)]
    return np.concatenate(parts, axis=-1)


class HeadField(ParameterModule):
    r"""
    Head radiance field F^H

    Parameters
    ----------
    encoder : TriPlaneEncoder or Hash3DEncoder
        geometry encoder producing f_x
    attention_mode : str
        channel, feature or concat
    hidden_dim : int
        hidden width of the density and color networks
    latent_dim : int
        width of the latent vector passed from density to color network
    audio_hidden, eye_hidden : int
        hidden widths of the attention branches
    detach_geometry : bool
        stop attention gradients from reaching the encoder
    rng : numpy.random.Generator, optional
        initialization source
    """
    _child_names = ('encoder', 'attention', 'density_mlp', 'color_mlp')

    def __init__(self, encoder, attention_mode='channel', hidden_dim=64, latent_dim=32,
                 audio_hidden=64, eye_hidden=16, detach_geometry=False, rng=None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.encoder = encoder
        geometry_dim = encoder.output_dim
        self.attention = RegionAttention(geometry_dim, attention_mode, audio_hidden,
                                         eye_hidden, detach_geometry, rng)
        self.latent_dim = int(latent_dim)
        self.density_mlp = DenseStack([geometry_dim + AUDIO_DIM + 1, hidden_dim, hidden_dim,
                                       1 + latent_dim], ['relu', 'relu', 'none'], rng)
        self.color_mlp = DenseStack([latent_dim + DIR_ENCODING_DIM, hidden_dim, 3],
                                    ['relu', 'sigmoid'], rng)

    @property
    def zero_gates(self):
        return self.attention.zero_gates

    @zero_gates.setter
    def zero_gates(self, value):
        self.attention.zero_gates = bool(value)

    def _density_forward(self, x, a, e):
        r"""shared front half of forward and density"""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        count = x.shape[0]
        a = np.broadcast_to(np.asarray(a, dtype=float), (count, AUDIO_DIM))
        e = np.broadcast_to(np.asarray(e, dtype=float).reshape(-1, 1), (count, 1))
        #
        f_x, enc_cache = self.encoder.encode(x)
        check_finite(f_x, 'head_field.encoder')
        a_r, e_r, attn_cache = self.attention.forward(f_x, a, e)
        check_finite(a_r, 'head_field.attention')
        out, density_cache = self.density_mlp.forward(np.concatenate([f_x, a_r, e_r], axis=1))
        check_finite(out, 'head_field.density_mlp')
        pre_sigma = out[:, 0]
        sigma = np.exp(np.minimum(pre_sigma, SIGMA_CLAMP))
        cache = {'enc': enc_cache, 'attn': attn_cache, 'density': density_cache,
                 'pre_sigma': pre_sigma, 'sigma': sigma, 'f_x': f_x}
        return sigma, out[:, 1:], cache

    def density(self, x, a, e):
        r"""returns sigma only, used for occupancy maintenance"""
        return self._density_forward(x, a, e)[0]

    def forward(self, x, d, a, e):
        r"""
        Evaluates the field at normalized points.

        Parameters
        ----------
        x : (B, 3) normalized positions
        d : (B, 3) unit viewing directions
        a : (32,) or (B, 32) audio condition
        e : scalar or (B,) eye condition

        Returns
        -------
        rgb : (B, 3) in [0, 1]
        sigma : (B,) non-negative density
        cache : forward tape for backward
        """
        sigma, latent, cache = self._density_forward(x, a, e)
        d_enc = encode_direction(np.broadcast_to(d, (latent.shape[0], 3)))
        rgb, color_cache = self.color_mlp.forward(np.concatenate([latent, d_enc], axis=1))
        check_finite(rgb, 'head_field.color_mlp')
        cache['color'] = color_cache
        return rgb, sigma, cache

    def backward(self, cache, d_rgb, d_sigma, grads=None):
        r"""
        Adjoint of forward.

        Returns
        -------
        grads : OrderedDict over all field parameters
        dx : (B, 3) gradient with respect to the normalized positions
        """
        if grads is None:
            grads = self.zero_grads()
        #
        _, d_color_in = self.color_mlp.backward(cache['color'], d_rgb,
                                                sub_grads(grads, 'color_mlp.'))
        d_out = np.empty((d_color_in.shape[0], 1 + self.latent_dim))
        unclamped = cache['pre_sigma'] < SIGMA_CLAMP
        d_out[:, 0] = np.asarray(d_sigma, dtype=float) * cache['sigma'] * unclamped
        d_out[:, 1:] = d_color_in[:, :self.latent_dim]
        #
        _, d_density_in = self.density_mlp.backward(cache['density'], d_out,
                                                    sub_grads(grads, 'density_mlp.'))
        geo_dim = cache['f_x'].shape[1]
        df_x = d_density_in[:, :geo_dim]
        d_audio = d_density_in[:, geo_dim:geo_dim + AUDIO_DIM]
        d_eye = d_density_in[:, geo_dim + AUDIO_DIM:]
        _, df_attn, _, _ = self.attention.backward(cache['attn'], d_audio, d_eye,
                                                   sub_grads(grads, 'attention.'))
        if df_attn is not None:
            df_x = df_x + df_attn
        _, dx = self.encoder.encode_backward(cache['enc'], df_x, sub_grads(grads, 'encoder.'))
        return grads, dx

    def attention_norms(self, x):
        r"""
        Returns per-point audio attention norm and eye gate, or None when the
        field has no attention branches
        """
        f_x, _ = self.encoder.encode(x)
        return self.attention.attention_norms(f_x)

    def describe(self):
        r"""summary used in reports"""
        return OrderedDict(geometry_dim=self.encoder.output_dim,
                           attention=self.attention.mode,
                           density_mlp=self.density_mlp.describe(),
                           color_mlp=self.color_mlp.describe(),
                           num_parameters=self.num_parameters())


#
########################################################################
#  Functions
########################################################################


def head_field_forward(hf, x, d, a, e):
    r"""returns (rgb, sigma) of the head field at normalized points x"""
    rgb, sigma, _ = hf.forward(x, d, a, e)
    return rgb, sigma
