"""Scaled-down style-modulated multi-resolution generator.

Synthesis blocks at resolutions 4, 8, ..., H, each with a style affine, a
3x3 demodulated convolution, leaky-rectifier activation (slope 0.2), and a
1x1 to-image projection added onto a smoothly upsampled skip.  The final
head squashes to [0, 1] (magnitude nets) or (-pi, pi) (phase nets).

Reverse-mode gradients with respect to per-block styles, network parameters,
and any intermediate cut state are derived by hand and checked against
central finite differences in the test suite.  Everything is float64 and
deterministic: no per-pixel noise inputs, so the output is a pure function
of (parameters, latents).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError
from .numerics import adam_init, adam_step
from .tensorfile import read_container, write_container

_LRELU_SLOPE = 0.2
_DEMOD_EPS = 1e-8


@dataclass
class GeneratorConfig:
    resolution: int = 64
    d_lat: int = 64
    channels: tuple = None  # per-block output channels; None -> tapered default
    out: str = "magnitude"  # or "phase"
    max_channels: int = 32
    channel_base: int = 512

    def __post_init__(self):
        n = int(math.log2(self.resolution)) - 1
        if self.resolution < 8 or 4 * 2 ** (n - 1) != self.resolution:
            raise ShapeError("resolution must be a power of two >= 8")
        if self.channels is None:
            res = [4 * 2**i for i in range(n)]
            self.channels = tuple(
                min(self.max_channels, self.channel_base // r) for r in res
            )
        elif np.isscalar(self.channels):
            self.channels = (int(self.channels),) * n
        else:
            self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != n:
            raise ShapeError("need %d channel entries, got %d" % (n, len(self.channels)))
        if self.out not in ("magnitude", "phase"):
            raise ValueError("out must be 'magnitude' or 'phase'")

    @property
    def n_blocks(self):
        return len(self.channels)

    def block_resolution(self, i):
        return 4 * 2**i

    def block_in_channels(self, i):
        return self.channels[0] if i == 0 else self.channels[i - 1]

    def to_meta(self):
        return {
            "resolution": self.resolution,
            "d_lat": self.d_lat,
            "channels": list(self.channels),
            "out": self.out,
        }

    @classmethod
    def from_meta(cls, meta):
        return cls(
            resolution=meta["resolution"],
            d_lat=meta["d_lat"],
            channels=tuple(meta["channels"]),
            out=meta["out"],
        )


# ---------------------------------------------------------------------------
# array primitives (all with exact adjoints)


def _im2col3(x):
    c, h, w = x.shape
    xp = np.zeros((c, h + 2, w + 2))
    xp[:, 1:-1, 1:-1] = x
    cols = np.empty((c, 9, h * w))
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, k] = xp[:, di : di + h, dj : dj + w].reshape(c, -1)
            k += 1
    return cols.reshape(c * 9, h * w)


def _col2im3(dcols, h, w):
    c = dcols.shape[0] // 9
    d = dcols.reshape(c, 9, h, w)
    out = np.zeros((c, h + 2, w + 2))
    k = 0
    for di in range(3):
        for dj in range(3):
            out[:, di : di + h, dj : dj + w] += d[:, k]
            k += 1
    return out[:, 1:-1, 1:-1]


def _nearest2(x):
    return np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)


def _sumpool2(x):
    h, w = x.shape[-2], x.shape[-1]
    shp = x.shape[:-2] + (h // 2, 2, w // 2, 2)
    return x.reshape(shp).sum(axis=(-3, -1))


def _blur3(x):
    # separable [1 2 1]/4 smoothing with zero padding; self-adjoint
    t = 0.5 * x
    t[..., 1:, :] += 0.25 * x[..., :-1, :]
    t[..., :-1, :] += 0.25 * x[..., 1:, :]
    u = 0.5 * t
    u[..., 1:] += 0.25 * t[..., :-1]
    u[..., :-1] += 0.25 * t[..., 1:]
    return u


def _up2s(x):
    return _blur3(_nearest2(x))


def _up2s_adj(g):
    return _sumpool2(_blur3(g))


def _lrelu(y):
    return np.where(y > 0, y, _LRELU_SLOPE * y)


def _lrelu_back(y, dy):
    return np.where(y > 0, dy, _LRELU_SLOPE * dy)


# ---------------------------------------------------------------------------


class Generator:
    """Style-modulated synthesis network.

    ``params`` is an ordered name -> float64 array mapping.  Latents are
    arrays of shape (n_blocks, d_lat): one style vector per block.  A "cut"
    at index c (1 <= c < n_blocks) splits the network after the c-th block;
    the state crossing the cut concatenates that block's feature maps and
    the partial skip image, shape (channels[c-1] + 1, r_c, r_c).
    """

    def __init__(self, cfg, params):
        self.cfg = cfg
        self.params = params
        self._names = list(params.keys())

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, cfg, seed=0):
        rng = np.random.default_rng(seed)
        d = cfg.d_lat
        p = {}
        p["mapping.w0"] = rng.standard_normal((d, d)) / math.sqrt(d)
        p["mapping.b0"] = np.zeros(d)
        p["mapping.w1"] = rng.standard_normal((d, d)) / math.sqrt(d)
        p["mapping.b1"] = np.zeros(d)
        p["const"] = rng.standard_normal((cfg.channels[0], 4, 4))
        for i in range(cfg.n_blocks):
            c_in, c_out = cfg.block_in_channels(i), cfg.channels[i]
            p["block%d.affine_w" % i] = rng.standard_normal((c_in, d)) / math.sqrt(d)
            p["block%d.affine_b" % i] = np.ones(c_in)
            p["block%d.conv_w" % i] = rng.standard_normal((c_out, c_in, 3, 3)) * math.sqrt(
                2.0 / (c_in * 9)
            )
            p["block%d.conv_b" % i] = np.zeros(c_out)
            p["block%d.img_w" % i] = rng.standard_normal(c_out) / math.sqrt(c_out)
            p["block%d.img_b" % i] = np.zeros(1)
        return cls(cfg, p)

    def copy(self):
        return Generator(self.cfg, {k: v.copy() for k, v in self.params.items()})

    @property
    def n_blocks(self):
        return self.cfg.n_blocks

    # -- parameter vector helpers (for Adam over theta) ----------------------

    def flatten_params(self):
        return np.concatenate([self.params[k].ravel() for k in self._names])

    def set_flat_params(self, vec):
        off = 0
        for k in self._names:
            n = self.params[k].size
            self.params[k] = vec[off : off + n].reshape(self.params[k].shape).copy()
            off += n

    def flatten_grads(self, grads):
        return np.concatenate(
            [
                np.asarray(grads.get(k, np.zeros_like(self.params[k]))).ravel()
                for k in self._names
            ]
        )

    # -- mapping MLP ---------------------------------------------------------

    def mapping_forward(self, z):
        p = self.params
        h = _lrelu(p["mapping.w0"] @ z + p["mapping.b0"])
        return p["mapping.w1"] @ h + p["mapping.b1"]

    def mapping_backward(self, z, d_w):
        """Parameter gradients of <d_w, mapping(z)>."""
        p = self.params
        pre = p["mapping.w0"] @ z + p["mapping.b0"]
        h = _lrelu(pre)
        d_h = p["mapping.w1"].T @ d_w
        d_pre = np.where(pre > 0, d_h, _LRELU_SLOPE * d_h)
        return {
            "mapping.w1": np.outer(d_w, h),
            "mapping.b1": d_w,
            "mapping.w0": np.outer(d_pre, z),
            "mapping.b0": d_pre,
        }

    def sample_latents(self, z):
        """Map a d_lat normal vector through the MLP, broadcast per block."""
        w = self.mapping_forward(np.asarray(z, dtype=float))
        return np.tile(w, (self.cfg.n_blocks, 1))

    def random_latents(self, rng):
        return self.sample_latents(rng.standard_normal(self.cfg.d_lat))

    # -- synthesis forward ----------------------------------------------------

    def _check_styles(self, styles):
        styles = np.asarray(styles, dtype=float)
        if styles.shape != (self.cfg.n_blocks, self.cfg.d_lat):
            raise ShapeError(
                "latents must have shape (%d, %d), got %s"
                % (self.cfg.n_blocks, self.cfg.d_lat, styles.shape)
            )
        return styles

    def _check_cut(self, cut):
        if not 1 <= cut < self.cfg.n_blocks:
            raise ShapeError(
                "cut %d must lie strictly inside (0, %d)" % (cut, self.cfg.n_blocks)
            )

    def _split_state(self, state, cut):
        c_prev = self.cfg.channels[cut - 1]
        r = self.cfg.block_resolution(cut - 1)
        if state.shape != (c_prev + 1, r, r):
            raise ShapeError(
                "cut state must have shape %s, got %s" % ((c_prev + 1, r, r), state.shape)
            )
        return state[:c_prev], state[c_prev]

    def _run(self, styles, start_block=0, stop_block=None, state_in=None, record=False):
        """Execute blocks start_block..stop_block-1; single arithmetic path.

        Returns (features, img, cache).  Partial runs from/to a cut share
        this code so recomposition is bit-exact.
        """
        cfg, p = self.cfg, self.params
        stop = cfg.n_blocks if stop_block is None else stop_block
        if start_block == 0:
            f = p["const"]
            img = None
        else:
            f, img = self._split_state(state_in, start_block)
        cache = {"start_block": start_block, "styles": styles.copy(), "blocks": []}
        for i in range(start_block, stop):
            c_in, c_out = cfg.block_in_channels(i), cfg.channels[i]
            r = cfg.block_resolution(i)
            x1 = _up2s(f) if i > 0 else f
            s = p["block%d.affine_w" % i] @ styles[i] + p["block%d.affine_b" % i]
            wm = p["block%d.conv_w" % i].reshape(c_out, c_in, 9) * s[None, :, None]
            wm = wm.reshape(c_out, c_in * 9)
            dem = np.sqrt(np.sum(wm * wm, axis=1) + _DEMOD_EPS)
            what = wm / dem[:, None]
            cols = _im2col3(x1)
            y = what @ cols + p["block%d.conv_b" % i][:, None]
            fout = _lrelu(y)
            timg = (p["block%d.img_w" % i] @ fout + p["block%d.img_b" % i]).reshape(r, r)
            img = timg if img is None else _up2s(img) + timg
            f = fout.reshape(c_out, r, r)
            if record:
                cache["blocks"].append(
                    {
                        "i": i,
                        "s": s,
                        "wm": wm,
                        "dem": dem,
                        "what": what,
                        "cols": cols,
                        "y": y,
                        "fout": fout,
                        "img": img,
                        "f": f,
                    }
                )
        cache["img_pre"] = img
        return f, img, cache

    def _squash(self, img_pre):
        if self.cfg.out == "magnitude":
            return 1.0 / (1.0 + np.exp(-img_pre))
        return math.pi * np.tanh(img_pre)

    def _squash_back(self, out, d_out):
        if self.cfg.out == "magnitude":
            return d_out * out * (1.0 - out)
        return d_out * (math.pi - out * out / math.pi)

    def forward(self, styles):
        styles = self._check_styles(styles)
        _, img, _ = self._run(styles)
        return self._squash(img)

    def forward_cached(self, styles, start_block=0, state_in=None):
        styles = self._check_styles(styles)
        if start_block > 0:
            self._check_cut(start_block)
        _, img, cache = self._run(styles, start_block, None, state_in, record=True)
        out = self._squash(img)
        cache["out"] = out
        return out, cache

    def forward_g1(self, styles, cut):
        """Run the first ``cut`` blocks; return the cut state."""
        styles = self._check_styles(styles)
        self._check_cut(cut)
        f, img, _ = self._run(styles, 0, cut)
        return np.concatenate([f, img[None]], axis=0)

    def forward_g1_cached(self, styles, cut):
        styles = self._check_styles(styles)
        self._check_cut(cut)
        f, img, cache = self._run(styles, 0, cut, record=True)
        return np.concatenate([f, img[None]], axis=0), cache

    def forward_g2(self, state, styles, cut):
        """Continue from a cut state through the remaining blocks."""
        styles = self._check_styles(styles)
        self._check_cut(cut)
        _, img, _ = self._run(styles, cut, None, state)
        return self._squash(img)

    @staticmethod
    def state_from_cache(cache, cut):
        """Cut state recorded during a cached forward that covered ``cut``."""
        for blk in cache["blocks"]:
            if blk["i"] == cut - 1:
                return np.concatenate([blk["f"], blk["img"][None]], axis=0)
        raise ShapeError("cache does not cover block %d" % (cut - 1))

    # -- synthesis backward ---------------------------------------------------

    def backward(self, cache, d_out, wrt=("styles",)):
        """Gradients of <d_out, squash(img_pre)> from a recorded forward.

        Returns a dict with "styles" (rows outside the executed range stay
        zero), optionally "params", and "state" (cotangent of the input cut
        state when the pass started mid-network).
        """
        d_img = self._squash_back(cache["out"], d_out)
        return self._backward_core(cache, d_f=None, d_img=d_img, wrt=wrt)

    def backward_state(self, cache, d_state, wrt=("styles",)):
        """Backward from a cotangent on the state returned by forward_g1_cached."""
        last = cache["blocks"][-1]["i"]
        c_out = self.cfg.channels[last]
        d_f = d_state[:c_out].reshape(c_out, -1)
        d_img = d_state[c_out]
        return self._backward_core(cache, d_f=d_f, d_img=d_img, wrt=wrt)

    def _backward_core(self, cache, d_f, d_img, wrt):
        cfg, p = self.cfg, self.params
        want_params = "params" in wrt
        styles = cache["styles"]
        d_styles = np.zeros_like(styles)
        d_params = {} if want_params else None
        start = cache["start_block"]

        for blk in reversed(cache["blocks"]):
            i = blk["i"]
            c_in, c_out = cfg.block_in_channels(i), cfg.channels[i]
            r = cfg.block_resolution(i)
            d_fout = np.zeros((c_out, r * r)) if d_f is None else d_f
            # to-image projection  timg = img_w . fout + img_b
            d_timg = d_img.reshape(-1)
            if want_params:
                d_params["block%d.img_w" % i] = blk["fout"] @ d_timg
                d_params["block%d.img_b" % i] = np.array([d_timg.sum()])
            d_fout = d_fout + p["block%d.img_w" % i][:, None] * d_timg[None, :]
            # skip accumulation  img_i = up(img_{i-1}) + timg
            d_img = _up2s_adj(d_img) if i > 0 else None
            # activation + convolution
            d_y = _lrelu_back(blk["y"], d_fout)
            d_what = d_y @ blk["cols"].T
            d_cols = blk["what"].T @ d_y
            d_x1 = _col2im3(d_cols, r, r)
            if want_params:
                d_params["block%d.conv_b" % i] = d_y.sum(axis=1)
            # demodulation  what = wm / dem,  dem = sqrt(sum wm^2 + eps)
            row = np.sum(d_what * blk["wm"], axis=1)
            d_wm = d_what / blk["dem"][:, None] - blk["wm"] * (row / blk["dem"] ** 3)[:, None]
            d_wm3 = d_wm.reshape(c_out, c_in, 9)
            w3 = p["block%d.conv_w" % i].reshape(c_out, c_in, 9)
            d_s = np.einsum("oik,oik->i", d_wm3, w3)
            if want_params:
                d_params["block%d.conv_w" % i] = (d_wm3 * blk["s"][None, :, None]).reshape(
                    c_out, c_in, 3, 3
                )
                d_params["block%d.affine_w" % i] = np.outer(d_s, styles[i])
                d_params["block%d.affine_b" % i] = d_s
            d_styles[i] = p["block%d.affine_w" % i].T @ d_s
            # feature upsample (every block except the very first reads up2s)
            if i == 0:
                if want_params:
                    d_params["const"] = d_x1
                d_f = None
            else:
                d_f = _up2s_adj(d_x1).reshape(cfg.block_in_channels(i), -1)

        out = {"styles": d_styles}
        if want_params:
            out["params"] = d_params
        if start > 0:
            c_prev = cfg.channels[start - 1]
            r_prev = cfg.block_resolution(start - 1)
            state = np.empty((c_prev + 1, r_prev, r_prev))
            state[:c_prev] = d_f.reshape(c_prev, r_prev, r_prev)
            state[c_prev] = d_img
            out["state"] = state
        return out

    # -- style mixing -----------------------------------------------------------

    def style_mix(self, w_a, w_b, blocks):
        """Forward with styles of ``blocks`` (1-based) taken from ``w_b``."""
        w_a = self._check_styles(w_a)
        w_b = self._check_styles(w_b)
        blocks = list(blocks)
        if any(not 1 <= b <= self.cfg.n_blocks for b in blocks):
            raise IndexError("block indices must lie in 1..%d" % self.cfg.n_blocks)
        mixed = w_a.copy()
        for b in blocks:
            mixed[b - 1] = w_b[b - 1]
        return self.forward(mixed)

    # -- persistence --------------------------------------------------------------

    def save(self, path, extra_tensors=None, extra_meta=None):
        tensors = dict(self.params)
        if extra_tensors:
            tensors.update(extra_tensors)
        meta = {"arch": self.cfg.to_meta(), "param_names": self._names}
        if extra_meta:
            meta.update(extra_meta)
        write_container(path, tensors, meta)

    @classmethod
    def load(cls, path):
        tensors, meta = read_container(path)
        cfg = GeneratorConfig.from_meta(meta["arch"])
        params = {k: tensors[k] for k in meta["param_names"]}
        extras = {k: v for k, v in tensors.items() if k not in meta["param_names"]}
        return cls(cfg, params), extras, meta


# ---------------------------------------------------------------------------
# training (autoencoding by inversion)


@dataclass
class TrainConfig:
    epochs: int = 10
    latent_steps: int = 10
    latent_lr: float = 0.05
    param_lr: float = 2.5e-3
    param_steps: int = 1
    map_lr: float = 2e-3
    seed: int = 0


def train_generator(corpus, gen_cfg, train_cfg):
    """Pretrain a generator on a corpus of images in its output range.

    Per sample: warm-started Adam on that image's latent for a few steps,
    then parameter Adam step(s) on the residual.  The mapping MLP regresses
    onto the evolving latent bank so that mapping(z) samples realistic
    latents.  Deterministic per seed.  Returns (generator, log) where log
    carries per-step losses, per-epoch means, and the final latent bank.
    """
    corpus = [np.asarray(im, dtype=float) for im in corpus]
    if not corpus:
        raise DataError("empty training corpus")
    for im in corpus:
        if im.shape != (gen_cfg.resolution, gen_cfg.resolution):
            raise DataError(
                "corpus image shape %s does not match resolution %d"
                % (im.shape, gen_cfg.resolution)
            )
    rng = np.random.default_rng(train_cfg.seed)
    gen = Generator.initialize(gen_cfg, seed=train_cfg.seed)
    n = len(corpus)
    zs = rng.standard_normal((n, gen_cfg.d_lat))
    bank = np.stack([gen.sample_latents(z) for z in zs])

    theta = gen.flatten_params()
    adam_theta = adam_init(theta, train_cfg.param_lr)
    step_losses = []
    epoch_means = []

    for _epoch in range(train_cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for idx in order:
            target = corpus[idx]
            w = bank[idx]
            adam_w = adam_init(w, train_cfg.latent_lr)
            for _ in range(train_cfg.latent_steps):
                out, cache = gen.forward_cached(w)
                g = gen.backward(cache, 2.0 * (out - target), wrt=("styles",))
                adam_w, w = adam_step(adam_w, g["styles"], w)
            bank[idx] = w
            loss = None
            for _ in range(max(train_cfg.param_steps, 1)):
                out, cache = gen.forward_cached(w)
                resid = out - target
                loss = float(np.sum(resid**2))
                if train_cfg.param_steps == 0:
                    break
                g = gen.backward(cache, 2.0 * resid, wrt=("styles", "params"))
                adam_theta, theta = adam_step(
                    adam_theta, gen.flatten_grads(g["params"]), theta
                )
                gen.set_flat_params(theta)
            losses.append(loss)
            step_losses.append(loss)
        # mapping regression toward the (block-averaged) latent bank
        for idx in order:
            target_w = bank[idx].mean(axis=0)
            pred = gen.mapping_forward(zs[idx])
            d_w = 2.0 * (pred - target_w)
            g_map = gen.mapping_backward(zs[idx], d_w)
            for k, gval in g_map.items():
                gen.params[k] = gen.params[k] - train_cfg.map_lr * gval
        theta = gen.flatten_params()
        epoch_means.append(float(np.mean(losses)))
    log = {"step_losses": step_losses, "epoch_means": epoch_means, "latent_bank": bank}
    return gen, log
