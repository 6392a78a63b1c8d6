"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (loops, direct summation) and stays
independent of the code paths it checks.
"""

import numpy as np


def make_texture(h, w, seed=0, cutoff=0.08, lo=0.15, hi=0.85):
    """Band-limited noise texture in [lo, hi], periodic by construction."""
    rng = np.random.default_rng(seed)
    spectrum = np.fft.rfft2(rng.standard_normal((h, w)))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    spectrum *= np.exp(-(fx**2 + fy**2) / (2.0 * cutoff**2))
    img = np.fft.irfft2(spectrum, s=(h, w))
    img -= img.min()
    img /= img.max()
    return (lo + (hi - lo) * img).astype(np.float32)


def periodic_shift(img, dx, dy):
    """out(x) = img(x - d) with periodic wrap; bilinear for fractional d.

    Built from np.roll so integer shifts are exact.
    """
    ix, iy = int(np.floor(dx)), int(np.floor(dy))
    fx, fy = dx - ix, dy - iy
    base = np.roll(img, (iy, ix), axis=(0, 1))
    if fx == 0.0 and fy == 0.0:
        return base.copy()
    right = np.roll(base, 1, axis=1)
    down = np.roll(base, 1, axis=0)
    down_right = np.roll(right, 1, axis=0)
    top = base * (1 - fx) + right * fx
    bottom = down * (1 - fx) + down_right * fx
    return (top * (1 - fy) + bottom * fy).astype(img.dtype)


def central_region(arr, margin=8):
    return arr[margin:-margin, margin:-margin]


def endpoint_error(flow, gt_dx, gt_dy, margin=8):
    du = central_region(flow[:, :, 0], margin) - gt_dx
    dv = central_region(flow[:, :, 1], margin) - gt_dy
    return float(np.sqrt(du**2 + dv**2).mean())


def psnr_oracle(a, b, peak=1.0):
    """Direct-summation PSNR."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            d = a[i, j] - b[i, j]
            total += d * d
    mse = total / a.size
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def gaussian_window_oracle(size=11, sigma=1.5):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(r**2) / (2.0 * sigma**2))
    win = np.outer(w, w)
    return win / win.sum()


def ssim_oracle(a, b, peak=1.0, size=11, sigma=1.5):
    """Window-by-window SSIM, valid windows only."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    win = gaussian_window_oracle(size, sigma)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    h, w = a.shape
    values = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            pa = a[i:i + size, j:j + size]
            pb = b[i:i + size, j:j + size]
            mu_a = (win * pa).sum()
            mu_b = (win * pb).sum()
            var_a = (win * pa * pa).sum() - mu_a * mu_a
            var_b = (win * pb * pb).sum() - mu_b * mu_b
            cov = (win * pa * pb).sum() - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            values.append(num / den)
    return float(np.mean(values))


def conv2d_oracle(x, weight, bias=None, stride=1, padding=0, pad_mode="zeros"):
    """Six-nested-loop cross-correlation in float64."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    n, c, h, w = x.shape
    k, _, kh, kw = weight.shape
    sh = sw = int(stride)
    ph = pw = int(padding)
    if ph or pw:
        if pad_mode == "zeros":
            x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        else:
            x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode="edge")
    out_h = (h + 2 * ph - kh) // sh + 1
    out_w = (w + 2 * pw - kw) // sw + 1
    out = np.zeros((n, k, out_h, out_w))
    for b_i in range(n):
        for k_i in range(k):
            for oy in range(out_h):
                for ox in range(out_w):
                    acc = 0.0
                    for c_i in range(c):
                        for ky in range(kh):
                            for kx in range(kw):
                                acc += x[b_i, c_i, oy * sh + ky, ox * sw + kx] * weight[k_i, c_i, ky, kx]
                    out[b_i, k_i, oy, ox] = acc
            if bias is not None:
                out[b_i, k_i] += bias[k_i]
    return out


def median3_oracle(u):
    """Per-pixel sort-based 3x3 median with replicate borders."""
    u = np.asarray(u)
    h, w = u.shape
    out = np.empty_like(u)
    for i in range(h):
        for j in range(w):
            vals = []
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), w - 1)
                    vals.append(u[ii, jj])
            out[i, j] = sorted(vals)[4]
    return out


def rel_error(analytic, fd):
    """Norm-based relative disagreement between two gradient arrays."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    fd = np.asarray(fd, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(analytic), np.linalg.norm(fd), 1e-12)
    return float(np.linalg.norm(analytic - fd) / denom)


def fd_gradient(loss_fn, param_data, h):
    """Central finite differences of ``loss_fn()`` w.r.t. every element of
    ``param_data`` (mutated in place and restored)."""
    grad = np.zeros_like(param_data, dtype=np.float64)
    it = np.nditer(param_data, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = param_data[idx]
        param_data[idx] = orig + h
        up = loss_fn()
        param_data[idx] = orig - h
        down = loss_fn()
        param_data[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad
