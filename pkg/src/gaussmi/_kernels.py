"""Numba kernels for splat blending. Pixel centres sit on integer coordinates."""

import math

import numba
import numpy as np

ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_EPS = 1e-4


@numba.njit(cache=True)
def blend_forward(order, mean2d, conic, opac, feats, bbox, width, height,
                  record, capacity):
    """Front-to-back blending of per-Gaussian feature vectors.

    ``order`` lists Gaussian indices sorted front to back. Returns the
    blended feature image (H*W, F), the residual transmittance (H*W,), the
    recorded contributions (pixel, gaussian, weight, alpha) and a count of
    evaluated (pixel, gaussian) pairs.
    """
    npix = width * height
    nf = feats.shape[1]
    img = np.zeros((npix, nf))
    trans = np.ones(npix)
    cap = capacity if record else 0
    c_pix = np.empty(cap, np.int32)
    c_gid = np.empty(cap, np.int32)
    c_w = np.empty(cap)
    c_a = np.empty(cap)
    n = 0
    evaluated = 0
    for k in range(order.shape[0]):
        g = order[k]
        mx = mean2d[g, 0]
        my = mean2d[g, 1]
        a = conic[g, 0]
        b = conic[g, 1]
        c = conic[g, 2]
        op = opac[g]
        for v in range(bbox[g, 1], bbox[g, 3]):
            for u in range(bbox[g, 0], bbox[g, 2]):
                p = v * width + u
                t = trans[p]
                if t < T_EPS:
                    continue
                evaluated += 1
                dx = u - mx
                dy = v - my
                q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
                alpha = op * math.exp(-0.5 * q)
                if alpha > ALPHA_MAX:
                    alpha = ALPHA_MAX
                if alpha < ALPHA_MIN:
                    continue
                w = alpha * t
                for f in range(nf):
                    img[p, f] += feats[g, f] * w
                trans[p] = t * (1.0 - alpha)
                if record:
                    c_pix[n] = p
                    c_gid[n] = g
                    c_w[n] = w
                    c_a[n] = alpha
                n += 1
    return img, trans, c_pix[:n], c_gid[:n], c_w[:n], c_a[:n], evaluated


@numba.njit(cache=True)
def blend_backward(c_pix, c_gid, c_w, c_a, feats, grad_img, mean2d, conic,
                   opac, width):
    """Reverse-mode pass over recorded contributions.

    Returns d(loss)/d(feature) per Gaussian (N, F), d/d(opacity) (N,) and
    d/d(mean2d) (N, 2). The 0.99 alpha clamp zeroes the alpha gradient.
    """
    ng = feats.shape[0]
    nf = feats.shape[1]
    npix = grad_img.shape[0]
    suffix = np.zeros((npix, nf))
    g_feat = np.zeros((ng, nf))
    g_op = np.zeros(ng)
    g_mean = np.zeros((ng, 2))
    for k in range(c_pix.shape[0] - 1, -1, -1):
        p = c_pix[k]
        g = c_gid[k]
        w = c_w[k]
        alpha = c_a[k]
        t_before = w / alpha
        d_alpha = 0.0
        for f in range(nf):
            gp = grad_img[p, f]
            d_alpha += gp * (feats[g, f] * t_before - suffix[p, f] / (1.0 - alpha))
            g_feat[g, f] += gp * w
            suffix[p, f] += feats[g, f] * w
        u = p % width
        v = p // width
        dx = u - mean2d[g, 0]
        dy = v - mean2d[g, 1]
        a = conic[g, 0]
        b = conic[g, 1]
        c = conic[g, 2]
        gauss = math.exp(-0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy))
        if opac[g] * gauss > ALPHA_MAX:
            continue
        g_op[g] += d_alpha * gauss
        g_mean[g, 0] += d_alpha * alpha * (a * dx + b * dy)
        g_mean[g, 1] += d_alpha * alpha * (b * dx + c * dy)
    return g_feat, g_op, g_mean
