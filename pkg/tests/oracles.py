"""Independent reference implementations used as test oracles.

Deliberately unoptimized and written without reusing any production code
paths, so agreement is meaningful.
"""
import math

import numpy as np


def naive_conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """Direct six-nested-loop cross-correlation."""
    n, cin, h, w = x.shape
    cout, cg, kh, kw = weight.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    og = cout // groups
    for b in range(n):
        for o in range(cout):
            g = o // og
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cg):
                        for u in range(kh):
                            for v in range(kw):
                                acc += (xp[b, g * cg + c, i * stride + u, j * stride + v]
                                        * weight[o, c, u, v])
                    out[b, o, i, j] = acc + (bias[o] if bias is not None else 0.0)
    return out


def scalar_sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def rotate_image(img, degrees):
    """Nearest-neighbor rotation about the image center."""
    h, w = img.shape
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w]
    ys = cos_t * (yy - cy) + sin_t * (xx - cx) + cy
    xs = -sin_t * (yy - cy) + cos_t * (xx - cx) + cx
    yi = np.clip(np.round(ys).astype(int), 0, h - 1)
    xi = np.clip(np.round(xs).astype(int), 0, w - 1)
    out = img[yi, xi]
    out[(ys < -0.5) | (ys > h - 0.5) | (xs < -0.5) | (xs > w - 0.5)] = 0.0
    return out


def pearson(a, b):
    a = a.ravel() - a.mean()
    b = b.ravel() - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom > 0 else 0.0


def template_matcher_accuracy(train_samples, test_samples, num_classes,
                              n_rotations=36):
    """Nearest-class-template matching with max correlation over rotations."""
    templates = []
    for c in range(num_classes):
        imgs = [s.image for s in train_samples if s.label == c]
        templates.append(np.mean(imgs, axis=0))
    angles = [i * 360.0 / n_rotations for i in range(n_rotations)]
    correct = 0
    for s in test_samples:
        rotations = [rotate_image(s.image, a) for a in angles]
        scores = [max(pearson(rot, t) for rot in rotations) for t in templates]
        if int(np.argmax(scores)) == s.label:
            correct += 1
    return correct / len(test_samples)
