"""Finite-difference gradient checking shared by unit and acceptance tests."""

import math

import torch


def finite_diff_gradcheck(net, x, n_params=100, seed=0):
    """Compare analytic grads against central differences on `n_params` weights.

    Casts `net` to float64 eval mode in place and first nudges every
    parameter (and BatchNorm statistic) off its initial value: zero-init
    biases leave whole dead regions with pre-activations exactly 0.0, on the
    ReLU kink where the subgradient and a finite difference legitimately
    disagree, so the check must run at a generic point. The scalar loss is a
    fixed random weighting of the output. Parameters are picked per-tensor by
    gradient magnitude so the comparison is numerically meaningful.
    Returns (n_checked, max_relative_error).
    """
    net = net.double().eval()
    x = x.double()
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in net.parameters():
            p.add_(torch.empty_like(p).uniform_(-0.05, 0.05, generator=gen))
        for name, buf in net.named_buffers():
            if name.endswith("running_mean"):
                buf.add_(torch.empty_like(buf).uniform_(-0.05, 0.05,
                                                        generator=gen))
            elif name.endswith("running_var"):
                buf.add_(torch.empty_like(buf).uniform_(0.0, 0.1,
                                                        generator=gen))
    with torch.no_grad():
        out_shape = net(x).shape
    w = torch.randn(out_shape, generator=gen, dtype=torch.float64)

    def loss_value() -> float:
        with torch.no_grad():
            return float((net(x) * w).sum())

    net.zero_grad(set_to_none=True)
    (net(x) * w).sum().backward()

    tensors = [p for p in net.parameters() if p.grad is not None]
    per_tensor = max(2, math.ceil(2 * n_params / max(1, len(tensors))))
    entries = []
    for p in tensors:
        gflat = p.grad.detach().reshape(-1)
        take = min(gflat.numel(), per_tensor)
        for i in torch.argsort(gflat.abs(), descending=True)[:take].tolist():
            entries.append((p, i, float(gflat[i])))
    entries.sort(key=lambda e: -abs(e[2]))
    entries = entries[:n_params]

    max_rel = 0.0
    for p, i, analytic in entries:
        flat = p.data.view(-1)
        orig = float(flat[i])
        h = 1e-6 * max(1.0, abs(orig))
        flat[i] = orig + h
        lo_plus = loss_value()
        flat[i] = orig - h
        lo_minus = loss_value()
        flat[i] = orig
        fd = (lo_plus - lo_minus) / (2.0 * h)
        rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8)
        max_rel = max(max_rel, rel)
    return len(entries), max_rel
