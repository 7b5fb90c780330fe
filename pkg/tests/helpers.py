import torch


def sampled_fd_check(loss_fn, params, n_samples=50, h=1e-6, seed=0):
    """Compare autograd against central differences on ``n_samples`` random scalars.

    Returns the list of (analytic, numeric) pairs. ``loss_fn`` must be float64.
    """
    params = [p for p in params if p.requires_grad]
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    grads = [p.grad.detach().clone() for p in params]
    gen = torch.Generator().manual_seed(seed)
    sizes = torch.tensor([p.numel() for p in params], dtype=torch.float64)
    pairs = []
    with torch.no_grad():
        for _ in range(n_samples):
            i = int(torch.multinomial(sizes, 1, generator=gen))
            j = int(torch.randint(params[i].numel(), (1,), generator=gen))
            flat = params[i].view(-1)
            orig = flat[j].item()
            flat[j] = orig + h
            up = loss_fn().item()
            flat[j] = orig - h
            down = loss_fn().item()
            flat[j] = orig
            pairs.append((grads[i].view(-1)[j].item(), (up - down) / (2 * h)))
    return pairs


def max_rel_error(pairs, floor=1e-7):
    return max(abs(a - n) / max(abs(a), abs(n), floor) for a, n in pairs)


def expected_param_count(cfg, n_bins):
    """Closed-form parameter count, layer by layer, for n_dec == 1."""
    nb, g = cfg.n_band, cfg.g
    fb = n_bins // nb
    hidden = max(1, fb // cfg.tdf_factor)

    def split_conv(cin, cout, k):
        return cin * cout * k * k // nb + cout

    def block(c, n_split):
        inner = n_split * (split_conv(c, c, cfg.k_inner) + 2 * c)
        tdf = nb * (fb * hidden + hidden) + nb * (hidden * fb + fb)
        return inner + tdf + (c * c + c)

    total = split_conv(4 * nb, g, cfg.k_outer)
    for n in range(1, cfg.n_enc + 1):
        total += block(n * g, cfg.n_split_enc)
        total += n * g * (n + 1) * g * 2 // nb + (n + 1) * g
    c = (cfg.n_enc + 1) * g
    total += block(c, cfg.n_split_enc)
    d, m = cfg.seq_dim, cfg.ffn_mult
    total += (c * d + d) + (d * c + c)
    attn = 2 * d + 4 * d * d
    ffn = 2 * d + d * m * d + m * d + m * d * d + d
    total += cfg.n_rope * 2 * (attn + ffn)
    total += c * g * 2**cfg.n_enc // nb + g
    total += sum(n * g * g + g for n in range(1, cfg.n_enc + 1))
    total += block(g, cfg.n_split_dec)
    total += split_conv(g, 4 * nb, cfg.k_outer)
    return total
